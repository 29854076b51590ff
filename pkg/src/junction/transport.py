"""UDP and WebSocket transports feeding the single-threaded session.

Receive threads only decode and enqueue; the simulation thread drains
the queue between ticks (single-consumer contract).  PING is answered
here with transport timestamps since it never touches world state.
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass, field

from . import protocol
from .events import EventCode
from .protocol import DecodeError, MsgType, Packet, Pong, decode, encode
from .server import Session

DEFAULT_UDP_PORT = 47810
DEFAULT_WS_PORT = 47811
MAX_QUEUE = 4096


def mono_us() -> int:
    return time.monotonic_ns() // 1000


@dataclass
class TransportStats:
    received: int = 0
    dropped: int = 0
    sent: int = 0
    decode_errors: dict[str, int] = field(default_factory=dict)

    def count_error(self, err: DecodeError):
        name = type(err).__name__
        self.decode_errors[name] = self.decode_errors.get(name, 0) + 1
        self.dropped += 1


@dataclass
class Inbound:
    packet: Packet
    source: str
    reply: object  # callable(bytes)


class UdpTransport:
    def __init__(self, port: int, inbox: "queue.Queue[Inbound]",
                 stats: TransportStats):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        self.sock.bind(("0.0.0.0", port))
        self.sock.settimeout(0.2)
        self.port = self.sock.getsockname()[1]
        self.inbox = inbox
        self.stats = stats
        self.clients: dict[str, tuple[str, int]] = {}
        self._stop = threading.Event()
        self.thread = threading.Thread(target=self._recv_loop,
                                       name="udp-recv", daemon=True)

    def start(self):
        self.thread.start()

    def stop(self):
        self._stop.set()
        self.thread.join(timeout=2.0)
        self.sock.close()

    def _recv_loop(self):
        while not self._stop.is_set():
            try:
                data, addr = self.sock.recvfrom(65536)
            except socket.timeout:
                continue
            except OSError:
                break
            source = f"udp:{addr[0]}:{addr[1]}"
            try:
                pkt = decode(data)
            except DecodeError as e:
                self.stats.count_error(e)
                continue
            self.stats.received += 1
            if pkt.msg_type == MsgType.PING:
                t1 = mono_us()
                pong = Packet(Pong(pkt.body.t0, t1, mono_us()),
                              protocol.Meta(session=pkt.meta.session,
                                            agent_id=pkt.meta.agent_id,
                                            timestamp_us=t1))
                self.sock.sendto(encode(pong), addr)
                continue
            self.clients[source] = addr

            def reply(data: bytes, _addr=addr):
                self.sock.sendto(data, _addr)
                self.stats.sent += 1

            try:
                self.inbox.put_nowait(Inbound(pkt, source, reply))
            except queue.Full:
                self.stats.dropped += 1

    def send(self, source: str, data: bytes):
        addr = self.clients.get(source)
        if addr is not None:
            self.sock.sendto(data, addr)
            self.stats.sent += 1

    def broadcast(self, data: bytes):
        for addr in list(self.clients.values()):
            self.sock.sendto(data, addr)
            self.stats.sent += 1


class WsBridge:
    """Binary-frame WebSocket bridge: payload bytes identical to UDP."""

    def __init__(self, port: int, inbox: "queue.Queue[Inbound]",
                 stats: TransportStats):
        self.requested_port = port
        self.port = port
        self.inbox = inbox
        self.stats = stats
        self.connections: dict[str, object] = {}
        self._lock = threading.Lock()
        self._server = None
        self.thread = threading.Thread(target=self._serve, name="ws-bridge",
                                       daemon=True)
        self._ready = threading.Event()

    def start(self):
        self.thread.start()
        if not self._ready.wait(timeout=5.0):
            raise RuntimeError("websocket bridge failed to start")

    def stop(self):
        if self._server is not None:
            self._server.shutdown()
        self.thread.join(timeout=2.0)

    def _serve(self):
        from websockets.sync.server import serve

        def handler(conn):
            source = f"ws:{id(conn):x}"
            with self._lock:
                self.connections[source] = conn

            def reply(data: bytes, _conn=conn):
                try:
                    _conn.send(data)
                    self.stats.sent += 1
                except Exception:
                    pass

            try:
                for message in conn:
                    if isinstance(message, str):
                        # text frames violate the bridge contract
                        conn.close(code=1003, reason="binary frames only")
                        break
                    try:
                        pkt = decode(message)
                    except DecodeError as e:
                        self.stats.count_error(e)
                        continue
                    self.stats.received += 1
                    if pkt.msg_type == MsgType.PING:
                        t1 = mono_us()
                        reply(encode(Packet(
                            Pong(pkt.body.t0, t1, mono_us()),
                            protocol.Meta(session=pkt.meta.session,
                                          agent_id=pkt.meta.agent_id,
                                          timestamp_us=t1))))
                        continue
                    try:
                        self.inbox.put_nowait(Inbound(pkt, source, reply))
                    except queue.Full:
                        self.stats.dropped += 1
            finally:
                with self._lock:
                    self.connections.pop(source, None)

        with serve(handler, "0.0.0.0", self.requested_port) as server:
            self._server = server
            self.port = server.socket.getsockname()[1] \
                if hasattr(server, "socket") else self.requested_port
            self._ready.set()
            server.serve_forever()

    def send(self, source: str, data: bytes):
        with self._lock:
            conn = self.connections.get(source)
        if conn is not None:
            try:
                conn.send(data)
                self.stats.sent += 1
            except Exception:
                pass

    def broadcast(self, data: bytes):
        with self._lock:
            conns = list(self.connections.values())
        for conn in conns:
            try:
                conn.send(data)
                self.stats.sent += 1
            except Exception:
                pass


class ServeLoop:
    """Wall-clock paced tick loop with catch-up (never skips ticks)."""

    def __init__(self, session: Session, udp_port: int = DEFAULT_UDP_PORT,
                 ws_port: int = DEFAULT_WS_PORT, stats_out=None):
        self.session = session
        self.stats = TransportStats()
        self.inbox: "queue.Queue[Inbound]" = queue.Queue(maxsize=MAX_QUEUE)
        self.udp = UdpTransport(udp_port, self.inbox, self.stats)
        self.ws = WsBridge(ws_port, self.inbox, self.stats)
        self.stats_out = stats_out
        self._bindings: dict[int, str] = {}  # agent_id -> source
        self._stop = threading.Event()

    def stop(self):
        self._stop.set()

    def run(self, duration_s: float | None = None, realtime: bool = True):
        """Tick until stopped or the simulated duration elapses.

        With realtime=False the loop free-runs without wall-clock pacing
        (batch/headless runs); snapshots and logs are identical either
        way since all timing inside the session is simulation time.
        """
        self.udp.start()
        self.ws.start()
        session = self.session
        period = session.dt
        start = time.monotonic()
        next_deadline = start + period
        last_stats = start
        ticks_at_stats = 0
        behind_since: float | None = None
        try:
            while not self._stop.is_set():
                if duration_s is not None and session.sim_time_s >= duration_s:
                    break
                self._drain_inbox()
                session.run_tick()
                self._flush_outbound()

                now = time.monotonic()
                if realtime:
                    if now < next_deadline:
                        behind_since = None
                        time.sleep(next_deadline - now)
                    else:
                        # catch-up: no sleep, keep ticking until aligned
                        lag = now - next_deadline
                        if lag > 1.0 and behind_since is None:
                            behind_since = now
                            session._emit(EventCode.DIAGNOSTIC,
                                          extra={"reason": "overload",
                                                 "lag_s": round(lag, 3)})
                    next_deadline += period

                if self.stats_out is not None and now - last_stats >= 1.0:
                    dt_ticks = session.tick - ticks_at_stats
                    self.stats_out(
                        f"tick={session.tick} t={session.sim_time_s:.1f}s "
                        f"rate={dt_ticks}/s agents={len(session.world)} "
                        f"in={self.stats.received} out={self.stats.sent} "
                        f"dropped={self.stats.dropped}")
                    ticks_at_stats = session.tick
                    last_stats = now
        finally:
            self.udp.stop()
            self.ws.stop()
            if session.log:
                session.log.flush()

    def _drain_inbox(self):
        session = self.session
        while True:
            try:
                item = self.inbox.get_nowait()
            except queue.Empty:
                return
            session.handle_packet(item.packet, item.source, item.reply)
            # refresh agent bindings after joins
            if item.packet.msg_type == MsgType.HELLO:
                for rt in session.runtimes.values():
                    if rt.joined_by is not None:
                        self._bindings[rt.agent_id] = rt.joined_by

    def _flush_outbound(self):
        for agent_id, data in self.session.take_outbound():
            if agent_id is None:
                self.udp.broadcast(data)
                self.ws.broadcast(data)
                continue
            source = self._bindings.get(agent_id)
            if source is None:
                continue
            if source.startswith("udp:"):
                self.udp.send(source, data)
            else:
                self.ws.send(source, data)
