"""Operator command line.

Exit codes: 0 ok, 1 usage, 2 validation failure, 3 replay divergence,
4 I/O error.  Every subcommand supports --json for machine-readable
output.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import events as eventlog
from .scenario import (
    PlacementError,
    ScenarioParseError,
    load_scenario,
    solve_tta_placement,
    validate,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fp:
            return fp.read()
    except OSError as e:
        print(f"error: cannot read {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_IO) from None


def _load(path: str):
    try:
        return load_scenario(_read(path))
    except ScenarioParseError as e:
        print(f"error: {path}: {e}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION) from None


def cmd_validate(args) -> int:
    spec = _load(args.scenario)
    diags = validate(spec)
    if args.json:
        print(json.dumps({"valid": not diags, "diagnostics": diags}))
    else:
        for d in diags:
            print(f"  {d}")
        print(f"{args.scenario}: {'OK' if not diags else f'{len(diags)} problem(s)'}")
    return EXIT_OK if not diags else EXIT_VALIDATION


def cmd_place(args) -> int:
    spec = _load(args.scenario)
    try:
        placement = solve_tta_placement(spec)
    except PlacementError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    rows = []
    for a in spec.agents:
        if a.name in placement:
            rows.append({"agent": a.name, "kind": a.kind.name.lower(),
                         "speed_mps": a.target_speed,
                         "distance_m": placement[a.name]})
    if args.json:
        print(json.dumps({"sync_tta_s": spec.sync_tta_s, "placement": rows}))
    else:
        print(f"TTA-equalized placement, T = {spec.sync_tta_s:g} s "
              f"(distance = speed x T, measured back from "
              f"{spec.conflict_point}):")
        for r in rows:
            print(f"  {r['agent']:<12} {r['kind']:<18} "
                  f"{r['speed_mps']:8.3f} m/s  {r['distance_m']:8.1f} m")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .server import Session, SessionConfig
    from .transport import ServeLoop

    spec = _load(args.scenario)
    diags = validate(spec)
    if diags:
        for d in diags:
            print(f"  {d}", file=sys.stderr)
        print("error: scenario invalid", file=sys.stderr)
        return EXIT_VALIDATION
    config = SessionConfig(tick_rate_hz=args.tick_hz,
                           snapshot_div=args.snapshot_div)
    log_fp = None
    if args.log:
        try:
            log_fp = open(args.log, "w", encoding="utf-8")
        except OSError as e:
            print(f"error: cannot open log {args.log}: {e}", file=sys.stderr)
            return EXIT_IO
    session = Session(spec, config, log_fp=log_fp)
    httpd = None
    if args.web_root:
        httpd = _serve_static(args.web_root, args.http_port)
    loop = ServeLoop(session, udp_port=args.udp_port, ws_port=args.ws_port,
                     stats_out=None if args.json else print)
    print(f"serving {args.scenario}: udp={loop.udp.port} ws={loop.ws.port} "
          f"tick={config.tick_rate_hz}Hz "
          f"snapshots={config.tick_rate_hz // config.snapshot_div}Hz"
          + (f" http={args.http_port}" if args.web_root else ""))
    try:
        loop.run(duration_s=args.duration, realtime=not args.fast)
    except KeyboardInterrupt:
        pass
    finally:
        if httpd is not None:
            httpd.shutdown()
        if log_fp is not None:
            log_fp.close()
    if args.json:
        print(json.dumps({"ticks": session.tick,
                          "events": len(session.events)}))
    return EXIT_OK


def _serve_static(root: str, port: int):
    import functools
    import http.server
    import threading

    handler = functools.partial(http.server.SimpleHTTPRequestHandler,
                                directory=root)
    httpd = http.server.ThreadingHTTPServer(("0.0.0.0", port), handler)
    threading.Thread(target=httpd.serve_forever, daemon=True,
                     name="static-http").start()
    return httpd


def cmd_replay(args) -> int:
    from .server import ReplayDivergence, replay

    try:
        log = eventlog.read_log_path(args.log)
    except (OSError, eventlog.LogFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        result = replay(log)
    except ReplayDivergence as e:
        if args.json:
            print(json.dumps({"ok": False, "diverged_at_tick": e.tick}))
        else:
            print(f"DIVERGENCE at tick {e.tick}")
        return EXIT_DIVERGENCE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.json:
        print(json.dumps({"ok": True, "ticks": result.ticks,
                          "events": len(result.events),
                          "snapshots_checked": result.snapshots_checked}))
    else:
        print(f"replay ok: {result.ticks} ticks, "
              f"{result.snapshots_checked} snapshots verified, "
              f"{len(result.events)} events")
    return EXIT_OK


def cmd_metrics(args) -> int:
    from .metrics.report import extract_all

    try:
        log = eventlog.read_log_path(args.log)
    except (OSError, eventlog.LogFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        summary = extract_all(log, args.out, svg=args.svg)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.json:
        print(json.dumps(summary, default=str))
    else:
        print(f"metrics written to {args.out}/")
    return EXIT_OK


def cmd_align(args) -> int:
    from .align import run_alignment

    try:
        log = eventlog.read_log_path(args.events)
    except (OSError, eventlog.LogFormatError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    try:
        report = run_alignment(log, args.streams, args.out,
                               epoch_event=args.epoch_event,
                               pre_s=args.pre, post_s=args.post,
                               out_rate=args.rate)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.json:
        print(json.dumps(report, default=str))
    else:
        print(f"alignment written to {args.out}/")
        for clock, info in report.get("clocks", {}).items():
            print(f"  clock {clock}: gain={info['a']:.6f} "
                  f"offset={info['b']:.3f}s residual={info['residual_rms']:.4f}s")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="junction",
        description="Multi-agent traffic simulation server and analysis tools")
    parser.add_argument("--json", action="store_true",
                        help="machine-readable output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the simulation server")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("--udp-port", type=int, default=47810,
                   help="UDP engine port (default 47810)")
    p.add_argument("--ws-port", type=int, default=47811,
                   help="WebSocket bridge TCP port (default 47811)")
    p.add_argument("--tick-hz", type=int, default=100,
                   help="simulation tick rate, Hz (default 100)")
    p.add_argument("--snapshot-div", type=int, default=2,
                   help="broadcast every Nth tick (default 2)")
    p.add_argument("--log", help="session log path (enables replay/metrics)")
    p.add_argument("--duration", type=float, default=None,
                   help="stop after this many simulated seconds")
    p.add_argument("--fast", action="store_true",
                   help="no wall-clock pacing (batch runs)")
    p.add_argument("--web-root", help="serve this directory over HTTP")
    p.add_argument("--http-port", type=int, default=47812,
                   help="static file port (default 47812)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("validate", help="check a scenario file")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("place", help="print the TTA placement table")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_place)

    p = sub.add_parser("replay", help="deterministically re-run a session log")
    p.add_argument("log")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("metrics", help="extract behavioral metrics from a log")
    p.add_argument("log")
    p.add_argument("--out", default="metrics_out", help="output directory")
    p.add_argument("--svg", action="store_true",
                   help="also render static SVG series charts")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("align", help="align sensor streams to simulator time")
    p.add_argument("--events", required=True, help="session log path")
    p.add_argument("--streams", required=True,
                   help="directory of sensor stream CSV files")
    p.add_argument("--out", default="align_out", help="output directory")
    p.add_argument("--epoch-event", default=None,
                   help="event code name to epoch around (e.g. HAZARD)")
    p.add_argument("--pre", type=float, default=2.0,
                   help="epoch window before the event, s")
    p.add_argument("--post", type=float, default=8.0,
                   help="epoch window after the event, s")
    p.add_argument("--rate", type=float, default=10.0,
                   help="epoch resample rate, Hz")
    p.set_defaults(func=cmd_align)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
