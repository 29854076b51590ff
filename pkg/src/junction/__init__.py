"""junction: headless multi-agent traffic simulation with deterministic
replay, a bit-exact synchronization protocol, surrogate-safety metrics,
and multimodal sensor-stream alignment."""

__version__ = "0.1.0"
