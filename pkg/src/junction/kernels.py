"""Kernel selection: compiled extension when available, else pure Python.

Both implementations are bitwise-equivalent (see test_kernels_parity);
the choice only affects speed.  Set JUNCTION_PURE_PYTHON=1 to force the
fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("JUNCTION_PURE_PYTHON"):
    _impl = _kernels_py
    HAVE_COMPILED = False
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
        HAVE_COMPILED = True
    except ImportError:
        _impl = _kernels_py
        HAVE_COMPILED = False

project_point = _impl.project_point
step_vehicle = _impl.step_vehicle
step_cyclist = _impl.step_cyclist
step_pedestrian = _impl.step_pedestrian


def implementations() -> dict[str, object]:
    """All available kernel modules, keyed by name (for parity tests)."""
    impls: dict[str, object] = {"python": _kernels_py}
    try:
        from . import _kernels
        impls["compiled"] = _kernels
    except ImportError:
        pass
    return impls
