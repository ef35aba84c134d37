"""Kernel backend selection.

The compiled core is preferred when it imported cleanly; the NumPy
fallback is selected otherwise. `TTFR_KERNELS` overrides the choice:
"cython" (fail if unavailable), "python", or "auto" (default).
"""

import os

_choice = os.environ.get("TTFR_KERNELS", "auto")

if _choice not in ("auto", "cython", "python"):
    raise RuntimeError(f"TTFR_KERNELS must be auto, cython, or python, got {_choice!r}")

if _choice == "python":
    from ttfr._kernels import _pure as impl
else:
    try:
        from ttfr._kernels import _core as impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "cython":
            raise
        from ttfr._kernels import _pure as impl  # type: ignore[no-redef]

BACKEND = impl.NAME


def load_backend(name):
    """Return a specific backend module (used by tests and benchmarks)."""
    if name == "python":
        from ttfr._kernels import _pure
        return _pure
    if name == "cython":
        from ttfr._kernels import _core
        return _core
    raise ValueError(f"unknown backend {name!r}")
