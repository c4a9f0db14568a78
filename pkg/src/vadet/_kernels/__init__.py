"""Hot numeric kernels with a compiled core and a NumPy fallback.

The compiled extension is preferred when importable; set the environment
variable ``VADET_KERNELS=python`` (or call :func:`use`) to force the
fallback.  Callers access the kernels as module attributes
(``_kernels.correlate_center`` etc.) so the backend can be switched at
runtime, e.g. by the benchmark.
"""

import os

import numpy as np

from . import fallback as _fallback

_BACKENDS = {"python": _fallback}

try:
    from . import _corekern as _compiled

    _BACKENDS["compiled"] = _compiled
except ImportError:  # pragma: no cover - depends on build environment
    _compiled = None

_KERNEL_NAMES = ("correlate_center", "local_maxima", "prominences", "select_by_distance")

# Above this tap count FFT convolution beats any direct loop, so the compiled
# backend delegates long correlations to the fallback's FFT path.
_DIRECT_TAPS_MAX = 64


def _hybrid_correlate(x, taps):
    taps = np.asarray(taps)
    if taps.shape[0] <= _DIRECT_TAPS_MAX:
        return _compiled.correlate_center(x, taps)
    return _fallback.correlate_center(x, taps)

correlate_center = None
local_maxima = None
prominences = None
select_by_distance = None
BACKEND = ""


def available_backends():
    return tuple(sorted(_BACKENDS))


def use(name: str) -> str:
    """Select the kernel backend by name; returns the previously active one."""
    if name not in _BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; have {available_backends()}")
    global BACKEND
    previous = BACKEND
    impl = _BACKENDS[name]
    for fn in _KERNEL_NAMES:
        globals()[fn] = getattr(impl, fn)
    if name == "compiled":
        globals()["correlate_center"] = _hybrid_correlate
    BACKEND = name
    return previous


_requested = os.environ.get("VADET_KERNELS", "").strip().lower()
if _requested:
    use(_requested)
else:
    use("compiled" if "compiled" in _BACKENDS else "python")
