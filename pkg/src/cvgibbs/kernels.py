"""Selects the compiled kernel when available, else the numpy fallback."""

from . import _kernels_py

WEIGHT_ONE, WEIGHT_GAUSSIAN, WEIGHT_INDICATOR = 0, 1, 2

try:
    from ._kernels import weighted_kron_accumulate as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def use_backend(name: str) -> None:
    """Switch between 'cython' and 'python' at runtime."""
    global BACKEND
    if name == "cython" and _compiled is None:
        raise RuntimeError("compiled kernel is not built")
    if name not in ("cython", "python"):
        raise ValueError(f"unknown backend '{name}'")
    BACKEND = name


def weighted_kron_accumulate(out, lg, omega, mode, param):
    """out[i + d*j, k + d*l] += w(omega[k,l] - omega[i,j]) * conj(lg[j,l]) * lg[i,k]."""
    if BACKEND == "cython":
        _compiled(out, lg, omega, mode, param)
    else:
        _kernels_py.weighted_kron_accumulate(out, lg, omega, mode, param)
