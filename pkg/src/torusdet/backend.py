"""Kernel backend selection: compiled extension if available, NumPy otherwise.

Set TORUSDET_KERNELS=python (or =cython) before import to force a backend,
or call :func:`select` at runtime (used by the benchmark and by tests).
"""
import os

from . import _kernels_py

try:
    from . import _kernels
except ImportError:  # extension not built
    _kernels = None

_BACKENDS = {"python": _kernels_py}
if _kernels is not None:
    _BACKENDS["cython"] = _kernels

kernels = _kernels_py
name = "python"


def select(which="auto"):
    """Switch the active kernel backend; returns its name.

    "auto" prefers the compiled extension.  Workspaces built afterwards pick
    up the new backend; existing ones keep the one they were built with.
    """
    global kernels, name
    if which == "auto":
        which = "cython" if _kernels is not None else "python"
    if which not in _BACKENDS:
        raise ValueError(
            f"unknown kernel backend {which!r}; built: {sorted(_BACKENDS)}"
        )
    kernels = _BACKENDS[which]
    name = which
    return name


def available():
    return sorted(_BACKENDS)


select(os.environ.get("TORUSDET_KERNELS", "auto").strip().lower() or "auto")
