"""Pick the compiled kernels when available, the numpy ones otherwise.

Set ``CONSENSUS_LAB_PURE_PYTHON=1`` to force the numpy implementation.
"""

import os

from . import _kernels_py


def load(name=None):
    """Return ``(module, name)`` for ``name`` in {"cython", "python", None}."""
    if name is None:
        name = "python" if os.environ.get("CONSENSUS_LAB_PURE_PYTHON") else "cython"
    if name == "cython":
        try:
            from . import _kernels
            return _kernels, "cython"
        except ImportError:
            return _kernels_py, "python"
    if name == "python":
        return _kernels_py, "python"
    raise ValueError(f"unknown kernel backend {name!r}")


kernels, BACKEND = load()
