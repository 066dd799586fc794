"""Particle-update kernels with a compiled core and a pure-NumPy fallback.

At import time the Cython extension is preferred; set
``EMFLOWS_PURE_KERNELS=1`` to force the NumPy implementation.  Both
backends emit bit-identical streams (see ``tests/test_kernels.py``), so
the choice only affects speed.  ``benchmarks/bench_kernels.py`` compares
the two.
"""

import os

from . import _philox as _numpy_impl

if os.environ.get("EMFLOWS_PURE_KERNELS") == "1":
    _impl = _numpy_impl
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _numpy_impl

standard_normals = _impl.standard_normals
langevin_affine_update = _impl.langevin_affine_update


def backend() -> str:
    """Name of the active kernel backend ('cython' or 'numpy')."""
    return _impl.BACKEND


__all__ = ["standard_normals", "langevin_affine_update", "backend"]
