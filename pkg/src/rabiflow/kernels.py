"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy versions in ``_kernels_py`` are used. Setting ``RABIFLOW_PURE_PYTHON=1``
forces the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("RABIFLOW_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        pass

radial_profile = _impl.radial_profile
hamiltonian_diameter = _impl.hamiltonian_diameter
loop_residual = _impl.loop_residual

PLATEAU = _kernels_py.PLATEAU
