"""Backend selection for the hot loops.

The compiled extension (``_ckernels``) is used when it imports; otherwise the
numpy fallback (``_pykernels``) takes over. Setting the environment variable
``STOCHMECH_PURE_PYTHON=1`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

SCHEMES = {"symplectic": 0, "euler_maruyama": 1, "heun": 2, "split_step": 3}
GATINGS = {"off": 0, "unstable_only": 1, "all_on": 2}
LIMITERS = {"upwind": 0, "minmod": 1, "van_leer": 2, "mc": 3}


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("STOCHMECH_PURE_PYTHON", "").strip() not in ("", "0"):
        return _pykernels, "python"
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels, "python"
    return _ckernels, "compiled"


_impl, BACKEND = _load()


def get_backend(name: str) -> ModuleType:
    """Return the kernel module ``"python"`` or ``"compiled"`` explicitly."""
    if name == "python":
        return _pykernels
    if name == "compiled":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


integrate_block = _impl.integrate_block
tangent_leapfrog = _impl.tangent_leapfrog
advect_lines = _impl.advect_lines
diffuse = _impl.diffuse
