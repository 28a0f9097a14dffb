"""Hot network-loading kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation is selected. Set ``LANDUSE_PRICING_BACKEND=python`` to force the
fallback. Callers must go through this module's attributes (``K.route_costs``)
so that :func:`use_backend` can switch implementations at runtime.
"""

from __future__ import annotations

import os

from . import _pykernels as python_kernels

try:
    from . import _ckernels as cython_kernels
except ImportError:  # extension not built
    cython_kernels = None

KERNELS = ("route_costs", "link_loads", "segment_sums", "segment_softmin", "nested_logit")

BACKEND = "python"


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if cython_kernels is not None else [])


def use_backend(name: str) -> None:
    global BACKEND
    if name == "cython":
        if cython_kernels is None:
            raise RuntimeError("compiled kernels are not available; build the package with Cython")
        impl = cython_kernels
    elif name == "python":
        impl = python_kernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    for fn in KERNELS:
        globals()[fn] = getattr(impl, fn)
    BACKEND = name


_requested = os.environ.get("LANDUSE_PRICING_BACKEND", "").lower()
if _requested == "python" or cython_kernels is None:
    use_backend("python")
else:
    use_backend("cython")
