"""Hot-kernel dispatch.

Set FREQGATE_KERNELS=numpy or FREQGATE_KERNELS=numba to pin a backend;
default is numba when importable, with the pure-numpy path as fallback.
`freqgate bench` times both backends side by side.
"""

import os

from . import numpy_backend

_requested = os.environ.get("FREQGATE_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"FREQGATE_KERNELS must be 'numba', 'numpy' or 'auto', got {_requested!r}"
    )

if _requested in ("auto", "numba"):
    try:
        from . import numba_backend as _active
    except ImportError:
        if _requested == "numba":
            raise
        _active = numpy_backend
else:
    _active = numpy_backend

backend_name = _active.name

conv2d_forward = _active.conv2d_forward
conv2d_grad_input = _active.conv2d_grad_input
conv2d_grad_weight = _active.conv2d_grad_weight
maxpool2_forward = _active.maxpool2_forward
maxpool2_backward = _active.maxpool2_backward
warp_bilinear = _active.warp_bilinear
warp_nearest = _active.warp_nearest
circular_conv2d_direct = _active.circular_conv2d_direct


def available_backends():
    names = ["numpy"]
    try:
        from . import numba_backend  # noqa: F401

        names.append("numba")
    except ImportError:
        pass
    return names


def get_backend(name):
    if name == "numpy":
        return numpy_backend
    if name == "numba":
        from . import numba_backend

        return numba_backend
    raise ValueError(f"unknown kernel backend {name!r}")
