"""Complex-valued activation functions.

These operate on python complex scalars or numpy arrays (complex dtype for
the complex-domain family). The phase of 0 is taken as 0, so the saturating
activations map the origin to the origin and sigmoid_complex(0+0j) = 0.5,
continuous with the real branch.
"""

import numpy as np


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def split_apply(g_real, z):
    """Apply a real activation separately to the real and imaginary parts."""
    z = np.asarray(z, dtype=complex)
    return g_real(z.real) + 1j * g_real(z.imag)


def pa_saturate(z, c=1.0, r=1.0):
    """Magnitude squash z / (c + |z|/r); phase preserved, |out| < r."""
    if c <= 0 or r <= 0:
        raise ValueError("c and r must be positive")
    z = np.asarray(z, dtype=complex)
    return z / (c + np.abs(z) / r)


def pa_tanh_phase(z, m=1.0):
    """tanh(|z|/m) * exp(i*phase(z)); bounded magnitude, phase preserved."""
    if m <= 0:
        raise ValueError("m must be positive")
    z = np.asarray(z, dtype=complex)
    mag = np.tanh(np.abs(z) / m)
    return mag * np.exp(1j * np.angle(z))


def sigmoid_complex(x):
    """sigmoid(|x|) * cos(angle(x)) for complex input, plain sigmoid for real.

    Always returns a real value: in [-1, 1] for complex input, (0, 1) for
    real input. np.angle(0) is 0, so complex zero maps to 0.5.
    """
    arr = np.asarray(x)
    if np.iscomplexobj(arr):
        out = _sigmoid(np.abs(arr)) * np.cos(np.angle(arr))
    else:
        out = _sigmoid(arr)
    if np.isscalar(x) or arr.ndim == 0:
        return float(out)
    return out
