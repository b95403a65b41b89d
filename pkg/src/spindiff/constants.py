"""Physical constants and unit helpers.

All Hamiltonian coefficients are angular frequencies (rad/s). User-facing
inputs are linear frequencies (Hz) unless a function says otherwise.
"""

import math

TWO_PI = 2.0 * math.pi

#: |gamma|/2pi of a free electron (P1 centre), Hz/T
GAMMA_ELECTRON = 28.024e9
#: gamma/2pi of 13C, Hz/T
GAMMA_C13 = 10.7084e6

#: field used throughout the four-spin analysis, T
DEFAULT_FIELD = 0.051


def angular(hz):
    """Linear frequency (Hz) to angular frequency (rad/s)."""
    return TWO_PI * hz


def linear(rad_per_s):
    """Angular frequency (rad/s) to linear frequency (Hz)."""
    return rad_per_s / TWO_PI


def larmor(field, gamma):
    """Angular Larmor frequency for a field in tesla and gamma/2pi in Hz/T."""
    return TWO_PI * abs(gamma * field)
