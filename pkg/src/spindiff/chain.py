"""Classical spectral chain: boxes of nuclei exchanging magnetization.

Box ``i`` passes magnetization to ``i+1`` at rate ``gamma_fwd[i]`` and back
at ``gamma_bwd[i]``. The last box is absorbing (no backflow). An RF pulse
saturates box ``k`` with an extra loss rate ``a_rf``. A pulse train
alternates RF-on intervals ``tau_rf`` with free intervals ``tau``.

Box indices in the public API are 1-based, as in the chain picture; arrays
are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .analysis import StretchedFit, fit_stretched
from .parallel import parallel_map


@dataclass(frozen=True)
class RateChain:
    """``m`` boxes with nearest-neighbour rates, losses and one RF sink (rates in 1/s)."""

    gamma_fwd: np.ndarray
    gamma_bwd: np.ndarray
    k: int
    a_rf: float
    beta: np.ndarray | None = None
    q0: np.ndarray | None = None

    def __post_init__(self):
        fwd = np.asarray(self.gamma_fwd, dtype=float)
        bwd = np.asarray(self.gamma_bwd, dtype=float)
        if fwd.ndim != 1 or fwd.shape != bwd.shape or fwd.size < 1:
            raise ValueError("forward and backward rates must be 1-D arrays of length m-1")
        m = fwd.size + 1
        beta = np.zeros(m) if self.beta is None else np.asarray(self.beta, dtype=float)
        q0 = np.eye(m)[0] if self.q0 is None else np.asarray(self.q0, dtype=float)
        if beta.shape != (m,) or q0.shape != (m,):
            raise ValueError(f"losses and initial charges need length {m}")
        for name, arr in (("forward rates", fwd), ("backward rates", bwd), ("losses", beta)):
            if np.any(arr < 0) or not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite and non-negative")
        if self.a_rf < 0:
            raise ValueError("RF saturation rate must be non-negative")
        if not 1 <= self.k <= m:
            raise ValueError(f"RF box {self.k} outside 1..{m}")
        if not np.all(np.isfinite(q0)):
            raise ValueError("initial charges must be finite")
        for name, arr in (("gamma_fwd", fwd), ("gamma_bwd", bwd), ("beta", beta), ("q0", q0)):
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.gamma_fwd.size + 1

    def with_rf_box(self, k: int) -> "RateChain":
        return RateChain(self.gamma_fwd, self.gamma_bwd, k, self.a_rf, self.beta, self.q0)


def uniform_chain(m: int, gamma0: float, k: int, a_rf: float, **kw) -> RateChain:
    g = np.full(m - 1, float(gamma0))
    return RateChain(g, g.copy(), k, a_rf, **kw)


def gaussian_profile(m: int, gamma0: float, k0: float = 15, k_width: float = 2.0, amplitude_factor: float = 100.0) -> np.ndarray:
    """Symmetric rates ``gamma0 + factor*gamma0*exp(-((k0 - i)/K0)**2)`` for ``i = 1..m-1``."""
    if not 1 <= k0 <= m:
        raise ValueError(f"profile centre {k0} outside 1..{m}")
    if not k_width > 0:
        raise ValueError("profile width must be positive")
    i = np.arange(1, m)
    return gamma0 + amplitude_factor * gamma0 * np.exp(-(((k0 - i) / k_width) ** 2))


def profile_chain(m: int, gamma0: float, k: int, a_rf: float, **profile) -> RateChain:
    g = gaussian_profile(m, gamma0, **profile)
    return RateChain(g, g.copy(), k, a_rf)


def rate_matrix(c: RateChain, rf_on: bool | int = 0) -> np.ndarray:
    """Generator ``A`` with ``dq/dt = A q``; ``rf_on`` adds the sink on box ``k``."""
    m = c.m
    a = np.zeros((m, m))
    for i in range(m - 1):
        a[i + 1, i] += c.gamma_fwd[i]
        a[i, i] -= c.gamma_fwd[i]
        if i + 1 < m - 1:  # the last box keeps what it receives
            a[i, i + 1] += c.gamma_bwd[i]
            a[i + 1, i + 1] -= c.gamma_bwd[i]
    a[np.diag_indices(m)] -= c.beta
    if rf_on:
        a[c.k - 1, c.k - 1] -= c.a_rf
    return a


@dataclass(frozen=True)
class PulseTrain:
    """RF pulses of length ``tau_rf`` separated by free evolution ``tau``, for ``total`` seconds."""

    tau: float
    tau_rf: float = 1e-3
    total: float = 1.0

    def __post_init__(self):
        if not (self.tau > 0 and self.tau_rf > 0 and self.total > 0):
            raise ValueError("pulse-train durations must be positive")
        if self.n_pulses < 1:
            raise ValueError(f"total time {self.total} s holds no complete interval of {self.tau + self.tau_rf} s")

    @property
    def n_pulses(self) -> int:
        """Complete ``tau_rf + tau`` intervals (truncated)."""
        return int(math.floor(self.total / (self.tau + self.tau_rf) * (1 + 1e-12)))

    @property
    def remainder(self) -> float:
        return max(self.total - self.n_pulses * (self.tau + self.tau_rf), 0.0)


@dataclass
class PulseResult:
    charges: np.ndarray
    #: charges after each complete interval, shape (n_pulses + 1, m), when requested
    trajectory: np.ndarray | None = None


def evolve_pulse_train(c: RateChain, p: PulseTrain, trajectory: bool = False) -> PulseResult:
    """Charges after ``n_pulses`` RF-then-free intervals plus an RF-free remainder."""
    a0, a1 = rate_matrix(c, 0), rate_matrix(c, 1)
    step = expm(a0 * p.tau) @ expm(a1 * p.tau_rf)
    if trajectory:
        traj = [c.q0.copy()]
        q = c.q0.copy()
        for _ in range(p.n_pulses):
            q = step @ q
            traj.append(q)
        traj = np.array(traj)
    else:
        traj = None
        q = np.linalg.matrix_power(step, p.n_pulses) @ c.q0
    if p.remainder > 0:
        q = expm(a0 * p.remainder) @ q
    return PulseResult(q, traj)


def evolve_free(c: RateChain, t: float) -> np.ndarray:
    """Charges after ``t`` seconds without RF."""
    return expm(rate_matrix(c, 0) * t) @ c.q0


@dataclass
class SweepResult:
    tau: np.ndarray
    q_rf: np.ndarray
    q_free: float
    fit: StretchedFit | None
    fit_error: str = ""

    @property
    def normalized(self) -> np.ndarray:
        """``q_m`` with RF relative to the RF-free value."""
        return self.q_rf / self.q_free

    @property
    def contrast(self) -> np.ndarray:
        """Relative end-box loss ``(q_free - q_rf)/q_free``."""
        return 1.0 - self.normalized


def _end_charge(c: RateChain, template: PulseTrain, tau: float) -> float:
    p = PulseTrain(tau, template.tau_rf, template.total)
    return float(evolve_pulse_train(c, p).charges[-1])


def tau_sweep(c: RateChain, taus: Sequence[float], template: PulseTrain | None = None, workers: int | None = 1) -> SweepResult:
    """End-box charge against the inter-pulse delay, with a stretched-exponential fit."""
    template = template or PulseTrain(1e-3)
    tau = np.asarray(taus, dtype=float)
    q = np.array(parallel_map(partial(_end_charge, c, template), tau, workers))
    q_free = float(evolve_free(c, template.total)[-1])
    fit, err = None, ""
    try:
        fit = fit_stretched(tau, q / q_free)
        if not fit.converged:
            err = f"fit did not converge: {fit.message} (rms {fit.rms:.3g})"
    except ValueError as exc:
        err = str(exc)
    return SweepResult(tau, q, q_free, fit, err)
