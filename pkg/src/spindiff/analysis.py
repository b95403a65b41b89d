"""Stretched-exponential fits and the rate density behind them.

A stretched exponential ``exp(-(tau/tau_d)**eps)`` with ``0 < eps < 1`` is a
superposition of simple exponentials,

    exp(-(tau/tau_d)**eps) = integral_0^inf L(mu) exp(-mu tau) dmu,

where ``L`` is a rescaled one-sided stable density. ``L`` is evaluated here
by real-axis quadrature of Zolotarev's integral representation, which is
non-negative by construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq, least_squares

EPS_BOUNDS = (0.05, 1.5)
START_EPS = (0.5, 0.75, 1.0)


def stretched(tau, s0: float, s1: float, tau_d: float, eps: float):
    """``S0 - S1 exp(-(tau/tau_d)**eps)``."""
    return s0 - s1 * np.exp(-((np.asarray(tau, dtype=float) / tau_d) ** eps))


@dataclass
class StretchedFit:
    s0: float
    s1: float
    tau_d: float
    eps: float
    rms: float
    #: covariance of (S0, S1, log tau_d, eps); None when singular
    covariance: np.ndarray | None = None
    eps_at_bound: bool = False
    converged: bool = True
    message: str = ""

    @property
    def tau_d_stderr(self) -> float:
        if self.covariance is None:
            return math.inf
        return self.tau_d * math.sqrt(max(self.covariance[2, 2], 0.0))

    @property
    def eps_stderr(self) -> float:
        if self.covariance is None:
            return math.inf
        return math.sqrt(max(self.covariance[3, 3], 0.0))

    def __call__(self, tau):
        return stretched(tau, self.s0, self.s1, self.tau_d, self.eps)


def fit_stretched(tau, signal, weights=None) -> StretchedFit:
    """Least-squares fit of ``S0 - S1 exp(-(tau/tau_d)**eps)``.

    Multi-start over ``eps`` in {0.5, 0.75, 1} and five ``tau_d`` guesses
    spread over the data range; the lowest cost wins. ``tau_d`` is fitted on
    a log scale and ``eps`` is bounded to ``[0.05, 1.5]``.

    Raises
    ------
    ValueError
        for fewer than 8 points, less than 1.5 decades of ``tau``, or a
        constant signal.
    """
    t = np.asarray(tau, dtype=float)
    y = np.asarray(signal, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValueError("tau and signal must be 1-D arrays of equal length")
    if t.size < 8:
        raise ValueError(f"need at least 8 points, got {t.size}")
    if np.any(t <= 0):
        raise ValueError("tau values must be positive")
    if math.log10(t.max() / t.min()) < 1.5 - 1e-9:
        raise ValueError("tau must span at least 1.5 decades")
    span = float(np.ptp(y))
    if span <= 1e-12 * max(1.0, float(np.abs(y).max())):
        raise ValueError("signal is constant; a stretched exponential is undetermined")
    w = np.ones_like(y) if weights is None else np.sqrt(np.asarray(weights, dtype=float))

    def resid(p):
        s0, s1, lt, e = p
        return w * (s0 - s1 * np.exp(-((t / math.exp(lt)) ** e)) - y)

    lo = [-np.inf, -np.inf, -np.inf, EPS_BOUNDS[0]]
    hi = [np.inf, np.inf, np.inf, EPS_BOUNDS[1]]
    best = None
    for e0 in START_EPS:
        for lt0 in np.log(np.geomspace(t.min(), t.max(), 5)):
            s1_0 = y[-1] - y[0] if y[-1] != y[0] else span
            p0 = [y[-1], s1_0, lt0, e0]
            res = least_squares(resid, p0, bounds=(lo, hi), xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
            if best is None or res.cost < best.cost:
                best = res
    s0, s1, lt, e = best.x
    r = best.fun / w
    dof = max(t.size - 4, 1)
    cov = None
    try:
        jtj = best.jac.T @ best.jac
        cov = np.linalg.inv(jtj) * (2 * best.cost / dof)
    except np.linalg.LinAlgError:
        pass
    at_bound = bool(np.isclose(e, EPS_BOUNDS[0], atol=1e-6) or np.isclose(e, EPS_BOUNDS[1], atol=1e-6))
    return StretchedFit(
        float(s0),
        float(s1),
        float(math.exp(lt)),
        float(e),
        float(np.sqrt(np.mean(r**2))),
        cov,
        at_bound,
        bool(best.success),
        str(best.message),
    )


# --- inverse Laplace transform -----------------------------------------------


def _shape(phi, a):
    """Zolotarev's kernel ``A(phi)`` for the one-sided stable law of index ``a``."""
    return (np.sin(a * phi) / np.sin(phi)) ** (1 / (1 - a)) * np.sin((1 - a) * phi) / np.sin(a * phi)


def _shape0(a):
    return a ** (a / (1 - a)) * (1 - a)


def _quad(f, tail: bool = False):
    """Integrate ``f`` over ``(0, pi)``.

    ``tail`` marks points where the result is below ``exp(-40)``. There the
    integrand is a spike narrower than rounding allows to resolve, and quad's
    accuracy warnings are expected and harmless for every use in this module.
    """
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        if tail:
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
        v, _ = integrate.quad(f, 0.0, math.pi, epsabs=0.0, epsrel=1e-11, limit=200)
    return v


def _use_series(x, a):
    # the large-x expansions are alternating series in x**-a; below 1/2 they
    # converge quickly and without cancellation
    return x ** (-a) <= 0.5


def _series(x, a, density: bool):
    """Large-``x`` expansion of the density (``density=True``) or survival function."""
    z = x ** (-a)
    total, k = 0.0, 1
    while k < 400:
        if density:
            size = math.exp(math.lgamma(k * a + 1) - math.lgamma(k + 1) + k * math.log(z)) / x
        else:
            size = math.exp(math.lgamma(k * a) - math.lgamma(k + 1) + k * math.log(z))
        term = size * math.sin(k * math.pi * a)
        total += term if k % 2 else -term
        # sin() can vanish for isolated k, so stop on the magnitude bound
        if size < 1e-17 * abs(total) and k > 3:
            break
        k += 1
    return total / math.pi


def stable_log_density(x: float, a: float) -> float:
    """``log g(x)`` where ``g`` has Laplace transform ``exp(-s**a)``, ``0 < a < 1``."""
    if x <= 0:
        return -math.inf
    if _use_series(x, a):
        return math.log(_series(x, a, density=True))
    c = x ** (-a / (1 - a))
    a0 = _shape0(a)
    inner = _quad(lambda p: _shape(p, a) * math.exp(-c * (_shape(p, a) - a0)), c * a0 > 40)
    if inner <= 0:
        return -math.inf
    return math.log(a / (1 - a) / math.pi) - math.log(x) / (1 - a) - c * a0 + math.log(inner)


def stable_cdf(x: float, a: float) -> float:
    """``P(X <= x)`` for the one-sided stable law of index ``a``."""
    if x <= 0:
        return 0.0
    if _use_series(x, a):
        return 1.0 - _series(x, a, density=False)
    c = x ** (-a / (1 - a))
    return _quad(lambda p: math.exp(-c * _shape(p, a)), c * _shape0(a) > 40) / math.pi


def stable_sf(x: float, a: float) -> float:
    """``P(X > x)``, computed without cancellation for large ``x``."""
    if x <= 0:
        return 1.0
    if _use_series(x, a):
        return _series(x, a, density=False)
    c = x ** (-a / (1 - a))
    return _quad(lambda p: -math.expm1(-c * _shape(p, a))) / math.pi


@dataclass
class RateDensity:
    """Density ``L(mu)`` of decay rates on a logarithmic grid.

    For ``eps = 1`` the distribution is a point mass at ``1/tau_d``; it is
    stored as a spike on the grid node at that rate (``atom`` gives its
    location).
    """

    mu: np.ndarray
    density: np.ndarray
    cdf: np.ndarray
    tau_d: float
    eps: float
    atom: float | None = None
    tail_low: float = 0.0
    tail_high: float = 0.0

    @property
    def mass(self) -> float:
        """``integral L dmu`` on the grid (trapezoid in ``log mu``)."""
        return float(np.trapezoid(self.density * self.mu, np.log(self.mu)))

    @property
    def median(self) -> float:
        return density_median(self)

    def tail_mass(self, threshold: float) -> float:
        """Probability of rates above ``threshold`` (1/s)."""
        if self.atom is not None:
            return 1.0 if self.atom > threshold else 0.0
        if threshold <= self.mu[0]:
            return 1.0 - self.tail_low
        if threshold >= self.mu[-1]:
            return stable_sf(threshold * self.tau_d, self.eps)
        return float(1.0 - _cdf_interp(self)(math.log(threshold)))


def _cdf_interp(d: RateDensity):
    # flat deep-tail stretches give denormal slopes; PCHIP handles them but warns
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return PchipInterpolator(np.log(d.mu), d.cdf)


def inverse_laplace_stretched(
    tau_d: float,
    eps: float,
    mu=None,
    points_per_decade: int = 100,
    tail_tol: float = 1e-6,
) -> RateDensity:
    """Rate density whose Laplace transform is ``exp(-(tau/tau_d)**eps)``.

    Without an explicit grid, the grid starts at ``[1e-3, 1e3]/tau_d`` and is
    widened a decade at a time until the probability outside it is below
    ``tail_tol``. The resolution grows as ``4/(1 - eps)`` points per decade
    (at least ``points_per_decade``) to follow the narrowing peak.

    Raises
    ------
    ValueError
        for ``eps`` outside ``(0, 1]`` (no non-negative density exists above 1)
        or a non-positive ``tau_d``.
    """
    if not tau_d > 0:
        raise ValueError(f"tau_d must be positive, got {tau_d}")
    if not 0 < eps <= 1:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    if mu is None:
        # the density narrows around mu = 1/tau_d as eps -> 1
        if eps < 1:
            points_per_decade = min(max(points_per_decade, math.ceil(4 / (1 - eps))), 5000)
        lo, hi = -3, 3
        if eps < 1:
            while stable_cdf(10.0**lo, eps) > tail_tol / 2 and lo > -60:
                lo -= 1
            while stable_sf(10.0**hi, eps) > tail_tol / 2 and hi < 200:
                hi += 1
        n = (hi - lo) * points_per_decade + 1
        x = 10.0 ** np.linspace(lo, hi, n)
        # make the node at x = 1 exact
        x[-lo * points_per_decade] = 1.0
        mu_grid = x / tau_d
    else:
        mu_grid = np.asarray(mu, dtype=float)
        if np.any(mu_grid <= 0) or np.any(np.diff(mu_grid) <= 0):
            raise ValueError("rate grid must be positive and increasing")
        x = mu_grid * tau_d
    if eps == 1:
        k = int(np.argmin(np.abs(np.log(x))))
        dens = np.zeros_like(x)
        logmu = np.log(mu_grid)
        # trapezoid weight of node k in log-mu, so that the grid mass is 1
        left = logmu[k] - logmu[k - 1] if k > 0 else 0.0
        right = logmu[k + 1] - logmu[k] if k + 1 < x.size else 0.0
        dens[k] = 2.0 / ((left + right) * mu_grid[k])
        cdf = (np.arange(x.size) >= k).astype(float)
        return RateDensity(mu_grid, dens, cdf, tau_d, 1.0, atom=float(mu_grid[k]))
    logg = np.array([stable_log_density(v, eps) for v in x])
    dens = tau_d * np.exp(logg)
    cdf = np.array([stable_cdf(v, eps) if v <= 1 else 1.0 - stable_sf(v, eps) for v in x])
    cdf = np.maximum.accumulate(np.clip(cdf, 0.0, 1.0))
    return RateDensity(
        mu_grid, dens, cdf, tau_d, eps, tail_low=float(cdf[0]), tail_high=float(stable_sf(x[-1], eps))
    )


def laplace_forward(d: RateDensity, tau) -> np.ndarray:
    """``integral L(mu) exp(-mu tau) dmu`` on the density grid."""
    tau = np.atleast_1d(np.asarray(tau, dtype=float))
    logmu = np.log(d.mu)
    integrand = d.density[None, :] * d.mu[None, :] * np.exp(-np.outer(tau, d.mu))
    return np.trapezoid(integrand, logmu, axis=1)


def density_median(d: RateDensity, norm_tol: float = 1e-4) -> float:
    """Rate ``mu`` with ``P(rate <= mu) = 1/2``, from a monotone (PCHIP) CDF.

    Raises
    ------
    ValueError
        if the density does not integrate to 1 within ``norm_tol``.
    """
    if abs(d.mass - 1.0) > norm_tol:
        raise ValueError(f"density is not normalized (mass {d.mass:.6g})")
    if d.atom is not None:
        return d.atom
    f = _cdf_interp(d)
    return float(math.exp(brentq(lambda u: float(f(u)) - 0.5, math.log(d.mu[0]), math.log(d.mu[-1]), xtol=1e-14)))


def effective_diffusion(tau_d: float, r_c: float) -> float:
    """``D = r_c**2 / tau_d``; with ``r_c`` in nm and ``tau_d`` in s the result is nm^2/s."""
    if not tau_d > 0 or not r_c > 0:
        raise ValueError("tau_d and r_c must be positive")
    return r_c**2 / tau_d
