"""Time evolution: exact diagonalization and 4th-order Trotter-Suzuki.

The Trotter-Suzuki engine never assembles the Hamiltonian. Every term is
applied as a closed-form kernel on the state vector:

* all longitudinal (pure ``z``) terms are merged into one diagonal phase,
* ``omega I^x`` is a 2x2 rotation on each pair of states differing in that bit,
* ``A S^z I^x`` is the same rotation with a sign set by the electron bit,
* ``J (XX + YY)`` rotates the ``|01>, |10>`` pair of the two sites.

Each kernel is unitary, so the propagator stays unitary at any step.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spin_model import (
    DimensionError,
    ElectronFlipFlop,
    HyperfinePseudosecular,
    LocalLongitudinal,
    LocalTransverse,
    MAX_DENSE_SITES,
    NuclearXY,
    SpinSystem,
    Zeeman,
    diagonal,
    to_matrix,
    z_values,
)

log = logging.getLogger(__name__)

NORM_TOL = 1e-10
BASIS_CONVENTION = "big-endian; site 0 = most significant bit; up = 0"

#: Suzuki coefficient of the symmetric 4th-order fractal
SUZUKI_P = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
TS4_STAGES = (SUZUKI_P, SUZUKI_P, 1.0 - 4.0 * SUZUKI_P, SUZUKI_P, SUZUKI_P)

#: above this Hilbert-space dimension the step is applied to the state
#: directly instead of being cached as a dense matrix
STEP_MATRIX_MAX_DIM = 2**11


class StepSizeError(ValueError):
    """Raised when the Trotter step is not below the shortest local timescale."""


@dataclass
class StateVector:
    """Normalized amplitudes over the ``2**n`` product basis."""

    amplitudes: np.ndarray
    basis: str = BASIS_CONVENTION

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        n = self.amplitudes.shape[0]
        if n & (n - 1):
            raise ValueError(f"state length {n} is not a power of two")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def n_sites(self) -> int:
        return int(self.amplitudes.shape[0]).bit_length() - 1


def _amplitudes(psi) -> np.ndarray:
    return psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=complex)


def _check_state(s: SpinSystem, psi) -> np.ndarray:
    a = _amplitudes(psi)
    if a.shape[0] != s.dim:
        raise ValueError(f"state has length {a.shape[0]}, system dimension is {s.dim}")
    norms = np.linalg.norm(a, axis=0)
    if np.any(np.abs(norms - 1.0) > NORM_TOL):
        raise ValueError(f"initial state is not normalized (norm {norms})")
    return a


# --- exact engine ------------------------------------------------------------


def exact_propagate(s: SpinSystem, psi0, t_grid, max_sites: int = MAX_DENSE_SITES) -> list[StateVector]:
    """``psi(t) = exp(-iHt) psi0`` from one eigendecomposition.

    Raises
    ------
    DimensionError
        for systems above the dense limit.
    """
    return [StateVector(a) for a in exact_amplitudes(s, psi0, t_grid, max_sites)]


def exact_amplitudes(s: SpinSystem, psi0, t_grid, max_sites: int = MAX_DENSE_SITES) -> np.ndarray:
    """Array form of :func:`exact_propagate`, shape ``(len(t_grid), dim[, k])``."""
    a = _check_state(s, psi0)
    w, v = np.linalg.eigh(to_matrix(s, max_sites=max_sites))
    c = v.conj().T @ a
    t = np.asarray(t_grid, dtype=float)
    phases = np.exp(-1j * np.multiply.outer(t, w))
    if c.ndim == 1:
        return (phases * c) @ v.T
    return np.einsum("ij,tj,jk->tik", v, phases, c)


# --- Trotter-Suzuki kernels --------------------------------------------------


def _split_shape(n: int, sites: Sequence[int], k: int):
    """Reshape for viewing ``sites`` (ascending) as separate length-2 axes."""
    shape, prev = [], -1
    for st in sites:
        shape += [2 ** (st - prev - 1), 2]
        prev = st
    shape.append(2 ** (n - prev - 1) * k)
    return shape


def _rotate(v0: np.ndarray, v1: np.ndarray, theta):
    """In place ``exp(-i theta sigma_x)`` on the pair (v0, v1); theta may broadcast."""
    c, s = np.cos(theta), np.sin(theta)
    a = v0.copy()
    v0 *= c
    v0 -= 1j * s * v1
    v1 *= c
    v1 -= 1j * s * a


@dataclass(frozen=True)
class _Transverse:
    site: int
    omega: float

    def apply(self, psi, n, k, tau):
        v = psi.reshape(_split_shape(n, [self.site], k))
        _rotate(v[:, 0], v[:, 1], 0.5 * self.omega * tau)

    @property
    def scale(self):
        return abs(self.omega)


@dataclass(frozen=True)
class _ConditionalTransverse:
    """``a * S^z_control * I^x_target``."""

    control: int
    target: int
    a: float

    def apply(self, psi, n, k, tau):
        lo, hi = sorted((self.control, self.target))
        v = psi.reshape(_split_shape(n, [lo, hi], k))
        theta = 0.25 * self.a * tau
        for cbit, sign in ((0, 1.0), (1, -1.0)):
            if self.control < self.target:
                v0, v1 = v[:, cbit, :, 0], v[:, cbit, :, 1]
            else:
                v0, v1 = v[:, 0, :, cbit], v[:, 1, :, cbit]
            _rotate(v0, v1, sign * theta)

    @property
    def scale(self):
        return abs(self.a) / 2


@dataclass(frozen=True)
class _FlipFlop:
    """``j * (X_i X_j + Y_i Y_j)``; couples ``|01>`` and ``|10>`` with element ``j/2``."""

    i: int
    j: int
    coef: float

    def apply(self, psi, n, k, tau):
        lo, hi = sorted((self.i, self.j))
        v = psi.reshape(_split_shape(n, [lo, hi], k))
        _rotate(v[:, 0, :, 1], v[:, 1, :, 0], 0.5 * self.coef * tau)

    @property
    def scale(self):
        return abs(self.coef) / 2


def _compile(s: SpinSystem):
    """Split a system into its diagonal part and a list of off-diagonal kernels."""
    ops = []
    transverse: dict[int, float] = {}
    for t in s.terms:
        if isinstance(t, LocalTransverse):
            transverse[t.site] = transverse.get(t.site, 0.0) + t.omega_x
        elif isinstance(t, HyperfinePseudosecular):
            ops.append(_ConditionalTransverse(t.electron, t.nucleus, t.azx))
        elif isinstance(t, ElectronFlipFlop):
            ops.append(_FlipFlop(t.e1, t.e2, t.jd))
        elif isinstance(t, NuclearXY):
            ops.append(_FlipFlop(t.n1, t.n2, 2.0 * t.jxy))
        else:
            for _, prod in t.products():
                if any(o != "z" for _, o in prod):  # pragma: no cover - guarded by term types
                    raise ValueError(f"{t!r}: unsupported operator structure for TS4 kernels")
    ops = [_Transverse(site, w) for site, w in sorted(transverse.items())] + ops
    ops = [o for o in ops if o.scale > 0]
    return diagonal(s), ops


def conserved_single_site_fields(s: SpinSystem) -> set[int]:
    """Sites whose single-site ``z`` fields commute with the whole Hamiltonian.

    Sites joined by flip-flop terms form clusters. If no site of a cluster
    carries a transverse operator (``I^x`` or the nuclear side of a
    pseudo-secular hyperfine term) and the summed single-site ``z`` field is
    identical on every site, that field is a conserved charge. Its phase is
    applied exactly by the diagonal kernel, so it never limits the step.
    """
    n = s.n_sites
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    field_z = np.zeros(n)
    transverse = set()
    for t in s.terms:
        if isinstance(t, (ElectronFlipFlop, NuclearXY)):
            a, b = t.sites
            parent[find(a)] = find(b)
        elif isinstance(t, (Zeeman, LocalLongitudinal)):
            field_z[t.site] += t.products()[0][0]
        elif isinstance(t, LocalTransverse):
            transverse.add(t.site)
        elif isinstance(t, HyperfinePseudosecular):
            transverse.add(t.nucleus)
    clusters: dict[int, list[int]] = {}
    for i in range(n):
        clusters.setdefault(find(i), []).append(i)
    out = set()
    for members in clusters.values():
        if transverse.intersection(members):
            continue
        f = field_z[members]
        if np.allclose(f, f[0], rtol=1e-12, atol=0):
            out.update(members)
    return out


def local_timescale(s: SpinSystem) -> float:
    """``1 / max|coefficient|`` over terms that do not commute with the rest."""
    exempt = conserved_single_site_fields(s)
    scale = 0.0
    for t in s.terms:
        if isinstance(t, (Zeeman, LocalLongitudinal)) and t.site in exempt:
            continue
        for coef, _ in t.products():
            scale = max(scale, abs(coef))
    return math.inf if scale == 0 else 1.0 / scale


@dataclass
class TrotterPlan:
    """Fixed-step symmetric 4th-order Suzuki product for one system."""

    system: SpinSystem
    dt: float
    order: int = 4
    stages: tuple = TS4_STAGES
    _diag: np.ndarray = field(init=False, repr=False)
    _ops: list = field(init=False, repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if self.order != 4:
            raise ValueError("only the 4th-order product is implemented")
        for t in self.system.terms:
            if len(t.sites) > 2:  # pragma: no cover - all term types are 1- or 2-site
                raise ValueError(f"{t!r}: only one- and two-site terms are supported")
        self._diag, self._ops = _compile(self.system)

    def strang(self, psi: np.ndarray, tau: float) -> None:
        """In-place second-order step ``e^{-iD tau/2} e^{-iO tau/2} ... e^{-iD tau/2}``."""
        n = self.system.n_sites
        k = psi.shape[1]
        half = np.exp(-0.5j * tau * self._diag)[:, None]
        psi *= half
        ops = self._ops
        for op in ops[:-1]:
            op.apply(psi, n, k, 0.5 * tau)
        if ops:
            ops[-1].apply(psi, n, k, tau)
        for op in reversed(ops[:-1]):
            op.apply(psi, n, k, 0.5 * tau)
        psi *= half

    def step(self, psi: np.ndarray) -> None:
        """One in-place TS4 step of length ``dt`` on ``psi`` of shape ``(dim, k)``."""
        for c in self.stages:
            self.strang(psi, c * self.dt)

    def step_matrix(self) -> np.ndarray:
        u = np.eye(self.system.dim, dtype=complex)
        self.step(u)
        return u


def _check_step(s: SpinSystem, dt: float, allow_large_step: bool):
    ts = local_timescale(s)
    if dt >= ts:
        msg = f"time step {dt:.3g} s is not below the shortest local timescale {ts:.3g} s"
        if not allow_large_step:
            raise StepSizeError(msg + "; pass allow_large_step=True to override")
        warnings.warn(msg, RuntimeWarning, stacklevel=3)


def ts4_observe(
    s: SpinSystem,
    psi0,
    t_grid,
    dt: float,
    observe: Callable[[np.ndarray], np.ndarray] | None = None,
    *,
    allow_large_step: bool = False,
    use_step_matrix: bool | None = None,
):
    """Evolve with TS4 and evaluate ``observe`` at every grid time.

    ``psi0`` may hold several states as columns (shape ``(dim, k)``). The
    interval between consecutive grid times is split into
    ``ceil(interval/dt)`` equal steps, so the effective step never exceeds
    ``dt``. Without ``observe`` the amplitudes themselves are returned.

    Returns
    -------
    list
        ``observe(psi)`` (or a copy of ``psi``) for each time in ``t_grid``.
    """
    a = _check_state(s, psi0)
    single = a.ndim == 1
    psi = (a[:, None] if single else a).astype(complex, copy=True)
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("time grid must be a non-empty 1-D sequence")
    if t[0] < 0 or np.any(np.diff(t) < 0):
        raise ValueError("time grid must be non-negative and non-decreasing")
    _check_step(s, dt, allow_large_step)
    if use_step_matrix is None:
        use_step_matrix = s.dim <= STEP_MATRIX_MAX_DIM
    obs = observe if observe is not None else (lambda x: x.copy())

    def emit():
        return obs(psi[:, 0] if single else psi)

    plans: dict[int, TrotterPlan | np.ndarray] = {}
    out = []
    now = 0.0
    for target in t:
        span = target - now
        if span > 0:
            nsteps = max(1, math.ceil(span / dt * (1 - 1e-12)))
            h = span / nsteps
            key = (round(h * 1e18), nsteps)
            if use_step_matrix:
                if key not in plans:
                    plans[key] = np.linalg.matrix_power(TrotterPlan(s, h).step_matrix(), nsteps)
                psi = plans[key] @ psi
            else:
                plan = plans.setdefault(key[0], TrotterPlan(s, h))
                for _ in range(nsteps):
                    plan.step(psi)
            now = target
        out.append(emit())
    return out


def ts4_propagate(s: SpinSystem, psi0, t_grid, dt: float, *, allow_large_step: bool = False) -> list[StateVector]:
    """States at every grid time from the 4th-order Trotter-Suzuki product.

    Raises
    ------
    StepSizeError
        if ``dt`` is not below :func:`local_timescale` and no override is given.
    """
    amps = ts4_observe(s, psi0, t_grid, dt, allow_large_step=allow_large_step)
    return [StateVector(a) for a in amps]


def ts4_driven(
    s: SpinSystem,
    drive: Callable[[float], list],
    psi0,
    t_grid,
    dt: float,
    *,
    allow_large_step: bool = False,
) -> np.ndarray:
    """TS4 with time-dependent one-site terms sampled at each step midpoint.

    ``drive(t)`` returns extra terms (for example ``LocalTransverse``) valid
    during the step centred at ``t``. Returns amplitudes, shape ``(nt, dim)``.
    """
    a = _check_state(s, psi0)
    psi = a[:, None].astype(complex, copy=True)
    _check_step(s, dt, allow_large_step)
    out = []
    now = 0.0
    for target in np.asarray(t_grid, dtype=float):
        span = target - now
        if span > 0:
            nsteps = max(1, math.ceil(span / dt * (1 - 1e-12)))
            h = span / nsteps
            for i in range(nsteps):
                mid = now + (i + 0.5) * h
                TrotterPlan(s.with_terms(list(s.terms) + list(drive(mid))), h).step(psi)
            now = target
        out.append(psi[:, 0].copy())
    return np.array(out)


def converge_step(
    s: SpinSystem,
    psi0,
    t_grid,
    dt0: float | None = None,
    tol: float = 1e-4,
    observe: Callable[[np.ndarray], np.ndarray] | None = None,
    max_halvings: int = 12,
) -> tuple[float, float]:
    """Step-doubling search for a converged TS4 step.

    Halves ``dt`` until runs at ``dt`` and ``dt/2`` differ by at most ``tol``
    (max over the grid of the observable, or of the state-overlap error when
    no observable is given).

    Returns
    -------
    (dt, deviation)
        the accepted (finer) step and the last measured deviation.
    """
    dt = dt0 if dt0 is not None else 0.5 * local_timescale(s)
    if not math.isfinite(dt):
        dt = float(np.max(t_grid)) or 1.0

    def run(h):
        return ts4_observe(s, psi0, t_grid, h, observe, allow_large_step=True)

    coarse = run(dt)
    dev = math.inf
    for _ in range(max_halvings):
        fine = run(dt / 2)
        if observe is None:
            dev = max(1.0 - abs(np.vdot(a, b)) for a, b in zip(coarse, fine))
        else:
            dev = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)))) for a, b in zip(coarse, fine))
        dt /= 2
        log.debug("step doubling: dt=%.3g deviation=%.3g", dt, dev)
        if dev <= tol:
            return dt, dev
        coarse = fine
    raise RuntimeError(f"TS4 did not converge to {tol} after {max_halvings} halvings (last deviation {dev:.3g})")


def convergence_order(errors: Sequence[float], steps: Sequence[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(step)``."""
    x, y = np.log(np.asarray(steps)), np.log(np.asarray(errors))
    return float(np.polyfit(x, y, 1)[0])


# --- observables and initial states -----------------------------------------


@dataclass
class PolarizationSeries:
    """Polarizations ``2<I^z>`` on a time grid; ``values`` has shape ``(nt, n_groups)``."""

    times: np.ndarray
    values: np.ndarray
    labels: list
    stderr: np.ndarray | None = None


def _n_sites(dim: int) -> int:
    n = dim.bit_length() - 1
    if 2**n != dim:
        raise ValueError(f"state length {dim} is not a power of two")
    return n


def polarization_operator(n_sites: int, sites) -> np.ndarray:
    """Diagonal of ``sum_i 2 I_i^z`` over ``sites``."""
    d = np.zeros(2**n_sites)
    for i in sites:
        if not 0 <= i < n_sites:
            raise ValueError(f"site {i} out of range for {n_sites} sites")
        d += 2.0 * z_values(n_sites, i)
    return d


def measure_polarization(psi, sites_or_groups) -> np.ndarray:
    """``p_i = 2<psi|I_i^z|psi>``; a group (list of ids) gives the sum over members.

    ``psi`` may carry several states as columns; the result then has one
    row per group and one column per state.
    """
    a = _amplitudes(psi)
    n = _n_sites(a.shape[0])
    prob = np.abs(a) ** 2
    out = []
    for g in sites_or_groups:
        members = [g] if np.isscalar(g) else list(g)
        out.append(polarization_operator(n, members) @ prob)
    return np.array(out)


def random_bath_state(n_sites: int, polarized_site: int, seed) -> StateVector:
    """``|up>`` on one site times a normalized complex Gaussian vector on the rest."""
    if not 0 <= polarized_site < n_sites:
        raise ValueError(f"site {polarized_site} out of range for {n_sites} sites")
    rng = np.random.default_rng(seed)
    m = 2 ** (n_sites - 1)
    bath = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    bath /= np.linalg.norm(bath)
    # insert the up (0) bit at position polarized_site
    hi = n_sites - 1 - polarized_site
    psi = np.zeros(2**n_sites, complex)
    r = np.arange(m)
    idx = ((r >> hi) << (hi + 1)) | (r & ((1 << hi) - 1))
    psi[idx] = bath
    return StateVector(psi)


def random_bath_ensemble(n_sites: int, polarized_site: int, n_states: int, seed) -> np.ndarray:
    """``n_states`` independent random bath states as columns, seeded via ``SeedSequence.spawn``."""
    children = np.random.SeedSequence(seed).spawn(n_states)
    return np.stack([random_bath_state(n_sites, polarized_site, c).amplitudes for c in children], axis=1)


def energy(s: SpinSystem, psi) -> float:
    """``<psi|H|psi>`` (dense; small systems only)."""
    a = _amplitudes(psi)
    h = to_matrix(s)
    return float(np.real(np.vdot(a, h @ a)))
