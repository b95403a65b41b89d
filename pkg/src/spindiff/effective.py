"""Perturbative electron-mediated nuclear couplings and nuclear-only networks.

Two parameter hierarchies of the four-spin chain are covered:

* hyperfine dominated (``Delta12 >~ Delta34 > J_d > omega_I``), where the
  carbon pair couples at third order through the tilted nuclear fields;
* dipolar dominated (``J_d > Delta12 ~ Delta34, omega_I``), where the
  electron pair forms singlet/triplet states and mediates a second-order
  flip-flop.

All frequencies are angular (rad/s). Results are reported as magnitudes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import constants as C
from .evolution import (
    PolarizationSeries,
    converge_step,
    local_timescale,
    polarization_operator,
    random_bath_ensemble,
    ts4_observe,
    exact_amplitudes,
)
from .spin_model import (
    FourSpinParams,
    LocalLongitudinal,
    NuclearIsing,
    NuclearXY,
    SpinSystem,
    nuclear_sites,
)

DEFAULT_MARGIN = 2.0


@dataclass(frozen=True)
class Regime1Result:
    delta: float
    j_eff: float
    j_dc: float
    omega: float
    hierarchy_ok: bool
    large_mismatch: bool

    @property
    def delocalized(self) -> bool:
        return self.j_eff > self.delta

    @property
    def max_transfer(self) -> float:
        return max_transfer(self.delta, self.j_eff)


@dataclass(frozen=True)
class Regime2Result:
    delta: float
    j_eff: float
    hierarchy_ok: bool
    bound_holds: bool

    @property
    def delocalized(self) -> bool:
        return self.j_eff > self.delta

    @property
    def max_transfer(self) -> float:
        return max_transfer(self.delta, self.j_eff)


def max_transfer(delta: float, j_eff: float) -> float:
    """Largest polarization swap of a detuned two-level flip-flop, ``J^2/(J^2 + delta^2)``."""
    if j_eff == 0 and delta == 0:
        return 0.0
    return j_eff**2 / (j_eff**2 + delta**2)


def regime1(p: FourSpinParams, margin: float = DEFAULT_MARGIN) -> Regime1Result:
    """Third-order couplings when the hyperfine norms dominate.

    ``omega`` is the geometric mean ``sqrt(|wz1 wz4|)`` of the two tilted
    longitudinal nuclear fields.

    Raises
    ------
    ValueError
        if either hyperfine norm vanishes.
    """
    d12, d34 = p.delta12, p.delta34
    if d12 == 0 or d34 == 0:
        raise ValueError("regime 1 needs non-zero hyperfine norms (couplings scale as 1/Delta)")
    wz1, wx1, wz4, wx4 = p.tilted_frequencies()
    wx1, wx4 = abs(wx1), abs(wx4)
    omega = math.sqrt(abs(wz1 * wz4))
    mismatch = abs(d12**2 - d34**2)
    delta = 2 * wx1 * wx4 * omega * mismatch / (d12**2 * d34**2)
    j_eff = 4 * wx1 * wx4 * abs(p.jd) / (d12 * d34)
    j_dc = omega * mismatch / (2 * d12 * d34)
    lo, hi = min(d12, d34), max(d12, d34)
    hierarchy = lo > margin * abs(p.jd) and abs(p.jd) > margin * p.omega_i
    large_mismatch = hi > margin * lo and lo < margin * omega
    return Regime1Result(delta, j_eff, j_dc, omega, hierarchy, large_mismatch)


def regime2(p: FourSpinParams, margin: float = DEFAULT_MARGIN) -> Regime2Result:
    """Second-order couplings when the electron flip-flop dominates.

    ``bound_holds`` reports ``delta <= (omega_I/J_d) * j_eff``, which is
    true whenever the ratio of the two pseudo-secular couplings is at most
    ``1 + sqrt(2)``.

    Raises
    ------
    ValueError
        if ``J_d`` is zero.
    """
    jd = abs(p.jd)
    if jd == 0:
        raise ValueError("regime 2 needs a non-zero electron flip-flop coupling J_d")
    a12, a34 = p.azx12, p.azx34
    delta = p.omega_i * abs(a34**2 - a12**2) / (8 * jd**2)
    j_eff = abs(a34 * a12) / (4 * jd)
    hierarchy = jd > margin * max(p.delta12, p.delta34) and jd > margin * p.omega_i
    bound = delta <= (p.omega_i / jd) * j_eff * (1 + 1e-12)
    return Regime2Result(delta, j_eff, hierarchy, bound)


def coupling_estimate(abar: float, jd: float, omega_1: float) -> float:
    """Order-of-magnitude effective coupling ``omega_1^2 J_d / (2 Abar^2)``."""
    if abar <= 0:
        raise ValueError("mean hyperfine coupling must be positive")
    return omega_1**2 * jd / (2 * abar**2)


@dataclass(frozen=True)
class Threshold:
    """Critical electron coupling for delocalization in two closed forms.

    ``mismatch_form`` uses ``Abar^2 - dA^2`` in the denominator and
    ``perturbative_form`` uses ``Abar^2 - dA^2/4``. ``ratio`` is their
    quotient (>= 1).
    """

    mismatch_form: float
    perturbative_form: float

    @property
    def ratio(self) -> float:
        if self.perturbative_form == 0:
            return 1.0
        return self.mismatch_form / self.perturbative_form


def delocalization_threshold(abar: float, d_a: float, omega_1: float) -> Threshold:
    """Threshold ``J_d`` above which a carbon pair with mean coupling ``abar`` and
    mismatch ``d_a`` delocalizes.

    Raises
    ------
    ValueError
        unless ``abar > d_a >= 0``.
    """
    if d_a < 0:
        raise ValueError("coupling mismatch must be non-negative")
    if abar <= d_a:
        raise ValueError(f"mean coupling {abar} must exceed the mismatch {d_a}")
    num = omega_1 * abar * d_a
    return Threshold(num / (abar**2 - d_a**2), num / (abar**2 - d_a**2 / 4))


def build_effective_pair(r: Regime1Result | Regime2Result) -> SpinSystem:
    """Two-carbon Hamiltonian ``-(delta/2) I1z + (delta/2) I4z + J_eff (XX + YY)``."""
    return SpinSystem(
        nuclear_sites(2),
        [
            LocalLongitudinal(0, -r.delta / 2),
            LocalLongitudinal(1, r.delta / 2),
            NuclearXY(0, 1, r.j_eff / 2),
        ],
    )


# --- networks ----------------------------------------------------------------


@dataclass(frozen=True)
class NetworkSpec:
    """Nuclear-only network.

    ``couplings`` holds ``(i, j, jzz, jxy)`` rows; ``jxy`` multiplies
    ``I_i^+ I_j^- + I_i^- I_j^+``. A pair may be listed in both orders only
    with identical values.
    """

    n_sites: int
    fields: tuple = ()
    couplings: tuple = ()

    def __post_init__(self):
        fields = tuple(float(x) for x in self.fields) or (0.0,) * self.n_sites
        if len(fields) != self.n_sites:
            raise ValueError(f"{len(fields)} local fields for {self.n_sites} sites")
        object.__setattr__(self, "fields", fields)
        table: dict[tuple[int, int], tuple[float, float]] = {}
        for row in self.couplings:
            i, j, jzz, jxy = row
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-coupling on site {i}")
            if not (0 <= i < self.n_sites and 0 <= j < self.n_sites):
                raise ValueError(f"coupling ({i}, {j}) out of range")
            key = (min(i, j), max(i, j))
            val = (float(jzz), float(jxy))
            if key in table and table[key] != val:
                raise ValueError(f"asymmetric coupling table at {key}: {table[key]} vs {val}")
            table[key] = val
        object.__setattr__(self, "couplings", tuple((i, j, *v) for (i, j), v in sorted(table.items())))


def build_network(spec: NetworkSpec) -> SpinSystem:
    """Local fields plus Ising and flip-flop couplings of a nuclear network."""
    terms = [LocalLongitudinal(i, w) for i, w in enumerate(spec.fields) if w != 0]
    for i, j, jzz, jxy in spec.couplings:
        if jzz:
            terms.append(NuclearIsing(i, j, jzz))
        if jxy:
            terms.append(NuclearXY(i, j, jxy))
    return SpinSystem(nuclear_sites(spec.n_sites), terms)


DEFAULT_RINGS = (1, 3, 6, 12)
#: effective flip-flop couplings J_eff (rad/s) for the ring boundaries 0-1, 1-2, 2-3
DEFAULT_CAYLEY_COUPLINGS = (1e3, 1e4, 1e5)


@dataclass(frozen=True)
class CayleyTree:
    """Loop-free tree of nuclear spins grouped in concentric rings.

    ``couplings[i]`` is the effective coupling ``J_eff`` across ring boundary
    ``i`` in the pair form ``J_eff (XX + YY)``; in the network table it is
    stored as ``jxy = J_eff / 2``.
    """

    rings: tuple
    couplings: tuple
    edges: tuple = field(init=False)

    def __post_init__(self):
        rings = tuple(int(r) for r in self.rings)
        if len(rings) < 2 or rings[0] != 1:
            raise ValueError("a tree needs a single centre site and at least one ring")
        b = rings[1]
        if b < 1:
            raise ValueError("the first ring must be non-empty")
        for inner, outer in zip(rings[1:], rings[2:]):
            if outer != inner * (b - 1):
                raise ValueError(f"ring sizes {rings} are inconsistent with branching {b}")
        if len(self.couplings) != len(rings) - 1:
            raise ValueError(f"{len(rings) - 1} ring boundaries need as many couplings, got {len(self.couplings)}")
        object.__setattr__(self, "rings", rings)
        object.__setattr__(self, "couplings", tuple(float(c) for c in self.couplings))
        edges = []
        start = [0]
        for r in rings:
            start.append(start[-1] + r)
        for level in range(1, len(rings)):
            parents = range(start[level - 1], start[level])
            children = iter(range(start[level], start[level + 1]))
            per_parent = b if level == 1 else b - 1
            for par in parents:
                for _ in range(per_parent):
                    edges.append((par, next(children), self.couplings[level - 1]))
        object.__setattr__(self, "edges", tuple(edges))

    @property
    def n_sites(self) -> int:
        return sum(self.rings)

    def ring_members(self) -> list[list[int]]:
        out, start = [], 0
        for r in self.rings:
            out.append(list(range(start, start + r)))
            start += r
        return out

    def network(self) -> NetworkSpec:
        return NetworkSpec(self.n_sites, couplings=tuple((i, j, 0.0, j_eff / 2) for i, j, j_eff in self.edges))


def cayley_tree(
    rings: Sequence[int] = DEFAULT_RINGS,
    couplings: Sequence[float] | None = None,
    units: str = "rad/s",
) -> CayleyTree:
    """Cayley tree with flip-flop couplings growing outward by default.

    ``couplings`` are effective couplings ``J_eff`` per ring boundary,
    innermost first. With
    ``units="hz"`` they are multiplied by ``2 pi``.
    """
    rings = tuple(rings)
    if couplings is None:
        couplings = DEFAULT_CAYLEY_COUPLINGS[: len(rings) - 1]
        if len(couplings) < len(rings) - 1:
            raise ValueError("give explicit couplings for trees deeper than the default")
    if units not in ("rad/s", "hz"):
        raise ValueError(f"unknown coupling units {units!r}")
    scale = C.TWO_PI if units == "hz" else 1.0
    return CayleyTree(rings, tuple(scale * c for c in couplings))


@dataclass
class CayleyRun:
    series: PolarizationSeries
    total: np.ndarray
    dt: float

    def decay_time(self, ring: int = 0, level: float = math.exp(-1)) -> float:
        """First time the ring polarization falls below ``level`` (linear interpolation)."""
        return first_crossing(self.series.times, self.series.values[:, ring], level)


def first_crossing(t: np.ndarray, y: np.ndarray, level: float) -> float:
    below = np.flatnonzero(y < level)
    if below.size == 0:
        return math.inf
    k = below[0]
    if k == 0:
        return float(t[0])
    y0, y1 = y[k - 1], y[k]
    return float(t[k - 1] + (y0 - level) / (y0 - y1) * (t[k] - t[k - 1]))


def simulate_cayley(
    tree: CayleyTree,
    t_grid,
    n_states: int = 8,
    seed: int = 0,
    dt: float | None = None,
    engine: str = "ts4",
    tol: float = 1e-4,
) -> CayleyRun:
    """Ring polarizations after polarizing the centre of an unpolarized tree.

    The unpolarized bath is emulated by ``n_states`` random pure states.
    Each ring value is the mean polarization per site; ``stderr`` is the
    standard error over the random states.
    """
    s = build_network(tree.network())
    psi0 = random_bath_ensemble(s.n_sites, 0, n_states, seed)
    rings = tree.ring_members()
    ops = np.array([polarization_operator(s.n_sites, m) / len(m) for m in rings])
    total_op = polarization_operator(s.n_sites, range(s.n_sites))

    def observe(psi):
        prob = np.abs(psi) ** 2
        return ops @ prob, total_op @ prob

    t = np.asarray(t_grid, dtype=float)
    if engine == "exact":
        amps = exact_amplitudes(s, psi0, t)
        obs = [observe(a) for a in amps]
        step = 0.0
    elif engine == "ts4":
        if dt is None:
            probe = t[t <= t[-1]][:: max(1, len(t) // 8)]
            dt, _ = converge_step(
                s, psi0[:, :1], probe, 0.5 * local_timescale(s), tol, observe=lambda x: observe(x)[0]
            )
        obs = ts4_observe(s, psi0, t, dt, observe)
        step = dt
    else:
        raise ValueError(f"unknown engine {engine!r}")
    per_state = np.array([o[0] for o in obs])  # (nt, rings, R)
    total = np.array([o[1] for o in obs])  # (nt, R)
    mean = per_state.mean(axis=2)
    err = per_state.std(axis=2, ddof=1) / math.sqrt(n_states) if n_states > 1 else None
    labels = [f"ring{i}" for i in range(len(rings))]
    return CayleyRun(PolarizationSeries(t, mean, labels, err), total.mean(axis=1), step)


# --- four-spin versus effective-pair dynamics --------------------------------

#: carbon 1 up, electrons down/up, carbon 4 down (zero electron projection)
FOUR_SPIN_INITIAL = "udud"


@dataclass
class RegimeComparison:
    """Carbon polarizations ``2<I^z>`` of sites 1 and 4 under both models."""

    times: np.ndarray
    exact: np.ndarray
    effective: np.ndarray
    result: Regime1Result | Regime2Result

    @property
    def rms(self) -> float:
        """RMS difference of the carbon-1 polarization."""
        return float(np.sqrt(np.mean((self.exact[:, 0] - self.effective[:, 0]) ** 2)))

    @property
    def exact_transfer(self) -> np.ndarray:
        """Polarization moved off carbon 1, ``(p1(0) - p1(t))/2``."""
        return (self.exact[0, 0] - self.exact[:, 0]) / 2

    @property
    def max_exact_transfer(self) -> float:
        return float(self.exact_transfer.max())

    @property
    def first_transfer_peak(self) -> float:
        """Time of the first maximum of the exact transfer (the flip-flop half-period)."""
        f = self.exact_transfer
        k = int(np.argmax(f > 0.9 * f.max()))
        while k + 1 < f.size and f[k + 1] >= f[k]:
            k += 1
        return float(self.times[k])


def compare_regime(p: FourSpinParams, regime: int, t_grid, initial: str = FOUR_SPIN_INITIAL) -> RegimeComparison:
    """Exact four-spin carbon dynamics next to the effective pair prediction.

    Regime 1 runs in the hyperfine frame (primed carbon states), regime 2 in
    the laboratory frame, matching the basis each effective model lives in.
    """
    from .spin_model import build_four_spin, product_state, rotate_hyperfine_frame

    if regime == 1:
        res = regime1(p)
        s = rotate_hyperfine_frame(build_four_spin(p))
    elif regime == 2:
        res = regime2(p)
        s = build_four_spin(p)
    else:
        raise ValueError(f"regime must be 1 or 2, got {regime}")
    t = np.asarray(t_grid, dtype=float)
    psi = product_state(4, initial)
    ops = np.array([polarization_operator(4, [0]), polarization_operator(4, [3])])
    exact = np.abs(exact_amplitudes(s, psi, t)) ** 2 @ ops.T
    pair = build_effective_pair(res)
    psi2 = product_state(2, initial[0] + initial[3])
    ops2 = np.array([polarization_operator(2, [0]), polarization_operator(2, [1])])
    eff = np.abs(exact_amplitudes(pair, psi2, t)) ** 2 @ ops2.T
    return RegimeComparison(t, exact, eff, res)
