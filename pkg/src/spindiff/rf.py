"""RF-driven four-spin dynamics: rotating frame, spectra and dip maps."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import constants as C
from .evolution import polarization_operator, ts4_driven
from .spin_model import (
    ElectronFlipFlop,
    LocalLongitudinal,
    LocalTransverse,
    SpinSystem,
    SubspaceSelector,
    basis_label,
    electron_projection,
    product_state,
    set_flip_flop,
    to_matrix,
    z_values,
)


@dataclass(frozen=True)
class RfDrive:
    """Linearly polarized drive ``Omega cos(omega_rf t)`` on every carbon.

    ``omega`` is the amplitude and ``omega_rf`` the carrier, both in rad/s.
    """

    omega: float
    omega_rf: float = 0.0

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError(f"drive amplitude must be non-negative, got {self.omega}")

    def projections(self, s: SpinSystem) -> dict[int, tuple[float, float]]:
        """``{nucleus: (Omega_z, Omega_x)}`` along/across each hyperfine axis."""
        return {n: (self.omega * c, self.omega * sn) for n, (c, sn) in s.axes.items()}


def _require_frame(s: SpinSystem):
    if not s.hyperfine_frame:
        raise ValueError("the drive is defined in the hyperfine frame; call rotate_hyperfine_frame first")


def rotating_frame(s: SpinSystem, drive: RfDrive) -> SpinSystem:
    """Time-averaged Hamiltonian in the frame rotating at ``omega_rf``.

    On each tilted carbon the longitudinal coefficient becomes
    ``-omega_z + Omega_z - omega_rf`` and the transverse one ``Omega_x``;
    the static tilted-field term ``omega_x`` averages out. Hyperfine,
    electron Zeeman and electron flip-flop terms are kept.

    With ``omega_rf == 0`` there is nothing to average: the drive is a static
    field and is simply added to the hyperfine-frame system (so ``Omega = 0``
    returns the undriven system unchanged).
    """
    _require_frame(s)
    proj = drive.projections(s)
    if drive.omega_rf == 0:
        extra = []
        for n, (wz, wx) in proj.items():
            if wz:
                extra.append(LocalLongitudinal(n, wz))
            if wx:
                extra.append(LocalTransverse(n, wx))
        return s.with_terms(list(s.terms) + extra)
    z_coef = {n: 0.0 for n in proj}
    terms = []
    for t in s.terms:
        if isinstance(t, LocalLongitudinal) and t.site in proj:
            z_coef[t.site] += t.omega_z
        elif isinstance(t, LocalTransverse) and t.site in proj:
            continue
        else:
            terms.append(t)
    for n, (wz, wx) in sorted(proj.items()):
        terms.append(LocalLongitudinal(n, z_coef[n] + wz - drive.omega_rf))
        if wx:
            terms.append(LocalTransverse(n, wx))
    return s.with_terms(terms)


def secular_system(s: SpinSystem) -> SpinSystem:
    """Hyperfine-frame system without the tilted transverse fields."""
    _require_frame(s)
    return s.with_terms(t for t in s.terms if not (isinstance(t, LocalTransverse) and t.site in s.axes))


def nuclear_excitation(s: SpinSystem) -> np.ndarray:
    """``sum_n I_n^z`` over the tilted carbons, for every basis state."""
    out = np.zeros(s.dim)
    for n in s.axes:
        out += z_values(s.n_sites, n)
    return out


# --- spectra -----------------------------------------------------------------


@dataclass
class Spectrum:
    jd: np.ndarray
    energies: np.ndarray  # (n_jd, n_states), adiabatically tracked branches
    vectors: np.ndarray  # (n_jd, n_states, n_states), columns follow the branches
    labels: list


def spectrum_vs_jd(s: SpinSystem, jd_grid: Sequence[float], sel: SubspaceSelector | float = 0) -> Spectrum:
    """Eigen-energies of a subspace block as the electron coupling ``J_d`` varies.

    Branches are continued by maximum eigenvector overlap between neighbouring
    grid points (optimal assignment), not by energy order, so crossings keep
    their identity.
    """
    jd = np.asarray(jd_grid, dtype=float)
    if jd.size == 0:
        raise ValueError("J_d grid is empty")
    if not any(isinstance(t, ElectronFlipFlop) for t in s.terms):
        raise ValueError("system has no electron flip-flop term to vary")
    from .spin_model import project_subspace

    energies, vectors = [], []
    labels = None
    prev = None
    for j in jd:
        sub = project_subspace(to_matrix(set_flip_flop(s, j)), s, sel)
        labels = sub.labels
        w, v = np.linalg.eigh(sub.matrix)
        if prev is not None:
            overlap = np.abs(prev.conj().T @ v) ** 2
            _, cols = linear_sum_assignment(-overlap)
            w, v = w[cols], v[:, cols]
            # fix the sign/phase so overlaps with the previous point are real positive
            ph = np.diag(prev.conj().T @ v)
            v = v * np.where(np.abs(ph) > 0, np.conj(ph) / np.abs(ph), 1.0)
        energies.append(w)
        vectors.append(v)
        prev = v
    return Spectrum(jd, np.array(energies), np.array(vectors), labels)


# --- dip maps ----------------------------------------------------------------

DEFAULT_WINDOW = 200e-6
DEFAULT_SAMPLES = 512


@dataclass(frozen=True)
class InitialPreset:
    """Incoherent mixture of product states (``"u"``/``"d"`` strings) with weights."""

    states: tuple
    weights: tuple

    @classmethod
    def zero_projection(cls):
        """Both carbons up, electron pair in the zero-projection subspace."""
        return cls(("uudu", "uduu"), (0.5, 0.5))

    @classmethod
    def unpolarized_electrons(cls):
        """Both carbons up, electron pair fully unpolarized."""
        st = tuple("u" + e1 + e2 + "u" for e1 in "ud" for e2 in "ud")
        return cls(st, (0.25,) * 4)


PRESETS = {
    "zero-projection": InitialPreset.zero_projection,
    "unpolarized": InitialPreset.unpolarized_electrons,
}


@dataclass
class DipMap:
    omega_rf: np.ndarray
    jd: np.ndarray
    nuclear: np.ndarray  # (n_jd, n_rf) time-averaged (p1 + p4)/2
    electron: np.ndarray  # (n_jd, n_rf) time-averaged 2<S2^z>


def dip_map(
    s: SpinSystem,
    omega: float,
    rf_grid: Sequence[float],
    jd_grid: Sequence[float],
    window: float = DEFAULT_WINDOW,
    samples: int = DEFAULT_SAMPLES,
    init: InitialPreset | str = "zero-projection",
) -> DipMap:
    """Time-averaged carbon and electron polarization over a carrier/``J_d`` grid.

    ``s`` is the hyperfine-frame four-spin system. Each cell is evolved
    exactly under the rotating-frame Hamiltonian for ``window`` seconds and
    the observables are averaged over ``samples`` uniform times in
    ``[0, window]``.
    """
    _require_frame(s)
    if not window > 0:
        raise ValueError(f"averaging window must be positive, got {window}")
    if isinstance(init, str):
        init = PRESETS[init]()
    rf = np.asarray(rf_grid, dtype=float)
    jd = np.asarray(jd_grid, dtype=float)
    t = np.linspace(0.0, window, samples)
    n = s.n_sites
    psi0 = np.stack([product_state(n, st) for st in init.states], axis=1)
    weights = np.asarray(init.weights, dtype=float)
    weights = weights / weights.sum()
    nuc_op = polarization_operator(n, sorted(s.axes)) / len(s.axes)
    el_op = polarization_operator(n, [s.electrons[0]])
    # every state in the mixture has the same electron projection structure;
    # the Hamiltonian conserves it, so evolve only the sectors that are used
    proj = electron_projection(s)
    sectors = sorted({float(proj[np.flatnonzero(psi0[:, k])[0]]) for k in range(psi0.shape[1])})
    nuc = np.zeros((jd.size, rf.size))
    el = np.zeros((jd.size, rf.size))
    for a, j in enumerate(jd):
        sj = set_flip_flop(s, j)
        hs = np.array([to_matrix(rotating_frame(sj, RfDrive(omega, w))) for w in rf])
        for sec in sectors:
            idx = np.flatnonzero(np.isclose(proj, sec))
            cols = [k for k in range(psi0.shape[1]) if np.isclose(proj[np.flatnonzero(psi0[:, k])[0]], sec)]
            h = hs[:, idx[:, None], idx[None, :]]
            w, v = np.linalg.eigh(h)  # (n_rf, d), (n_rf, d, d)
            c = np.einsum("rji,jk->rik", v.conj(), psi0[idx][:, cols])  # (n_rf, d, k)
            ph = np.exp(-1j * t[None, :, None] * w[:, None, :])  # (n_rf, nt, d)
            amp = np.einsum("rij,rtj,rjk->rtik", v, ph, c)  # (n_rf, nt, d, k)
            prob = (np.abs(amp) ** 2).mean(axis=1)  # time average, (n_rf, d, k)
            wk = weights[cols]
            nuc[a] += np.einsum("rik,i,k->r", prob, nuc_op[idx], wk)
            el[a] += np.einsum("rik,i,k->r", prob, el_op[idx], wk)
    return DipMap(rf, jd, nuc, el)


@dataclass(frozen=True)
class Dip:
    position: float
    depth: float
    index: int


def find_dips(x: np.ndarray, y: np.ndarray, contrast: float = 0.05) -> list[Dip]:
    """Local minima below ``max - contrast * range`` with parabolic vertex refinement."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    span = y.max() - y.min()
    if span <= 1e-9 * max(1.0, abs(y.max())):
        return []
    thresh = y.max() - contrast * span
    out = []
    for i in range(1, y.size - 1):
        if y[i] < y[i - 1] and y[i] <= y[i + 1] and y[i] < thresh:
            y0, y1, y2 = y[i - 1 : i + 2]
            den = y0 - 2 * y1 + y2
            shift = 0.5 * (y0 - y2) / den if den > 0 else 0.0
            shift = float(np.clip(shift, -0.5, 0.5))
            pos = x[i] + shift * (x[i + 1] - x[i - 1]) / 2
            out.append(Dip(float(pos), float(thresh - y1), i))
    return out


def dip_counts(m: DipMap, contrast: float = 0.05) -> np.ndarray:
    """Number of nuclear-polarization dips for every ``J_d`` row."""
    return np.array([len(find_dips(m.omega_rf, row, contrast)) for row in m.nuclear])


def single_flip_gaps(s: SpinSystem, omega: float, jd: float = 0.0, tol: float = 1e-9) -> np.ndarray:
    """Carrier frequencies at which one carbon quantum can be absorbed.

    The rotating-frame Hamiltonian without the transverse drive part and
    without the carrier shift conserves the carbon quantum number ``M``. Its
    eigenstates are grouped by ``M``; a gap ``E_a - E_b`` with
    ``M_a = M_b + 1`` is allowed when the transverse carbon operator connects
    the two states. At such a carrier the dressed states become degenerate in
    the rotating frame.
    """
    _require_frame(s)
    sj = set_flip_flop(s, jd)
    frame = rotating_frame(sj, RfDrive(omega, 1.0))
    # undo the carrier shift and remove the transverse drive part
    base = frame.with_terms(
        [
            replace(t, omega_z=t.omega_z + 1.0) if isinstance(t, LocalLongitudinal) and t.site in s.axes else t
            for t in frame.terms
            if not (isinstance(t, LocalTransverse) and t.site in s.axes)
        ]
    )
    h = to_matrix(base)
    m = nuclear_excitation(s)
    ex = np.zeros((s.dim, s.dim))
    for n in s.axes:
        bit = 1 << (s.n_sites - 1 - n)
        i = np.arange(s.dim)
        ex[i ^ bit, i] += 0.5
    proj = electron_projection(s)
    energies, states, mvals = [], [], []
    for mv in np.unique(m):
        for pv in np.unique(proj):
            idx = np.flatnonzero((m == mv) & np.isclose(proj, pv))
            if idx.size == 0:
                continue
            w, v = np.linalg.eigh(h[np.ix_(idx, idx)])
            full = np.zeros((s.dim, idx.size), complex)
            full[idx] = v
            energies.extend(w)
            states.append(full)
            mvals.extend([mv] * idx.size)
    vecs = np.concatenate(states, axis=1)
    e = np.array(energies)
    mv = np.array(mvals)
    elem = np.abs(vecs.conj().T @ ex @ vecs)
    gaps = []
    for a in range(e.size):
        for b in range(e.size):
            if np.isclose(mv[a] - mv[b], 1.0) and elem[a, b] > tol:
                gaps.append(e[a] - e[b])
    return np.unique(np.round(np.array(gaps), 6))


def driven_evolution(
    s: SpinSystem,
    drive: RfDrive,
    psi0,
    t_grid,
    samples_per_period: int = 20,
    dt: float | None = None,
) -> np.ndarray:
    """Hyperfine-frame evolution under the explicit ``cos(omega_rf t)`` drive.

    Trotter-Suzuki with the drive held constant over each step (sampled at
    the step midpoint); the step resolves the carrier with at least
    ``samples_per_period`` samples. Returns amplitudes, shape ``(nt, dim)``.
    """
    _require_frame(s)
    proj = drive.projections(s)
    if dt is None:
        period = C.TWO_PI / abs(drive.omega_rf) if drive.omega_rf else np.inf
        from .evolution import local_timescale

        dt = min(period / samples_per_period, 0.5 * local_timescale(s))

    def terms(t):
        c = math.cos(drive.omega_rf * t)
        out = []
        for n, (wz, wx) in proj.items():
            out += [LocalLongitudinal(n, wz * c), LocalTransverse(n, wx * c)]
        return out

    return ts4_driven(s, terms, psi0, t_grid, dt)


def state_labels(s: SpinSystem, indices) -> list[str]:
    return [basis_label(s, i) for i in indices]
