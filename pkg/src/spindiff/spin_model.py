"""Spin systems, Hamiltonian terms and exact matrix assembly.

Conventions
-----------
- Every site is spin-1/2; spin operators have eigenvalues +-1/2.
- Basis states are ordered big-endian over site ids: site 0 is the most
  significant bit and "up" is the 0 bit. For four sites the index of
  ``|n1 e2 e3 n4>`` is ``8*n1 + 4*e2 + 2*e3 + n4`` with up = 0.
- Coefficients are angular frequencies (rad/s).

The four-spin model orders its sites as nucleus 1, electron 2, electron 3,
nucleus 4 (a 13C-P1-P1-13C chain).
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from . import constants as C

#: dense assembly limit (number of sites)
MAX_DENSE_SITES = 14


class DimensionError(ValueError):
    """Raised when a dense operation is requested for too large a system."""


class Species(enum.Enum):
    NUCLEAR = "nuclear"
    ELECTRON = "electron"


@dataclass(frozen=True)
class SpinSite:
    id: int
    species: Species
    label: str = ""


# --- Hamiltonian terms -------------------------------------------------------
#
# Each term reduces to a sum of products of single-site spin operators,
# returned by ``products()`` as ``[(coef, ((site, "x"|"y"|"z"), ...)), ...]``.


@dataclass(frozen=True)
class Zeeman:
    """``sign * omega * I^z`` on one site."""

    site: int
    omega: float
    sign: int = 1

    @property
    def sites(self):
        return (self.site,)

    def products(self):
        return [(self.sign * self.omega, ((self.site, "z"),))]


@dataclass(frozen=True)
class HyperfineSecular:
    """``azz * S^z I^z``."""

    electron: int
    nucleus: int
    azz: float

    @property
    def sites(self):
        return (self.electron, self.nucleus)

    def products(self):
        return [(self.azz, ((self.electron, "z"), (self.nucleus, "z")))]


@dataclass(frozen=True)
class HyperfinePseudosecular:
    """``azx * S^z I^x``."""

    electron: int
    nucleus: int
    azx: float

    @property
    def sites(self):
        return (self.electron, self.nucleus)

    def products(self):
        return [(self.azx, ((self.electron, "z"), (self.nucleus, "x")))]


@dataclass(frozen=True)
class ElectronFlipFlop:
    """``jd * (S1^x S2^x + S1^y S2^y)``."""

    e1: int
    e2: int
    jd: float

    @property
    def sites(self):
        return (self.e1, self.e2)

    def products(self):
        return [
            (self.jd, ((self.e1, "x"), (self.e2, "x"))),
            (self.jd, ((self.e1, "y"), (self.e2, "y"))),
        ]


@dataclass(frozen=True)
class NuclearXY:
    """``jxy * (I1^+ I2^- + I1^- I2^+) = 2 jxy (I1^x I2^x + I1^y I2^y)``.

    ``jxy`` is the coefficient of the raising/lowering form, so the
    flip-flop matrix element between ``|ud>`` and ``|du>`` equals ``jxy``.
    """

    n1: int
    n2: int
    jxy: float

    @property
    def sites(self):
        return (self.n1, self.n2)

    def products(self):
        c = 2.0 * self.jxy
        return [
            (c, ((self.n1, "x"), (self.n2, "x"))),
            (c, ((self.n1, "y"), (self.n2, "y"))),
        ]


@dataclass(frozen=True)
class NuclearIsing:
    """``jzz * I1^z I2^z``."""

    n1: int
    n2: int
    jzz: float

    @property
    def sites(self):
        return (self.n1, self.n2)

    def products(self):
        return [(self.jzz, ((self.n1, "z"), (self.n2, "z")))]


@dataclass(frozen=True)
class LocalTransverse:
    """``omega_x * I^x`` on one site."""

    site: int
    omega_x: float

    @property
    def sites(self):
        return (self.site,)

    def products(self):
        return [(self.omega_x, ((self.site, "x"),))]


@dataclass(frozen=True)
class LocalLongitudinal:
    """``omega_z * I^z`` on one site."""

    site: int
    omega_z: float

    @property
    def sites(self):
        return (self.site,)

    def products(self):
        return [(self.omega_z, ((self.site, "z"),))]


HamiltonianTerm = (
    Zeeman
    | HyperfineSecular
    | HyperfinePseudosecular
    | ElectronFlipFlop
    | NuclearXY
    | NuclearIsing
    | LocalTransverse
    | LocalLongitudinal
)

_TERM_TYPES = (
    Zeeman,
    HyperfineSecular,
    HyperfinePseudosecular,
    ElectronFlipFlop,
    NuclearXY,
    NuclearIsing,
    LocalTransverse,
    LocalLongitudinal,
)


@dataclass(frozen=True)
class SpinSystem:
    """Sites plus Hamiltonian terms.

    ``axes`` is empty in the laboratory frame. After
    :func:`rotate_hyperfine_frame` it maps each tilted nucleus to
    ``(A_zz/Delta, A_zx/Delta)``, the direction cosines of its hyperfine
    quantization axis in the lab x-z plane.
    """

    sites: tuple[SpinSite, ...]
    terms: tuple = ()
    axes: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "sites", tuple(self.sites))
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "axes", dict(self.axes))
        for i, s in enumerate(self.sites):
            if s.id != i:
                raise ValueError(f"site ids must be consecutive from 0; got {s.id} at position {i}")
        for t in self.terms:
            self._check_term(t)
        for n in self.axes:
            if self.species(n) is not Species.NUCLEAR:
                raise ValueError(f"frame axis given for non-nuclear site {n}")

    def _check_term(self, t):
        if not isinstance(t, _TERM_TYPES):
            raise TypeError(f"unknown Hamiltonian term {t!r}")
        n = len(self.sites)
        for s in t.sites:
            if not 0 <= s < n:
                raise ValueError(f"{t!r}: site {s} out of range for {n} sites")
        for f in dataclasses.fields(t):
            v = getattr(t, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError(f"{t!r}: coefficient {f.name} is not finite")
        if len(t.sites) == 2 and t.sites[0] == t.sites[1]:
            raise ValueError(f"{t!r}: two-site term needs distinct sites")
        sp_ = [self.sites[s].species for s in t.sites]
        if isinstance(t, (HyperfineSecular, HyperfinePseudosecular)):
            if sp_ != [Species.ELECTRON, Species.NUCLEAR]:
                raise ValueError(f"{t!r}: hyperfine terms couple one electron and one nucleus")
        elif isinstance(t, ElectronFlipFlop):
            if sp_ != [Species.ELECTRON, Species.ELECTRON]:
                raise ValueError(f"{t!r}: flip-flop needs two electron sites")
        elif isinstance(t, (NuclearXY, NuclearIsing)):
            if sp_ != [Species.NUCLEAR, Species.NUCLEAR]:
                raise ValueError(f"{t!r}: nuclear coupling needs two nuclear sites")

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def dim(self) -> int:
        return 2**self.n_sites

    def species(self, site: int) -> Species:
        return self.sites[site].species

    @property
    def electrons(self) -> list[int]:
        return [s.id for s in self.sites if s.species is Species.ELECTRON]

    @property
    def nuclei(self) -> list[int]:
        return [s.id for s in self.sites if s.species is Species.NUCLEAR]

    @property
    def hyperfine_frame(self) -> bool:
        return bool(self.axes)

    def with_terms(self, terms) -> "SpinSystem":
        return replace(self, terms=tuple(terms))


def nuclear_sites(n: int, prefix: str = "C") -> tuple[SpinSite, ...]:
    return tuple(SpinSite(i, Species.NUCLEAR, f"{prefix}{i}") for i in range(n))


# --- four-spin model ---------------------------------------------------------


@dataclass(frozen=True)
class FourSpinParams:
    """Parameters of the 13C-P1-P1-13C chain, all in rad/s."""

    omega_i: float
    omega_s: float
    azz12: float
    azx12: float
    azz34: float
    azx34: float
    jd: float

    def __post_init__(self):
        if not self.omega_i > 0:
            raise ValueError(f"nuclear Zeeman frequency must be positive, got {self.omega_i}")
        if not self.omega_s > 0:
            raise ValueError(f"electron Zeeman frequency must be positive, got {self.omega_s}")

    @classmethod
    def from_hz(
        cls,
        azz12=0.0,
        azx12=0.0,
        azz34=0.0,
        azx34=0.0,
        jd=0.0,
        field=C.DEFAULT_FIELD,
        omega_i=None,
        omega_s=None,
    ):
        """Build from linear frequencies (Hz) and a field in tesla.

        ``omega_i``/``omega_s`` override the Larmor frequencies (also in Hz).
        """
        wi = C.angular(omega_i) if omega_i is not None else C.larmor(field, C.GAMMA_C13)
        ws = C.angular(omega_s) if omega_s is not None else C.larmor(field, C.GAMMA_ELECTRON)
        a = C.angular
        return cls(wi, ws, a(azz12), a(azx12), a(azz34), a(azx34), a(jd))

    @property
    def delta12(self) -> float:
        return math.hypot(self.azz12, self.azx12)

    @property
    def delta34(self) -> float:
        return math.hypot(self.azz34, self.azx34)

    def tilted_frequencies(self):
        """``(wz1, wx1, wz4, wx4)``: nuclear Zeeman split along/across each hyperfine axis."""
        d12, d34 = self.delta12, self.delta34
        if d12 == 0 or d34 == 0:
            raise ValueError("hyperfine norm is zero; the hyperfine axis is undefined")
        w = self.omega_i
        return (w * self.azz12 / d12, w * self.azx12 / d12, w * self.azz34 / d34, w * self.azx34 / d34)


FOUR_SPIN_SITES = (
    SpinSite(0, Species.NUCLEAR, "C1"),
    SpinSite(1, Species.ELECTRON, "P1-2"),
    SpinSite(2, Species.ELECTRON, "P1-3"),
    SpinSite(3, Species.NUCLEAR, "C4"),
)


def build_four_spin(p: FourSpinParams) -> SpinSystem:
    """Laboratory-frame four-spin Hamiltonian (nucleus, electron, electron, nucleus)."""
    terms = [
        Zeeman(0, p.omega_i, -1),
        Zeeman(3, p.omega_i, -1),
        Zeeman(1, p.omega_s, +1),
        Zeeman(2, p.omega_s, +1),
        HyperfineSecular(1, 0, p.azz12),
        HyperfinePseudosecular(1, 0, p.azx12),
        HyperfineSecular(2, 3, p.azz34),
        HyperfinePseudosecular(2, 3, p.azx34),
        ElectronFlipFlop(1, 2, p.jd),
    ]
    return SpinSystem(FOUR_SPIN_SITES, terms)


def set_flip_flop(s: SpinSystem, jd: float) -> SpinSystem:
    """Copy of ``s`` with every electron flip-flop coefficient replaced by ``jd``."""
    return s.with_terms(
        replace(t, jd=jd) if isinstance(t, ElectronFlipFlop) else t for t in s.terms
    )


# --- matrix assembly ---------------------------------------------------------


def _bits(n_sites: int, site: int, idx: np.ndarray) -> np.ndarray:
    return (idx >> (n_sites - 1 - site)) & 1


def z_values(n_sites: int, site: int) -> np.ndarray:
    """Eigenvalue of ``I^z`` of ``site`` for every basis state (+-1/2)."""
    idx = np.arange(2**n_sites)
    return 0.5 - _bits(n_sites, site, idx)


def diagonal(s: SpinSystem) -> np.ndarray:
    """Diagonal of the Hamiltonian restricted to its purely longitudinal terms."""
    n = s.n_sites
    d = np.zeros(s.dim)
    zs = {}
    for t in s.terms:
        for coef, ops in t.products():
            if all(o == "z" for _, o in ops):
                v = np.full(s.dim, coef)
                for site, _ in ops:
                    if site not in zs:
                        zs[site] = z_values(n, site)
                    v = v * zs[site]
                d += v
    return d


def to_sparse(s: SpinSystem) -> sp.csr_matrix:
    """Hamiltonian as a sparse CSR matrix."""
    n, dim = s.n_sites, s.dim
    cols = np.arange(dim)
    rows_all, cols_all, vals_all = [], [], []
    for t in s.terms:
        for coef, ops in t.products():
            if coef == 0:
                continue
            vals = np.full(dim, complex(coef))
            mask = 0
            for site, o in ops:
                b = _bits(n, site, cols)
                if o == "z":
                    vals *= 0.5 - b
                elif o == "x":
                    vals *= 0.5
                    mask |= 1 << (n - 1 - site)
                else:  # y: I^y|up> = i/2 |dn>, I^y|dn> = -i/2 |up>
                    vals *= np.where(b == 0, 0.5j, -0.5j)
                    mask |= 1 << (n - 1 - site)
            rows_all.append(cols ^ mask)
            cols_all.append(cols)
            vals_all.append(vals)
    if not vals_all:
        return sp.csr_matrix((dim, dim), dtype=complex)
    m = sp.coo_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(dim, dim),
    )
    return m.tocsr()


def to_matrix(s: SpinSystem, max_sites: int = MAX_DENSE_SITES) -> np.ndarray:
    """Dense Hermitian Hamiltonian matrix.

    Raises
    ------
    DimensionError
        If the system has more than ``max_sites`` spins; evolve such systems
        term-wise with :func:`spindiff.evolution.ts4_propagate` instead.
    """
    if s.n_sites > max_sites:
        raise DimensionError(
            f"{s.n_sites} spins exceeds the dense limit of {max_sites}; "
            "use term-wise Trotter-Suzuki evolution (ts4_propagate)"
        )
    return to_sparse(s).toarray()


def spin_operator(n_sites: int, site: int, axis: str) -> np.ndarray:
    """Dense single-site spin operator embedded in the full space."""
    return to_matrix(
        SpinSystem(nuclear_sites(n_sites), [_AXIS_TERM[axis](site, 1.0)]), max_sites=n_sites
    ) if axis != "y" else _spin_y(n_sites, site)


def _spin_y(n_sites, site):
    dim = 2**n_sites
    cols = np.arange(dim)
    b = _bits(n_sites, site, cols)
    m = np.zeros((dim, dim), complex)
    m[cols ^ (1 << (n_sites - 1 - site)), cols] = np.where(b == 0, 0.5j, -0.5j)
    return m


_AXIS_TERM = {"x": LocalTransverse, "z": LocalLongitudinal}


# --- hyperfine frame ---------------------------------------------------------


def rotate_hyperfine_frame(s: SpinSystem) -> SpinSystem:
    """Rotate each hyperfine-coupled nucleus onto its hyperfine axis.

    Each pair ``S^z (A_zz I^z + A_zx I^x)`` becomes ``Delta S^z I~^z`` and a
    nuclear Zeeman term ``c I^z`` splits into ``c cos(theta) I~^z`` and
    ``-c sin(theta) I~^x`` with ``cos(theta) = A_zz/Delta``. The map is a
    per-nucleus rotation about y, so the spectrum is unchanged.
    """
    if s.hyperfine_frame:
        raise ValueError("system is already in the hyperfine frame")
    hf: dict[int, dict] = {}
    for t in s.terms:
        if isinstance(t, (HyperfineSecular, HyperfinePseudosecular)):
            rec = hf.setdefault(t.nucleus, {"electron": t.electron, "azz": 0.0, "azx": 0.0})
            if rec["electron"] != t.electron:
                raise ValueError(
                    f"nucleus {t.nucleus} is hyperfine-coupled to electrons "
                    f"{rec['electron']} and {t.electron}; the single-axis rotation does not apply"
                )
            if isinstance(t, HyperfineSecular):
                rec["azz"] += t.azz
            else:
                rec["azx"] += t.azx
    axes = {}
    for n, rec in hf.items():
        delta = math.hypot(rec["azz"], rec["azx"])
        if delta == 0:
            continue
        axes[n] = (rec["azz"] / delta, rec["azx"] / delta)
        rec["delta"] = delta

    new_terms = []
    emitted = set()
    for t in s.terms:
        touched = [x for x in t.sites if x in axes]
        if not touched:
            new_terms.append(t)
            continue
        if isinstance(t, (HyperfineSecular, HyperfinePseudosecular)):
            if t.nucleus not in emitted:
                new_terms.append(HyperfineSecular(t.electron, t.nucleus, hf[t.nucleus]["delta"]))
                emitted.add(t.nucleus)
            continue
        cos, sin = axes[touched[0]]
        if isinstance(t, Zeeman):
            c = t.sign * t.omega
            new_terms += [LocalLongitudinal(t.site, c * cos), LocalTransverse(t.site, -c * sin)]
        elif isinstance(t, LocalLongitudinal):
            c = t.omega_z
            new_terms += [LocalLongitudinal(t.site, c * cos), LocalTransverse(t.site, -c * sin)]
        elif isinstance(t, LocalTransverse):
            c = t.omega_x
            new_terms += [LocalLongitudinal(t.site, c * sin), LocalTransverse(t.site, c * cos)]
        else:
            raise ValueError(f"{t!r}: nuclear-nuclear couplings on tilted nuclei are not supported")
    return SpinSystem(s.sites, new_terms, axes)


def frame_rotation(s: SpinSystem) -> np.ndarray:
    """Unitary ``U`` with ``H_lab = U H_hf U^dagger`` for a rotated system ``s``."""
    u = np.array([[1.0 + 0j]])
    for site in range(s.n_sites):
        if site in s.axes:
            cos, sin = s.axes[site]
            half = math.atan2(sin, cos) / 2
            # exp(-i theta I^y): columns are the tilted up/down states
            r = np.array([[math.cos(half), -math.sin(half)], [math.sin(half), math.cos(half)]])
        else:
            r = np.eye(2)
        u = np.kron(u, r)
    return u


# --- subspaces ---------------------------------------------------------------


@dataclass(frozen=True)
class SubspaceSelector:
    """Total electron z-projection (sum of electron m_s)."""

    projection: float = 0


class Subspace(NamedTuple):
    matrix: np.ndarray
    labels: list
    indices: np.ndarray


def basis_label(s: SpinSystem, index: int) -> str:
    """Arrow label of a basis state, primed on tilted nuclei."""
    out = []
    for site in range(s.n_sites):
        b = (index >> (s.n_sites - 1 - site)) & 1
        out.append(("↓" if b else "↑") + ("'" if site in s.axes else ""))
    return "".join(out)


def electron_projection(s: SpinSystem) -> np.ndarray:
    total = np.zeros(s.dim)
    for e in s.electrons:
        total += z_values(s.n_sites, e)
    return total


def project_subspace(h: np.ndarray, s: SpinSystem, sel: SubspaceSelector | float = 0) -> Subspace:
    """Block of ``h`` on states with the selected total electron projection.

    Basis states keep the global (big-endian) order.
    """
    target = sel.projection if isinstance(sel, SubspaceSelector) else sel
    if h.shape != (s.dim, s.dim):
        raise ValueError(f"matrix shape {h.shape} does not match system dimension {s.dim}")
    idx = np.flatnonzero(np.isclose(electron_projection(s), target))
    if idx.size == 0:
        raise ValueError(f"no basis states with electron projection {target}")
    return Subspace(h[np.ix_(idx, idx)], [basis_label(s, i) for i in idx], idx)


# electron-pair part of the zero-projection four-spin block, in block order
_BELL_LABELS = ["↑-↑", "↑+↑", "↑-↓", "↑+↓", "↓-↑", "↓+↑", "↓-↓", "↓+↓"]


def bell_transform_electrons(h_block: np.ndarray) -> tuple[np.ndarray, list[str]]:
    """Rewrite the zero-projection four-spin block in the electron ``|+>, |->`` basis.

    ``|+-> = (|ud> +- |du>)/sqrt(2)`` for the electron pair. The input is
    the 8x8 block from :func:`project_subspace` (global basis order); the
    output order is ``|n1 -+ n4>`` as listed in the returned labels.
    """
    h_block = np.asarray(h_block)
    if h_block.shape != (8, 8):
        raise ValueError(f"expected the 8x8 zero-projection block, got {h_block.shape}")
    # block order: (n1, e2 e3, n4) with e2 e3 in {ud, du}; index = 4*n1 + 2*pair + n4
    t = np.zeros((8, 8))
    r = 1 / math.sqrt(2)
    col = 0
    for n1 in (0, 1):
        for n4 in (0, 1):
            ud = 4 * n1 + 0 + n4
            du = 4 * n1 + 2 + n4
            minus, plus = 4 * n1 + 2 * n4, 4 * n1 + 2 * n4 + 1
            t[ud, minus], t[du, minus] = r, -r
            t[ud, plus], t[du, plus] = r, r
            col += 2
    return t.T @ h_block @ t, list(_BELL_LABELS)


def hermiticity_error(h: np.ndarray) -> float:
    """``max|H - H^dagger| / max|H|`` (0 for the zero matrix)."""
    scale = np.abs(h).max()
    return 0.0 if scale == 0 else float(np.abs(h - h.conj().T).max() / scale)


def product_state(n_sites: int, spins: str | Sequence[int]) -> np.ndarray:
    """Basis vector from a string like ``"udud"``/``"↑↓↑↓"`` or a 0/1 sequence (0 = up)."""
    if isinstance(spins, str):
        spins = spins.replace("'", "")
        table = {"u": 0, "d": 1, "↑": 0, "↓": 1, "0": 0, "1": 1}
        bits = [table[c] for c in spins]
    else:
        bits = list(spins)
    if len(bits) != n_sites:
        raise ValueError(f"expected {n_sites} spins, got {len(bits)}")
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    v = np.zeros(2**n_sites, complex)
    v[idx] = 1.0
    return v
