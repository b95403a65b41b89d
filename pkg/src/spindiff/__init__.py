"""Electron-mediated nuclear spin diffusion: spin-cluster dynamics, effective
couplings, RF response maps and spectral-chain transport analysis."""

__version__ = "0.1.0"

from .spin_model import (  # noqa: E402
    FourSpinParams,
    SpinSite,
    SpinSystem,
    Species,
    SubspaceSelector,
    bell_transform_electrons,
    build_four_spin,
    project_subspace,
    rotate_hyperfine_frame,
    to_matrix,
)
from .evolution import (  # noqa: E402
    StateVector,
    TrotterPlan,
    exact_propagate,
    measure_polarization,
    random_bath_state,
    ts4_propagate,
)
from .effective import (  # noqa: E402
    build_effective_pair,
    build_network,
    cayley_tree,
    delocalization_threshold,
    regime1,
    regime2,
)
from .rf import RfDrive, dip_map, rotating_frame, spectrum_vs_jd  # noqa: E402
from .chain import PulseTrain, RateChain, evolve_pulse_train, gaussian_profile, rate_matrix, tau_sweep  # noqa: E402
from .analysis import (  # noqa: E402
    density_median,
    effective_diffusion,
    fit_stretched,
    inverse_laplace_stretched,
)
