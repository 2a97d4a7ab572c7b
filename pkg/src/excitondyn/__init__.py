"""Excitation-energy transfer dynamics in chromophore networks.

Convolutionless non-Markovian propagation of exciton populations with
structured spectral densities, plus two independent reference solvers
(a hierarchy method for Drude-Lorentz baths and exact discretized-bath
propagation at zero temperature) and a scenario runner.
"""

from .bathcorr import (
    CothApproximation,
    ExpansionErrorReport,
    ExponentialExpansion,
    auto_expansion,
    certify_expansion,
    correlation_quadrature,
    coth_rational_approx,
    expand_exponentials,
    fit_exponentials,
)
from .discretebath import (
    DiscretizedBathModel,
    discretize_sd,
    discretized_bath_propagate,
)
from .heom import drude_exponents, heom_convergence_ladder, heom_propagate
from .model import (
    DensityMatrix,
    ExcitonHamiltonian,
    Temperature,
    build_hamiltonian,
    eigen_transitions,
    fmo_monomer_hamiltonian,
    initial_site_state,
)
from .scenario import (
    ScenarioConfig,
    ScenarioPreset,
    get_preset,
    preset_catalog,
    resolve_config,
    run_scenario,
    run_sweep,
)
from .specden import (
    AntisymLorentzianPeak,
    CompositeSD,
    DivergentIntegralError,
    DrudeLorentzSD,
    LorentzianSumSD,
    TabulatedSD,
    effective_reorganization_energy,
    enhance_peak_constrained,
    fit_lorentzians,
    load_tabulated_sd,
    reorganization_energy,
)
from .trajectory import Trajectory, read_trajectory_csv, write_trajectory_csv
from .zofe import init_propagator, propagate

__version__ = "0.1.0"
