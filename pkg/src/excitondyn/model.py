"""Electronic system: one-exciton Hamiltonian, initial states, eigen-analysis.

The basis states are the site-local excitations (one chromophore excited, all
others in the ground state); site indices are 1-based in every public
interface to match the conventional BChl numbering, storage is 0-based.
"""

from dataclasses import dataclass, field

import numpy as np

from .units import thermal_energy_cm

__all__ = [
    "ExcitonHamiltonian",
    "DensityMatrix",
    "Temperature",
    "build_hamiltonian",
    "fmo_monomer_hamiltonian",
    "eigen_transitions",
    "initial_site_state",
]

# 7-site FMO monomer Hamiltonian (cm^-1, 12000 cm^-1 offset subtracted from
# the diagonal; only energy differences matter for the transfer).
FMO_SITE_ENERGIES = (410.0, 530.0, 210.0, 320.0, 480.0, 630.0, 440.0)
FMO_COUPLINGS_UPPER = (
    -87.7, 5.5, -5.9, 6.7, -13.7, -9.9,
    30.8, 8.2, 0.7, 11.8, 4.3,
    -53.5, -2.2, -9.6, 6.0,
    -70.7, -17.0, -63.3,
    81.1, -1.3,
    39.7,
)


def _freeze(a):
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ExcitonHamiltonian:
    """Site energies (cm^-1) and symmetric electronic couplings (cm^-1)."""

    energies: np.ndarray
    couplings: np.ndarray

    def __post_init__(self):
        energies = _freeze(np.array(self.energies, dtype=float))
        couplings = _freeze(np.array(self.couplings, dtype=float))
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "couplings", couplings)
        n = self.n_sites
        if n < 1:
            raise ValueError("need at least one site")
        if couplings.shape != (n, n):
            raise ValueError(
                f"couplings shape {couplings.shape} does not match {n} sites"
            )
        if not (np.all(np.isfinite(energies)) and np.all(np.isfinite(couplings))):
            raise ValueError("non-finite Hamiltonian entries")
        if not np.array_equal(couplings, couplings.T):
            raise ValueError("couplings matrix must be exactly symmetric")
        if np.any(np.diagonal(couplings) != 0.0):
            raise ValueError("couplings diagonal must be zero")

    @property
    def n_sites(self):
        return self.energies.shape[0]

    def matrix(self):
        """Full Hamiltonian matrix in cm^-1 (site basis)."""
        return np.diag(self.energies) + self.couplings

    def scaled_couplings(self, factor):
        """New Hamiltonian with every coupling multiplied by `factor`."""
        return ExcitonHamiltonian(self.energies, factor * self.couplings)


@dataclass(frozen=True)
class DensityMatrix:
    """Reduced density matrix in the site basis (trace 1, Hermitian)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = _freeze(np.array(self.matrix, dtype=complex))
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("density matrix must be Hermitian within 1e-12")
        if abs(np.trace(m) - 1.0) > 1e-12:
            raise ValueError("density matrix trace must be 1 within 1e-12")

    @property
    def n_sites(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class Temperature:
    """Absolute temperature; `kt_cm` is the thermal energy in cm^-1."""

    kelvin: float
    kt_cm: float = field(init=False)

    def __post_init__(self):
        if self.kelvin < 0:
            raise ValueError("temperature must be non-negative")
        object.__setattr__(self, "kt_cm", thermal_energy_cm(self.kelvin))

    @property
    def is_zero(self):
        return self.kelvin == 0.0


def build_hamiltonian(energies, couplings_upper):
    """Build a Hamiltonian from site energies and the upper coupling triangle.

    `couplings_upper` lists V_12, V_13, ..., V_1N, V_23, ... row by row; the
    lower triangle is filled in by symmetry.
    """
    energies = np.asarray(energies, dtype=float)
    n = energies.shape[0]
    expected = n * (n - 1) // 2
    upper = np.asarray(couplings_upper, dtype=float)
    if upper.shape != (expected,):
        raise ValueError(
            f"expected {expected} upper-triangle couplings for {n} sites, "
            f"got {upper.shape}"
        )
    v = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    v[iu] = upper
    v[(iu[1], iu[0])] = upper
    return ExcitonHamiltonian(energies, v)


def fmo_monomer_hamiltonian():
    """The built-in 7-site FMO monomer Hamiltonian (cm^-1)."""
    return build_hamiltonian(FMO_SITE_ENERGIES, FMO_COUPLINGS_UPPER)


def eigen_transitions(h):
    """All positive differences between electronic eigenenergies, ascending."""
    evals = np.linalg.eigvalsh(h.matrix())
    diffs = evals[None, :] - evals[:, None]
    positive = np.sort(diffs[diffs > 0])
    return positive


def initial_site_state(h, site):
    """Pure state with the excitation on one chromophore (1-based index)."""
    n = h.n_sites
    if not 1 <= site <= n:
        raise ValueError(f"site index {site} out of range 1..{n}")
    m = np.zeros((n, n), dtype=complex)
    m[site - 1, site - 1] = 1.0
    return DensityMatrix(m)
