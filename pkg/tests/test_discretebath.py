import numpy as np
import pytest

from excitondyn.discretebath import (
    DiscretizedBathModel,
    discretize_sd,
    discretized_bath_propagate,
)
from excitondyn.model import build_hamiltonian, initial_site_state
from excitondyn.specden import AntisymLorentzianPeak, LorentzianSumSD
from excitondyn.units import CM_TO_RAD_PS


def peak_sd(lam, center, width):
    strength = lam * width * (center**2 + width**2) / (np.pi * center)
    return LorentzianSumSD((AntisymLorentzianPeak(strength, center, width),))


class TestDiscretization:
    def test_reorganization_converges_with_modes(self):
        from excitondyn.specden import effective_reorganization_energy
        sd = peak_sd(4.0, 180.0, 10.0)
        # compare against the window-restricted reorganization energy, which
        # is what the binned mode set represents
        target = effective_reorganization_energy(sd, 120.0, 240.0)
        errs = []
        for n_modes in (2, 4, 8):
            bath = discretize_sd(sd, n_modes, (120.0, 240.0))
            errs.append(abs(bath.discrete_reorganization(0) - target) / target)
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] <= 0.01

    def test_couplings_positive(self):
        sd = peak_sd(4.0, 180.0, 10.0)
        bath = discretize_sd(sd, 6, (100.0, 260.0))
        assert np.all(bath.couplings[0] > 0)
        assert np.all(np.diff(bath.frequencies[0]) > 0)

    def test_invalid_range(self):
        sd = peak_sd(4.0, 180.0, 10.0)
        with pytest.raises(ValueError):
            discretize_sd(sd, 4, (240.0, 120.0))

    def test_dimension_cap(self):
        sd = peak_sd(4.0, 180.0, 10.0)
        bath = discretize_sd(sd, 12, (120.0, 240.0), fock_dim=6, n_sites=2)
        h = build_hamiltonian([0.0, 100.0], [50.0])
        with pytest.raises(ValueError):
            discretized_bath_propagate(h, bath, initial_site_state(h, 1), 0.1)


class TestPropagation:
    def test_single_mode_rabi(self):
        # one resonant mode on site 2 of a detuned dimer with V = 0 acts on
        # the populations not at all (pure dephasing limit)
        h = build_hamiltonian([0.0, 100.0], [0.0])
        bath = DiscretizedBathModel(
            frequencies=(np.array([]), np.array([100.0])),
            couplings=(np.array([]), np.array([5.0])),
            fock_dims=((), (12,)),
        )
        rho0 = initial_site_state(h, 2)
        traj = discretized_bath_propagate(h, bath, rho0, 0.3)
        assert np.max(np.abs(traj.populations[:, 1] - 1.0)) <= 1e-10

    def test_conservation(self):
        sd = peak_sd(2.0, 180.0, 15.0)
        h = build_hamiltonian([0.0, 100.0], [50.0])
        bath = discretize_sd(sd, 4, (120.0, 240.0), fock_dim=4, n_sites=2)
        rho0 = initial_site_state(h, 1)
        traj = discretized_bath_propagate(h, bath, rho0, 0.2)
        assert np.max(traj.trace_dev) <= 1e-8
        assert np.max(traj.herm_dev) <= 1e-10
        assert traj.metadata["top_level_occupation"] <= 1e-6

    def test_fock_truncation_guard(self):
        # a strongly coupled resonant mode with a minimal Fock space must
        # be rejected, not silently truncated
        h = build_hamiltonian([0.0, 100.0], [50.0])
        bath = DiscretizedBathModel(
            frequencies=(np.array([100.0]), np.array([])),
            couplings=(np.array([60.0]), np.array([])),
            fock_dims=((2,), ()),
        )
        rho0 = initial_site_state(h, 1)
        with pytest.raises(RuntimeError, match="Fock truncation"):
            discretized_bath_propagate(h, bath, rho0, 0.3)

    def test_mixed_initial_state_rejected(self):
        h = build_hamiltonian([0.0, 100.0], [50.0])
        bath = DiscretizedBathModel(
            frequencies=(np.array([]), np.array([])),
            couplings=(np.array([]), np.array([])),
            fock_dims=((), ()),
        )
        from excitondyn.model import DensityMatrix
        mixed = DensityMatrix(np.diag([0.5, 0.5]).astype(complex))
        with pytest.raises(ValueError, match="pure"):
            discretized_bath_propagate(h, bath, mixed, 0.1)

    def test_bare_unitary_limit(self):
        h = build_hamiltonian([0.0, 100.0], [50.0])
        bath = DiscretizedBathModel(
            frequencies=(np.array([]), np.array([])),
            couplings=(np.array([]), np.array([])),
            fock_dims=((), ()),
        )
        rho0 = initial_site_state(h, 1)
        traj = discretized_bath_propagate(h, bath, rho0, 0.3)
        m = h.matrix() * CM_TO_RAD_PS
        delta = (m[1, 1] - m[0, 0]) / 2.0
        v = m[0, 1]
        omega = np.sqrt(delta**2 + v**2)
        p2 = (v**2 / omega**2) * np.sin(omega * traj.times)**2
        assert np.max(np.abs(traj.populations[:, 1] - p2)) < 1e-8
