import numpy as np
import pytest

from excitondyn.heom import (
    drude_exponents,
    heom_convergence_ladder,
    heom_propagate,
)
from excitondyn.model import Temperature, build_hamiltonian, initial_site_state
from excitondyn.specden import DrudeLorentzSD
from excitondyn.units import CM_TO_RAD_PS

GAMMA = 20.0 / CM_TO_RAD_PS
T300 = Temperature(300.0)


def dimer():
    return build_hamiltonian([0.0, 100.0], [100.0])


class TestExponents:
    def test_drude_pole(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        cs, nus, delta = drude_exponents(dl, T300, 3)
        assert nus[0] == pytest.approx(GAMMA)
        assert cs[0].imag == pytest.approx(-35.0 * GAMMA)
        assert cs.size == 4

    def test_matsubara_frequencies(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        _, nus, _ = drude_exponents(dl, T300, 2)
        np.testing.assert_allclose(
            nus[1:], 2.0 * np.pi * T300.kt_cm * np.array([1.0, 2.0]))

    def test_terminator_shrinks_with_terms(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        deltas = [abs(drude_exponents(dl, T300, k)[2]) for k in (0, 2, 5)]
        assert deltas[0] > deltas[1] > deltas[2]

    def test_zero_temperature_rejected(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        with pytest.raises(ValueError):
            drude_exponents(dl, Temperature(0.0), 1)


class TestPropagation:
    def test_conservation(self):
        h = dimer()
        dl = DrudeLorentzSD(35.0, GAMMA)
        rho0 = initial_site_state(h, 1)
        traj = heom_propagate(h, dl, T300, 3, 1, rho0, 0.2)
        assert np.max(traj.trace_dev) <= 1e-8
        assert np.max(traj.herm_dev) <= 1e-10
        assert np.min(traj.min_eig) >= -1e-6

    def test_thermalizing_tendency(self):
        # downhill transfer: the lower site ends up more populated than
        # the Boltzmann-free starting point after a few bath times
        h = build_hamiltonian([0.0, 200.0], [50.0])
        dl = DrudeLorentzSD(50.0, GAMMA)
        rho0 = initial_site_state(h, 2)
        traj = heom_propagate(h, dl, T300, 4, 1, rho0, 1.0)
        assert traj.populations[-1, 0] > 0.5

    def test_weak_coupling_matches_unitary(self):
        h = dimer()
        dl = DrudeLorentzSD(1e-4, GAMMA)
        rho0 = initial_site_state(h, 1)
        traj = heom_propagate(h, dl, T300, 2, 0, rho0, 0.1)
        m = h.matrix() * CM_TO_RAD_PS
        delta = (m[1, 1] - m[0, 0]) / 2.0
        v = m[0, 1]
        omega = np.sqrt(delta**2 + v**2)
        p2 = (v**2 / omega**2) * np.sin(omega * traj.times)**2
        assert np.max(np.abs(traj.populations[:, 1] - p2)) < 1e-3

    def test_depth_validation(self):
        h = dimer()
        dl = DrudeLorentzSD(35.0, GAMMA)
        rho0 = initial_site_state(h, 1)
        with pytest.raises(ValueError):
            heom_propagate(h, dl, T300, 0, 1, rho0, 0.1)


class TestCrossMethod:
    def test_weak_coupling_dimer_agreement(self):
        # at weak system-bath coupling the convolutionless propagator and
        # the hierarchy agree to three digits
        from excitondyn.bathcorr import auto_expansion
        from excitondyn.zofe import init_propagator, propagate

        h = dimer()
        dl = DrudeLorentzSD(0.5, GAMMA)
        rho0 = initial_site_state(h, 1)
        ref = heom_propagate(h, dl, T300, 3, 1, rho0, 1.0)
        expn = auto_expansion(dl, T300, t_max_ps=1.5)
        state = init_propagator(h, [expn, expn], rho0)
        traj = propagate(state, 1.0)
        assert np.max(np.abs(traj.populations - ref.populations)) <= 1e-3


class TestConvergenceLadder:
    def test_dimer_converges(self):
        h = dimer()
        dl = DrudeLorentzSD(35.0, GAMMA)
        rho0 = initial_site_state(h, 1)
        traj, report = heom_convergence_ladder(
            h, dl, T300, (3, 5), (1, 1), rho0, 0.3, threshold=1e-2)
        assert report.converged
        assert report.max_diffs[-1] <= report.threshold
        assert traj.metadata["depth"] == 5

    def test_needs_two_rungs(self):
        h = dimer()
        dl = DrudeLorentzSD(35.0, GAMMA)
        rho0 = initial_site_state(h, 1)
        with pytest.raises(ValueError):
            heom_convergence_ladder(h, dl, T300, (3,), (1,), rho0, 0.1)
