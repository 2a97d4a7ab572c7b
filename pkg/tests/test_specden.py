import numpy as np
import pytest

from excitondyn.specden import (
    AntisymLorentzianPeak,
    CompositeSD,
    DrudeLorentzSD,
    LorentzianSumSD,
    effective_reorganization_energy,
    enhance_peak_constrained,
    fit_lorentzians,
    load_tabulated_sd,
    reorganization_energy,
)
from excitondyn.units import CM_TO_RAD_PS

GAMMA = 20.0 / CM_TO_RAD_PS  # 1/(50 fs) in cm^-1


class TestDrudeLorentz:
    def test_reorganization_is_lambda(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        assert reorganization_energy(dl) == pytest.approx(35.0, rel=1e-8)

    def test_positive_and_vanishing_at_zero(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        assert dl(0.0) == 0.0
        w = np.linspace(1.0, 2000.0, 50)
        assert np.all(dl(w) > 0)

    def test_maximum_at_gamma(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        w = np.linspace(1.0, 2000.0, 20000)
        assert abs(w[np.argmax(dl(w))] - GAMMA) < 1.0


class TestLorentzianPeaks:
    def test_closed_form_reorganization(self):
        peak = AntisymLorentzianPeak(5.0e4, 180.0, 10.0)
        quad = reorganization_energy(LorentzianSumSD((peak,)))
        assert peak.reorganization() == pytest.approx(quad, rel=1e-6)

    def test_antisymmetric_vanishes_at_zero(self):
        peak = AntisymLorentzianPeak(1.0e4, 200.0, 30.0)
        assert peak(0.0) == pytest.approx(0.0, abs=1e-15)

    def test_sum_is_additive(self):
        p1 = AntisymLorentzianPeak(1.0e4, 100.0, 20.0)
        p2 = AntisymLorentzianPeak(2.0e4, 300.0, 20.0)
        both = LorentzianSumSD((p1, p2))
        w = np.linspace(1.0, 600.0, 40)
        np.testing.assert_allclose(both(w), p1(w) + p2(w), rtol=1e-14)


class TestEffectiveReorganization:
    def test_window_bounded_by_total(self):
        dl = DrudeLorentzSD(35.0, GAMMA)
        partial = effective_reorganization_energy(dl, 0.0, 550.0)
        assert 0 < partial < 35.0

    def test_full_window_recovers_total(self):
        peak = AntisymLorentzianPeak(5.0e4, 180.0, 10.0)
        sd = LorentzianSumSD((peak,))
        lam = effective_reorganization_energy(sd, 0.0, 1e5)
        assert lam == pytest.approx(peak.reorganization(), rel=1e-4)


class TestEnhancePeak:
    def _peaks(self):
        return (
            AntisymLorentzianPeak(1.0e4, 70.0, 40.0),
            AntisymLorentzianPeak(1.0e4, 180.0, 40.0),
            AntisymLorentzianPeak(1.0e4, 300.0, 40.0),
        )

    def test_lambda_eff_preserved(self):
        peaks = self._peaks()
        window = (0.0, 550.0)
        before = effective_reorganization_energy(LorentzianSumSD(peaks), *window)
        enhanced = enhance_peak_constrained(peaks, 1, 3.0, window)
        after = effective_reorganization_energy(LorentzianSumSD(enhanced), *window)
        assert after == pytest.approx(before, rel=1e-9)

    def test_selected_peak_scaled(self):
        peaks = self._peaks()
        enhanced = enhance_peak_constrained(peaks, 1, 3.0, (0.0, 550.0))
        assert enhanced[1].strength == pytest.approx(3.0 * peaks[1].strength)
        assert enhanced[0].strength < peaks[0].strength

    def test_index_out_of_range(self):
        with pytest.raises(ValueError):
            enhance_peak_constrained(self._peaks(), 5, 2.0, (0.0, 550.0))


class TestFit:
    def test_single_peak_recovered(self):
        target = LorentzianSumSD((AntisymLorentzianPeak(5.0e4, 200.0, 50.0),))
        res = fit_lorentzians(target, 1, (1.0, 800.0), n_restarts=2)
        assert res.max_relative_error < 1e-3

    def test_composite_sum(self):
        dl = DrudeLorentzSD(10.0, GAMMA)
        peak = LorentzianSumSD((AntisymLorentzianPeak(1.0e4, 300.0, 30.0),))
        comp = CompositeSD((dl, peak))
        w = np.linspace(1.0, 900.0, 30)
        np.testing.assert_allclose(comp(w), dl(w) + peak(w), rtol=1e-14)


class TestTabulated:
    def test_roundtrip(self, tmp_path):
        dl = DrudeLorentzSD(35.0, GAMMA)
        w = np.linspace(0.0, 2000.0, 4001)
        path = tmp_path / "sd.txt"
        np.savetxt(path, np.column_stack([w, dl(w)]))
        tab = load_tabulated_sd(str(path))
        probe = np.linspace(5.0, 1500.0, 40)
        np.testing.assert_allclose(tab(probe), dl(probe), rtol=1e-3)
