"""Spectral density models and their integral measures.

Two analytic families are supported: the overdamped Drude-Lorentz form
J(w) = (2*lambda/pi) * gamma*w / (w^2 + gamma^2) and sums of antisymmetrized
Lorentzian peaks p * [1/((w-W)^2+G^2) - 1/((w+W)^2+G^2)].  The normalization
is fixed so that integrating J(w)/w over the positive half-line returns the
reorganization energy parameter exactly.
"""

from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

__all__ = [
    "DrudeLorentzSD",
    "AntisymLorentzianPeak",
    "LorentzianSumSD",
    "CompositeSD",
    "TabulatedSD",
    "eval_sd",
    "reorganization_energy",
    "effective_reorganization_energy",
    "huang_rhys_integral",
    "fit_lorentzians",
    "enhance_peak_constrained",
    "load_tabulated_sd",
    "DivergentIntegralError",
]


class DivergentIntegralError(ValueError):
    """The requested spectral-density integral does not converge."""


@dataclass(frozen=True)
class DrudeLorentzSD:
    """Overdamped spectral density with reorganization energy `lambda_total`
    and cutoff `gamma` (both cm^-1)."""

    lambda_total: float
    gamma: float

    def __post_init__(self):
        if not (self.lambda_total > 0 and self.gamma > 0):
            raise ValueError("Drude-Lorentz parameters must be positive")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        g = self.gamma
        return (2.0 * self.lambda_total / np.pi) * g * omega / (omega**2 + g**2)

    def over_omega(self, omega):
        """J(omega)/omega, finite at omega = 0."""
        omega = np.asarray(omega, dtype=float)
        g = self.gamma
        return (2.0 * self.lambda_total / np.pi) * g / (omega**2 + g**2)


@dataclass(frozen=True)
class AntisymLorentzianPeak:
    """One antisymmetrized Lorentzian: strength p ((cm^-1)^3 scale), center
    and half-width in cm^-1.  Vanishes at omega = 0 by construction."""

    strength: float
    center: float
    width: float

    def __post_init__(self):
        if self.strength < 0:
            raise ValueError("peak strength must be non-negative")
        if not (self.center > 0 and self.width > 0):
            raise ValueError("peak center and width must be positive")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        p, w0, g = self.strength, self.center, self.width
        return p * (1.0 / ((omega - w0) ** 2 + g**2)
                    - 1.0 / ((omega + w0) ** 2 + g**2))

    def over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        p, w0, g = self.strength, self.center, self.width
        a = (omega - w0) ** 2 + g**2
        b = (omega + w0) ** 2 + g**2
        # J/w = p * (b - a) / (a*b*w) with b - a = 4*w0*w: the w cancels.
        return p * 4.0 * w0 / (a * b)

    def reorganization(self):
        """Closed form of the half-line integral of J(w)/w (residue sum)."""
        p, w0, g = self.strength, self.center, self.width
        return np.pi * p * w0 / (g * (w0**2 + g**2))


@dataclass(frozen=True)
class LorentzianSumSD:
    """Sum of antisymmetrized Lorentzian peaks."""

    peaks: tuple

    def __post_init__(self):
        object.__setattr__(self, "peaks", tuple(self.peaks))

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.zeros_like(omega, dtype=float)
        for pk in self.peaks:
            out = out + pk(omega)
        return out

    def over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.zeros_like(omega, dtype=float)
        for pk in self.peaks:
            out = out + pk.over_omega(omega)
        return out


@dataclass(frozen=True)
class CompositeSD:
    """Sum of spectral-density components (e.g. Drude-Lorentz plus an extra
    high-energy Lorentzian peak)."""

    components: tuple

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components:
            raise ValueError("composite spectral density needs components")

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.zeros_like(omega, dtype=float)
        for c in self.components:
            out = out + c(omega)
        return out

    def over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        out = np.zeros_like(omega, dtype=float)
        for c in self.components:
            out = out + c.over_omega(omega)
        return out


@dataclass(frozen=True)
class TabulatedSD:
    """Spectral density sampled on a grid, linearly interpolated.

    Used as a fit target only; the propagator consumes analytic models.
    """

    omegas: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        omegas = np.asarray(self.omegas, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if omegas.ndim != 1 or omegas.shape != values.shape:
            raise ValueError("tabulated SD needs matching 1-d arrays")
        if np.any(np.diff(omegas) <= 0):
            raise ValueError("tabulated SD grid must be strictly increasing")
        object.__setattr__(self, "omegas", omegas)
        object.__setattr__(self, "values", values)

    def __call__(self, omega):
        return np.interp(omega, self.omegas, self.values)

    def over_omega(self, omega):
        omega = np.asarray(omega, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(omega > 0, self(omega) / np.maximum(omega, 1e-300), 0.0)
        return out


def load_tabulated_sd(path):
    """Read a two-column text file (omega cm^-1, J value) into a TabulatedSD."""
    data = np.loadtxt(path)
    if data.ndim != 2 or data.shape[1] < 2:
        raise ValueError(f"{path}: expected two columns (omega, J)")
    return TabulatedSD(data[:, 0], data[:, 1])


def eval_sd(sd, omega):
    """Evaluate J(omega); omega must be non-negative."""
    if np.any(np.asarray(omega) < 0):
        raise ValueError("omega must be non-negative")
    return sd(omega)


def _peak_points(sd, lo, hi):
    if isinstance(sd, LorentzianSumSD):
        return [p.center for p in sd.peaks if lo < p.center < hi]
    if isinstance(sd, CompositeSD):
        out = []
        for c in sd.components:
            out.extend(_peak_points(c, lo, hi))
        return out
    if isinstance(sd, AntisymLorentzianPeak):
        return [sd.center] if lo < sd.center < hi else []
    return []


def _quad_over_omega(sd, lo, hi):
    points = None
    if np.isfinite(hi):
        points = sorted(_peak_points(sd, lo, hi)) or None
    val, err = integrate.quad(
        sd.over_omega, lo, hi, points=points, epsrel=1e-10, epsabs=1e-13, limit=400
    )
    return val


def reorganization_energy(sd):
    """Integral of J(w)/w over the positive half-line (cm^-1)."""
    if isinstance(sd, DrudeLorentzSD):
        return sd.lambda_total
    if isinstance(sd, LorentzianSumSD):
        return float(sum(p.reorganization() for p in sd.peaks))
    if isinstance(sd, AntisymLorentzianPeak):
        return sd.reorganization()
    if isinstance(sd, CompositeSD):
        return float(sum(reorganization_energy(c) for c in sd.components))
    return _quad_over_omega(sd, 0.0, np.inf)


def effective_reorganization_energy(sd, e_min, e_max):
    """Integral of J(w)/w restricted to the window [e_min, e_max] (cm^-1)."""
    if not (0 <= e_min < e_max):
        raise ValueError("require 0 <= e_min < e_max")
    if isinstance(sd, DrudeLorentzSD):
        c = 2.0 * sd.lambda_total / np.pi
        if np.isinf(e_max):
            upper = np.pi / 2.0
        else:
            upper = np.arctan(e_max / sd.gamma)
        return c * (upper - np.arctan(e_min / sd.gamma))
    if np.isinf(e_max):
        return reorganization_energy(sd) - _quad_over_omega(sd, 0.0, e_min)
    return _quad_over_omega(sd, e_min, e_max)


def huang_rhys_integral(sd, e_min, e_max):
    """Integral of J(w)/w^2 over [e_min, e_max] (dimensionless).

    Raises DivergentIntegralError when the integrand is non-integrable at the
    lower bound (Drude-Lorentz or tabulated J with J(0+) linear in w).
    """
    if e_min < 0 or e_min >= e_max:
        raise ValueError("require 0 <= e_min < e_max")
    if e_min == 0 and isinstance(sd, DrudeLorentzSD):
        # J/w^2 ~ const/w near zero.
        raise DivergentIntegralError(
            "Huang-Rhys integral diverges at omega=0 for the Drude-Lorentz form"
        )

    def integrand(w):
        return sd.over_omega(w) / w if w > 0 else _hr_zero_limit(sd)

    points = None
    if np.isfinite(e_max):
        points = sorted(_peak_points(sd, e_min, e_max)) or None
    val, err = integrate.quad(
        integrand, e_min, e_max, points=points, epsrel=1e-10, epsabs=1e-13,
        limit=400,
    )
    return val


def _hr_zero_limit(sd):
    # Antisymmetrized Lorentzians vanish linearly at 0, so J/w^2 has a finite
    # limit there; evaluate it from the closed form.
    if isinstance(sd, LorentzianSumSD):
        return float(sum(
            4.0 * p.strength * p.center / (p.center**2 + p.width**2) ** 2
            for p in sd.peaks
        ))
    raise DivergentIntegralError("J(w)/w^2 not integrable at omega=0")


# ---------------------------------------------------------------------------
# Fitting a target spectral density with antisymmetrized Lorentzians.
# ---------------------------------------------------------------------------

def _peaks_from_params(params):
    n = len(params) // 3
    peaks = []
    for k in range(n):
        p, w0, g = params[3 * k: 3 * k + 3]
        peaks.append(AntisymLorentzianPeak(max(p, 0.0), w0, g))
    return LorentzianSumSD(tuple(peaks))


def _fit_grid(lo, hi, n=400):
    return np.geomspace(max(lo, 1e-3), hi, n)


def _model_values(params, grid):
    """Vectorized peak-sum evaluation straight from the parameter vector."""
    p = params.reshape(-1, 3)
    strengths = p[:, 0:1]
    w0 = p[:, 1:2]
    g2 = p[:, 2:3] ** 2
    vals = strengths * (1.0 / ((grid[None, :] - w0) ** 2 + g2)
                        - 1.0 / ((grid[None, :] + w0) ** 2 + g2))
    return vals.sum(axis=0)


def _relative_residual(params, grid, target_vals, floor):
    model = _model_values(np.asarray(params, dtype=float), grid)
    return (model - target_vals) / np.maximum(np.abs(target_vals), floor)


def _seed_centers(target, lo, hi, n_peaks):
    # Quantiles of the cumulative integral of J: peaks go where the weight is.
    grid = np.linspace(lo, hi, 2000)
    cum = integrate.cumulative_trapezoid(target(grid), grid, initial=0.0)
    cum /= cum[-1]
    qs = (np.arange(n_peaks) + 0.5) / n_peaks
    centers = np.interp(qs, cum, grid)
    return np.maximum(centers, 1e-2)


@dataclass(frozen=True)
class LorentzianFitResult:
    sd: LorentzianSumSD
    max_relative_error: float
    residual_norm: float
    converged: bool

    @property
    def peaks(self):
        return self.sd.peaks


def fit_lorentzians(target, n_peaks, fit_range, n_restarts=5, seed=7):
    """Least-squares fit of `n_peaks` antisymmetrized Lorentzians to `target`.

    Minimizes the relative L2 residual on a geometric grid over `fit_range`.
    Peak centers are seeded at quantiles of the cumulative integral of the
    target, then the fit is repeated from a few random perturbations of that
    seed and the best residual is kept.
    """
    lo, hi = fit_range
    if not (0 <= lo < hi):
        raise ValueError("invalid fit range")
    if n_peaks < 1:
        raise ValueError("need at least one peak")

    grid = _fit_grid(lo, hi)
    target_vals = np.asarray(target(grid), dtype=float)
    floor = 1e-3 * np.max(np.abs(target_vals))

    centers = _seed_centers(target, max(lo, 1e-2), hi, n_peaks)
    spacing = np.diff(np.concatenate([[max(lo, 1e-2)], centers, [hi]]))
    widths = np.maximum(0.5 * (spacing[:-1] + spacing[1:]) / 2.0, 1.0)
    # Seed strengths so each peak alone has roughly the right height at its
    # center: peak height ~ p/width^2.
    heights = np.maximum(target(centers), floor)
    strengths = heights * widths**2

    x0 = np.column_stack([strengths, centers, widths]).ravel()
    lower = np.tile([0.0, 1e-3, 1e-2], n_peaks)
    upper = np.tile([np.inf, 10.0 * hi, 10.0 * hi], n_peaks)

    rng = np.random.default_rng(seed)
    best = None
    for attempt in range(n_restarts + 1):
        if attempt == 0:
            x_start = x0
        else:
            x_start = x0 * rng.uniform(0.6, 1.5, size=x0.shape)
        x_start = np.clip(x_start, lower + 1e-12, None)
        try:
            res = optimize.least_squares(
                _relative_residual, x_start, bounds=(lower, upper),
                args=(grid, target_vals, floor), xtol=1e-12, ftol=1e-12,
                gtol=1e-12, max_nfev=2000,
            )
        except Exception:
            continue
        if best is None or res.cost < best.cost:
            best = res
        # Stop early once the fit is comfortably inside a 1% envelope;
        # further restarts only polish an already acceptable result.
        err = np.abs(_model_values(best.x, grid) - target_vals) \
            / np.abs(target_vals)
        if np.max(err) <= 0.01:
            break
    if best is None:
        raise RuntimeError("Lorentzian fit failed from every start")

    sd = _peaks_from_params(best.x)
    resid = _relative_residual(best.x, grid, target_vals, floor)
    rel_err = np.abs(sd(grid) - target_vals) / np.abs(target_vals)
    return LorentzianFitResult(
        sd=sd,
        max_relative_error=float(np.max(rel_err)),
        residual_norm=float(np.sqrt(np.sum(resid**2))),
        converged=bool(best.status > 0 or np.max(rel_err) <= 0.01),
    )


def enhance_peak_constrained(peaks, index, factor, window):
    """Scale one peak's strength by `factor`, rescaling the rest so the
    effective reorganization energy over `window` is unchanged.
    """
    peaks = tuple(peaks)
    if not 0 <= index < len(peaks):
        raise ValueError("peak index out of range")
    if factor < 0:
        raise ValueError("enhancement factor must be non-negative")
    e_min, e_max = window
    total = effective_reorganization_energy(LorentzianSumSD(peaks), e_min, e_max)
    if total <= 0:
        raise ValueError("window effective reorganization energy must be positive")
    selected = effective_reorganization_energy(
        LorentzianSumSD((peaks[index],)), e_min, e_max
    )
    rest = total - selected
    if rest <= 0 and factor != 1.0:
        raise ValueError("no budget left to rescale the remaining peaks")
    needed = total - factor * selected
    if needed < 0:
        raise ValueError(
            "enhanced peak alone exceeds the reorganization-energy budget"
        )
    scale = needed / rest if rest > 0 else 0.0
    out = []
    for k, pk in enumerate(peaks):
        s = factor if k == index else scale
        out.append(AntisymLorentzianPeak(pk.strength * s, pk.center, pk.width))
    return tuple(out)
