"""Finite-temperature bath correlation function and its exponential expansion.

The correlation function

    alpha(tau) = int_0^inf dw J(w) [coth(w/2kT) cos(w tau) - i sin(w tau)]

is evaluated two independent ways: direct (oscillatory-weight) quadrature,
and a residue expansion alpha(tau) = sum_j p_j exp(i W_j tau) obtained by
closing the frequency integral in the lower half-plane.  The coth is
replaced by a rational approximation (a truncated continued fraction in
partial-fraction form, a Pade-type resummation of the bosonic pole series
with far better convergence than plain pole-series truncation).  A
numerical sum-of-exponentials fit provides a third, expansion-independent
route used to certify the residue path.

Units: alpha in cm^-2 as a function of tau in ps; prefactors p in cm^-2,
frequencies W in cm^-1 (complex, Im W > 0 so every term decays).
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, optimize

from .specden import (
    AntisymLorentzianPeak,
    CompositeSD,
    DivergentIntegralError,
    DrudeLorentzSD,
    LorentzianSumSD,
)
from .units import CM_TO_RAD_PS

__all__ = [
    "ExponentialExpansion",
    "CothApproximation",
    "ExpansionErrorReport",
    "correlation_quadrature",
    "coth_rational_approx",
    "expand_exponentials",
    "fit_exponentials",
    "expansion_error",
    "certify_expansion",
    "auto_expansion",
    "DEFAULT_ORDER_SCAN",
    "DEFAULT_ERROR_TARGET",
]

DEFAULT_ORDER_SCAN = (4, 6, 8, 12, 16, 24, 32)
DEFAULT_ERROR_TARGET = 1e-3
PRUNE_RELATIVE = 1e-12


@dataclass(frozen=True)
class ExpansionErrorReport:
    """Deviation of an exponential expansion from direct quadrature."""

    max_rel_error: float
    t_max_ps: float
    n_samples: int
    normalization: float

    def __post_init__(self):
        if self.max_rel_error < 0 or self.normalization <= 0:
            raise ValueError("invalid error report")


@dataclass(frozen=True)
class ExponentialExpansion:
    """alpha(tau) ~ sum_j p_j exp(i W_j tau) for tau >= 0.

    `prefactors` in cm^-2, `frequencies` in cm^-1 with Im > 0 (decay).
    """

    prefactors: np.ndarray
    frequencies: np.ndarray
    certificate: ExpansionErrorReport | None = None
    n_pruned: int = 0

    def __post_init__(self):
        p = np.array(self.prefactors, dtype=complex)
        w = np.array(self.frequencies, dtype=complex)
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "prefactors", p)
        object.__setattr__(self, "frequencies", w)
        if p.shape != w.shape or p.ndim != 1:
            raise ValueError("prefactors and frequencies must be matching 1-d arrays")
        if p.size and np.min(w.imag) <= 0:
            raise ValueError("every expansion frequency must have Im > 0")

    @property
    def n_terms(self):
        return self.prefactors.size

    def evaluate(self, tau_ps):
        """alpha(tau) from the expansion; tau in ps, scalar or array."""
        tau = np.asarray(tau_ps, dtype=float)
        phase = 1j * np.multiply.outer(tau, self.frequencies) * CM_TO_RAD_PS
        return np.exp(phase) @ self.prefactors

    def value_at_zero(self):
        return complex(np.sum(self.prefactors))

    def scaled(self, factor):
        """Expansion of `factor` times the spectral density."""
        return replace(self, prefactors=factor * np.asarray(self.prefactors),
                       certificate=self.certificate)

    def to_dict(self):
        return {
            "prefactors": [[repr(float(z.real)), repr(float(z.imag))]
                           for z in self.prefactors],
            "frequencies": [[repr(float(z.real)), repr(float(z.imag))]
                            for z in self.frequencies],
            "n_pruned": self.n_pruned,
            "certificate": None if self.certificate is None else {
                "max_rel_error": self.certificate.max_rel_error,
                "t_max_ps": self.certificate.t_max_ps,
                "n_samples": self.certificate.n_samples,
                "normalization": self.certificate.normalization,
            },
        }

    @classmethod
    def from_dict(cls, d):
        p = np.array([complex(float(re), float(im)) for re, im in d["prefactors"]])
        w = np.array([complex(float(re), float(im)) for re, im in d["frequencies"]])
        cert = d.get("certificate")
        report = None
        if cert is not None:
            report = ExpansionErrorReport(
                max_rel_error=cert["max_rel_error"],
                t_max_ps=cert["t_max_ps"],
                n_samples=cert["n_samples"],
                normalization=cert["normalization"],
            )
        return cls(p, w, certificate=report, n_pruned=d.get("n_pruned", 0))


# ---------------------------------------------------------------------------
# Direct quadrature of the correlation integral.
# ---------------------------------------------------------------------------

def _omega_coth(omega, kt):
    """w * coth(w / 2kT), finite (= 2kT) at w = 0."""
    x = omega / (2.0 * kt)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    ratio = np.where(small, 1.0 + x * x / 3.0, safe / np.tanh(safe))
    return 2.0 * kt * ratio


def _real_integrand(sd, temp):
    if temp.is_zero:
        return lambda w: float(sd(w))
    kt = temp.kt_cm
    return lambda w: float(sd.over_omega(w) * _omega_coth(w, kt))


def _alpha_scale(sd, temp):
    # Coarse magnitude of |alpha(0+)|, used to turn the relative quadrature
    # tolerance into the absolute one QUADPACK's Fourier routine needs.
    grid = np.linspace(0.0, 6000.0, 4001)[1:]
    f = _real_integrand(sd, temp)
    vals = np.array([f(w) for w in grid])
    return max(float(np.trapezoid(vals, grid)), 1e-30)


def correlation_quadrature(sd, temp, tau_ps, rel_tol=1e-8):
    """alpha(tau) by adaptive quadrature (cm^-2); tau in ps, tau >= 0.

    The real part uses a cosine-weight Fourier quadrature over the half
    line; the imaginary part a sine weight.  At tau = 0 the Drude-Lorentz
    real part is logarithmically divergent and a DivergentIntegralError is
    raised.
    """
    if tau_ps < 0:
        raise ValueError("tau must be non-negative")
    u = CM_TO_RAD_PS * tau_ps
    f_re = _real_integrand(sd, temp)
    scale = _alpha_scale(sd, temp)
    epsabs = rel_tol * scale

    if u == 0.0:
        if _has_drude_component(sd):
            raise DivergentIntegralError(
                "alpha(0) diverges logarithmically for a Drude-Lorentz component"
            )
        re, _ = _halfline_quad(f_re, sd, epsabs)
        return complex(re, 0.0)

    split = _structure_split(sd)
    re = _fourier_quad(f_re, u, "cos", epsabs, split)
    im = -_fourier_quad(lambda w: float(sd(w)), u, "sin", epsabs, split)
    return complex(re, im)


def _has_drude_component(sd):
    if isinstance(sd, DrudeLorentzSD):
        return True
    if isinstance(sd, CompositeSD):
        return any(_has_drude_component(c) for c in sd.components)
    return False


def _structure_split(sd):
    """Frequency beyond which the integrand is smooth and slowly decaying."""
    split = 4000.0
    if isinstance(sd, AntisymLorentzianPeak):
        split = max(split, sd.center + 20 * sd.width)
    elif isinstance(sd, LorentzianSumSD):
        split = max([split] + [p.center + 20 * p.width for p in sd.peaks])
    elif isinstance(sd, CompositeSD):
        split = max(_structure_split(c) for c in sd.components)
    return split


def _halfline_quad(f, sd, epsabs):
    split = _structure_split(sd)
    v1, e1 = integrate.quad(f, 0.0, split, epsabs=epsabs / 2, epsrel=1e-10,
                            limit=500)
    v2, e2 = integrate.quad(f, split, np.inf, epsabs=epsabs / 2, epsrel=1e-10,
                            limit=500)
    return v1 + v2, e1 + e2


def _fourier_quad(f, u, weight, epsabs, split):
    # Finite-range oscillatory quadrature (QAWO) over the structured part of
    # the spectrum; the infinite-cycle extrapolation (QAWF) is reserved for
    # the smooth tail, where it is reliable.  QAWF alone misconverges when a
    # narrow peak sits many oscillation cycles into the integration range.
    head, _ = integrate.quad(f, 0.0, split, weight=weight, wvar=u,
                             epsabs=epsabs / 2, epsrel=1e-10, limit=2000)
    out = integrate.quad(f, split, np.inf, weight=weight, wvar=u,
                         epsabs=epsabs / 2, limlst=400, limit=400,
                         full_output=1)
    tail = out[0]
    if len(out) >= 4 and isinstance(out[3], str) and "divergent" in out[3]:
        raise DivergentIntegralError("oscillatory quadrature did not converge")
    return head + tail


# ---------------------------------------------------------------------------
# Rational approximation of coth with complex-plane poles.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CothApproximation:
    """coth(x) ~ 1/x + sum_k eta_k [1/(x - x_k) + 1/(x + x_k)].

    Built by truncating the continued fraction
    coth(x) = (1 + y/(3 + y/(5 + ...)))/x with y = x^2 at an even depth and
    taking partial fractions.  The truncation is a Pade-type resummation of
    the bosonic pole series: the lowest pole pairs converge rapidly onto
    the exact poles at i*pi*k while the remainder soak up the tail, which
    gives a much larger accuracy window per pole than the plain pole-series
    truncation.  The construction is exactly odd in x, so is the resulting
    partial fraction.
    """

    order: int
    residues: np.ndarray
    poles: np.ndarray

    def __post_init__(self):
        r = np.array(self.residues, dtype=complex)
        p = np.array(self.poles, dtype=complex)
        r.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "residues", r)
        object.__setattr__(self, "poles", p)

    @property
    def n_pairs(self):
        return self.poles.size

    def evaluate(self, x):
        x = np.asarray(x, dtype=complex)
        shape = x.shape
        xf = x.reshape(-1, 1)
        terms = self.residues * (1.0 / (xf - self.poles) + 1.0 / (xf + self.poles))
        out = 1.0 / x.reshape(-1) + np.sum(terms, axis=1)
        return out.reshape(shape) if shape else complex(out[0])


def _coth_cf_polys(depth):
    """Numerator/denominator polynomials (in y = x^2, ascending coefficients,
    jointly normalized) of 1 + y/(3 + y/(5 + ... + y/(2*depth+1)))."""
    num = np.array([2.0 * depth + 1.0])
    den = np.array([1.0])
    for m in range(depth - 1, 0, -1):
        c = 2.0 * m + 1.0
        shifted = np.concatenate([[0.0], den])
        width = max(num.size, shifted.size)
        new_num = np.pad(c * num, (0, width - num.size)) + np.pad(
            shifted, (0, width - shifted.size))
        new_den = np.pad(num, (0, width - num.size))
        scale = max(np.max(np.abs(new_num)), np.max(np.abs(new_den)))
        num, den = new_num / scale, new_den / scale
    shifted = np.concatenate([[0.0], den])
    width = max(num.size, shifted.size)
    b = np.pad(num, (0, width - num.size)) + np.pad(shifted, (0, width - shifted.size))
    a = np.pad(num, (0, width - num.size))
    return a, b


def coth_rational_approx(temp, order):
    """Partial-fraction approximation of coth with `order` pole pairs.

    The poles are temperature-independent in the dimensionless variable
    x = omega/(2kT); `temp` is validated only (the exact coth has no poles
    to resum at T = 0).
    """
    if temp is not None and getattr(temp, "kelvin", 1.0) <= 0:
        raise ValueError("coth approximation needs a positive temperature")
    if not 1 <= order <= 32:
        # Above ~32 pairs the large partial-fraction roots lose accuracy in
        # double precision; 32 pairs already cover |x| beyond 150.
        raise ValueError("order must be in 1..32")
    a, b = _coth_cf_polys(2 * order)
    a_poly = np.polynomial.Polynomial(a)
    b_poly = np.polynomial.Polynomial(b)
    y_roots = a_poly.roots()
    if np.any(y_roots.real >= 0) or np.any(
            np.abs(y_roots.imag) > 1e-8 * np.abs(y_roots.real)):
        raise RuntimeError("unexpected pole locations in the coth resummation")
    y_roots = y_roots.real
    # Residue of B(y)/(x A(y)) at x_k = sqrt(y_k): B(y_k)/(2 y_k A'(y_k)).
    residues = b_poly(y_roots) / (2.0 * y_roots * a_poly.deriv()(y_roots))
    poles = np.sqrt(y_roots.astype(complex))
    return CothApproximation(order=order, residues=residues.astype(complex),
                             poles=poles)


# ---------------------------------------------------------------------------
# Residue expansion of alpha(tau).
# ---------------------------------------------------------------------------

def _sd_pole_list(sd):
    """(pole, residue) pairs of the analytically continued J in the lower
    half-plane, with J treated as an odd meromorphic function."""
    if isinstance(sd, DrudeLorentzSD):
        return [(-1j * sd.gamma, sd.lambda_total * sd.gamma / np.pi)]
    if isinstance(sd, AntisymLorentzianPeak):
        p, w0, g = sd.strength, sd.center, sd.width
        return [
            (w0 - 1j * g, p / (-2j * g)),
            (-w0 - 1j * g, p / (2j * g)),
        ]
    if isinstance(sd, LorentzianSumSD):
        out = []
        for pk in sd.peaks:
            out.extend(_sd_pole_list(pk))
        return out
    if isinstance(sd, CompositeSD):
        out = []
        for c in sd.components:
            out.extend(_sd_pole_list(c))
        return out
    raise TypeError(f"no residue expansion for {type(sd).__name__}")


def _analytic_sd(sd, z):
    """J continued to complex frequency (used at the coth poles)."""
    if isinstance(sd, DrudeLorentzSD):
        g = sd.gamma
        return (2.0 * sd.lambda_total / np.pi) * g * z / (z * z + g * g)
    if isinstance(sd, AntisymLorentzianPeak):
        p, w0, g = sd.strength, sd.center, sd.width
        return p * (1.0 / ((z - w0) ** 2 + g**2) - 1.0 / ((z + w0) ** 2 + g**2))
    if isinstance(sd, LorentzianSumSD):
        return sum(_analytic_sd(pk, z) for pk in sd.peaks)
    if isinstance(sd, CompositeSD):
        return sum(_analytic_sd(c, z) for c in sd.components)
    raise TypeError(f"no analytic continuation for {type(sd).__name__}")


# Softening scale (cm^-1) standing in for kT in the zero-temperature limit:
# coth(w/2kT) -> sgn(w) as kT -> 0, and the residue machinery carries over
# unchanged.  The scale only needs to sit below every spectral feature; the
# certificate (always taken against the exact T = 0 quadrature) covers the
# residual softening error.
ZERO_T_SOFTENING_CM = 2.0


def expand_exponentials(sd, temp, order):
    """Residue expansion of alpha(tau) as a sum of decaying exponentials.

    Every lower-half-plane pole of J and of the coth approximation
    contributes one term.  At T = 0 the coth turns into sgn(omega), which is
    handled by evaluating the same construction at a small fixed softening
    scale in place of kT (Lorentzian-sum spectral densities only; the
    Drude-Lorentz correlation function has no zero-temperature expansion of
    this form because its alpha(0) integral diverges).
    """
    if temp.is_zero:
        if _has_drude_component(sd):
            raise ValueError(
                "the zero-temperature expansion supports Lorentzian sums only"
            )
        kt = ZERO_T_SOFTENING_CM
    else:
        kt = temp.kt_cm
    approx = coth_rational_approx(None, order)
    sd_poles = _sd_pole_list(sd)

    # Avoid exact pole collisions between J and the coth approximation.
    coth_omegas = kt * 2.0 * np.concatenate([approx.poles, -approx.poles])
    sd_omegas = np.array([pole for pole, _ in sd_poles])

    prefactors, freqs = [], []
    for pole, res in sd_poles:
        if min(np.abs(coth_omegas - pole), default=np.inf) < 1e-9 * max(
                1.0, abs(pole)):
            pole = pole * (1.0 + 1e-9)  # nudge off the degenerate point
        factor = approx.evaluate(pole / (2.0 * kt)) + 1.0
        prefactors.append(-1j * np.pi * res * factor)
        freqs.append(-pole)

    for eta, x in zip(approx.residues, approx.poles):
        for omega in (2.0 * kt * x, -2.0 * kt * x):
            if omega.imag >= 0:
                continue
            j_val = _analytic_sd(sd, omega)
            prefactors.append(-1j * np.pi * j_val * 2.0 * kt * eta)
            freqs.append(-omega)

    for pole, _ in _near_real_check(freqs):
        raise RuntimeError(f"expansion produced a non-decaying term at {pole}")
    return _pruned_expansion(np.array(prefactors), np.array(freqs))


def _near_real_check(freqs):
    return [(w, None) for w in freqs if np.imag(w) <= 0]


def _pruned_expansion(prefactors, freqs):
    scale = np.sum(np.abs(prefactors)) if prefactors.size else 0.0
    if scale == 0.0:
        return ExponentialExpansion(prefactors, freqs, n_pruned=0)
    keep = np.abs(prefactors) >= PRUNE_RELATIVE * scale
    return ExponentialExpansion(
        prefactors[keep], freqs[keep], n_pruned=int(np.sum(~keep))
    )


# ---------------------------------------------------------------------------
# Certification against quadrature.
# ---------------------------------------------------------------------------

def _certification_grid(sd, t_max_ps, n_samples):
    taus = np.linspace(0.0, t_max_ps, n_samples)
    if _has_drude_component(sd):
        taus = taus[1:]  # alpha(0) is log-divergent for Drude-Lorentz
    return taus


def quadrature_samples(sd, temp, t_max_ps, n_samples=200, rel_tol=1e-8):
    """alpha(tau) by quadrature on the certification grid."""
    taus = _certification_grid(sd, t_max_ps, n_samples)
    vals = np.array([correlation_quadrature(sd, temp, t, rel_tol=rel_tol)
                     for t in taus])
    return taus, vals


def expansion_error(expn, sd, temp, t_max_ps, n_samples=200, samples=None):
    """Max deviation of the expansion from quadrature, normalized by the
    largest |alpha| on the sample grid (~ |alpha(0)|)."""
    if samples is None:
        taus, ref = quadrature_samples(sd, temp, t_max_ps, n_samples)
    else:
        taus, ref = samples
    approx = expn.evaluate(taus)
    norm = float(np.max(np.abs(ref)))
    err = float(np.max(np.abs(approx - ref))) / norm
    return ExpansionErrorReport(
        max_rel_error=err,
        t_max_ps=float(t_max_ps),
        n_samples=int(taus.size),
        normalization=norm,
    )


def certify_expansion(expn, sd, temp, t_max_ps=2.0, n_samples=200, samples=None):
    """Attach a quadrature-deviation certificate to the expansion."""
    report = expansion_error(expn, sd, temp, t_max_ps, n_samples, samples=samples)
    return replace(expn, certificate=report)


def auto_expansion(sd, temp, target=DEFAULT_ERROR_TARGET, t_max_ps=2.0,
                   orders=DEFAULT_ORDER_SCAN, n_samples=200):
    """Smallest-order certified expansion meeting the error target.

    The quadrature reference is computed once and shared across the order
    scan.  Raises if no order in the scan meets the target.
    """
    samples = quadrature_samples(sd, temp, t_max_ps, n_samples)
    best = None
    for order in orders:
        expn = expand_exponentials(sd, temp, order)
        certified = certify_expansion(expn, sd, temp, t_max_ps, samples=samples)
        err = certified.certificate.max_rel_error
        if best is None or err < best.certificate.max_rel_error:
            best = certified
        if err <= target:
            return certified
    raise RuntimeError(
        f"no order in {orders} met the expansion error target {target:.2e}; "
        f"best was {best.certificate.max_rel_error:.2e}"
    )


# ---------------------------------------------------------------------------
# Sum-of-exponentials fit (independent of the residue path).
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialFitResult:
    expansion: ExponentialExpansion
    residual: float
    converged: bool


def _pencil_start(samples, dt_u, n_terms):
    """Matrix-pencil estimate of the complex frequencies from uniform samples."""
    n = samples.size
    rows = n // 2
    hank = np.lib.stride_tricks.sliding_window_view(samples, rows)
    h0 = hank[:-1].T
    h1 = hank[1:].T
    u, s, vh = np.linalg.svd(h0, full_matrices=False)
    rank = min(n_terms, np.sum(s > 1e-13 * s[0]))
    u = u[:, :rank]
    vh = vh[:rank]
    s = s[:rank]
    a = (u.conj().T @ h1 @ vh.conj().T) / s
    z = np.linalg.eigvals(a)
    z = z[np.abs(z) > 1e-12]
    w = np.log(z.astype(complex)) / (1j * dt_u)
    return w


def _solve_prefactors(w, taus_u, samples):
    basis = np.exp(1j * np.outer(taus_u, w))
    p, *_ = np.linalg.lstsq(basis, samples, rcond=None)
    resid = basis @ p - samples
    return p, float(np.linalg.norm(resid))


def fit_exponentials(samples, dt_ps, n_terms, refine=True):
    """Fit a sum of `n_terms` decaying exponentials to uniform alpha samples.

    Matrix-pencil initialization for the frequencies, linear solve for the
    prefactors, then variable-projection refinement (outer least squares
    over the frequencies only).
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.size < 4 * n_terms:
        raise ValueError("need at least 4 samples per exponential term")
    dt_u = dt_ps * CM_TO_RAD_PS
    taus_u = np.arange(samples.size) * dt_u

    w = _pencil_start(samples, dt_u, n_terms)
    if w.size < n_terms:
        pad = 1.0 + 1j * np.linspace(1.0, 2.0, n_terms - w.size) / dt_u / 10
        w = np.concatenate([w, pad])
    w = w[np.argsort(-np.abs(_solve_prefactors(w, taus_u, samples)[0]))][:n_terms]

    converged = True
    if refine:
        def outer(params):
            wc = params[:n_terms] + 1j * params[n_terms:]
            _, _ = wc, None
            basis = np.exp(1j * np.outer(taus_u, wc))
            p, *_ = np.linalg.lstsq(basis, samples, rcond=None)
            r = basis @ p - samples
            return np.concatenate([r.real, r.imag])

        x0 = np.concatenate([w.real, w.imag])
        res = optimize.least_squares(outer, x0, xtol=1e-15, ftol=1e-15,
                                     gtol=1e-15, max_nfev=2000)
        w = res.x[:n_terms] + 1j * res.x[n_terms:]
        converged = bool(res.status > 0)

    # Decay invariant: nudge any non-decaying frequency just above the axis.
    w = np.where(w.imag <= 0, w.real + 1j * np.maximum(w.imag, 1e-12), w)
    p, resid = _solve_prefactors(w, taus_u, samples)
    expn = ExponentialExpansion(p, w)
    scale = max(float(np.abs(samples[0])), 1e-300)
    return ExponentialFitResult(
        expansion=expn,
        residual=resid / (scale * np.sqrt(samples.size)),
        converged=converged,
    )
