"""Hierarchical-equations-of-motion reference solver for Drude-Lorentz baths.

Independent of the convolutionless propagator: the bath enters through the
exact Drude pole plus K Matsubara correction terms,

    c_0 = lambda*gamma*(cot(beta*gamma/2) - i),  nu_0 = gamma,
    c_k = 4*lambda*gamma*kT*nu_k/(nu_k^2 - gamma^2),  nu_k = 2*pi*kT*k,

with the truncated Matsubara tail folded into a Markovian terminator.
Auxiliary density operators are scaled (each by sqrt(n! |c|^n)) so the
hierarchy coefficients stay O(1) at depth.  Used as a desk-scale oracle,
not tuned for large systems.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy import integrate

from .trajectory import Trajectory
from .units import CM_TO_RAD_PS
from .zofe import DEFAULT_SAMPLE_DT_PS, diagnostics

__all__ = [
    "HierarchyIndex",
    "ConvergenceReport",
    "heom_propagate",
    "heom_convergence_ladder",
    "drude_exponents",
]


@dataclass(frozen=True)
class HierarchyIndex:
    """Occupation vector of one auxiliary density operator."""

    occupations: tuple  # flattened over (site, bath term)

    @property
    def depth(self):
        return sum(self.occupations)

    def raised(self, slot):
        occ = list(self.occupations)
        occ[slot] += 1
        return HierarchyIndex(tuple(occ))

    def lowered(self, slot):
        if self.occupations[slot] == 0:
            raise ValueError("cannot lower an empty slot")
        occ = list(self.occupations)
        occ[slot] -= 1
        return HierarchyIndex(tuple(occ))


@dataclass(frozen=True)
class ConvergenceReport:
    """Pairwise population differences along a (depth, K) ladder."""

    rungs: tuple          # (depth, n_exp_terms) pairs actually run
    max_diffs: tuple      # successive max |pop difference|
    converged: bool
    threshold: float


def drude_exponents(dl, temp, n_exp_terms):
    """(c_j, nu_j) of the Drude-Lorentz correlation function in cm units.

    Index 0 is the Drude pole, 1..K the Matsubara terms.  Also returns the
    residual Markovian strength Delta_K = sum_{k>K} c_k/nu_k (real).
    """
    if temp.is_zero:
        raise ValueError("the hierarchy solver needs a positive temperature")
    lam, gamma = dl.lambda_total, dl.gamma
    kt = temp.kt_cm
    x = gamma / (2.0 * kt)
    cs = [lam * gamma * (1.0 / math.tan(x) - 1j)]
    nus = [gamma]
    for k in range(1, n_exp_terms + 1):
        nu_k = 2.0 * math.pi * kt * k
        cs.append(4.0 * lam * gamma * kt * nu_k / (nu_k**2 - gamma**2))
        nus.append(nu_k)
    total = 2.0 * lam * kt / gamma  # sum_{k>=0} Re c_k / nu_k, exactly
    delta = total - sum(np.real(c) / nu for c, nu in zip(cs, nus))
    return np.array(cs, dtype=complex), np.array(nus, dtype=float), float(delta)


def _enumerate_indices(n_slots, depth):
    """All occupation vectors with sum <= depth (stars and bars)."""
    out = []
    for d in range(depth + 1):
        for bars in combinations(range(d + n_slots - 1), n_slots - 1):
            occ = []
            prev = -1
            for b in bars:
                occ.append(b - prev - 1)
                prev = b
            occ.append(d + n_slots - 1 - prev - 1)
            out.append(tuple(occ))
    return out


def _build_couplings(indices, lookup, n_sites, n_terms):
    """Gather tables for the raise/lower couplings, one per (site, term)."""
    n_ado = len(indices)
    occ = np.array(indices, dtype=int).reshape(n_ado, n_sites, n_terms)
    plus_idx = np.full((n_sites, n_terms, n_ado), -1, dtype=int)
    minus_idx = np.full((n_sites, n_terms, n_ado), -1, dtype=int)
    for a, vec in enumerate(indices):
        for m in range(n_sites):
            for k in range(n_terms):
                slot = m * n_terms + k
                up = list(vec)
                up[slot] += 1
                j = lookup.get(tuple(up))
                if j is not None:
                    plus_idx[m, k, a] = j
                if vec[slot] > 0:
                    down = list(vec)
                    down[slot] -= 1
                    minus_idx[m, k, a] = lookup[tuple(down)]
    return occ, plus_idx, minus_idx


def _hierarchy_rhs_factory(h, cs, nus, delta, depth, n_sites):
    """Vectorized right-hand side over the stacked scaled hierarchy."""
    n_terms = cs.size
    indices = [vec for vec in _enumerate_indices(n_sites * n_terms, depth)]
    lookup = {vec: i for i, vec in enumerate(indices)}
    occ, plus_idx, minus_idx = _build_couplings(indices, lookup, n_sites,
                                                n_terms)
    n_ado = len(indices)

    h_rad = h.matrix().astype(complex) * CM_TO_RAD_PS
    cs_rad = cs * CM_TO_RAD_PS**2
    nus_rad = nus * CM_TO_RAD_PS
    delta_rad = delta * CM_TO_RAD_PS
    abs_c = np.abs(cs_rad)
    decay = np.einsum("ask,k->a", occ, nus_rad)

    # Scaled-coupling amplitudes per (site, term, ado).
    s_plus = np.sqrt((occ.transpose(1, 2, 0) + 1.0) * abs_c[None, :, None])
    s_minus = np.sqrt(occ.transpose(1, 2, 0) / abs_c[None, :, None])

    n = n_sites

    def rhs_stack(rhos):
        out = (-1j) * (h_rad[None] @ rhos - rhos @ h_rad[None])
        out -= decay[:, None, None] * rhos
        # Markovian tail: -Delta_K sum_m [P_m, [P_m, rho]] = -2 Delta_K
        # (rho - diag rho).
        offdiag = rhos.copy()
        idx = np.arange(n)
        offdiag[:, idx, idx] = 0.0
        out -= 2.0 * delta_rad * offdiag
        for m in range(n_sites):
            for k in range(n_terms):
                up = plus_idx[m, k]
                has_up = up >= 0
                if np.any(has_up):
                    x = rhos[up[has_up]]
                    amp = s_plus[m, k][has_up][:, None]
                    tgt = out[has_up]
                    tgt[:, m, :] += (-1j) * amp * x[:, m, :]
                    tgt[:, :, m] -= (-1j) * amp * x[:, :, m]
                    out[has_up] = tgt
                down = minus_idx[m, k]
                has_dn = down >= 0
                if np.any(has_dn):
                    x = rhos[down[has_dn]]
                    amp = s_minus[m, k][has_dn][:, None]
                    tgt = out[has_dn]
                    tgt[:, m, :] += (-1j) * amp * cs_rad[k] * x[:, m, :]
                    tgt[:, :, m] -= (-1j) * amp * np.conj(cs_rad[k]) * x[:, :, m]
                    out[has_dn] = tgt
        return out

    return rhs_stack, n_ado


MAX_HIERARCHY_SIZE = 200_000


def heom_propagate(h, dl, temp, depth, n_exp_terms, rho0, t_end, tol=1e-8,
                   sample_dt=DEFAULT_SAMPLE_DT_PS):
    """Reference propagation of the hierarchy; returns the depth-0 trajectory."""
    if depth < 1:
        raise ValueError("hierarchy depth must be >= 1")
    cs, nus, delta = drude_exponents(dl, temp, n_exp_terms)
    rhs_stack, n_ado = _hierarchy_rhs_factory(h, cs, nus, delta, depth,
                                              h.n_sites)
    n = h.n_sites
    if n_ado * n * n > MAX_HIERARCHY_SIZE * 49:
        raise MemoryError(
            f"hierarchy of {n_ado} members exceeds the configured size cap"
        )

    def f(_, y):
        return rhs_stack(y.reshape(n_ado, n, n)).ravel()

    y0 = np.zeros((n_ado, n, n), dtype=complex)
    y0[0] = rho0.matrix
    grid = np.linspace(0.0, t_end, max(1, int(round(t_end / sample_dt))) + 1)
    # Step the solver directly and keep only the system block at each sample;
    # materializing the full hierarchy on the sample grid would not fit in
    # memory for deep hierarchies.
    stepper = integrate.RK45(f, 0.0, y0.ravel(), t_end, rtol=tol,
                             atol=tol * 1e-2)
    n_t = grid.size
    rhos = np.empty((n_t, n, n), dtype=complex)
    rhos[0] = y0[0]
    next_i = 1
    while next_i < n_t:
        stepper.step()
        if stepper.status == "failed":
            raise RuntimeError("hierarchy integration failed (step underflow)")
        dense = stepper.dense_output()
        while next_i < n_t and grid[next_i] <= stepper.t + 1e-15:
            rhos[next_i] = dense(grid[next_i])[:n * n].reshape(n, n)
            next_i += 1
    pops = np.empty((n_t, n))
    tr = np.empty(n_t)
    he = np.empty(n_t)
    me = np.empty(n_t)
    for i in range(n_t):
        pops[i] = np.diagonal(rhos[i]).real
        tr[i], he[i], me[i] = diagnostics(rhos[i])
    return Trajectory(times=grid, populations=pops, trace_dev=tr, herm_dev=he,
                      min_eig=me,
                      metadata={"method": "hierarchy", "depth": depth,
                                "n_exp_terms": n_exp_terms})


def heom_convergence_ladder(h, dl, temp, depths, term_counts, rho0, t_end,
                            tol=1e-8, sample_dt=DEFAULT_SAMPLE_DT_PS,
                            threshold=5e-3):
    """Run increasing (depth, K) rungs; certify by successive differences.

    Returns the deepest trajectory and a report; `converged` means the last
    two rungs agree within `threshold` in every population.
    """
    rungs = list(zip(depths, term_counts))
    if len(rungs) < 2:
        raise ValueError("a convergence ladder needs at least two rungs")
    trajs = [heom_propagate(h, dl, temp, d, k, rho0, t_end, tol=tol,
                            sample_dt=sample_dt) for d, k in rungs]
    diffs = [float(np.max(np.abs(a.populations - b.populations)))
             for a, b in zip(trajs, trajs[1:])]
    report = ConvergenceReport(
        rungs=tuple(rungs),
        max_diffs=tuple(diffs),
        converged=diffs[-1] <= threshold,
        threshold=threshold,
    )
    return trajs[-1], report
