"""Sparse MAP solvers: band-maximum thresholding, gradient pursuit, FISTA.

The hard-thresholding pursuit loops alternate support identification (hard
thresholding of the gradient, optionally filtered by the band-maximum
criterion) with exact concave maximization restricted to the identified
support.  A brute-force support-enumeration oracle is included for tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import CapacityError, ConvergenceError, NumericalError, TuningError
from .objective import ObjectiveContext, f_loglik, grad_h, h_objective, inv_mills
from .operator import (
    CoherenceStructure,
    coherence_bands,
    complex_form,
    real_form,
    select_eta,
)

__all__ = [
    "SparseEstimate",
    "LineSearchParams",
    "SolverConfig",
    "SolverReport",
    "hard_threshold",
    "bms_threshold",
    "restricted_maximize",
    "run_grasp",
    "run_grahtp",
    "run_fista",
    "tune_gamma",
    "brute_force_map",
]

FISTA_SUPPORT_EPS = 1e-8


@dataclass(frozen=True, eq=False)
class SparseEstimate:
    """A complex estimate together with its (sorted) support set."""

    x_hat: np.ndarray
    support: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", np.asarray(self.support, dtype=int))


@dataclass(frozen=True)
class LineSearchParams:
    """Armijo backtracking parameters."""

    shrink: float = 0.5
    slope: float = 0.1
    max_steps: int = 50


@dataclass(frozen=True)
class SolverConfig:
    """Knobs shared by the pursuit solvers.

    eta is "auto" (pick the largest threshold keeping every coherence band
    nontrivial), an explicit float in (0, 1), or None to disable banding.
    equality_tol widens the exact-equality test used when forming by-product
    sets; the default 0.0 keeps it bitwise, which is the case that matters
    because off-support entries are exactly zero in all pursuit iterates.
    """

    sparsity: int
    eta: object = "auto"
    max_outer_iters: int = 50
    inner_tol: float = 1e-8
    line_search: LineSearchParams = field(default_factory=LineSearchParams)
    debias: bool = False
    equality_tol: float = 0.0
    max_inner_iters: int = 100

    def __post_init__(self):
        if self.sparsity < 1:
            raise ValueError(f"sparsity must be >= 1, got {self.sparsity}")
        if self.inner_tol <= 0:
            raise ValueError("inner_tol must be positive")
        if self.max_outer_iters < 1 or self.max_inner_iters < 1:
            raise ValueError("iteration caps must be positive")


@dataclass(frozen=True, eq=False)
class SolverReport:
    """Outcome of one pursuit run.

    halted_by is one of "support-fixed", "max-iters", "cycle".
    """

    estimate: SparseEstimate
    iterations: int
    halted_by: str
    objective_trace: list


def _support_of(x: np.ndarray) -> np.ndarray:
    return np.nonzero(x)[0]


def _magnitude_order(z: np.ndarray) -> np.ndarray:
    """Indices by descending |z|, ties broken toward the lowest index."""
    return np.lexsort((np.arange(z.shape[0]), -np.abs(z)))


def hard_threshold(z: np.ndarray, budget: int):
    """Best budget-term approximation of z.

    Returns (sorted selected indices, thresholded copy).  Ties in magnitude
    are broken toward the lowest index.
    """
    z = np.asarray(z)
    keep = np.sort(_magnitude_order(z)[: max(budget, 0)])
    out = np.zeros_like(z)
    out[keep] = z[keep]
    return keep, out


def bms_threshold(
    z: np.ndarray,
    current_x: np.ndarray,
    budget: int,
    bands: CoherenceStructure,
    equality_tol: float = 0.0,
):
    """Band-maximum hard thresholding of a score vector.

    Scans candidates by descending |z|.  For candidate i the by-product set
    collects the other band members whose current estimate value equals the
    candidate's; i is admitted only when |z_i| strictly exceeds the score of
    every by-product (an empty by-product set always admits).  Candidates
    whose score exactly ties their by-product maximum are rejected, and so
    is the tied by-product when its turn comes; fewer than `budget` indices
    can therefore be returned even when B >= budget.

    Returns (sorted selected indices, z restricted to them).
    """
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    z = np.asarray(z)
    current_x = np.asarray(current_x)
    mags = np.abs(z)
    selected = []
    for i in _magnitude_order(z):
        if len(selected) == budget:
            break
        band = bands.bands[i]
        if equality_tol == 0.0:
            byproduct = band[(current_x[band] == current_x[i]) & (band != i)]
        else:
            close = np.abs(current_x[band] - current_x[i]) <= equality_tol
            byproduct = band[close & (band != i)]
        if byproduct.size == 0 or mags[i] > np.max(mags[byproduct]):
            selected.append(int(i))
    keep = np.array(sorted(selected), dtype=int)
    out = np.zeros_like(z)
    out[keep] = z[keep]
    return keep, out


# -- restricted concave maximization ---------------------------------------


def _real_embed(cols: np.ndarray) -> np.ndarray:
    """Real form of a complex column block: [[Re, -Im], [Im, Re]]."""
    return np.block([[cols.real, -cols.imag], [cols.imag, cols.real]])


def restricted_maximize(
    ctx: ObjectiveContext,
    support,
    init: np.ndarray | None = None,
    inner_tol: float = 1e-8,
    line_search: LineSearchParams = LineSearchParams(),
    max_iters: int = 100,
    return_trace: bool = False,
):
    """Maximize the penalized log-likelihood over {x : supp(x) <= support}.

    The objective is strictly concave (the prior contributes -2I to the
    Hessian), so the maximizer is unique; iterates ascend along Newton
    directions with Armijo backtracking until the restricted gradient norm
    drops to inner_tol.  Works entirely through the restricted column block
    of the operator, so the cost per iteration is O(M*T*|support|^2).

    Returns the full-length maximizer (zeros off the support), or raises
    ConvergenceError carrying the best iterate if the cap is hit.
    """
    support = np.asarray(sorted(int(s) for s in support), dtype=int)
    B = ctx.op.B
    full = np.zeros(B, dtype=complex)
    if support.size == 0:
        return (full, [h_objective(ctx, full)]) if return_trace else full

    if init is None:
        x = np.zeros(support.size, dtype=complex)
    else:
        init = np.asarray(init, dtype=complex)
        outside = np.setdiff1d(_support_of(init), support)
        if outside.size:
            raise ValueError("init has mass outside the requested support")
        x = init[support].copy()

    cols = ctx.op.columns(support)            # (MT, q)
    cols_r = _real_embed(cols)                # (2MT, 2q)
    signs = ctx._signs
    rho_term = signs * signs                  # 2*rho elementwise

    def f_of(u):
        return float(np.sum(special.log_ndtr(signs * real_form(u))))

    def h_of(u, xr):
        return f_of(u) - float(xr @ xr)

    u = cols @ x
    xr = real_form(x)
    h_val = h_of(u, xr)
    trace = [h_val]
    best = (h_val, x.copy())

    for _ in range(max_iters):
        v = signs * real_form(u)
        lam = inv_mills(v)
        grad_c = cols.conj().T @ complex_form(lam * signs) - 2.0 * x
        g_r = real_form(grad_c)
        gnorm = np.linalg.norm(g_r)
        if gnorm <= inner_tol:
            full[support] = x
            return (full, trace) if return_trace else full

        # Negative Hessian 2I + A_R^T diag(2 rho lam (v + lam)) A_R is SPD.
        d_weights = rho_term * lam * (v + lam)
        neg_hess = 2.0 * np.eye(2 * support.size) + cols_r.T @ (d_weights[:, None] * cols_r)
        d_r = np.linalg.solve(neg_hess, g_r)
        d_c = complex_form(d_r)
        slope = float(g_r @ d_r)              # > 0: ascent direction

        w = cols @ d_c
        noise_floor = 1e-12 * (1.0 + abs(h_val))
        t = 1.0
        accepted = False
        if slope > noise_floor:
            for _ in range(line_search.max_steps):
                h_t = h_of(u + t * w, real_form(x + t * d_c))
                if h_t >= h_val + line_search.slope * t * slope:
                    accepted = True
                    break
                t *= line_search.shrink
        if not accepted:
            # Near the optimum the Armijo gain falls below the rounding
            # noise of h, making backtracking comparisons meaningless; the
            # raw Newton step still contracts the gradient quadratically,
            # so take it unless it measurably descends.
            t = 1.0
            h_t = h_of(u + w, real_form(x + d_c))
            if h_t < h_val - noise_floor:
                break
        x = x + t * d_c
        u = u + t * w
        h_val = h_t
        trace.append(h_val)
        if h_val > best[0]:
            best = (h_val, x.copy())

    full[support] = best[1]
    v = signs * real_form(cols @ best[1])
    grad_c = cols.conj().T @ complex_form(inv_mills(v) * signs) - 2.0 * best[1]
    raise ConvergenceError(
        f"restricted maximize did not reach tol {inner_tol} in {max_iters} iterations",
        best=full,
        grad_norm=float(np.linalg.norm(real_form(grad_c))),
    )


# -- pursuit loops -----------------------------------------------------------


def _resolve_bands(op, config: SolverConfig):
    """Coherence bands for the configured eta, or None when banding is off."""
    if config.eta is None:
        return None
    if isinstance(config.eta, str):
        if config.eta != "auto":
            raise ValueError(f"eta must be 'auto', None, or a float, got {config.eta!r}")
        selection = select_eta(op)
        if selection.eta is None:
            return None
        return coherence_bands(op, selection.eta)
    return coherence_bands(op, float(config.eta))


def _threshold(z, x, budget, bands, config, use_bms):
    if use_bms and bands is not None:
        idx, _ = bms_threshold(z, x, budget, bands, config.equality_tol)
    else:
        idx, _ = hard_threshold(z, budget)
    return idx


def _pursuit_loop(ctx, config, use_bms, step):
    """Shared outer loop: halt on fixed support, revisited support, or cap."""
    bands = _resolve_bands(ctx.op, config) if use_bms else None
    x = np.zeros(ctx.op.B, dtype=complex)
    prev_support = frozenset()
    visited = {prev_support}
    trace = []
    halted_by = "max-iters"
    iterations = 0
    for _ in range(config.max_outer_iters):
        iterations += 1
        x = step(ctx, config, x, bands)
        trace.append(h_objective(ctx, x))
        new_support = frozenset(int(i) for i in _support_of(x))
        if new_support == prev_support:
            halted_by = "support-fixed"
            break
        if new_support in visited:
            halted_by = "cycle"
            break
        visited.add(new_support)
        prev_support = new_support
    estimate = SparseEstimate(x_hat=x, support=np.sort(_support_of(x)))
    return SolverReport(estimate=estimate, iterations=iterations,
                        halted_by=halted_by, objective_trace=trace)


def _grasp_step(ctx, config, x, bands):
    L = config.sparsity
    z = grad_h(ctx, x)
    idx = _threshold(z, x, 2 * L, bands, config, use_bms=bands is not None)
    merged = np.union1d(idx, _support_of(x))
    assert merged.size <= 3 * L
    b_vec = restricted_maximize(
        ctx, merged, init=x, inner_tol=config.inner_tol,
        line_search=config.line_search, max_iters=config.max_inner_iters,
    )
    _, pruned = hard_threshold(b_vec, L)
    if config.debias:
        return restricted_maximize(
            ctx, _support_of(pruned), init=pruned, inner_tol=config.inner_tol,
            line_search=config.line_search, max_iters=config.max_inner_iters,
        )
    return pruned


def run_grasp(ctx: ObjectiveContext, config: SolverConfig, use_bms: bool) -> SolverReport:
    """Gradient support pursuit with 2L-term support identification.

    Per iteration the gradient is thresholded to 2L terms (band-maximum
    filtered when use_bms), merged with the current support, maximized over
    the merged set, and pruned back to L terms; with config.debias the
    restricted maximization is re-run on the pruned support instead of
    keeping the pruned values.  Halts when the support stops changing, on a
    revisited support, or at the iteration cap.
    """
    return _pursuit_loop(ctx, config, use_bms, _grasp_step)


def _grahtp_step(ctx, config, x, bands):
    L = config.sparsity
    g = grad_h(ctx, x)
    kappa = _backtrack_gradient_step(ctx, x, g, config.line_search)
    z = x + kappa * g
    idx = _threshold(z, x, L, bands, config, use_bms=bands is not None)
    assert idx.size <= L
    return restricted_maximize(
        ctx, idx, init=_mask_to(x, idx), inner_tol=config.inner_tol,
        line_search=config.line_search, max_iters=config.max_inner_iters,
    )


def _mask_to(x, idx):
    out = np.zeros_like(x)
    out[idx] = x[idx]
    return out


def _backtrack_gradient_step(ctx, x, g, ls: LineSearchParams) -> float:
    """Armijo backtracking for the ascent step size along the gradient."""
    h0 = h_objective(ctx, x)
    gn2 = float(np.vdot(g, g).real)
    if gn2 == 0.0:
        return 1.0
    t = 1.0
    for _ in range(ls.max_steps):
        if h_objective(ctx, x + t * g) >= h0 + ls.slope * t * gn2:
            return t
        t *= ls.shrink
    return t


def run_grahtp(ctx: ObjectiveContext, config: SolverConfig, use_bms: bool) -> SolverReport:
    """Gradient hard thresholding pursuit with an L-term support per iteration.

    The score vector is the current iterate plus a backtracked gradient
    step; its thresholded support (band-maximum filtered when use_bms) is
    maximized over exactly.  Halting matches run_grasp.
    """
    return _pursuit_loop(ctx, config, use_bms, _grahtp_step)


# -- FISTA baseline ----------------------------------------------------------


def _soft_threshold(v: np.ndarray, tau: float) -> np.ndarray:
    """Complex soft threshold: shrink magnitudes by tau, keep phases."""
    mag = np.abs(v)
    out = np.zeros_like(v)
    mask = mag > tau
    out[mask] = v[mask] * (1.0 - tau / mag[mask])
    return out


def _grad_f(ctx, x):
    return grad_h(ctx, x) + 2.0 * x


def run_fista(
    ctx: ObjectiveContext,
    gamma: float,
    max_iters: int = 500,
    tol: float = 1e-6,
    return_trace: bool = False,
):
    """Maximize f(x) - gamma * ||x||_1 by monotone accelerated proximal ascent.

    Gradient steps on the log-likelihood are followed by the complex soft
    threshold prox; the step size is backtracked against the usual quadratic
    model and the accepted iterate never decreases the objective (the
    momentum point only feeds the next gradient step).  Returns the final
    estimate with its eps-support (|x_b| > 1e-8); entries at or below the
    eps threshold are zeroed so the support contains supp(x_hat).
    """
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    B = ctx.op.B

    sigma = ctx.op.spectral_norm_estimate()
    lip = max(2.0 * ctx.rho * sigma * sigma, 1e-3)
    step = 1.0 / lip

    def penalty(x):
        return gamma * float(np.sum(np.abs(x)))

    x_prev = np.zeros(B, dtype=complex)
    obj_prev = f_loglik(ctx, x_prev) - penalty(x_prev)
    y = x_prev
    t_mom = 1.0
    trace = [obj_prev]
    z_prev = x_prev

    for _ in range(max_iters):
        gy = _grad_f(ctx, y)
        fy = f_loglik(ctx, y)
        if not np.isfinite(fy):
            raise NumericalError("objective became non-finite", best=x_prev)
        while True:
            z = _soft_threshold(y + step * gy, gamma * step)
            dz = z - y
            fz = f_loglik(ctx, z)
            quad = fy + float(np.vdot(gy, dz).real) - float(np.vdot(dz, dz).real) / (2.0 * step)
            if fz >= quad - 1e-12 * abs(quad):
                break
            step *= 0.5
            if step < 1e-18:
                raise NumericalError("step size underflow in FISTA", best=x_prev)
        obj_z = fz - penalty(z)
        if not np.isfinite(obj_z):
            raise NumericalError("objective became non-finite", best=x_prev)

        if obj_z >= obj_prev:
            x_new, obj_new = z, obj_z
        else:
            x_new, obj_new = x_prev, obj_prev

        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_mom * t_mom))
        y = x_new + (t_mom / t_next) * (z - x_new) + ((t_mom - 1.0) / t_next) * (x_new - x_prev)
        t_mom = t_next

        trace.append(obj_new)
        converged = np.linalg.norm(z - z_prev) <= tol * max(1.0, np.linalg.norm(z))
        x_prev, obj_prev, z_prev = x_new, obj_new, z
        if converged:
            break

    x_final = x_prev.copy()
    x_final[np.abs(x_final) <= FISTA_SUPPORT_EPS] = 0.0
    estimate = SparseEstimate(x_hat=x_final, support=_support_of(x_final))
    return (estimate, trace) if return_trace else estimate


def tune_gamma(
    make_ctx,
    L: int,
    trials: int,
    lo: float = 1e-6,
    hi: float = 1e6,
    max_bisect: int = 60,
    fista_iters: int = 500,
    fista_tol: float = 1e-6,
):
    """Bisect log(gamma) until the mean FISTA eps-support size is near 3L.

    make_ctx(k) must build the k-th seeded problem instance.  The search
    premise is that mean support size decreases as gamma grows; the
    evaluation trace is checked against it and violations beyond one support
    unit raise TuningError, as does a bracket failure on [lo, hi].

    Returns (gamma, achieved_mean).
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    ctxs = [make_ctx(k) for k in range(trials)]
    target = 3 * L

    def mean_support(gamma):
        sizes = [
            run_fista(c, gamma, max_iters=fista_iters, tol=fista_tol).support.size
            for c in ctxs
        ]
        return float(np.mean(sizes))

    evaluations = []

    def record(gamma, mean):
        evaluations.append((gamma, mean))
        return mean

    m_lo = record(lo, mean_support(lo))
    m_hi = record(hi, mean_support(hi))
    if not (m_lo >= target and m_hi <= target):
        raise TuningError(
            f"no bracket in [{lo}, {hi}]: mean support {m_lo} at lo, {m_hi} at hi"
        )

    result = None
    log_lo, log_hi = math.log(lo), math.log(hi)
    for _ in range(max_bisect):
        mid = math.exp(0.5 * (log_lo + log_hi))
        m = record(mid, mean_support(mid))
        if target - 1 <= m <= target + 1:
            result = (mid, m)
            break
        if m > target:
            log_lo = math.log(mid)
        else:
            log_hi = math.log(mid)

    for (g1, m1), (g2, m2) in itertools.combinations(sorted(evaluations), 2):
        if g2 > g1 and m2 > m1 + 1.0:
            raise TuningError(
                f"support size not decreasing in gamma: {m1} at {g1}, {m2} at {g2}"
            )
    if result is None:
        raise TuningError(f"window [{target - 1}, {target + 1}] not reached "
                          f"in {max_bisect} bisections")
    return result


# -- exhaustive oracle -------------------------------------------------------


def brute_force_map(ctx: ObjectiveContext, L: int, budget: int = 10**5) -> SparseEstimate:
    """Exact sparse MAP solution by support enumeration (test scale only).

    Every size-min(L, B) support is maximized over exactly; smaller supports
    are subsets of enumerated ones and cannot beat them, so the best
    enumerated solve is the global optimum over all supports of size <= L.
    """
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    B = ctx.op.B
    k = min(L, B)
    if math.comb(B, k) > budget:
        raise CapacityError(
            f"{math.comb(B, k)} candidate supports exceed the budget {budget}"
        )
    best_val = -np.inf
    best_x = None
    best_support = None
    for support in itertools.combinations(range(B), k):
        x = restricted_maximize(ctx, support)
        val = h_objective(ctx, x)
        if val > best_val:
            best_val, best_x, best_support = val, x, support
    return SparseEstimate(x_hat=best_x, support=np.array(best_support, dtype=int))
