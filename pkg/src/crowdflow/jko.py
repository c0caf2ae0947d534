"""Minimizing-movement (JKO) steps in quantile coordinates.

One step from nodes ``Y`` minimizes, over monotone node vectors ``X``,

    F(X) = S_m(X) + P(X) + W2^2(X, Y) / (2h),

where all three terms are evaluated exactly for the piecewise-constant
density the nodes represent: the internal energy is a sum of gap powers,
the potential energy uses exact per-gap averages, and the movement
limiter is the exact inverse-CDF quadratic form.  For finite m the gap
powers act as a barrier and the problem is smooth and unconstrained; for
m = inf the internal energy vanishes and the congestion cap becomes the
gap constraint ``gap_j >= w``, handled by an active-set Newton method in
which active gaps pool consecutive nodes into rigid blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .energy import free_energy
from .model import GridDensity, GridSpec, QuantileRep, RunLedger, to_grid, to_quantile
from .potentials import Potential
from .transport import w2_cost_squared


class JkoConvergenceError(RuntimeError):
    """Raised when a step fails to reach the requested KKT residual."""


@dataclass
class JkoOptions:
    tol_grad: float = 1e-9        # max KKT residual, in units of cell mass
    max_iterations: int = 500
    backtrack: float = 0.5        # line-search shrink factor
    armijo: float = 1e-4

    def __post_init__(self):
        if not self.tol_grad > 0:
            raise ValueError("tol_grad must be positive")
        if not 0.0 < self.backtrack < 1.0:
            raise ValueError("backtracking factor must lie in (0, 1)")


@dataclass
class JkoStepResult:
    state: QuantileRep
    objective: float
    dissipation: float
    w2_increment: float
    kkt_residual: float
    active_count: int
    iterations: int


# ---------------------------------------------------------------------------
# isotonic projection
# ---------------------------------------------------------------------------

def pav_nondecreasing(y, weights=None):
    """Weighted least-squares projection onto nondecreasing vectors.

    Classic pool-adjacent-violators: amortized O(n).
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    means = np.empty(n)
    wsum = np.empty(n)
    count = np.empty(n, dtype=int)
    top = -1
    for i in range(n):
        top += 1
        means[top] = y[i]
        wsum[top] = w[i]
        count[top] = 1
        while top > 0 and means[top - 1] > means[top]:
            tot = wsum[top - 1] + wsum[top]
            means[top - 1] = (wsum[top - 1] * means[top - 1]
                              + wsum[top] * means[top]) / tot
            wsum[top - 1] = tot
            count[top - 1] += count[top]
            top -= 1
    return np.repeat(means[:top + 1], count[:top + 1])


def project_spacing(x, gap):
    """Euclidean projection onto ``{x : x[j+1] - x[j] >= gap}``.

    Shift by ``j * gap`` to reduce to isotonic regression, project by
    pool-adjacent-violators, and shift back.
    """
    if gap < 0:
        raise ValueError("spacing must be nonnegative")
    x = np.asarray(x, dtype=float)
    ramp = gap * np.arange(x.size)
    return pav_nondecreasing(x - ramp) + ramp


# ---------------------------------------------------------------------------
# objective assembly (all terms per-gap, Hessians tridiagonal)
# ---------------------------------------------------------------------------

def _movement_value(d, w):
    d0, d1 = d[:-1], d[1:]
    return w / 3.0 * np.sum(d0 * d0 + d0 * d1 + d1 * d1)

def _movement_grad(d, w):
    g = np.zeros_like(d)
    g[:-1] += w / 3.0 * (2.0 * d[:-1] + d[1:])
    g[1:] += w / 3.0 * (d[:-1] + 2.0 * d[1:])
    return g


def _objective(x, y, w, m, phi, h):
    gaps = np.diff(x)
    if np.any(gaps <= 0.0) and not math.isinf(m):
        return math.inf
    val = w * np.sum(phi.avg(x[:-1], x[1:]))
    val += _movement_value(x - y, w) / (2.0 * h)
    if not math.isinf(m):
        with np.errstate(over="ignore"):
            val += (w / m) * np.sum((w / gaps) ** (m - 1.0))
    return float(val)


def _gradient(x, y, w, m, phi, h):
    g = np.zeros_like(x)
    da, db = phi.avg_grad(x[:-1], x[1:])
    g[:-1] += w * da
    g[1:] += w * db
    g += _movement_grad(x - y, w) / (2.0 * h)
    if not math.isinf(m):
        dens = w / np.diff(x)
        with np.errstate(over="ignore"):
            sp = -((m - 1.0) / m) * dens ** m
        g[:-1] -= sp
        g[1:] += sp
    return g


def _hessian(x, y, w, m, phi, h):
    """Tridiagonal Hessian of the step objective: (diag, offdiag)."""
    n1 = x.size
    hd = np.zeros(n1)
    ho = np.zeros(n1 - 1)
    haa, hab, hbb = phi.avg_hess(x[:-1], x[1:])
    hd[:-1] += w * haa
    hd[1:] += w * hbb
    ho += w * hab
    hd[:-1] += w / (3.0 * h)
    hd[1:] += w / (3.0 * h)
    ho += w / (6.0 * h)
    if not math.isinf(m):
        gaps = np.diff(x)
        dens = w / gaps
        with np.errstate(over="ignore"):
            spp = (m - 1.0) * dens ** (m + 1.0) / w
        hd[:-1] += spp
        hd[1:] += spp
        ho -= spp
    return hd, ho


def _solve_tridiag(hd, ho, rhs):
    if hd.size == 1:
        return rhs / hd
    ab = np.zeros((2, hd.size))
    ab[0, 1:] = ho
    ab[1, :] = hd
    try:
        return scipy.linalg.solveh_banded(ab, rhs, lower=False)
    except scipy.linalg.LinAlgError:
        ridge = 1e-12 * np.max(np.abs(hd)) + 1e-300
        ab[1, :] = hd + ridge
        return scipy.linalg.solveh_banded(ab, rhs, lower=False)


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------

def _step_guard(h, phi):
    if not h > 0:
        raise ValueError("time step must be positive")
    lam_neg = max(0.0, -phi.lam)
    if lam_neg > 0.0 and h >= 1.0 / (2.0 * lam_neg):
        raise ValueError(f"h = {h} outside the admissible range "
                         f"(need h < {1.0 / (2.0 * lam_neg):.6g} for this potential)")


def _solve_finite_m(y, w, m, phi, h, opts):
    """Damped Newton; the gap powers act as an interior barrier.

    Stiff barriers (large m) can put the optimizer's residual floor above
    tol_grad at double precision; once the residual stops improving the
    best iterate is returned with its achieved residual.
    """
    x = y.copy()
    f = _objective(x, y, w, m, phi, h)
    best_x, best_res, stall = x, math.inf, 0
    for it in range(1, opts.max_iterations + 1):
        g = _gradient(x, y, w, m, phi, h)
        res = float(np.max(np.abs(g))) / w
        if res < best_res:
            if res > 0.5 * best_res:
                stall += 1
            else:
                stall = 0
            best_x, best_res = x, res
        else:
            stall += 1
        if res <= opts.tol_grad:
            return x, res, it
        if stall >= 8 and best_res < 1e6 * opts.tol_grad:
            return best_x, best_res, it  # double-precision floor reached
        hd, ho = _hessian(x, y, w, m, phi, h)
        step = _solve_tridiag(hd, ho, -g)
        if not np.all(np.isfinite(step)) or float(np.dot(step, g)) >= 0.0:
            step = -g / np.max(hd)  # gradient fallback, crudely scaled
        # keep gaps strictly positive
        dgap = np.diff(step)
        gaps = np.diff(x)
        shrink = dgap < 0.0
        alpha = 1.0
        if np.any(shrink):
            alpha = min(1.0, 0.95 * float(np.min(gaps[shrink] / -dgap[shrink])))
        # accept on objective decrease or, near the optimum where the
        # objective is flat to round-off, on gradient-norm decrease
        slope = float(np.dot(step, g))
        gnorm = float(np.max(np.abs(g)))
        while alpha > 1e-16:
            x_new = x + alpha * step
            f_new = _objective(x_new, y, w, m, phi, h)
            if f_new <= f + opts.armijo * alpha * slope:
                break
            g_new = _gradient(x_new, y, w, m, phi, h)
            if np.all(np.isfinite(g_new)) and \
                    float(np.max(np.abs(g_new))) <= (1.0 - 0.5 * alpha) * gnorm:
                break
            alpha *= opts.backtrack
        x = x + alpha * step
        f = _objective(x, y, w, m, phi, h)
    g = _gradient(x, y, w, m, phi, h)
    res = float(np.max(np.abs(g))) / w
    if res <= opts.tol_grad:
        return x, res, opts.max_iterations
    raise JkoConvergenceError(
        f"step did not converge in {opts.max_iterations} iterations "
        f"(KKT residual {res:.3e}, tol {opts.tol_grad:.1e})")


def _blocks_from_active(active):
    """Node block ids from the boolean active-gap mask."""
    ids = np.zeros(active.size + 1, dtype=int)
    ids[1:] = np.cumsum(~active)
    return ids


def _snap_active(x, active, w):
    """Rebuild rigid blocks at exact spacing ``w``, preserving block means."""
    if not np.any(active):
        return x
    ids = _blocks_from_active(active)
    nblocks = ids[-1] + 1
    offs = np.arange(x.size, dtype=float)
    starts = np.concatenate([[0], np.flatnonzero(~active) + 1])
    offs = offs - offs[starts][ids]
    counts = np.bincount(ids, minlength=nblocks)
    mean_x = np.bincount(ids, weights=x, minlength=nblocks) / counts
    mean_o = np.bincount(ids, weights=offs, minlength=nblocks) / counts
    return mean_x[ids] + w * (offs - mean_o[ids])


def _multipliers(g, active):
    """Constraint multipliers from blockwise gradient sums.

    On a rigid block, stationarity stacks the node gradients into the
    chain of active-gap multipliers by partial summation.
    """
    ids = _blocks_from_active(active)
    cg = np.cumsum(g)
    borders = np.flatnonzero(~active)
    before = np.concatenate([[0.0], cg[borders]])
    mu = np.where(active, -(cg[:-1] - before[ids[:-1]]), 0.0)
    return mu


def _kkt_residual(g, mu, w):
    dt_mu = np.zeros(g.size)
    dt_mu[1:] += mu
    dt_mu[:-1] -= mu
    stat = float(np.max(np.abs(g - dt_mu)))
    neg = float(max(0.0, -np.min(mu))) if mu.size else 0.0
    return max(stat, neg) / w


def _solve_congested(y, w, phi, h, opts):
    """Active-set Newton for the m = inf step.

    Active gaps (at the congestion spacing ``w``) pool nodes into rigid
    blocks; the reduced problem over block positions stays tridiagonal,
    so every inner iteration is O(n).  Constraints are released one at a
    time on negative multipliers; the objective is convex for admissible
    h, so the final KKT point is the global step minimizer.
    """
    x = project_spacing(y, w)
    active = np.diff(x) <= w * (1.0 + 1e-12)
    total_iters = 0
    floor_res = None

    for _outer in range(opts.max_iterations):
        x = _snap_active(x, active, w)
        # Newton on the current manifold {gap_j = w for j active}
        for _inner in range(opts.max_iterations):
            total_iters += 1
            if total_iters > opts.max_iterations:
                break
            g = _gradient(x, y, w, math.inf, phi, h)
            ids = _blocks_from_active(active)
            nblocks = ids[-1] + 1
            g_red = np.bincount(ids, weights=g, minlength=nblocks)
            if float(np.max(np.abs(g_red))) / w <= 0.5 * opts.tol_grad:
                break
            hd, ho = _hessian(x, y, w, math.inf, phi, h)
            hd_red = np.bincount(ids, weights=hd, minlength=nblocks)
            inside = active
            if np.any(inside):
                hd_red += 2.0 * np.bincount(ids[:-1][inside],
                                            weights=ho[inside],
                                            minlength=nblocks)
            ho_red = ho[~active]
            dxi = _solve_tridiag(hd_red, ho_red, -g_red)
            step = dxi[ids]
            slope = float(np.dot(step, g))
            if not np.all(np.isfinite(step)) or slope >= 0.0:
                step = -g / np.max(hd)
                slope = float(np.dot(step, g))
            if float(np.max(np.abs(step))) <= 8.0 * np.finfo(float).eps \
                    * max(1.0, float(np.max(np.abs(x)))):
                # manifold iterate at the double-precision optimum
                floor_res = float(np.max(np.abs(g_red))) / w
                break
            # cap so inactive gaps do not cross the spacing floor
            gaps = np.diff(x)
            dgap = np.diff(step)
            room = np.maximum(gaps - w, 0.0)
            closing = (~active) & (dgap < 0.0)
            alpha = 1.0
            hit = None
            if np.any(closing):
                ratios = room[closing] / -dgap[closing]
                jmin = int(np.argmin(ratios))
                if ratios[jmin] < alpha:
                    alpha = max(ratios[jmin], 0.0)
                    hit = np.flatnonzero(closing)[jmin]
            f = _objective(x, y, w, math.inf, phi, h)
            gnorm = float(np.max(np.abs(g_red)))
            a = alpha
            while a > 1e-16:
                if _objective(x + a * step, y, w, math.inf, phi, h) \
                        <= f + opts.armijo * a * slope:
                    break
                g_try = _gradient(x + a * step, y, w, math.inf, phi, h)
                red_try = np.bincount(ids, weights=g_try, minlength=nblocks)
                if float(np.max(np.abs(red_try))) <= (1.0 - 0.5 * a) * gnorm:
                    break
                a *= opts.backtrack
                hit = None
            x = x + a * step
            if hit is not None:
                active = active.copy()
                active[hit] = True
                # snap the new contact to the exact spacing
                x[hit + 1] = x[hit] + w
        g = _gradient(x, y, w, math.inf, phi, h)
        mu = _multipliers(g, active)
        res = _kkt_residual(g, mu, w)
        eff_tol = opts.tol_grad if floor_res is None \
            else max(opts.tol_grad, 1.1 * floor_res)
        if res <= eff_tol:
            return x, res, int(np.sum(active)), total_iters
        worst = int(np.argmin(mu))
        if mu[worst] < 0.0 and active[worst]:
            active = active.copy()
            active[worst] = False
        if total_iters > opts.max_iterations:
            break
    g = _gradient(x, y, w, math.inf, phi, h)
    mu = _multipliers(g, active)
    res = _kkt_residual(g, mu, w)
    if res <= opts.tol_grad:
        return x, res, int(np.sum(active)), total_iters
    raise JkoConvergenceError(
        f"congested step did not converge in {opts.max_iterations} iterations "
        f"(KKT residual {res:.3e}, tol {opts.tol_grad:.1e})")


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def jko_step(rho0: QuantileRep, m, h: float, phi: Potential,
             opts: JkoOptions | None = None) -> JkoStepResult:
    """One minimizing-movement step of size ``h`` from ``rho0``.

    Raises
    ------
    ValueError
        Step size outside the admissible convexity range, or an
        infeasible start (m = inf with density above one; finite m with
        a collapsed gap).
    JkoConvergenceError
        The requested KKT residual was not reached; never silently
        accepted.
    """
    opts = opts or JkoOptions()
    _step_guard(h, phi)
    if not (math.isinf(m) or m > 1):
        raise ValueError("congestion exponent must satisfy m > 1")
    y = rho0.nodes.copy()
    w = rho0.w
    if math.isinf(m):
        if rho0.max_density > 1.0 + 1e-9:
            raise ValueError("infeasible start: density exceeds one")
        x, res, nact, iters = _solve_congested(y, w, phi, h, opts)
    else:
        if np.any(np.diff(y) <= 0.0):
            raise ValueError("infeasible start: collapsed gap at finite m")
        x, res, iters = _solve_finite_m(y, w, m, phi, h, opts)
        nact = 0
    state = QuantileRep(rho0.total_mass, x)
    e_prev = free_energy(rho0, m, phi).total
    e_new = free_energy(state, m, phi).total
    move = w2_cost_squared(x, y, w)
    return JkoStepResult(
        state=state,
        objective=e_new + move / (2.0 * h),
        dissipation=e_prev - e_new,
        w2_increment=float(np.sqrt(max(move, 0.0))),
        kkt_residual=res,
        active_count=nact,
        iterations=iters,
    )


def jko_trajectory(rho0: QuantileRep, m, h: float, phi: Potential, T: float,
                   opts: JkoOptions | None = None):
    """Piecewise-constant-in-time trajectory to horizon ``T``.

    Returns the list of states (initial state included) and a ledger
    with one row per step recording the energy split, the movement per
    step, mass, support extent, and the excess mass above density one.
    """
    if not T > 0:
        raise ValueError("horizon must be positive")
    opts = opts or JkoOptions()
    n_steps = int(math.ceil(T / h - 1e-12))
    states = [rho0]
    ledger = RunLedger()
    rep = free_energy(rho0, m, phi)
    ledger.append(0, 0.0, rep.total, rep.internal, rep.potential, 0.0,
                  rho0.total_mass, rho0.nodes[0], rho0.nodes[-1],
                  rho0.excess_mass())
    cur = rho0
    for k in range(1, n_steps + 1):
        out = jko_step(cur, m, h, phi, opts)
        cur = out.state
        states.append(cur)
        rep = free_energy(cur, m, phi)
        ledger.append(k, k * h, rep.total, rep.internal, rep.potential,
                      out.w2_increment, cur.total_mass, cur.nodes[0],
                      cur.nodes[-1], cur.excess_mass())
    return states, ledger


@dataclass
class ComparisonReport:
    passed: bool
    max_violation: float
    eps_cmp: float
    w: float
    n_lo: int
    n_hi: int
    details: dict = field(default_factory=dict)


def verify_comparison(rho01: GridDensity, rho02: GridDensity, m, h: float,
                      phi: Potential, n_quantile: int = 200,
                      eps_cmp: float | None = None,
                      opts: JkoOptions | None = None) -> ComparisonReport:
    """Order preservation of one step from ordered grid densities.

    Both densities are represented with a shared cell mass ``w`` (so the
    lighter one gets fewer cells), stepped once, reconstructed on a
    common grid, and compared cell by cell.  The lighter density is
    scaled down by at most one cell mass so its total is an exact
    multiple of ``w``; scaling down preserves both the ordering and the
    congestion bound.

    Restricted to ``m > 2`` (or inf): the two-sided perturbation argument
    behind the property does not cover smaller exponents, so they are an
    experiment rather than an assertion here.
    """
    if not math.isinf(m) and not m > 2:
        raise ValueError("comparison verification requires m > 2 (or inf)")
    if rho01.grid != rho02.grid:
        raise ValueError("ordered pair must live on a common grid")
    if np.any(rho01.values > rho02.values + 1e-12):
        raise ValueError("inputs are not ordered: rho01 must not exceed rho02")
    m1, m2 = rho01.mass, rho02.mass
    if m1 > m2 + 1e-12:
        raise ValueError("mass of rho01 must not exceed mass of rho02")
    if math.isinf(m):
        if max(np.max(rho01.values), np.max(rho02.values)) > 1.0 + 1e-9:
            raise ValueError("m = inf comparison needs both densities <= 1")

    w = m2 / n_quantile
    n1 = int(math.floor(m1 / w + 1e-9))
    if n1 < 2:
        raise ValueError("mass ratio too extreme for the requested resolution")
    scale1 = (n1 * w) / m1
    q1 = to_quantile(rho01.with_values(rho01.values * scale1), n1)
    q2 = to_quantile(rho02, n_quantile)

    opts = opts or JkoOptions()
    out1 = jko_step(q1, m, h, phi, opts)
    out2 = jko_step(q2, m, h, phi, opts)

    pad = 2.0 * max(q1.w, q2.w) + h * (phi.grad_sup() + 1.0)
    lo = min(out1.state.nodes[0], out2.state.nodes[0]) - pad
    hi = max(out1.state.nodes[-1], out2.state.nodes[-1]) + pad
    dx = rho01.dx
    recon = GridSpec(lo, hi, max(int(math.ceil((hi - lo) / dx)), 8))
    g1 = to_grid(out1.state, recon)
    g2 = to_grid(out2.state, recon)
    violation = float(np.max(g1.values - g2.values))
    violation = max(violation, 0.0)
    if eps_cmp is None:
        eps_cmp = 1e-6 * (1.0 + recon.dx / w)
    return ComparisonReport(
        passed=violation <= eps_cmp,
        max_violation=violation,
        eps_cmp=eps_cmp,
        w=w,
        n_lo=n1,
        n_hi=n_quantile,
        details={"kkt_lo": out1.kkt_residual, "kkt_hi": out2.kkt_residual,
                 "mass_scale_lo": scale1},
    )
