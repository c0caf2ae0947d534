"""Quasi-static free-boundary patch dynamics.

Inside a patch the pressure solves ``-u'' = Phi''`` with zero boundary
values, so on an interval it is the chord of the potential minus the
potential, and every boundary point moves with velocity ``-u' - Phi'``
(one-sided derivative from inside).  In 1D that collapses to a single
chord slope per interval: both endpoints translate together and each
interval keeps its length exactly.  Radial mode (centered balls and
annuli) evaluates the same law through exact flux integrals of the
polynomial drift profile, so near-equilibrium velocities carry no
quadrature cancellation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from numpy.polynomial import polynomial as npoly

from .model import Patch, write_csv
from .potentials import Potential


def _shifted_poly_integral(coef, shift, a, b):
    """Exact integral of ``sum_k coef[k] s^(k + shift)`` over ``[a, b]``.

    ``shift`` may be negative (Laurent terms); the ``s^-1`` term
    integrates to a logarithm.  Requires ``a > 0`` when shift < 0.
    """
    total = 0.0
    for k, c in enumerate(np.asarray(coef, dtype=float)):
        if c == 0.0:
            continue
        p = k + shift
        if p == -1:
            total += c * math.log(b / a)
        else:
            total += c * (b ** (p + 1) - a ** (p + 1)) / (p + 1)
    return total


def _radial_cumulative_poly(phi: Potential, d: int):
    """Antiderivative polynomial of ``s^(d-1) * Laplacian(Phi)(s)``.

    For a polynomial radial profile, ``s^(d-1) Phi'' + (d-1) s^(d-2) Phi'``
    is itself a polynomial (the gradient vanishes at the center), so the
    flux integrals below are exact; no quadrature, no cancellation.
    """
    d2 = npoly.polyder(phi.coef, 2)
    d1 = npoly.polyder(phi.coef, 1)
    top = max(d2.size + d - 1, d1.size + d - 2, 1)
    j = np.zeros(top)
    j[d - 1:d - 1 + d2.size] += d2
    if d >= 2:
        if d1.size and abs(d1[0]) > 1e-13:
            raise ValueError("radial profiles need a vanishing gradient "
                             "at the center")
        j[d - 2:d - 2 + d1.size] += (d - 1) * d1
    return npoly.polyint(j)


@dataclass
class PatchPressure:
    """Evaluable pressure field of a patch: positive inside, zero outside."""

    patch: Patch
    phi: Potential

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.patch.dim == 1:
            for a, b in self.patch.intervals:
                inside = (x >= a) & (x <= b)
                if np.any(inside):
                    xi = x[inside]
                    chord = self.phi.value(a) + (self.phi.value(b) - self.phi.value(a)) \
                        * (xi - a) / (b - a)
                    out[inside] = chord - self.phi.value(xi)
            return out
        for a, b in self.patch.intervals:
            inside = (x >= a) & (x <= b)
            for i in np.flatnonzero(inside):
                out[i] = _radial_pressure_value(self.phi, a, b,
                                                self.patch.dim, float(x[i]))
        return out


def patch_pressure(patch: Patch, phi: Potential) -> PatchPressure:
    """Pressure solving ``-u'' = Laplacian(Phi)`` in the patch, zero outside."""
    if not patch.intervals:
        raise ValueError("empty patch has no pressure field")
    for a, b in patch.intervals:
        if not b > a:
            raise ValueError("degenerate interval")
    return PatchPressure(patch, phi)


def _radial_flux_const(phi: Potential, r1: float, r2: float, d: int) -> float:
    """Integration constant A in ``u'(r) = (A - I(r)) / r^(d-1)``.

    Ball (r1 == 0): regularity at the center forces A = 0.  Annulus: A is
    fixed by matching the two zero boundary values.
    """
    if r1 == 0.0:
        return 0.0
    P = _radial_cumulative_poly(phi, d)
    p_r1 = float(npoly.polyval(r1, P))
    denom = _shifted_poly_integral([1.0], 1 - d, r1, r2)
    numer = _shifted_poly_integral(P, 1 - d, r1, r2) - p_r1 * denom
    return numer / denom


def _radial_pressure_value(phi: Potential, r1: float, r2: float, d: int,
                           r: float) -> float:
    """Exact radial pressure: ``u(r) = -int_r^{r2} (A - I(s)) s^(1-d) ds``."""
    P = _radial_cumulative_poly(phi, d)
    A = _radial_flux_const(phi, r1, r2, d)
    lo = max(r, 1e-300) if d > 1 and r1 > 0.0 else r
    p_r1 = float(npoly.polyval(r1, P))
    val = _shifted_poly_integral(P, 1 - d, lo, r2) \
        - p_r1 * (_shifted_poly_integral([1.0], 1 - d, lo, r2) if r1 > 0.0
                  else 0.0)
    if A != 0.0:
        val -= A * _shifted_poly_integral([1.0], 1 - d, lo, r2)
    return val


def _raw_velocities(pts: np.ndarray, dim: int, phi: Potential) -> np.ndarray:
    """Per-interval endpoint rates on a raw (k, 2) array; no cross checks.

    Wandering Runge-Kutta stage points may overlap a neighbor; the
    velocity law is purely per-interval, so that is harmless here.
    """
    out = np.empty_like(pts)
    if dim == 1:
        a, b = pts[:, 0], pts[:, 1]
        slope = (phi.value(b) - phi.value(a)) / (b - a)
        out[:, 0] = out[:, 1] = -slope
        return out
    P = _radial_cumulative_poly(phi, dim)
    for k, (r1, r2) in enumerate(pts):
        A = _radial_flux_const(phi, r1, r2, dim)
        i_r2 = float(npoly.polyval(r2, P) - npoly.polyval(r1, P))
        du_outer = (A - i_r2) / r2 ** (dim - 1)
        out[k, 1] = -du_outer - phi.grad(r2)
        if r1 == 0.0:
            out[k, 0] = 0.0
        else:
            du_inner = A / r1 ** (dim - 1)
            out[k, 0] = -du_inner - phi.grad(r1)
    return out


def interval_velocity(patch: Patch, phi: Potential) -> np.ndarray:
    """Endpoint time-derivatives, one ``(da/dt, db/dt)`` row per interval.

    Every boundary point obeys ``dx/dt = -u' - Phi'`` from inside; in 1D
    the chord slope makes both endpoint rates equal, so intervals
    translate rigidly and preserve their length.
    """
    if not patch.intervals:
        raise ValueError("empty patch has no boundary velocity")
    return _raw_velocities(np.array(patch.intervals, dtype=float), patch.dim, phi)


def _rk4(endpoints: np.ndarray, dim: int, phi: Potential, dt: float) -> np.ndarray:
    k1 = _raw_velocities(endpoints, dim, phi)
    k2 = _raw_velocities(endpoints + 0.5 * dt * k1, dim, phi)
    k3 = _raw_velocities(endpoints + 0.5 * dt * k2, dim, phi)
    k4 = _raw_velocities(endpoints + dt * k3, dim, phi)
    return endpoints + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def heleshaw_run(patch0: Patch, phi: Potential, T: float, dt: float,
                 record_every: int = 1):
    """Track the patch boundary to horizon ``T`` with classical RK4.

    Intervals whose gap closes are merged into their union; the contact
    instant is located by bisection on the step fraction so the volume is
    continuous across the merge.  Returns ``(trajectory, volume_rows)``
    where trajectory is a list of ``(t, Patch)`` and volume_rows a list
    of ``(t, volume)``.
    """
    if not patch0.intervals:
        raise ValueError("cannot evolve an empty patch")
    if not (T > 0 and dt > 0):
        raise ValueError("horizon and step must be positive")
    if patch0.dim == 1 and not phi.positive_laplacian:
        # the quasi-static law needs a strictly subharmonic potential on
        # the region swept by the patch; flagged at entry, not per step
        raise ValueError("patch dynamics require a potential with "
                         "positive Laplacian on the working domain")
    dim = patch0.dim
    pts = _merge_touching(np.array(patch0.intervals, dtype=float))
    t = 0.0
    patch = Patch(tuple(map(tuple, pts)), dim=dim)
    trajectory = [(0.0, patch)]
    volumes = [(0.0, patch.volume)]
    step_idx = 0
    while t < T - 1e-14:
        step = min(dt, T - t)
        cand = _rk4(pts, dim, phi, step)
        merged = False
        if not _admissible(cand, dim):
            # land exactly on the contact instant, then change topology:
            # touching intervals take their union; a radial hole whose
            # inner boundary reaches the center closes into a ball
            frac = _contact_fraction(pts, dim, phi, step)
            cand = _rk4(pts, dim, phi, step * frac)
            if dim > 1 and cand[0, 0] <= 1e-9 * cand[0, 1]:
                cand[0, 0] = 0.0
            cand = _merge_touching(cand)
            t += step * frac
            merged = True
        else:
            t += step
            step_idx += 1
        pts = cand
        _assert_lengths(pts)
        patch = Patch(tuple(map(tuple, pts)), dim=dim)
        if merged or step_idx % record_every == 0 or t >= T - 1e-14:
            trajectory.append((t, patch))
        volumes.append((t, patch.volume))
    return trajectory, volumes


def _min_gap(pts: np.ndarray) -> float:
    if pts.shape[0] < 2:
        return math.inf
    return float(np.min(pts[1:, 0] - pts[:-1, 1]))


def _admissible(pts: np.ndarray, dim: int) -> bool:
    if _min_gap(pts) < 0.0:
        return False
    if dim > 1 and pts[0, 0] < 0.0:
        return False
    return True


def _contact_fraction(pts, dim, phi, step, iters=80):
    lo, hi = 0.0, 1.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if not _admissible(_rk4(pts, dim, phi, step * mid), dim):
            hi = mid
        else:
            lo = mid
    return lo


def _merge_touching(pts: np.ndarray, tol_scale: float = 1e-9) -> np.ndarray:
    out = [list(pts[0])]
    tol = tol_scale * max(1.0, float(np.max(np.abs(pts))))
    for a, b in pts[1:]:
        if a - out[-1][1] <= tol:
            out[-1][1] = b
        else:
            out.append([a, b])
    return np.array(out)


def _assert_lengths(pts: np.ndarray):
    lengths = pts[:, 1] - pts[:, 0]
    if np.any(lengths <= 0.0):
        raise AssertionError("interval collapsed; rigid 1D translation "
                             "cannot produce this - inspect the potential")


def hausdorff_distance(p1: Patch, p2: Patch) -> float:
    """Exact Hausdorff distance between interval unions.

    The one-sided sup is attained either at an endpoint of the first set
    or at the point of the first set closest to the midpoint of a gap of
    the second; both candidate families come straight from interval
    arithmetic.
    """
    if not p1.intervals or not p2.intervals:
        raise ValueError("Hausdorff distance needs nonempty patches")
    return max(_one_sided(p1, p2), _one_sided(p2, p1))


def _point_to_patch(x: float, patch: Patch) -> float:
    best = math.inf
    for a, b in patch.intervals:
        if x < a:
            best = min(best, a - x)
        elif x > b:
            best = min(best, x - b)
        else:
            return 0.0
    return best


def _one_sided(pa: Patch, pb: Patch) -> float:
    candidates = list(pa.endpoints)
    gaps = []
    iv = pb.intervals
    for k in range(len(iv) - 1):
        gaps.append((iv[k][1], iv[k + 1][0]))
    for a, b in pa.intervals:
        for g1, g2 in gaps:
            if b >= g1 and a <= g2:
                candidates.append(min(max(0.5 * (g1 + g2), a), b))
    return max(_point_to_patch(x, pb) for x in candidates)


def write_patch_csv(path, trajectory):
    """Patch trajectory CSV: t, interleaved endpoints, volume (ragged rows padded)."""
    width = max(len(p.intervals) for _, p in trajectory)
    header = ["t"]
    for i in range(1, width + 1):
        header += [f"a{i}", f"b{i}"]
    header.append("volume")
    rows = []
    for t, p in trajectory:
        flat = [t]
        for a, b in p.intervals:
            flat += [a, b]
        flat += [math.nan] * (2 * (width - len(p.intervals)))
        flat.append(p.volume)
        rows.append(flat)
    write_csv(path, header, rows)
