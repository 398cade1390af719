"""Grid + golden-section minimization, alternating (theta, Z) descent,
finite-difference gradients and a damped Newton method."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .errors import EvaluationError, NoFeasiblePointError, OptimizationError

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


@dataclass(frozen=True)
class Bracket1D:
    lo: float
    hi: float
    grid_points: int = 200

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if self.grid_points < 3:
            raise ValueError("grid_points must be at least 3")

    def grid(self):
        return np.linspace(self.lo, self.hi, self.grid_points)


# log Z in [1e-3, 1e3]; theta of the Gaussian family in [0.05, 10]
LOG_Z_BRACKET = Bracket1D(math.log(1e-3), math.log(1e3), 200)
THETA_BRACKET = Bracket1D(0.05, 10.0, 200)


@dataclass(frozen=True)
class SolveReport:
    argmin: Any
    value_at_min: Any
    evaluations: int
    converged: Any


def golden_step_bound(bracket: Bracket1D, tol: float) -> int:
    return math.ceil(math.log((bracket.hi - bracket.lo) / tol) / math.log(GOLDEN)) + 2


def minimize_1d_batch(f, bracket: Bracket1D, tol: float = 1e-8, batch_shape=()) -> SolveReport:
    """Vectorized grid scan + golden-section refinement.

    ``f`` maps an array of candidates of shape ``(*batch_shape, k)`` to values
    of the same shape; row i of the batch is an independent problem. NaN
    counts as +inf. Among equal grid minima the smallest abscissa wins, and
    ties inside the golden loop move the interval left.

    ``converged`` is False for rows whose minimizer sits on a bracket end.
    """
    batch_shape = tuple(batch_shape)
    grid = bracket.grid()
    G = len(grid)

    def fb(X):
        v = np.asarray(f(X), dtype=float)
        return np.where(np.isnan(v), np.inf, v)

    vals = fb(np.broadcast_to(grid, batch_shape + (G,)).copy())
    evaluations = G
    if not np.all(np.any(np.isfinite(vals), axis=-1)):
        raise NoFeasiblePointError("objective is +inf on every grid point")
    i = np.argmin(vals, axis=-1)
    best_x = grid[i]
    best_f = np.take_along_axis(vals, i[..., None], axis=-1)[..., 0]
    a = grid[np.maximum(i - 1, 0)]
    b = grid[np.minimum(i + 1, G - 1)]

    def consider(x, fx, best_x, best_f):
        better = (fx < best_f) | ((fx == best_f) & (x < best_x))
        return np.where(better, x, best_x), np.where(better, fx, best_f)

    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fcd = fb(np.stack([c, d], axis=-1))
    fc, fd = fcd[..., 0], fcd[..., 1]
    evaluations += 2
    best_x, best_f = consider(c, fc, best_x, best_f)
    best_x, best_f = consider(d, fd, best_x, best_f)

    max_steps = golden_step_bound(bracket, tol)
    for _ in range(max_steps):
        active = (b - a) > tol * np.maximum(1.0, np.abs(best_x))
        if not np.any(active):
            break
        left = fc <= fd
        new_a = np.where(left, a, c)
        new_b = np.where(left, d, b)
        x_new = np.where(left, new_b - INV_PHI * (new_b - new_a), new_a + INV_PHI * (new_b - new_a))
        f_new = fb(x_new[..., None])[..., 0]
        evaluations += 1
        nc = np.where(left, x_new, d)
        nfc = np.where(left, f_new, fd)
        nd = np.where(left, c, x_new)
        nfd = np.where(left, fc, f_new)
        a, b = np.where(active, new_a, a), np.where(active, new_b, b)
        c, fc = np.where(active, nc, c), np.where(active, nfc, fc)
        d, fd = np.where(active, nd, d), np.where(active, nfd, fd)
        bx, bf = consider(x_new, f_new, best_x, best_f)
        best_x, best_f = np.where(active, bx, best_x), np.where(active, bf, best_f)

    width_ok = (b - a) <= tol * np.maximum(1.0, np.abs(best_x))
    interior = (best_x > bracket.lo) & (best_x < bracket.hi)
    converged = width_ok & interior & (best_f <= vals[..., 0]) & (best_f <= vals[..., -1])
    return SolveReport(best_x, best_f, evaluations, converged)


def minimize_1d(f: Callable[[float], float], bracket: Bracket1D, tol: float = 1e-8) -> SolveReport:
    """Minimize a scalar function on a bracket (grid scan, then golden section)."""

    def fb(X):
        return np.array([[f(float(x)) for x in row] for row in X])

    r = minimize_1d_batch(fb, bracket, tol, batch_shape=(1,))
    return SolveReport(float(r.argmin[0]), float(r.value_at_min[0]), r.evaluations, bool(r.converged[0]))


def alternate_minimize(
    J: Callable[[float, float], float],
    z_updater: Optional[Callable[[float, float], float]],
    theta_bracket: Bracket1D,
    z_bracket: Bracket1D = LOG_Z_BRACKET,
    rounds: int = 50,
    tol: float = 1e-8,
    z0: float = 1.0,
) -> SolveReport:
    """Alternate a theta line search with a Z step.

    The Z step is either a line search over log Z (``z_bracket`` is a log-Z
    bracket) or one call ``z_updater(theta, Z) -> Z``, e.g. a single sweep of
    a bridge recursion. Stops early once neither coordinate moves by more
    than ``tol`` (relative).
    """
    if rounds < 1:
        raise ValueError("rounds must be at least 1")
    theta, Z = None, float(z0)
    evaluations = 0
    converged = False
    for _ in range(rounds):
        rt = minimize_1d(lambda t: J(t, Z), theta_bracket, tol)
        evaluations += rt.evaluations
        if z_updater is None:
            rz = minimize_1d(lambda lz: J(rt.argmin, math.exp(lz)), z_bracket, tol)
            evaluations += rz.evaluations
            new_Z = math.exp(rz.argmin)
        else:
            new_Z = float(z_updater(rt.argmin, Z))
        moved_theta = theta is None or abs(rt.argmin - theta) > tol * max(1.0, abs(rt.argmin))
        moved_Z = abs(new_Z - Z) > tol * abs(new_Z)
        theta, Z = rt.argmin, new_Z
        if not moved_theta and not moved_Z:
            converged = True
            break
    return SolveReport((theta, Z), J(theta, Z), evaluations + 1, converged)


def fd_gradient(f: Callable, x, step: float = 1e-6) -> np.ndarray:
    """Central differences, step scaled by max(1, |x_i|) per coordinate."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.empty_like(x)
    for i in range(len(x)):
        h = step * max(1.0, abs(x[i]))
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fp, fm = float(f(xp if len(x) > 1 else xp[0])), float(f(xm if len(x) > 1 else xm[0]))
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise EvaluationError(f"objective not finite within one step of coordinate {i}")
        g[i] = (fp - fm) / (xp[i] - xm[i])
    return g


def newton_minimize(f, grad, hess, x0, gtol: float = 1e-9, max_iters: int = 200) -> SolveReport:
    """Damped Newton with Armijo backtracking; stops on sup-norm gradient < gtol.

    When rounding noise in ``f`` defeats the line search near the optimum, a
    step that shrinks the gradient norm is accepted instead.
    """
    x = np.asarray(x0, dtype=float).copy()
    evaluations = 0
    for _ in range(max_iters):
        g = grad(x)
        gnorm = np.max(np.abs(g)) if g.size else 0.0
        if gnorm < gtol:
            return SolveReport(x, f(x), evaluations, True)
        try:
            direction = -np.linalg.solve(hess(x), g)
        except np.linalg.LinAlgError:
            direction = -g
        slope = float(g @ direction)
        if not slope < 0:
            direction, slope = -g, -float(g @ g)
        fx = f(x)
        evaluations += 1
        step = 1.0
        accepted = None
        while step > 1e-12:
            cand = x + step * direction
            fc = f(cand)
            evaluations += 1
            if fc <= fx + 1e-4 * step * slope:
                accepted = cand
                break
            if np.max(np.abs(grad(cand))) < gnorm:
                accepted = cand
                break
            step *= 0.5
        if accepted is None:
            raise OptimizationError("no descent direction found", last_iterate=x)
        x = accepted
    g = grad(x)
    return SolveReport(x, f(x), evaluations, bool(np.max(np.abs(g)) < gtol))
