"""Optimization and learning dynamics over the simplex.

The central objective is the self-influencing expected score
phi(p) = S(p, f(p)), whose gradient decomposes as

    grad phi(p) = Dg(p)^T (f(p) - p) + Df(p)^T g(p).

``performative_optimum`` maximizes phi by multi-start projected gradient
ascent (phi is not concave in general); binary problems additionally get a
brute-force grid oracle.  The remaining routines implement the dynamics
that converge to fixed points instead of optima: fixed-point iteration of
f (repeated risk minimization), ascent on the frozen-belief objective
Dg(p)^T (f(p) - p) (repeated gradient ascent), and its stochastic
single-outcome counterpart (online SGD).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from .environment import EnvironmentMap
from .errors import DomainError, InvalidArgumentError, SolveTimeoutError
from .scoring import LOGARITHMIC, QUADRATIC, ScoringRule
from .simplex import (
    SimplexPoint,
    TangentVector,
    binary_point,
    project_raw,
    project_to_shrunk_simplex,
    project_to_simplex,
    sample_simplex_points,
    uniform_point,
)

OBJECTIVE_TIE_TOL = 1e-12
MAX_BACKTRACKS = 40
LOG_INTERIOR_NUDGE = 1e-6


@dataclass
class SolveConfig:
    max_iters: int = 500
    step_size: float = 0.5
    tol: float = 1e-10
    restarts: int = 16
    seed: int = 0
    grid_resolution: float = 1e-5
    timeout_secs: float = 120.0

    def __post_init__(self):
        if self.tol <= 0:
            raise InvalidArgumentError("tol must be positive")
        if self.restarts < 1:
            raise InvalidArgumentError("restarts must be >= 1")
        if self.step_size <= 0:
            raise InvalidArgumentError("step_size must be positive")


@dataclass
class SolveResult:
    report: SimplexPoint
    objective: float
    converged: bool
    iterations: int
    gradient_norm_final: float
    trajectory: Optional[list] = field(default=None, repr=False)


def performative_gradient(
    rule: ScoringRule, f: EnvironmentMap, p: SimplexPoint
) -> TangentVector:
    """Tangent gradient of phi(p) = S(p, f(p))."""
    q = f.eval(p)
    Dg = rule.hessian(p)
    Df = f.jacobian(p)
    g = rule.subgradient(p).comps
    v = Dg.T @ (q.probs - p.probs) + Df.T @ g
    return TangentVector(v - v.mean())


def stop_gradient(rule: ScoringRule, f: EnvironmentMap, p: SimplexPoint) -> TangentVector:
    """Tangent gradient of the frozen-belief objective: Dg(p)^T (f(p) - p)."""
    q = f.eval(p)
    v = rule.hessian(p).T @ (q.probs - p.probs)
    return TangentVector(v - v.mean())


def _objective(rule: ScoringRule, f: EnvironmentMap, p: SimplexPoint) -> float:
    return rule.expected_score(p, f.eval(p))


def _lexicographically_smaller(a: np.ndarray, b: np.ndarray) -> bool:
    for x, y in zip(a, b):
        if x != y:
            return x < y
    return False


def _pick_best(candidates):
    """Best (objective, result); ties within 1e-12 go to the smallest report."""
    best = None
    for res in candidates:
        if best is None:
            best = res
            continue
        if res.objective > best.objective + OBJECTIVE_TIE_TOL:
            best = res
        elif abs(res.objective - best.objective) <= OBJECTIVE_TIE_TOL:
            if _lexicographically_smaller(best.report.probs, res.report.probs):
                continue
            if _lexicographically_smaller(res.report.probs, best.report.probs):
                best = res
    return best


def _ascend(rule, f, start: SimplexPoint, cfg: SolveConfig, deadline) -> SolveResult:
    """One projected-gradient-ascent run with halving backtracking."""
    p = start
    phi = _objective(rule, f, p)
    gn = float("nan")
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        if deadline is not None and time.monotonic() > deadline:
            raise SolveTimeoutError(
                "performative optimum solve exceeded its wall-clock budget",
                best=SolveResult(p, phi, False, it, gn),
            )
        try:
            grad = performative_gradient(rule, f, p)
        except DomainError:
            break
        gn = grad.norm
        if gn <= cfg.tol:
            converged = True
            break
        step = cfg.step_size
        accepted = None
        for _ in range(MAX_BACKTRACKS + 1):
            cand = project_to_simplex(p.probs + step * grad.comps)
            cand_phi = _objective(rule, f, cand)
            if cand_phi > phi:
                accepted = (cand, cand_phi)
                break
            step *= 0.5
        if accepted is None:
            # no ascent step exists along the gradient ray: boundary optimum
            converged = True
            break
        moved = np.linalg.norm(accepted[0].probs - p.probs)
        p, phi = accepted
        if moved <= cfg.tol:
            converged = True
            break
    return SolveResult(p, phi, converged, it, gn)


def _polish_interior(rule, f, res: SolveResult, cfg: SolveConfig) -> SolveResult:
    """Drive the gradient norm below tol at an interior optimum.

    The line-search ascent cannot resolve objective improvements below
    floating rounding (~1e-8 displacements), so the final sharpening
    accepts steps by gradient-norm decrease instead.
    """
    p = res.report
    if not p.is_interior(1e-9):
        return res
    try:
        gn = performative_gradient(rule, f, p).norm
    except DomainError:
        return res
    phi = _objective(rule, f, p)
    # allowance below which objective changes are indistinguishable from
    # rounding; large enough to admit genuine polish steps, small enough to
    # veto jumps out of the basin
    slack = 1e-9 * max(1.0, abs(phi))
    it = res.iterations
    for _ in range(200):
        if gn <= cfg.tol:
            break
        grad = performative_gradient(rule, f, p)
        step = cfg.step_size
        accepted = None
        for _ in range(MAX_BACKTRACKS + 1):
            cand = project_to_simplex(p.probs + step * grad.comps)
            try:
                cand_gn = performative_gradient(rule, f, cand).norm
            except DomainError:
                cand_gn = float("inf")
            if cand_gn < gn and _objective(rule, f, cand) >= phi - slack:
                accepted = (cand, cand_gn)
                break
            step *= 0.5
        if accepted is None:
            break
        p, gn = accepted
        phi = _objective(rule, f, p)
        it += 1
    return SolveResult(
        report=p,
        objective=_objective(rule, f, p),
        converged=res.converged or gn <= cfg.tol,
        iterations=it,
        gradient_norm_final=gn,
    )


def _structured_starts(rule, n, cfg, rng):
    starts = [uniform_point(n)]
    nudge = LOG_INTERIOR_NUDGE
    for i in range(n):
        v = np.full(n, nudge / n)
        v[i] = 1.0 - nudge + nudge / n
        starts.append(SimplexPoint(v / v.sum()))
    for i in range(n):
        v = np.full(n, 1.0 / (n - 1.0))
        v[i] = 0.0
        if rule.kind == LOGARITHMIC:
            v = (1.0 - nudge) * v + nudge / n
        starts.append(SimplexPoint(v / v.sum()))
    extra = cfg.restarts - len(starts)
    if extra > 0:
        for row in sample_simplex_points(n, extra, rng):
            starts.append(SimplexPoint(row))
    return starts[: max(cfg.restarts, 1)] if cfg.restarts < len(starts) else starts


def grid_optimum_binary(
    rule: ScoringRule, f: EnvironmentMap, resolution: float
) -> SolveResult:
    """Brute-force binary oracle: evaluate phi on the p1 grid and take the argmax.

    Deterministic; ties within 1e-12 of the maximum resolve to the smallest
    p1.  The log rule's grid is clipped to [res, 1 - res] to keep scores
    finite.
    """
    if f.n != 2 or rule.n != 2:
        raise InvalidArgumentError("the grid oracle is binary only")
    if not 0 < resolution <= 1e-3:
        raise InvalidArgumentError("resolution must be in (0, 1e-3]")
    count = int(round(1.0 / resolution)) + 1
    xs = np.linspace(0.0, 1.0, count)
    if rule.kind == LOGARITHMIC:
        xs = xs[(xs >= resolution) & (xs <= 1.0 - resolution)]
    phi = rule.binary_objective_grid(xs, f.eval1(xs))
    top = float(np.max(phi))
    idx = int(np.flatnonzero(phi >= top - OBJECTIVE_TIE_TOL)[0])
    report = binary_point(float(xs[idx]))
    return SolveResult(
        report=report,
        objective=float(phi[idx]),
        converged=True,
        iterations=xs.size,
        gradient_norm_final=float("nan"),
    )


def performative_optimum(
    rule: ScoringRule, f: EnvironmentMap, cfg: SolveConfig = None
) -> SolveResult:
    """argmax_p S(p, f(p)) by multi-start projected gradient ascent.

    Starts from the barycenter, inward-nudged vertices, face centers, and
    seeded uniform draws.  Binary problems also run the grid oracle and a
    polish ascent from its argmax, and the best-scoring candidate wins.
    Non-convergence is reported through ``converged``, never raised; only
    the wall-clock budget raises ``SolveTimeoutError``.
    """
    cfg = cfg or SolveConfig()
    if rule.n != f.n:
        raise InvalidArgumentError(f"rule n={rule.n} vs environment n={f.n}")
    rng = np.random.default_rng(cfg.seed)
    deadline = (
        time.monotonic() + cfg.timeout_secs if cfg.timeout_secs else None
    )
    candidates = []
    for start in _structured_starts(rule, f.n, cfg, rng):
        candidates.append(_ascend(rule, f, start, cfg, deadline))
    if f.n == 2:
        grid = grid_optimum_binary(rule, f, cfg.grid_resolution)
        candidates.append(grid)
        candidates.append(_ascend(rule, f, grid.report, cfg, deadline))
    elif rule.kind == QUADRATIC and f.kind == "linear":
        # the quadratic objective under a linear map admits an exact
        # support-enumeration oracle; merge it like the binary grid
        exact = quadratic_linear_exact_optimum(f)
        candidates.append(exact)
        candidates.append(_ascend(rule, f, exact.report, cfg, deadline))
    best = _pick_best(candidates)
    best = _polish_interior(rule, f, best, cfg)
    # store the recomputable objective for the winning report
    return SolveResult(
        report=best.report,
        objective=_objective(rule, f, best.report),
        converged=best.converged,
        iterations=best.iterations,
        gradient_norm_final=best.gradient_norm_final,
    )


def quadratic_linear_exact_optimum(f: EnvironmentMap) -> SolveResult:
    """Exact optimum of the quadratic rule under a linear map, by support
    enumeration.

    For f(p) = A p the objective is the quadratic form p^T (A + A^T - I) p,
    whose maximum over the simplex is attained at a vertex or at a
    stationary point of some face.  Enumerating all supports is exact and
    cheap for the small n used here; serves as an independent oracle for
    the gradient solver.
    """
    if f.kind != "linear":
        raise InvalidArgumentError("exact oracle requires a linear environment")
    n = f.n
    M = f.A + f.A.T - np.eye(n)
    best_x, best_val = None, -np.inf
    for size in range(1, n + 1):
        for support in combinations(range(n), size):
            idx = list(support)
            if size == 1:
                x = np.zeros(n)
                x[idx[0]] = 1.0
            else:
                sub = M[np.ix_(idx, idx)]
                try:
                    y = np.linalg.solve(sub, np.ones(size))
                except np.linalg.LinAlgError:
                    continue
                total = y.sum()
                if abs(total) < 1e-14:
                    continue
                y = y / total
                if np.any(y <= 0.0):
                    continue
                x = np.zeros(n)
                x[idx] = y
            val = float(x @ M @ x)
            if val > best_val + OBJECTIVE_TIE_TOL or (
                abs(val - best_val) <= OBJECTIVE_TIE_TOL
                and best_x is not None
                and _lexicographically_smaller(x, best_x)
            ):
                best_x, best_val = x, val
    report = SimplexPoint(best_x)
    return SolveResult(
        report=report,
        objective=best_val,
        converged=True,
        iterations=2 ** n - 1,
        gradient_norm_final=float("nan"),
    )


# -- fixed-point dynamics -----------------------------------------------------


def repeated_risk_minimization(
    rule: ScoringRule,
    f: EnvironmentMap,
    p0: SimplexPoint,
    max_iters: int = 10_000,
    tol: float = 1e-12,
) -> SolveResult:
    """p_{t+1} = argmax_p S(p, f(p_t)), which for a strictly proper rule is
    plain fixed-point iteration p_{t+1} = f(p_t)."""
    p = p0
    trajectory = [p]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        q = f.eval(p)
        trajectory.append(q)
        if np.linalg.norm(q.probs - p.probs) <= tol:
            p = q
            converged = True
            break
        p = q
    return SolveResult(
        report=p,
        objective=_objective(rule, f, p),
        converged=converged,
        iterations=it,
        gradient_norm_final=float(np.linalg.norm(f.eval(p).probs - p.probs)),
        trajectory=trajectory,
    )


def repeated_gradient_ascent(
    rule: ScoringRule,
    f: EnvironmentMap,
    p0: SimplexPoint,
    step: float = None,
    max_iters: int = 100_000,
    tol: float = 1e-10,
) -> SolveResult:
    """Projected ascent on the frozen-belief objective.

    Updates p <- Proj(p + step * Dg(p)^T (f(p) - p)).  Critical points are
    exactly the fixed points of f when Dg is positive definite on the
    tangent space, so convergence lands on a fixed point, not on the
    performative optimum.  Default step is 1/beta for rules with bounded
    curvature beta.
    """
    if step is None:
        beta = rule.max_tangent_curvature()
        if not np.isfinite(beta):
            raise InvalidArgumentError(
                "rule curvature is unbounded; pass an explicit step"
            )
        step = 1.0 / beta
    p = p0
    trajectory = [p]
    converged = False
    it = 0
    gn = float("nan")
    for it in range(1, max_iters + 1):
        grad = stop_gradient(rule, f, p)
        gn = grad.norm
        if gn <= tol:
            converged = True
            break
        p = project_to_simplex(p.probs + step * grad.comps)
        trajectory.append(p)
    return SolveResult(
        report=p,
        objective=_objective(rule, f, p),
        converged=converged,
        iterations=it,
        gradient_norm_final=gn,
        trajectory=trajectory,
    )


# -- online stochastic learning ----------------------------------------------


@dataclass
class OnlineTrace:
    """A stochastic learning run: reports P_0..P_T, sampled outcomes, scores.

    ``reports`` has T + 1 rows (the initial report included); ``outcomes``
    and ``scores`` have T entries, with outcomes[t] drawn from f(P_t).
    """

    reports: np.ndarray
    outcomes: np.ndarray
    scores: np.ndarray
    seed: int

    @property
    def T(self) -> int:
        return self.outcomes.size

    def report_points(self):
        return [SimplexPoint(row) for row in self.reports]


def constant_schedule(c: float) -> Callable[[int], float]:
    return lambda t: c


def inverse_schedule(c: float) -> Callable[[int], float]:
    """alpha_t = c / t, the classic stochastic-approximation decay."""
    return lambda t: c / t


def _score_raw(rule: ScoringRule, v: np.ndarray, y: int) -> float:
    if rule.kind == QUADRATIC:
        return float(2.0 * v[y] - v @ v)
    if rule.kind == LOGARITHMIC:
        return float(np.log(v[y])) if v[y] > 0.0 else float("-inf")
    e = float(np.exp(rule.K * v[0]))
    d0 = (1.0 if y == 0 else 0.0) - v[0]
    d1 = (1.0 if y == 1 else 0.0) - v[1]
    return 2.0 * e / rule.K + e * (d0 - d1)


def _single_outcome_gradient(rule: ScoringRule, v: np.ndarray, y: int) -> np.ndarray:
    """Tangent gradient of p -> S(p, e_y), i.e. Dg(p)^T (e_y - p)."""
    n = v.size
    if rule.kind == QUADRATIC:
        g = -2.0 * v
        g[y] += 2.0
        return g - g.mean()
    if rule.kind == LOGARITHMIC:
        g = np.zeros(n)
        g[y] = 1.0 / v[y]
        return g - g.mean()
    e = np.exp(rule.K * v[0])
    ey = np.zeros(n)
    ey[y] = 1.0
    d = ey - v
    g = np.array([rule.K * e * d[0], -rule.K * e * d[0]])
    return g - g.mean()


def online_sgd(
    rule: ScoringRule,
    f: EnvironmentMap,
    p0: SimplexPoint,
    schedule: Callable[[int], float],
    T: int,
    seed: int,
) -> OnlineTrace:
    """Projected stochastic gradient ascent on single-outcome scores.

    Each round samples Y_t from f(P_t), scores the standing report, and
    ascends the per-outcome gradient Dg(P_t)^T (e_{Y_t} - P_t).  In
    expectation this is the frozen-belief ascent, so the dynamics track
    fixed points of f.  The log rule projects onto the 1e-6-shrunk simplex
    to keep scores and gradients bounded.
    """
    if T < 0:
        raise InvalidArgumentError("T must be >= 0")
    rng = np.random.default_rng(seed)
    n = f.n
    margin = LOG_INTERIOR_NUDGE if rule.kind == LOGARITHMIC else 0.0
    scale = 1.0 - n * margin
    reports = np.empty((T + 1, n))
    outcomes = np.empty(T, dtype=np.int64)
    scores = np.empty(T)
    uniforms = rng.random(T)
    v = p0.probs.copy()
    reports[0] = v
    for t in range(1, T + 1):
        q = f.eval_raw(v)
        y = min(int(np.searchsorted(np.cumsum(q), uniforms[t - 1])), n - 1)
        outcomes[t - 1] = y
        scores[t - 1] = _score_raw(rule, v, y)
        alpha = schedule(t)
        if alpha <= 0:
            raise InvalidArgumentError(f"schedule produced alpha_{t} = {alpha}")
        stepped = v + alpha * _single_outcome_gradient(rule, v, y)
        if margin > 0.0:
            v = margin + scale * project_raw((stepped - margin) / scale)
        else:
            v = project_raw(stepped)
        reports[t] = v
    return OnlineTrace(reports=reports, outcomes=outcomes, scores=scores, seed=seed)


def constant_policy_trace(
    rule: ScoringRule, f: EnvironmentMap, p: SimplexPoint, T: int, seed: int
) -> OnlineTrace:
    """Trace of a policy pinned at p, with outcomes drawn i.i.d. from f(p)."""
    if T < 0:
        raise InvalidArgumentError("T must be >= 0")
    rng = np.random.default_rng(seed)
    q = f.eval(p).probs
    outcomes = rng.choice(f.n, size=T, p=q)
    per_outcome = np.array([rule.score(p, i) for i in range(f.n)])
    return OnlineTrace(
        reports=np.tile(p.probs, (T + 1, 1)),
        outcomes=outcomes,
        scores=per_outcome[outcomes],
        seed=seed,
    )


def rga_policy_trace(
    rule: ScoringRule,
    f: EnvironmentMap,
    p0: SimplexPoint,
    T: int,
    seed: int,
    step: float = None,
) -> OnlineTrace:
    """Trace of the frozen-belief ascent policy, scored on sampled outcomes."""
    if T < 0:
        raise InvalidArgumentError("T must be >= 0")
    rga = repeated_gradient_ascent(rule, f, p0, step=step, max_iters=T, tol=0.0)
    path = rga.trajectory
    rng = np.random.default_rng(seed)
    n = f.n
    reports = np.empty((T + 1, n))
    outcomes = np.empty(T, dtype=np.int64)
    scores = np.empty(T)
    for t in range(T):
        point = path[t] if t < len(path) else path[-1]
        reports[t] = point.probs
        q = f.eval(point).probs
        y = int(min(np.searchsorted(np.cumsum(q), rng.random()), n - 1))
        outcomes[t] = y
        scores[t] = rule.score(point, y)
    reports[T] = (path[T] if T < len(path) else path[-1]).probs
    return OnlineTrace(reports=reports, outcomes=outcomes, scores=scores, seed=seed)
