"""Search over three-outcome rank-1 POVMs for Fisher-optimal measurements.

Three directions can only satisfy sum_i w_i m_i = 0 with positive weights
when they lie on one great circle and are not confined to a half of it.
The search therefore runs over the circle's normal (two angles) and the
three in-plane angles; the weights follow exactly from the linear
completeness conditions, and parameter sets without non-negative weights
are rejected. Every POVM the search touches is valid by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

from .bounds import WeightMatrix, fim_from_geometry
from .errors import AllRestartsInfeasible, InfeasibleDirections
from .model import BlochPoint, unit_vector_jet
from .povm import CONSTRAINT_TOL, Povm, to_json, validate

MAXITER = 300
FATOL = 1e-10
TIE_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    """Best POVM found and its objective.

    ``objective`` is det F_C for kind "det-fim" and Tr(W F_C^-1) for
    "weighted-crb". ``trace`` lists (restart, iteration, best objective so
    far) and ``extreme_evaluated`` the most favourable objective seen at
    any feasible evaluation.
    """

    povm: Povm
    objective: float
    objective_kind: str
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)
    extreme_evaluated: float = math.nan


def _solve_weights(m: np.ndarray):
    """Least-squares weights for sum w = 2, sum w m = 0, or None if infeasible."""
    A = np.vstack([np.ones(len(m)), m.T])
    b = np.array([2.0, 0.0, 0.0, 0.0])
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.linalg.norm(A @ w - b) > CONSTRAINT_TOL or np.any(w < -CONSTRAINT_TOL):
        return None
    return np.maximum(w, 0.0)


def _separating_direction(m: np.ndarray) -> np.ndarray:
    """Unit v maximizing min_i v . m_i (positive when a strict half-space holds them)."""
    # variables (v, t); maximize t subject to v . m_i >= t, |v_j| <= 1
    c = np.array([0.0, 0.0, 0.0, -1.0])
    A = np.hstack([-m, np.ones((len(m), 1))])
    res = scipy.optimize.linprog(c, A_ub=A, b_ub=np.zeros(len(m)), bounds=[(-1, 1)] * 3 + [(None, None)])
    v = res.x[:3]
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def feasible_povm(directions, label: str = "") -> Povm:
    """Complete unit directions into a POVM by solving for the weights.

    Raises InfeasibleDirections, carrying a separating direction as
    certificate, when no non-negative weights exist. Zero weights are
    allowed; such POVMs report ``degenerate``.
    """
    m = np.asarray(directions, dtype=float)
    m = m / np.linalg.norm(m, axis=1, keepdims=True)
    w = _solve_weights(m)
    if w is None:
        raise InfeasibleDirections("directions admit no non-negative completion", _separating_direction(m))
    return validate(Povm.from_directions(w, m, label))


def _directions(x) -> np.ndarray:
    """Three unit vectors on the great circle with normal angles x[0:2] at in-plane angles x[2:5]."""
    a, b = x[0], x[1]
    u = np.array([np.cos(a) * np.cos(b), np.cos(a) * np.sin(b), -np.sin(a)])
    v = np.array([-np.sin(b), np.cos(b), 0.0])
    g = np.asarray(x[2:5])
    return np.cos(g)[:, None] * u + np.sin(g)[:, None] * v


def _initial_points(rng: np.random.Generator, restarts: int):
    for _ in range(restarts):
        a = np.arccos(rng.uniform(-1, 1))
        b = rng.uniform(-np.pi, np.pi)
        g0 = rng.uniform(-np.pi, np.pi)
        g = g0 + np.array([0.0, 2 * np.pi / 3, 4 * np.pi / 3]) + rng.normal(0, 0.3, 3)
        yield np.concatenate([[a, b], g])


def _search(loss, point: BlochPoint, restarts: int, seed, kind: str, better) -> OptimizationResult:
    """Nelder-Mead restarts on ``loss(F_C)``; returns the best POVM.

    ``loss`` maps a Fisher matrix to a log-scale objective to be minimized
    (inf for unusable matrices); ``better`` compares natural objectives.
    """
    n, dn = unit_vector_jet(point.k1, point.k2, point.M)
    rng = np.random.default_rng(seed)
    trace = []
    extreme = [math.nan]
    results = []
    total_iter = 0

    def fim(x):
        m = _directions(x)
        w = _solve_weights(m)
        if w is None:
            return None, None, None
        F = fim_from_geometry(w, m, n, dn, strict=False)
        return F, w, m

    def natural(value):
        return math.exp(-value) if kind == "det-fim" else math.exp(value)

    for r, x0 in enumerate(_initial_points(rng, restarts)):
        def objective(x):
            F, _, _ = fim(x)
            if F is None or not np.all(np.isfinite(F)):
                return np.inf
            val = loss(F)
            if np.isfinite(val):
                nat = natural(val)
                if math.isnan(extreme[0]) or better(nat, extreme[0]):
                    extreme[0] = nat
            return val

        if not np.isfinite(objective(x0)):
            continue
        it = [0]

        def record(xk):
            it[0] += 1
            trace.append((r, it[0], natural(objective(xk))))

        res = scipy.optimize.minimize(
            objective, x0, method="Nelder-Mead", callback=record,
            options={"maxiter": MAXITER, "xatol": np.inf, "fatol": FATOL, "adaptive": True},
        )
        total_iter += res.nit
        F, w, m = fim(res.x)
        if F is None or not np.isfinite(res.fun):
            continue
        povm = Povm.from_directions(w, m).canonical()
        results.append((res.fun, bool(res.success), povm))

    if not results:
        raise AllRestartsInfeasible(f"no feasible restart at k=({point.k1}, {point.k2})")
    best = min(f for f, _, _ in results)
    ties = [(to_json(p), p, ok) for f, ok, p in results if f <= best + TIE_TOL]
    _, povm, ok = min(ties, key=lambda t: t[0])
    validate(povm)
    return OptimizationResult(
        povm=povm,
        objective=natural(best),
        objective_kind=kind,
        iterations=total_iter,
        converged=ok,
        trace=trace,
        extreme_evaluated=extreme[0],
    )


def _logdet_loss(F) -> float:
    sign, logdet = np.linalg.slogdet(F)
    return -logdet if sign > 0 else np.inf


def optimize_det_fim(point: BlochPoint, restarts: int = 8, seed=0) -> OptimizationResult:
    """Three-outcome POVM maximizing det F_C at ``point`` (the oPOVM)."""
    result = _search(_logdet_loss, point, restarts, seed, "det-fim", lambda a, b: a > b)
    return _with_label(result, "opovm")


def optimize_weighted(W, point: BlochPoint, restarts: int = 8, seed=0) -> OptimizationResult:
    """Three-outcome POVM minimizing Tr(W F_C^-1) at ``point``."""
    Wm = W.matrix if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)

    def loss(F):
        sign, _ = np.linalg.slogdet(F)
        if sign <= 0 or np.linalg.cond(F) > 1e14:
            return np.inf
        val = np.trace(Wm @ np.linalg.inv(F))
        return math.log(val) if val > 0 else np.inf

    label = getattr(W, "label", "custom")
    result = _search(loss, point, restarts, seed, "weighted-crb", lambda a, b: a < b)
    return _with_label(result, f"povm-{label}")


def _with_label(result: OptimizationResult, label: str) -> OptimizationResult:
    povm = Povm(result.povm.elements, label)
    return OptimizationResult(
        povm, result.objective, result.objective_kind, result.iterations,
        result.converged, result.trace, result.extreme_evaluated,
    )


def det_fim(povm: Povm, point: BlochPoint) -> float:
    n, dn = unit_vector_jet(point.k1, point.k2, point.M)
    return float(np.linalg.det(fim_from_geometry(povm.weights, povm.directions, n, dn, strict=False)))
