"""Finite-shot measurement simulation, maximum-likelihood estimation of k, and covariances."""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .bounds import WeightMatrix, classical_fim
from .errors import (
    DegenerateRecordWarning,
    MonteCarloAborted,
    NonConvergence,
    NumericError,
    SingularFim,
)
from .model import BlochPoint, PureQubitState, excited_state, unit_vector_jet, wrap_difference
from .povm import PROB_FLOOR, Povm, outcome_probabilities, validate

GRAD_TOL = 1e-10
MAX_ITER = 200
MAX_HALVINGS = 30
FIM_DET_TOL = 1e-300


@dataclass(frozen=True)
class MeasurementRecord:
    counts: tuple[int, ...]
    N: int
    povm_id: str = ""
    seed: int | None = None

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be non-negative")
        if self.N < 1 or sum(counts) != self.N:
            raise ValueError(f"counts sum to {sum(counts)}, expected N = {self.N} >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def frequencies(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.N

    def to_json(self) -> str:
        return json.dumps(
            {"counts": list(self.counts), "N": self.N, "povm_id": self.povm_id, "seed": self.seed},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> MeasurementRecord:
        obj = json.loads(line)
        return cls(tuple(obj["counts"]), int(obj["N"]), obj.get("povm_id", ""), obj.get("seed"))


def write_records(path, records) -> None:
    with open(path, "w", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path) -> list[MeasurementRecord]:
    with open(path) as fh:
        return [MeasurementRecord.from_json(line) for line in fh if line.strip()]


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Covariance of the estimate of (k1, k2).

    ``method`` is one of "asymptotic-eq2", "monte-carlo", "fim-inverse".
    For the propagated estimate ``fim_residual`` holds the relative
    Frobenius distance to F_C^-1/N; Monte Carlo estimates carry the mean
    estimator offset in ``bias`` and its standard error in ``bias_stderr``.
    """

    sigma: np.ndarray
    method: str
    N: int
    trials: int | None = None
    fim_residual: float | None = None
    bias: np.ndarray | None = None
    bias_stderr: np.ndarray | None = None
    failures: int = 0


def write_covariances_csv(path, estimates) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["s11", "s12", "s22"])
        for c in estimates:
            w.writerow([f"{c.sigma[0, 0]:.17g}", f"{c.sigma[0, 1]:.17g}", f"{c.sigma[1, 1]:.17g}"])


def sample_outcomes(p: Povm, s: PureQubitState, N: int, seed) -> MeasurementRecord:
    """Draw N outcomes from the Born distribution with a seeded generator.

    ``seed`` may be an int or a numpy SeedSequence.
    """
    validate(p)
    if N < 1:
        raise ValueError("N must be at least 1")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(N, outcome_probabilities(p, s))
    seed_value = seed if isinstance(seed, (int, np.integer)) else None
    return MeasurementRecord(tuple(int(c) for c in counts), N, p.identifier, seed_value)


class _Likelihood:
    """Normalized log-likelihood sum_i f_i log p_i(k) and its derivatives."""

    def __init__(self, povm: Povm, freqs, M: float):
        keep = np.asarray(freqs) > 0  # 0 log p == 0
        self.w = povm.weights
        self.m = povm.directions
        self.f = np.asarray(freqs)
        self.keep = keep
        self.M = M

    def probabilities(self, k, order=1):
        jet = unit_vector_jet(k[0], k[1], self.M, order=order)
        n = jet[0]
        p = 0.5 * self.w * (1.0 + self.m @ n)
        dp = 0.5 * self.w[:, None] * (self.m @ jet[1].T)
        if order == 1:
            return p, dp
        d2p = 0.5 * self.w[:, None, None] * np.einsum("ic,abc->iab", self.m, jet[2])
        return p, dp, d2p

    def value(self, k) -> float:
        p, _ = self.probabilities(k)
        pk = p[self.keep]
        if np.any(pk <= 0):
            return -np.inf
        return float(self.f[self.keep] @ np.log(pk))

    def derivatives(self, k):
        p, dp, d2p = self.probabilities(k, order=2)
        f, pk = self.f[self.keep], p[self.keep]
        dpk, d2pk = dp[self.keep], d2p[self.keep]
        score = dpk / pk[:, None]
        grad = f @ score
        hess = np.einsum("i,iab->ab", f / pk, d2pk) - np.einsum("i,ia,ib->ab", f, score, score)
        live = p > PROB_FLOOR
        fisher = (dp[live] / p[live][:, None]).T @ dp[live]
        return grad, hess, fisher


def mle_estimate(p: Povm, rec: MeasurementRecord, M: float, k_init) -> BlochPoint:
    """Local maximizer of the multinomial log-likelihood by damped Newton ascent.

    The Newton direction uses the observed Hessian when it is negative
    definite and falls back to Fisher scoring otherwise; the step is halved
    (at most 30 times) until the normalized log-likelihood increases.
    Converged when the gradient of the normalized log-likelihood has norm
    below 1e-10.
    """
    if len(rec.counts) != len(p):
        raise ValueError("record and POVM have different outcome counts")
    if isinstance(k_init, BlochPoint):
        k_init = k_init.k
    lik = _Likelihood(p, rec.frequencies, M)
    k = np.asarray(k_init, dtype=float).copy()
    ell = lik.value(k)
    if not np.isfinite(ell):
        raise NumericError("log-likelihood is -inf at the starting point")
    for _ in range(MAX_ITER):
        grad, hess, fisher = lik.derivatives(k)
        if np.linalg.norm(grad) < GRAD_TOL:
            return BlochPoint(k[0], k[1], M)
        try:
            if np.all(np.linalg.eigvalsh(hess) < 0):
                step = -np.linalg.solve(hess, grad)
            elif np.linalg.det(fisher) > FIM_DET_TOL:
                step = np.linalg.solve(fisher, grad)
            else:
                raise SingularFim("neither Hessian nor Fisher matrix is invertible")
        except np.linalg.LinAlgError as exc:
            raise SingularFim(str(exc)) from exc
        for _ in range(MAX_HALVINGS + 1):
            trial = k + step
            ell_trial = lik.value(trial)
            if ell_trial > ell:
                break
            step = step / 2
        else:
            # ascent stalled; either at roundoff level or the record does not fit the model
            if np.linalg.norm(grad) < 1e3 * GRAD_TOL:
                return BlochPoint(k[0], k[1], M)
            warnings.warn(
                f"likelihood ascent stalled with |grad| = {np.linalg.norm(grad):.3g}",
                DegenerateRecordWarning,
                stacklevel=2,
            )
            return BlochPoint(k[0], k[1], M)
        k, ell = trial, ell_trial
    raise NonConvergence(f"MLE did not converge in {MAX_ITER} iterations")


def asymptotic_covariance(p: Povm, point: BlochPoint, N: int) -> CovarianceEstimate:
    """Delta-method covariance of the MLE.

    Sigma(k) = J Sigma(p_hat) J^T with Sigma(p_hat) = (diag(p) - p p^T)/N
    and J = F_C^-1 L, L_aj = d_a log p_j, the implicit-function derivative
    of the likelihood equation with respect to the empirical frequencies.
    """
    n, dn = unit_vector_jet(point.k1, point.k2, point.M)
    w, m = p.weights, p.directions
    prob = 0.5 * w * (1.0 + m @ n)
    dprob = 0.5 * w[:, None] * (m @ dn.T)
    live = prob > PROB_FLOOR
    prob, dprob = prob[live], dprob[live]
    F = classical_fim(p, point).matrix
    if abs(np.linalg.det(F)) <= FIM_DET_TOL or np.linalg.cond(F) > 1e14:
        raise SingularFim(f"classical FIM is singular at k=({point.k1}, {point.k2})")
    Finv = np.linalg.inv(F)
    L = (dprob / prob[:, None]).T  # (2, outcomes)
    jac = Finv @ L
    sigma_p = (np.diag(prob) - np.outer(prob, prob)) / N
    sigma = jac @ sigma_p @ jac.T
    sigma = 0.5 * (sigma + sigma.T)
    ref = Finv / N
    resid = float(np.linalg.norm(sigma - ref) / np.linalg.norm(ref))
    return CovarianceEstimate(sigma, "asymptotic-eq2", N, fim_residual=resid)


def fim_inverse_covariance(p: Povm, point: BlochPoint, N: int) -> CovarianceEstimate:
    F = classical_fim(p, point).matrix
    if abs(np.linalg.det(F)) <= FIM_DET_TOL or np.linalg.cond(F) > 1e14:
        raise SingularFim("classical FIM is singular")
    return CovarianceEstimate(np.linalg.inv(F) / N, "fim-inverse", N)


def trial_seed(seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream for trial ``index``; independent of execution order."""
    return np.random.SeedSequence(seed, spawn_key=(index,))


def monte_carlo_covariance(p: Povm, point: BlochPoint, N: int, trials: int, seed: int) -> CovarianceEstimate:
    """Sample covariance of MLEs over independent simulated records.

    Every trial starts the likelihood ascent at the true k; estimator
    offsets are wrapped to (-pi, pi] before accumulation. More than 1% of
    failed trials aborts the run.
    """
    if trials < 2:
        raise ValueError("need at least two trials")
    state = excited_state(point)
    truth = point.k
    offsets = []
    failures = []
    for t in range(trials):
        rec = sample_outcomes(p, state, N, trial_seed(seed, t))
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateRecordWarning)
                est = mle_estimate(p, rec, point.M, truth)
        except NumericError as exc:
            failures.append((t, repr(exc)))
            continue
        offsets.append(wrap_difference(est.k - truth))
    if len(failures) > 0.01 * trials:
        raise MonteCarloAborted(f"{len(failures)}/{trials} trials failed, first: {failures[:3]}")
    X = np.array(offsets)
    sigma = np.cov(X, rowvar=False, ddof=1)
    sigma = 0.5 * (sigma + sigma.T)
    bias = X.mean(axis=0)
    stderr = X.std(axis=0, ddof=1) / np.sqrt(len(X))
    return CovarianceEstimate(
        sigma, "monte-carlo", N, trials=trials, bias=bias, bias_stderr=stderr, failures=len(failures)
    )


def uncertainty_volume(c: CovarianceEstimate) -> float:
    """sqrt(det Sigma), clamped at zero."""
    return float(np.sqrt(max(np.linalg.det(c.sigma), 0.0)))


def weighted_variance(W, c: CovarianceEstimate) -> float:
    Wm = W.matrix if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)
    return float(np.trace(Wm @ c.sigma))
