"""Classical and quantum Fisher information and the multi-parameter bounds built on them."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.optimize

from .errors import (
    DegenerateQfi,
    DroppedOutcomeWarning,
    NonConvergence,
    NotPositiveDefinite,
    PoleSingularity,
    SingularOutcome,
)
from .model import PAULI, BlochPoint, band_state, qgt_analytic, unit_vector_jet
from .povm import PROB_FLOOR, Povm

QFI_DET_TOL = 1e-14
GRAD_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    matrix: np.ndarray
    kind: str  # "classical" or "quantum"


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    matrix: np.ndarray
    label: str = "custom"

    def __post_init__(self):
        W = np.asarray(self.matrix, dtype=float)
        if W.shape != (2, 2) or not np.allclose(W, W.T, rtol=0, atol=1e-12 * max(1.0, np.abs(W).max())):
            raise NotPositiveDefinite(f"weight matrix must be symmetric 2x2, got {W}")
        W = 0.5 * (W + W.T)
        try:
            np.linalg.cholesky(W)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"weight matrix not positive definite: {W}") from exc
        object.__setattr__(self, "matrix", W)


@dataclass(frozen=True)
class BoundsReport:
    sld_crb: float
    holevo: float
    r_param: float
    berry_bound: float


def fim_from_geometry(weights, directions, n, dn, *, strict: bool = True) -> np.ndarray:
    """Classical FIM sum_i (d_a p_i)(d_b p_i)/p_i for rank-1 elements.

    Uses p_i = w_i (1 + m_i.n)/2 and d_a p_i = w_i m_i.d_a n / 2.
    Outcomes with p_i below the probability floor are dropped when their
    gradient vanishes too; otherwise SingularOutcome is raised (or +inf
    entries are returned when ``strict`` is False).
    """
    w = np.asarray(weights)
    m = np.asarray(directions)
    p = 0.5 * w * (1.0 + m @ n)
    grad = 0.5 * w[:, None] * (m @ dn.T)  # (outcomes, 2)
    dead = p < PROB_FLOOR
    if np.any(dead):
        if np.any(np.abs(grad[dead]) > GRAD_TOL):
            if strict:
                raise SingularOutcome("zero-probability outcome with nonzero derivative")
            return np.full((2, 2), np.inf)
        if strict:
            warnings.warn("dropping zero-probability outcome", DroppedOutcomeWarning, stacklevel=3)
        p, grad = p[~dead], grad[~dead]
    return (grad / p[:, None]).T @ grad


def classical_fim(povm: Povm, point: BlochPoint) -> FisherMatrix:
    n, dn = unit_vector_jet(point.k1, point.k2, point.M)
    F = fim_from_geometry(povm.weights, povm.directions, n, dn)
    return FisherMatrix(0.5 * (F + F.T), "classical")


def qfi_matrix(point: BlochPoint) -> FisherMatrix:
    return FisherMatrix(4.0 * qgt_analytic(point).g, "quantum")


def _qfi_and_curvature(point: BlochPoint):
    t = qgt_analytic(point)
    F = 4.0 * t.g
    if np.linalg.det(F) <= QFI_DET_TOL:
        raise DegenerateQfi(f"singular QFI at k=({point.k1}, {point.k2}), M={point.M}")
    return F, t.omega12


def _weight(W) -> np.ndarray:
    return W.matrix if isinstance(W, WeightMatrix) else np.asarray(W, dtype=float)


def sld_crb(W, point: BlochPoint) -> float:
    F, _ = _qfi_and_curvature(point)
    return float(np.trace(_weight(W) @ np.linalg.inv(F)))


def r_parameter_from(qfi, omega12: float) -> float:
    """Largest |eigenvalue| of 2i F^-1 Omega, Omega the antisymmetric curvature matrix."""
    Om = np.array([[0.0, omega12], [-omega12, 0.0]])
    ev = np.linalg.eigvals(2j * np.linalg.solve(np.asarray(qfi, dtype=float), Om))
    return float(np.max(np.abs(ev)))


def r_parameter(point: BlochPoint) -> float:
    F, om = _qfi_and_curvature(point)
    return r_parameter_from(F, om)


def holevo_closed_form(W, qfi, omega12: float) -> float:
    """Tr(W F^-1) + 4 |Omega_12| sqrt(det W) / det F."""
    W = _weight(W)
    F = np.asarray(qfi, dtype=float)
    detF = np.linalg.det(F)
    return float(np.trace(W @ np.linalg.inv(F)) + 4 * abs(omega12) * np.sqrt(np.linalg.det(W)) / detF)


def holevo_bound(W, point: BlochPoint) -> float:
    F, om = _qfi_and_curvature(point)
    return holevo_closed_form(W, F, om)


def _density_derivatives(point: BlochPoint, h: float):
    def rho(dk1, dk2):
        return band_state(point.shifted(dk1, dk2)).density_matrix()

    return [(rho(h, 0) - rho(-h, 0)) / (2 * h), (rho(0, h) - rho(0, -h)) / (2 * h)]


def holevo_variational(W, point: BlochPoint, x0=None, *, h: float = 1e-5, tol: float = 1e-8, maxiter: int = 2000) -> float:
    """Holevo functional minimized numerically over locally unbiased observables.

    Each observable X_a = c_a 1 + x_a . sigma is a real 4-vector. The
    conditions Tr(rho X_a) = 0 and Tr(X_a d_b rho) = delta_ab are solved
    exactly (d_b rho by central differences of the state's projector); the
    remaining null-space coordinates are searched by Nelder-Mead, starting
    from ``x0`` (zeros by default), on

        Tr(W Re Z) + || sqrt(W) Im Z sqrt(W) ||_1,   Z_ab = Tr(rho X_a X_b).
    """
    _qfi_and_curvature(point)
    Wm = _weight(W)
    rho = band_state(point).density_matrix()
    drho = _density_derivatives(point, h)
    basis = np.concatenate([np.eye(2, dtype=complex)[None], PAULI])

    def tr(A, B):
        return np.real(np.trace(A @ B))

    rows = [[tr(rho, B) for B in basis]] + [[tr(D, B) for B in basis] for D in drho]
    C1 = np.array(rows)  # constraints on one observable
    A = np.zeros((6, 8))
    b = np.zeros(6)
    for a in range(2):
        A[3 * a:3 * a + 3, 4 * a:4 * a + 4] = C1
        b[3 * a + 1 + a] = 1.0
    particular = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.linalg.norm(A @ particular - b) > 1e-9:
        raise DegenerateQfi("local unbiasedness conditions are inconsistent")
    null = scipy.linalg.null_space(A)
    sqrtW = scipy.linalg.sqrtm(Wm).real

    def functional(t):
        c = particular + null @ t
        X = [np.tensordot(c[4 * a:4 * a + 4], basis, axes=1) for a in range(2)]
        Z = np.array([[np.trace(rho @ X[a] @ X[b]) for b in range(2)] for a in range(2)])
        trace_norm = np.sum(np.linalg.svd(sqrtW @ Z.imag @ sqrtW, compute_uv=False))
        return float(np.trace(Wm @ Z.real) + trace_norm)

    start = np.zeros(null.shape[1]) if x0 is None else np.asarray(x0, dtype=float)
    # a box keeps the simplex out of regions where X_a X_b cancels catastrophically
    span = 10.0 * (1.0 + np.linalg.norm(particular))
    res = scipy.optimize.minimize(
        functional, start, method="Nelder-Mead",
        bounds=[(-span, span)] * len(start),
        options={"xatol": 1e-10, "fatol": tol * 1e-2, "maxiter": maxiter},
    )
    if not res.success:
        raise NonConvergence(f"Holevo minimization: {res.message}")
    return float(res.fun)


def berry_bound(point: BlochPoint, N: int) -> float:
    """Lower bound 1/(2 N |Omega_12|) on the uncertainty volume."""
    if N < 1:
        raise ValueError("N must be at least 1")
    om = abs(qgt_analytic(point).omega12)
    if om * om * 4 <= QFI_DET_TOL:
        raise DegenerateQfi("vanishing Berry curvature; bound is infinite")
    return 1.0 / (2.0 * N * om)


def spherical_jacobian(point: BlochPoint) -> tuple[np.ndarray, float]:
    """Jacobian d(theta, phi)/d(k1, k2) of the unit vector and sin(theta)."""
    n, dn = unit_vector_jet(point.k1, point.k2, point.M)
    if abs(n[2]) >= 1 - 1e-10:
        raise PoleSingularity(f"n is at a pole of the spherical chart (n3 = {n[2]:.12f})")
    s2 = n[0] ** 2 + n[1] ** 2
    dtheta = -dn[:, 2] / np.sqrt(1 - n[2] ** 2)
    dphi = (n[0] * dn[:, 1] - n[1] * dn[:, 0]) / s2
    return np.vstack([dtheta, dphi]), float(np.sqrt(s2))


def jacobian_weight(point: BlochPoint) -> WeightMatrix:
    J, _ = spherical_jacobian(point)
    return WeightMatrix(J.T @ J, "W2-jacobian")


def qfi_weight(point: BlochPoint) -> WeightMatrix:
    return WeightMatrix(qfi_matrix(point).matrix, "W1-qfi")


def weight_for(label: str, point: BlochPoint) -> WeightMatrix:
    if label == "W1-qfi":
        return qfi_weight(point)
    if label == "W2-jacobian":
        return jacobian_weight(point)
    raise ValueError(f"unknown weight label {label!r}")


def bounds_report(W, point: BlochPoint, N: int) -> BoundsReport:
    return BoundsReport(
        sld_crb=sld_crb(W, point),
        holevo=holevo_bound(W, point),
        r_param=r_parameter(point),
        berry_bound=berry_bound(point, N),
    )
