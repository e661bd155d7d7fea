"""Rank-1 qubit POVMs, Born-rule statistics and three-level Naimark dilation.

Element i is the operator |e_i><e_i| with

    |e_i> = r_i (cos(theta_i/2)|0> + sin(theta_i/2) exp(i phi_i) |-1>),

stored as (w_i = r_i^2, theta_i, phi_i). Equivalently
Pi_i = w_i (1 + m_i . sigma) / 2 with m_i the Bloch direction of the
element, so completeness is sum w_i = 2 together with sum w_i m_i = 0.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import (
    CompletenessViolation,
    DilationFailure,
    NegativeWeight,
    TooFewOutcomes,
    WeightSumViolation,
)
from .model import BlochPoint, PureQubitState, unit_vector_jet

CONSTRAINT_TOL = 1e-10
PROB_FLOOR = 1e-15


class PovmElement(NamedTuple):
    w: float
    theta: float
    phi: float


def direction(theta, phi) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack(
        [np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)], axis=-1
    )


def angles(m) -> tuple[float, float]:
    """Spherical angles (theta, phi) of a 3-vector."""
    m = np.asarray(m, dtype=float)
    m = m / np.linalg.norm(m)
    theta = float(np.arccos(np.clip(m[2], -1.0, 1.0)))
    phi = float(np.arctan2(m[1], m[0])) if np.hypot(m[0], m[1]) > 0 else 0.0
    return theta, phi


@dataclass(frozen=True)
class Povm:
    elements: tuple[PovmElement, ...]
    label: str = ""

    def __post_init__(self):
        els = tuple(PovmElement(float(w), float(t), float(p)) for w, t, p in self.elements)
        object.__setattr__(self, "elements", els)

    @classmethod
    def from_directions(cls, weights, directions, label: str = "") -> Povm:
        els = [PovmElement(w, *angles(m)) for w, m in zip(weights, np.asarray(directions))]
        return cls(tuple(els), label)

    def __len__(self) -> int:
        return len(self.elements)

    @property
    def weights(self) -> np.ndarray:
        return np.array([e.w for e in self.elements])

    @property
    def directions(self) -> np.ndarray:
        """Bloch directions m_i, shape (m, 3)."""
        return direction([e.theta for e in self.elements], [e.phi for e in self.elements])

    @property
    def vectors(self) -> np.ndarray:
        """Unnormalized |e_i>, shape (m, 2)."""
        return np.array(
            [
                np.sqrt(e.w) * np.array([np.cos(e.theta / 2), np.sin(e.theta / 2) * np.exp(1j * e.phi)])
                for e in self.elements
            ]
        )

    @property
    def operators(self) -> np.ndarray:
        v = self.vectors
        return np.einsum("ia,ib->iab", v, np.conj(v))

    @property
    def supports_estimation(self) -> bool:
        return len(self.elements) >= 3

    @property
    def degenerate(self) -> bool:
        """True when some element carries (numerically) zero weight."""
        return bool(np.any(self.weights <= CONSTRAINT_TOL))

    @property
    def identifier(self) -> str:
        if self.label:
            return self.label
        return hashlib.sha1(to_json(self).encode()).hexdigest()[:12]

    def canonical(self) -> Povm:
        """Same measurement with elements sorted; relabeling leaves statistics unchanged."""
        return Povm(tuple(sorted(self.elements, key=lambda e: (e.theta, e.phi, e.w))), self.label)


def validate(p: Povm, require_estimation: bool = False) -> Povm:
    """Return ``p`` unchanged if it is a valid POVM, otherwise raise.

    Checks non-negative weights, sum of weights 2 and vanishing weighted
    direction sum (the last two together are sum |e_i><e_i| = 1).
    """
    w = p.weights
    if np.any(w < -CONSTRAINT_TOL):
        raise NegativeWeight(f"negative weights {w[w < 0]}")
    if abs(w.sum() - 2.0) > CONSTRAINT_TOL:
        raise WeightSumViolation(f"sum of weights {w.sum():.12g} != 2")
    resid = w @ p.directions
    if np.linalg.norm(resid) > CONSTRAINT_TOL:
        raise CompletenessViolation(f"sum w_i m_i = {resid} != 0")
    if require_estimation and not p.supports_estimation:
        raise TooFewOutcomes(f"{len(p)} outcomes cannot resolve two parameters")
    return p


def trine_povm() -> Povm:
    """Symmetric three-outcome POVM in the x-z great circle."""
    w = 2.0 / 3.0
    return Povm(
        (PovmElement(w, 0.0, 0.0), PovmElement(w, 2 * np.pi / 3, 0.0), PovmElement(w, -2 * np.pi / 3, 0.0)),
        label="trine",
    )


SIC_DIRECTIONS = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]]) / np.sqrt(3)


def sic_povm() -> Povm:
    """Qubit SIC-POVM: tetrahedral Bloch directions, weights 1/2."""
    return Povm.from_directions(np.full(4, 0.5), SIC_DIRECTIONS, label="sic")


def probabilities_from_bloch(weights, directions, bloch) -> np.ndarray:
    """p_i = w_i (1 + m_i . r) / 2 for a (possibly mixed) Bloch vector r.

    Values below 1e-15 are clamped to zero and the rest renormalized.
    Broadcasts over leading axes of ``bloch``.
    """
    p = 0.5 * np.asarray(weights) * (1.0 + np.asarray(bloch)[..., None, :] @ np.asarray(directions).T)[..., 0, :]
    p = np.where(p < PROB_FLOOR, 0.0, p)
    return p / p.sum(axis=-1, keepdims=True)


def outcome_probabilities(p: Povm, state) -> np.ndarray:
    """Born-rule outcome distribution.

    ``state`` is a :class:`PureQubitState` or a Bloch vector (length-3,
    norm <= 1), the latter allowing mixed states.
    """
    bloch = state.bloch_vector if isinstance(state, PureQubitState) else np.asarray(state, dtype=float)
    return probabilities_from_bloch(p.weights, p.directions, bloch)


@dataclass(frozen=True, eq=False)
class NaimarkFrame:
    vectors: np.ndarray  # (3, 3); row i is u_i over (|0>, |-1>, |+1>)

    def probabilities(self, state: PureQubitState) -> np.ndarray:
        psi = np.concatenate([state.amplitudes, [0.0]])
        return np.abs(np.conj(self.vectors) @ psi) ** 2


def naimark_dilation(p: Povm) -> NaimarkFrame:
    """Orthonormal u_1..u_3 in C^3 whose (|0>, |-1>) components are |e_i>.

    The 2x3 block E = [e_1 e_2 e_3] has orthonormal rows by completeness;
    the third row is the unit null vector of E, phase-fixed so that its
    first nonzero entry is real and positive. The columns of the resulting
    unitary are the u_i.
    """
    validate(p)
    if len(p) != 3:
        raise DilationFailure("three-level dilation needs exactly three elements")
    E = p.vectors.T  # (2, 3)
    if np.linalg.matrix_rank(E, tol=1e-10) < 2:
        raise DilationFailure("element block is rank deficient")
    null = scipy.linalg.null_space(E)
    if null.shape[1] != 1:
        raise DilationFailure("completion is not unique")
    row = np.conj(null[:, 0])
    lead = row[np.argmax(np.abs(row) > 1e-12)]
    row = row * (np.conj(lead) / abs(lead))
    U = np.vstack([E, row])
    return NaimarkFrame(vectors=U.T.copy())


def projective_fim_rank(point: BlochPoint, axis, tol: float = 1e-9) -> int:
    """Rank of the Fisher matrix of the two-outcome measurement along ``axis``.

    With p_+- = (1 +- a.n)/2 the two score vectors are collinear, so the
    rank never exceeds one; it is zero when ``axis`` is parallel to n.
    """
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    n, dn = unit_vector_jet(point.k1, point.k2, point.M)
    F = np.zeros((2, 2))
    for s in (1.0, -1.0):
        prob = 0.5 * (1 + s * a @ n)
        grad = 0.5 * s * dn @ a
        if prob > PROB_FLOOR:
            F += np.outer(grad, grad) / prob
    return int(np.linalg.matrix_rank(F, tol=tol))


def to_dict(p: Povm) -> dict:
    return {"elements": [{"w": e.w, "theta": e.theta, "phi": e.phi} for e in p.elements]}


def from_dict(data: dict, label: str = "") -> Povm:
    try:
        els = tuple(PovmElement(float(e["w"]), float(e["theta"]), float(e["phi"])) for e in data["elements"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed POVM object: {exc}") from exc
    return Povm(els, label)


def to_json(p: Povm) -> str:
    # repr-based float output round-trips doubles exactly
    return json.dumps(to_dict(p), sort_keys=True)


def from_json(text: str, label: str = "") -> Povm:
    return from_dict(json.loads(text), label)
