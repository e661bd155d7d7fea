import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from numpy.testing import assert_allclose

from _support import gapped_points, random_point, random_povm
from topometrology.bounds import (
    WeightMatrix,
    berry_bound,
    bounds_report,
    classical_fim,
    fim_from_geometry,
    holevo_bound,
    holevo_closed_form,
    holevo_variational,
    jacobian_weight,
    qfi_matrix,
    qfi_weight,
    r_parameter,
    r_parameter_from,
    sld_crb,
    spherical_jacobian,
    weight_for,
)
from topometrology.errors import (
    DegenerateQfi,
    DroppedOutcomeWarning,
    NotPositiveDefinite,
    PoleSingularity,
    SingularOutcome,
)
from topometrology.model import BlochPoint, PureQubitState, band_state, bloch_vector, qgt_analytic, qgt_fidelity
from topometrology.povm import Povm, PovmElement, angles, sic_povm, trine_povm

K0 = BlochPoint(1.0, 0.5, 1.0)


def holevo_sqrt_oracle(W, F):
    """(Tr sqrt(F^-1/2 W F^-1/2))^2, equal to C^H when det F = 4 Omega^2."""
    Fm = scipy.linalg.inv(scipy.linalg.sqrtm(F).real)
    ev = np.linalg.eigvalsh(Fm @ W @ Fm)
    return float(np.sum(np.sqrt(np.maximum(ev, 0))) ** 2)


def random_weight(rng):
    A = rng.normal(size=(2, 2))
    return WeightMatrix(A @ A.T + 0.1 * np.eye(2))


# -- Fisher information ----------------------------------------------------------------


def test_trine_fim_below_qfi():
    F = classical_fim(trine_povm(), K0)
    assert F.kind == "classical"
    assert_allclose(F.matrix, F.matrix.T, atol=1e-10)
    assert np.linalg.eigvalsh(F.matrix).min() >= -1e-12
    assert np.linalg.eigvalsh(qfi_matrix(K0).matrix - F.matrix).min() >= -1e-10


def test_two_outcome_measurement_has_singular_fim():
    rng = np.random.default_rng(1)
    for _ in range(20):
        th, ph = rng.uniform(0, np.pi), rng.uniform(-np.pi, np.pi)
        p = Povm((PovmElement(1, th, ph), PovmElement(1, np.pi - th, ph + np.pi)))
        assert abs(np.linalg.det(classical_fim(p, K0).matrix)) < 1e-12


def test_measurement_along_n_is_blind():
    th, ph = angles(bloch_vector(K0).n)
    p = Povm((PovmElement(1, th, ph), PovmElement(1, np.pi - th, ph + np.pi)))
    with pytest.warns(DroppedOutcomeWarning):
        F = classical_fim(p, K0)
    assert_allclose(F.matrix, 0, atol=1e-12)


def test_singular_outcome_detected():
    n = np.array([0.0, 0.0, 1.0])
    dn = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]])  # not tangent: synthetic input
    w, m = np.array([1.0, 1.0]), np.array([[0, 0, 1.0], [0, 0, -1.0]])
    with pytest.raises(SingularOutcome):
        fim_from_geometry(w, m, n, dn)
    assert np.isinf(fim_from_geometry(w, m, n, dn, strict=False)).all()


@settings(max_examples=200)
@given(gapped_points(min_d=1e-3))
def test_qfi_determinant_chain(p):
    t = qgt_analytic(p)
    F = qfi_matrix(p).matrix
    assert_allclose(F, 4 * t.g, atol=1e-10)
    assert np.linalg.det(F) == pytest.approx(16 * np.linalg.det(t.g), rel=1e-9, abs=1e-300)
    assert np.linalg.det(F) == pytest.approx(4 * t.omega12**2, rel=1e-9, abs=1e-14)


def test_qfi_matches_fidelity_metric_on_symmetric_point():
    p = BlochPoint(np.pi / 2, np.pi / 2, 1.0)
    assert_allclose(qfi_matrix(p).matrix, 4 * qgt_fidelity(p).g, atol=1e-4)


def test_qfi_dominates_classical_fim():
    rng = np.random.default_rng(2)
    for _ in range(20):
        p = random_point(rng)
        Q = qfi_matrix(p).matrix
        for povm in [trine_povm(), sic_povm()] + [random_povm(rng) for _ in range(50)]:
            F = classical_fim(povm, p).matrix
            assert np.linalg.eigvalsh(Q - F).min() >= -1e-10 * max(1, np.abs(Q).max())


# -- SLD bound and R ---------------------------------------------------------------------------


def test_sld_crb_examples():
    F = qfi_matrix(K0).matrix
    assert sld_crb(F, K0) == pytest.approx(2, rel=1e-12)
    assert sld_crb(F / 2, K0) == pytest.approx(1, rel=1e-12)


def test_sld_crb_jacobian_weight_by_hand():
    F = qfi_matrix(K0).matrix
    W = jacobian_weight(K0).matrix
    (a, b), (c, d) = F
    inv = np.array([[d, -b], [-c, a]]) / (a * d - b * c)
    expected = W[0, 0] * inv[0, 0] + W[0, 1] * inv[1, 0] + W[1, 0] * inv[0, 1] + W[1, 1] * inv[1, 1]
    assert expected > 0
    assert sld_crb(W, K0) == pytest.approx(expected, rel=1e-12)


def test_r_parameter_is_one_wherever_curvature_is_nonzero():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        p = random_point(rng, min_d=0.05)
        if abs(qgt_analytic(p).omega12) < 1e-6:
            continue
        assert abs(r_parameter(p) - 1) < 1e-10


def test_r_parameter_homogeneity():
    t = qgt_analytic(K0)
    r = r_parameter_from(4 * t.g, t.omega12)
    assert r_parameter_from(8 * t.g, t.omega12) == pytest.approx(r / 2, rel=1e-12)
    assert 0 <= r <= 1 + 1e-10


def test_degenerate_qfi_rejected():
    with pytest.raises(DegenerateQfi):
        sld_crb(np.eye(2), BlochPoint(np.pi / 2, np.pi / 2, 1.0))


# -- Holevo bound ----------------------------------------------------------------------------------


def test_holevo_with_qfi_weight():
    F = qfi_matrix(K0).matrix
    assert holevo_bound(F, K0) == pytest.approx(4, rel=1e-12)
    assert holevo_bound(F, K0) / sld_crb(F, K0) == pytest.approx(1 + r_parameter(K0), rel=1e-12)
    assert holevo_variational(F, K0) == pytest.approx(4, rel=1e-6)


def test_holevo_homogeneous_in_weight():
    base = holevo_bound(np.eye(2), K0)
    for c in (0.5, 3.0, 17.0):
        assert holevo_bound(c * np.eye(2), K0) == pytest.approx(c * base, rel=1e-12)


def test_holevo_jacobian_weight_matches_variational():
    W = jacobian_weight(K0)
    assert holevo_variational(W, K0) == pytest.approx(holevo_bound(W, K0), rel=1e-6)


def test_holevo_closed_form_matches_variational_on_random_inputs():
    rng = np.random.default_rng(4)
    for _ in range(100):
        p = random_point(rng, min_d=0.2)
        if abs(qgt_analytic(p).omega12) < 1e-3:
            continue
        W = random_weight(rng)
        closed = holevo_bound(W, p)
        var = holevo_variational(W, p)
        assert var == pytest.approx(closed, rel=1e-6)
        assert var >= sld_crb(W, p) - 1e-8


def test_holevo_matches_square_root_trace_form():
    rng = np.random.default_rng(5)
    for _ in range(200):
        p = random_point(rng)
        if abs(qgt_analytic(p).omega12) < 1e-4:
            continue
        W = random_weight(rng).matrix
        F = qfi_matrix(p).matrix
        assert holevo_bound(W, p) == pytest.approx(holevo_sqrt_oracle(W, F), rel=1e-8)


@settings(max_examples=200)
@given(gapped_points(min_d=0.05))
def test_bound_sandwich(p):
    if abs(qgt_analytic(p).omega12) < 1e-5:
        return
    W = weight_for("W1-qfi", p)
    cs, ch, r = sld_crb(W, p), holevo_bound(W, p), r_parameter(p)
    assert cs <= ch * (1 + 1e-8)
    assert ch <= (1 + r) * cs * (1 + 1e-8)
    assert ch <= 2 * cs * (1 + 1e-8)


def test_holevo_closed_form_direct():
    F = np.diag([2.0, 8.0])
    assert holevo_closed_form(F, F, 2.0) == pytest.approx(2 + 4 * 2 * 4 / 16)


# -- Berry-curvature bound ----------------------------------------------------------------------


def test_berry_bound_plug_in():
    om = qgt_analytic(K0).omega12
    assert berry_bound(K0, 1000) == pytest.approx(1 / (2000 * abs(om)), rel=1e-14)
    assert berry_bound(K0, 2000) == pytest.approx(berry_bound(K0, 1000) / 2, rel=1e-14)


def test_berry_bound_infinite_where_curvature_vanishes():
    with pytest.raises(DegenerateQfi):
        berry_bound(BlochPoint(np.pi / 2, np.pi / 2, 1.0), 1000)
    with pytest.raises(ValueError):
        berry_bound(K0, 0)


def test_bounds_report():
    rep = bounds_report(qfi_weight(K0), K0, 100)
    assert rep.sld_crb == pytest.approx(2) and rep.holevo == pytest.approx(4)
    assert rep.r_param == pytest.approx(1) and rep.berry_bound > 0


# -- weights ---------------------------------------------------------------------------------------------


def spherical_angles(p):
    n = bloch_vector(p).n
    return np.arccos(n[2]), np.arctan2(n[1], n[0])


def jacobian_oracle(p, h=1e-6):
    cols = []
    for dk in ((h, 0), (0, h)):
        tp, pp = spherical_angles(p.shifted(*dk))
        tm, pm = spherical_angles(p.shifted(-dk[0], -dk[1]))
        dphi = (pp - pm + np.pi) % (2 * np.pi) - np.pi
        cols.append([(tp - tm) / (2 * h), dphi / (2 * h)])
    return np.array(cols).T


def test_spherical_jacobian_matches_finite_differences_and_pullback():
    rng = np.random.default_rng(6)
    count = 0
    while count < 1000:
        p = random_point(rng, min_d=0.2)
        n = bloch_vector(p).n
        if abs(n[2]) > 0.99:
            continue
        count += 1
        J, s = spherical_jacobian(p)
        assert_allclose(J, jacobian_oracle(p), rtol=1e-5, atol=1e-5 * (1 + np.abs(J).max()))
        G = 4 * qgt_analytic(p).g
        assert_allclose(J.T @ np.diag([1, s**2]) @ J, G, atol=1e-12 * (1 + np.abs(G).max()))


def test_jacobian_weight_on_equator():
    # d3 = M - cos k1 - cos k2 = 0 puts n on the equator
    p = BlochPoint(np.pi / 3, np.pi / 3, 1.0)
    assert abs(bloch_vector(p).n[2]) < 1e-15
    assert_allclose(jacobian_weight(p).matrix, qfi_matrix(p).matrix, atol=1e-14)


def test_jacobian_weight_positive_definite():
    rng = np.random.default_rng(7)
    for _ in range(200):
        p = random_point(rng)
        if abs(qgt_analytic(p).omega12) < 1e-4 or abs(bloch_vector(p).n[2]) > 0.999:
            continue
        assert np.linalg.eigvalsh(jacobian_weight(p).matrix).min() > 0


def test_pole_rejected():
    # d = (0, 0, -1) at k = 0, M = 1
    with pytest.raises(PoleSingularity):
        jacobian_weight(BlochPoint(0.0, 0.0, 1.0))


def test_weight_matrix_validation():
    with pytest.raises(NotPositiveDefinite):
        WeightMatrix(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotPositiveDefinite):
        WeightMatrix(np.array([[1.0, 0.5], [0.0, 1.0]]))
    assert weight_for("W2-jacobian", K0).label == "W2-jacobian"
    with pytest.raises(ValueError):
        weight_for("W3", K0)


def test_bounds_independent_of_state_phase():
    # bounds see only the projector; a global phase on the state leaves its density matrix unchanged
    s = band_state(K0)
    rotated = PureQubitState(np.exp(0.7j) * s.amplitudes)
    assert_allclose(rotated.density_matrix(), s.density_matrix(), atol=1e-15)
    assert_allclose(rotated.bloch_vector, s.bloch_vector, atol=1e-15)
