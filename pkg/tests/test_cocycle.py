import math

import numpy as np
import pytest

from conftest import shear_oracle
from toruslyap.cocycle import (
    cluster_exponents,
    cocycle_product,
    ensemble_points,
    exterior_log_norms,
    exterior_top_exponent,
    orbit_frames,
    oseledec_frame,
    principal_angle,
    qr_spectrum,
    uniform_exponent,
)
from toruslyap.errors import DegenerateSplittingError, NumericError, ValidationError
from toruslyap.systems import (
    TorusSystem,
    catalog_names,
    eval_map,
    get_catalog,
    inverse_system,
    jacobian,
)

LOG_PHI2 = math.log((3 + math.sqrt(5)) / 2)
CAT = np.array([[2.0, 1.0], [1.0, 1.0]])


def _spectrum(name, steps=100_000, seed=0):
    sys = get_catalog(name)
    return qr_spectrum(sys, ensemble_points(sys.dim, 1, seed)[0], steps)


def _python_top_exponent(sys, x, n):
    """Norm growth of one tangent vector with analytic Jacobians in plain numpy."""
    A = np.array(sys.matrix, dtype=float)
    v = np.ones(sys.dim) / math.sqrt(sys.dim)
    total = 0.0
    for _ in range(n):
        y = np.mod(A @ x, 1.0)
        J = A.copy()
        for s in sys.shears:
            m = np.array(s.frequency, dtype=float)
            c = 2 * math.pi * s.amplitude * math.cos(2 * math.pi * m @ y + s.phase)
            S = np.eye(sys.dim)
            S[s.axis] += c * m
            J = S @ J
            y[s.axis] = (y[s.axis] + s.amplitude * math.sin(2 * math.pi * m @ y + s.phase)) % 1.0
        v = J @ v
        r = np.linalg.norm(v)
        total += math.log(r)
        v /= r
        x = y
    return total / n


def test_cocycle_at_zero_and_linear_power():
    sys = get_catalog("cat")
    np.testing.assert_array_equal(cocycle_product(sys, [0.2, 0.3], 0), np.eye(2))
    np.testing.assert_allclose(cocycle_product(sys, [0.2, 0.3], 5), np.linalg.matrix_power(CAT, 5))
    np.testing.assert_allclose(
        cocycle_product(sys, [0.2, 0.3], -3), np.linalg.matrix_power(np.linalg.inv(CAT), 3), atol=1e-12
    )


@pytest.mark.parametrize("name", ["perturbed-cat-0.1", "shear-pair", "cat-cat"])
def test_cocycle_equation(name):
    sys = get_catalog(name)
    rng = np.random.default_rng(5)
    for _ in range(20):
        x = rng.random(sys.dim)
        a, b = (int(v) for v in rng.integers(0, 8, size=2))
        xb = x.copy()
        for _ in range(b):
            xb = eval_map(sys, xb)
        lhs = cocycle_product(sys, x, a + b)
        rhs = cocycle_product(sys, xb, a) @ cocycle_product(sys, x, b)
        assert np.linalg.norm(lhs - rhs) <= 1e-10 * np.linalg.norm(lhs)


def test_cocycle_backward_inverts_forward():
    sys = get_catalog("perturbed-cat-0.1")
    x = np.array([0.3, 0.6])
    y = x.copy()
    for _ in range(4):
        y = eval_map(sys, y)
    np.testing.assert_allclose(cocycle_product(sys, y, -4) @ cocycle_product(sys, x, 4), np.eye(2), atol=1e-9)


def test_cocycle_overflow_reports_step():
    sys = TorusSystem([[3, 2], [1, 1]])
    with pytest.raises(NumericError) as info:
        cocycle_product(sys, [0.1, 0.1], 1000)
    assert info.value.step is not None and info.value.step > 0


def test_cat_spectrum_closed_form():
    spec = _spectrum("cat", 1_000_000)
    assert abs(spec.exponents[0] - LOG_PHI2) <= 1e-3
    assert abs(spec.exponents[1] + LOG_PHI2) <= 1e-3
    assert abs(spec.sum) <= 1e-6


def test_identity_spectrum_is_zero():
    spec = _spectrum("identity", 1000)
    np.testing.assert_array_equal(spec.exponents, [0.0, 0.0])


def test_spectrum_rejects_short_runs():
    with pytest.raises(ValidationError):
        qr_spectrum(get_catalog("cat"), [0.1, 0.2], 999)


@pytest.mark.parametrize("name", catalog_names())
def test_spectrum_invariants(name):
    spec = _spectrum(name, 20_000)
    assert np.all(np.diff(spec.exponents) <= 0)
    assert abs(spec.sum - spec.log_det_mean) <= 1e-8
    assert abs(spec.sum) <= 1e-6
    assert spec.sigma_plus == pytest.approx(float(np.sum(spec.exponents[spec.exponents > 0])))
    assert spec.history.shape[1] == spec.dim


def test_perturbed_cat_against_numpy_oracle():
    sys = get_catalog("perturbed-cat-0.05")
    oracle = _python_top_exponent(sys, np.array([0.37, 0.81]), 40_000)
    spec = qr_spectrum(sys, [0.37, 0.81], 400_000)
    assert 0.9 <= spec.exponents[0] <= 1.0
    assert abs(spec.exponents[0] - oracle) <= 1e-2
    assert abs(spec.sum) <= 1e-6


def test_python_oracle_is_itself_right_on_cat():
    assert abs(_python_top_exponent(get_catalog("cat"), np.array([0.1, 0.2]), 2000) - LOG_PHI2) <= 1e-3


def test_exterior_top_exponent_cat():
    sys = get_catalog("cat")
    assert abs(exterior_top_exponent(sys, 1, [0.1, 0.2], 100_000) - LOG_PHI2) <= 2e-3
    assert abs(exterior_top_exponent(sys, 2, [0.1, 0.2], 100_000)) <= 1e-6
    with pytest.raises(ValidationError):
        exterior_top_exponent(sys, 3, [0.1, 0.2], 10)


@pytest.mark.parametrize("name", catalog_names())
def test_exterior_matches_qr_partial_sums(name):
    sys = get_catalog(name)
    x = ensemble_points(sys.dim, 1, 3)[0]
    spec = qr_spectrum(sys, x, 200_000)
    for k in range(1, sys.dim + 1):
        ext = exterior_top_exponent(sys, k, x, 200_000, n_transient=1000)
        assert abs(ext - spec.top_sum(k)) <= 2e-3


def test_exterior_norm_matches_matrix_power():
    sys = get_catalog("cat")
    xs = np.random.default_rng(0).random((4, 2))
    for n in (1, 7, 30):
        expect = math.log(np.linalg.norm(np.linalg.matrix_power(CAT, n), 2))
        np.testing.assert_allclose(exterior_log_norms(sys, 1, xs, n), expect, rtol=1e-12)
    np.testing.assert_allclose(exterior_log_norms(sys, 0, xs, 30), 0.0)


@pytest.mark.parametrize("name", ["cat", "inverse-cat", "perturbed-cat-0.05", "perturbed-cat-0.1", "cat-cat"])
def test_inverse_duality(name):
    sys = get_catalog(name)
    x = ensemble_points(sys.dim, 1, 0)[0]
    fwd = qr_spectrum(sys, x, 200_000).exponents
    back = qr_spectrum(sys, x, 200_000, direction="backward").exponents
    conj = qr_spectrum(inverse_system(sys), x, 200_000).exponents
    np.testing.assert_allclose(back, -fwd[::-1], atol=2e-3)
    np.testing.assert_allclose(conj, -fwd[::-1], atol=2e-3)


def test_uniform_exponent_properties():
    cat = get_catalog("cat")
    ue = uniform_exponent(cat, 1, 16, 500, seed=4)
    single = exterior_top_exponent(cat, 1, ensemble_points(2, 1, 4)[0], 500)
    assert ue.value == pytest.approx(single, abs=1e-12)  # linear: x-independent
    assert uniform_exponent(get_catalog("identity"), 1, 4, 100).value == 0.0
    shear = uniform_exponent(get_catalog("shear"), 1, 4, 100_000)
    n = 100_000
    oracle = math.log(np.linalg.norm(np.array([[1.0, n], [0.0, 1.0]]), 2)) / n
    assert shear.value == pytest.approx(oracle, rel=1e-9)
    assert shear.value <= 1e-3
    pc = uniform_exponent(get_catalog("perturbed-cat-0.1"), 1, 32, 200, seed=1)
    assert pc.value >= np.max(pc.per_orbit) and pc.spread >= 0


def test_ensemble_points_are_deterministic_and_prefix_stable():
    a = ensemble_points(3, 10, 9)
    np.testing.assert_array_equal(a, ensemble_points(3, 10, 9))
    np.testing.assert_array_equal(a[:4], ensemble_points(3, 4, 9))


def test_clustering():
    assert cluster_exponents([0.9, -0.9]) == [(0, 1), (1, 2)]
    assert cluster_exponents([0.0, 0.0]) == [(0, 2)]
    assert cluster_exponents([1.0, 0.999, 0.0]) == [(0, 2), (2, 3)]
    with pytest.raises(DegenerateSplittingError) as info:
        cluster_exponents([0.5, 0.493])
    assert len(info.value.exponents) == 2


def test_cat_oseledec_blocks_are_eigenvectors():
    sys = get_catalog("cat")
    frame = oseledec_frame(sys, [0.21, 0.67])
    w, V = np.linalg.eigh(CAT)
    assert frame.block_dims == (1, 1)
    assert principal_angle(frame.block(0), V[:, [1]]) <= 1e-6
    assert principal_angle(frame.block(1), V[:, [0]]) <= 1e-6
    assert frame.condition < 1e8


def test_identity_single_block():
    frame = oseledec_frame(get_catalog("identity"), [0.4, 0.4])
    assert frame.block_dims == (2,)
    assert frame.block_exponents == (0.0,)


@pytest.mark.parametrize("name", ["perturbed-cat-0.05", "perturbed-cat-0.1", "cat-cat"])
def test_oseledec_equivariance(name):
    sys = get_catalog(name)
    x = ensemble_points(sys.dim, 1, 2)[0]
    spec = qr_spectrum(sys, x, 50_000)
    frame = oseledec_frame(sys, x, spectrum=spec)
    image = oseledec_frame(sys, eval_map(sys, x), spectrum=spec)
    J = jacobian(sys, x)
    for i in range(frame.n_blocks):
        assert principal_angle(J @ frame.block(i), image.block(i)) <= 1e-3


def test_block_growth_rates_match_exponents():
    sys = get_catalog("perturbed-cat-0.05")
    x = np.array([0.13, 0.52])
    frame = oseledec_frame(sys, x)
    frames = orbit_frames(sys, x, 0, 400, frame.block_dims, seed=0)
    for i, lam in enumerate(frame.block_exponents):
        total = 0.0
        for t in range(400):
            total += math.log(abs(np.linalg.det(frames.forward_transfer(t, i))))
        assert abs(total / 400 - lam) <= 0.05
