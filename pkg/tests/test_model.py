import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdestab.exceptions import RejectedInputError
from sdestab.model import (
    AffineSdeModel,
    DomainSampler,
    FixedSampler,
    SdeModel,
    check_linear_growth,
    check_lipschitz,
    evaluate,
    langevin,
    violated,
)


def test_evaluate_langevin(ou):
    f, g = evaluate(ou, [2.0], 0.0)
    assert f.tolist() == [-2.0]
    assert g.tolist() == [[1.0]]


def test_evaluate_affine_rotation_and_origin():
    model = AffineSdeModel(A=[[0, 1], [-1, 0]], b=[[0, 0]])
    f, g = evaluate(model, [1.0, 0.0])
    assert f.tolist() == [0.0, -1.0]
    f0, g0 = evaluate(model, [0.0, 0.0])
    assert not f0.any() and not g0.any()
    assert g.shape == (2, 1)


def test_evaluate_rejects_bad_dimension(ou):
    with pytest.raises(RejectedInputError):
        evaluate(ou, [1.0, 2.0])
    with pytest.raises(RejectedInputError):
        evaluate(ou, [1.0], -1.0)


def test_evaluate_is_deterministic(ou):
    a = evaluate(ou, [0.3], 1.5)
    b = evaluate(ou, [0.3], 1.5)
    assert a[0].tobytes() == b[0].tobytes() and a[1].tobytes() == b[1].tobytes()


def test_langevin_affine_parameters():
    m = langevin(-0.7, 2.0)
    assert (m.d, m.m) == (1, 1)
    assert m.A.tolist() == [[-0.7]] and m.b.tolist() == [[2.0]] and not m.B.any()
    assert m.diagonal_noise


def test_batch_matches_pointwise():
    rng = np.random.default_rng(1)
    B = rng.normal(size=(2, 3, 3))
    model = AffineSdeModel(A=rng.normal(size=(3, 3)), a=rng.normal(size=3), B=B, b=rng.normal(size=(2, 3)))
    X = rng.normal(size=(5, 3))
    for x, fb, gb in zip(X, model.drift_batch(X, 0.0), model.diffusion_batch(X, 0.0)):
        f, g = evaluate(model, x)
        np.testing.assert_allclose(fb, f, rtol=1e-14)
        np.testing.assert_allclose(gb, g, rtol=1e-14)
        np.testing.assert_allclose(g[:, 1], B[1] @ x + model.b[1], rtol=1e-14)


def test_violation_tolerance_shields_roundoff():
    assert not violated(1.0 + 1e-13, 1.0)
    assert violated(1.0 + 1e-9, 1.0)
    assert not violated(-7.0, -7.0)
    assert violated(float("nan"), 1.0)


def test_sampler_respects_annulus_and_is_reproducible():
    s = DomainSampler(d=3, r_min=1.5, r_max=10.0, t_min=1.0, t_max=2.0, seed=4)
    X, t = s.points(400)
    r = np.linalg.norm(X, axis=1)
    assert r.min() >= 1.5 - 1e-12 and r.max() <= 10.0 + 1e-12
    assert t.min() >= 1.0 and t.max() <= 2.0
    X2, t2 = s.points(400)
    assert X.tobytes() == X2.tobytes() and t.tobytes() == t2.tobytes()


def test_sampler_scalar_covers_both_signs():
    X, _ = DomainSampler(d=1, r_min=1.0, r_max=2.0).points(200)
    assert (X > 0).any() and (X < 0).any()


def test_linear_growth_langevin_passes(ou):
    rep = check_linear_growth(ou, 1.0, DomainSampler(1, 0.0, 50.0), 500)
    assert rep.passed and rep.samples == 500 and rep.condition == "linear-growth"


def test_linear_growth_square_drift_violation(square_drift):
    rep = check_linear_growth(square_drift, 1.0, FixedSampler.from_points([[10.0]]), 1)
    assert not rep.passed
    (v,) = rep.violations
    assert v["part"] == "f" and v["lhs"] == 100.0 and v["rhs"] == 11.0


def test_zero_model_passes_everything(zero_model):
    s = DomainSampler(2, 0.0, 5.0)
    assert check_linear_growth(zero_model, 1e-3, s, 100).passed
    assert check_lipschitz(zero_model, 1e-3, s, 100).passed


def test_lipschitz_langevin_and_square(ou, square_drift):
    assert check_lipschitz(ou, 1.0, DomainSampler(1, 0.0, 20.0), 300).passed
    rep = check_lipschitz(square_drift, 1.0, FixedSampler.from_points([[3.0]], ys=[[0.0]]), 1)
    (v,) = rep.violations
    assert (v["lhs"], v["rhs"]) == (9.0, 3.0)


def test_lipschitz_constant_diffusion_part_passes():
    model = SdeModel(1, 1, drift=lambda x, t: 5 * x, diffusion=lambda x, t: [[0.3]])
    rep = check_lipschitz(model, 1e-6, DomainSampler(1, 0.0, 3.0), 50)
    assert rep.violations and all(v["part"] == "f" for v in rep.violations)


def test_rejects_nonpositive_constant(ou):
    with pytest.raises(RejectedInputError):
        check_linear_growth(ou, 0.0, DomainSampler(1, 0, 1), 10)


affine_models = st.builds(
    lambda seed, d, m: _random_affine(seed, d, m),
    st.integers(0, 10_000), st.integers(1, 3), st.integers(1, 3),
)


def _random_affine(seed, d, m):
    rng = np.random.default_rng(seed)
    return AffineSdeModel(A=rng.normal(size=(d, d)), a=rng.normal(size=d),
                          B=rng.normal(size=(m, d, d)), b=rng.normal(size=(m, d)))


@settings(max_examples=40, deadline=None)
@given(affine_models, st.floats(1e-6, 1.0))
def test_affine_lipschitz_with_operator_norm_constant(model, slack):
    s = DomainSampler(model.d, 0.0, 10.0, seed=3)
    assert check_lipschitz(model, model.lipschitz_constant() + slack, s, 60).passed


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(0.0, 5.0))
def test_regularity_monotone_in_constant(C, extra):
    model = SdeModel(1, 1, drift=lambda x, t: x**2, diffusion=lambda x, t: [[np.sin(x[0])]])
    s = DomainSampler(1, 0.0, 4.0, seed=2)
    for check in (check_linear_growth, check_lipschitz):
        if check(model, C, s, 80).passed:
            assert check(model, C + extra, s, 80).passed
        assert len(check(model, C + extra, s, 80).violations) <= len(check(model, C, s, 80).violations)
