import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import digamma

from lgmi import (
    DimensionMismatch,
    EstimatorName,
    KTooLarge,
    LgdeOptions,
    MiTask,
    RelationshipSpec,
    SampleSet,
    estimate_entropy_kl,
    estimate_entropy_lgde,
    estimate_mi_kl,
    estimate_mi_ksg,
    estimate_mi_lgde,
    generate,
)
from lgmi.core import DegenerateData
from lgmi.estimators import log_unit_ball_volume, standardize
from oracles import gaussian_entropy, linear_family_mi

H_NORMAL = 0.5 * math.log(2 * math.pi * math.e)
MI_RHO9 = -0.5 * math.log(1 - 0.81)


def task_for(family, theta, n=2500, seed=0):
    return MiTask(generate(RelationshipSpec(family, theta, n, seed)), (0,), (1,))


# --- entropy -------------------------------------------------------------


def test_lgde_entropy_uniform():
    u = np.random.default_rng(31).random((5000, 1))
    assert abs(estimate_entropy_lgde(SampleSet(u)).value) <= 0.08


def test_lgde_entropy_normal():
    g = np.random.default_rng(32).normal(size=(5000, 1))
    rep = estimate_entropy_lgde(SampleSet(g))
    assert abs(rep.value - H_NORMAL) <= 0.08
    assert rep.estimator_name is EstimatorName.LGDE_ENTROPY
    assert rep.n_samples == 5000 and rep.dims == 1 and rep.k == 5
    assert rep.n_converged + rep.n_fallback == 5000


def test_lgde_entropy_correlated_normal():
    cov = np.array([[1.0, 0.5], [0.5, 1.0]])
    g = np.random.default_rng(33).multivariate_normal([0, 0], cov, size=5000)
    assert abs(estimate_entropy_lgde(SampleSet(g)).value - gaussian_entropy(cov)) <= 0.12


def test_scale_correction():
    g = np.random.default_rng(34).normal(size=(5000, 2))
    g[:, 1] += 0.4 * g[:, 0]
    h0 = estimate_entropy_lgde(SampleSet(g)).value
    g10 = g.copy()
    g10[:, 0] *= 10
    h1 = estimate_entropy_lgde(SampleSet(g10)).value
    assert abs(h1 - h0 - math.log(10)) <= 0.02


def test_standardize():
    data = np.column_stack([np.arange(5.0), 3 * np.arange(5.0) + 1])
    z, sd = standardize(SampleSet(data))
    assert_allclose(z.data.mean(0), 0, atol=1e-15)
    assert_allclose(z.data.std(0), 1)
    assert_allclose(sd, [np.std(np.arange(5.0)), 3 * np.std(np.arange(5.0))])
    with pytest.raises(DegenerateData):
        standardize(SampleSet(np.column_stack([np.arange(5.0), np.ones(5)])))


def test_kl_entropy_normal():
    g = np.random.default_rng(35).normal(size=(5000, 1))
    rep = estimate_entropy_kl(SampleSet(g), 5)
    assert abs(rep.value - H_NORMAL) <= 0.08
    assert rep.estimator_name is EstimatorName.KL_ENTROPY


def test_kl_entropy_uniform():
    u = np.random.default_rng(36).random((5000, 1))
    assert abs(estimate_entropy_kl(SampleSet(u), 5).value) <= 0.08


def test_kl_entropy_k_equals_n():
    s = SampleSet(np.random.default_rng(0).normal(size=(20, 1)))
    with pytest.raises(KTooLarge):
        estimate_entropy_kl(s, 20)


def test_kl_entropy_formula_by_hand():
    # 1-D, k = 1: every point's nearest neighbor is 1 away
    s = SampleSet(np.arange(6.0)[:, None])
    expect = digamma(6) - digamma(1) + math.log(2.0)
    assert_allclose(estimate_entropy_kl(s, 1).value, expect, rtol=1e-14)


def test_unit_ball_volume():
    assert_allclose(math.exp(log_unit_ball_volume(1)), 2.0)
    assert_allclose(math.exp(log_unit_ball_volume(2)), math.pi)
    assert_allclose(math.exp(log_unit_ball_volume(3)), 4 / 3 * math.pi)


# --- mutual information -----------------------------------------------------


def test_lgde_mi_gaussian():
    rep = estimate_mi_lgde(task_for("bivariate-gaussian", 0.9))
    assert abs(rep.value - MI_RHO9) <= 0.1
    assert rep.estimator_name is EstimatorName.LGDE_MI
    assert rep.dims == (1, 1)
    d = rep.details
    assert_allclose(rep.value, d["h_x"] + d["h_y"] - d["h_xy"])


def test_lgde_mi_linear_unit_noise():
    assert abs(estimate_mi_lgde(task_for("linear", 1.0)).value - linear_family_mi(1.0)) <= 0.1


@pytest.mark.xfail(strict=True, reason="the density dip at the square's edges biases H(x, y) "
                   "up more than H(x) + H(y); the estimate sits near -0.055")
def test_lgde_mi_independent_uniform():
    assert abs(estimate_mi_lgde(task_for("independent-uniform", 0.0)).value) <= 0.05


def test_lgde_mi_independent_blocks():
    vals = []
    for seed in range(5):
        g = np.random.default_rng(seed).normal(size=(2500, 2))
        vals.append(estimate_mi_lgde(MiTask.from_arrays(g[:, 0], g[:, 1])).value)
    assert abs(np.median(vals)) <= 0.05


def test_lgde_mi_symmetric():
    t = task_for("quadratic", 0.1, n=600, seed=3)
    assert estimate_mi_lgde(t).value == estimate_mi_lgde(t.swapped()).value


def test_lgde_mi_shuffle_invariant():
    t = task_for("bivariate-gaussian", 0.5, n=600, seed=4)
    perm = np.random.default_rng(0).permutation(600)
    shuffled = MiTask(SampleSet(t.joint.data[perm]), (0,), (1,))
    assert_allclose(estimate_mi_lgde(shuffled).value, estimate_mi_lgde(t).value, rtol=0, atol=1e-9)


def test_lgde_mi_truncated_option():
    rep = estimate_mi_lgde(task_for("bivariate-gaussian", 0.9, n=800), LgdeOptions(truncation_k=200))
    assert np.isfinite(rep.value)


def test_lgde_mi_too_few_samples():
    with pytest.raises(KTooLarge):
        estimate_mi_lgde(task_for("linear", 0.5, n=5))


def test_ksg_independent():
    assert abs(estimate_mi_ksg(task_for("independent-uniform", 0.0), 5).value) <= 0.05


def test_ksg_gaussian():
    rep = estimate_mi_ksg(task_for("bivariate-gaussian", 0.9), 5)
    assert abs(rep.value - MI_RHO9) <= 0.1
    assert rep.estimator_name is EstimatorName.KSG


def test_ksg_underestimates_strong_dependence():
    truth = linear_family_mi(1e-3)
    assert truth - estimate_mi_ksg(task_for("linear", 1e-3), 5).value > 1.0


def test_ksg_symmetric_and_k_check():
    t = task_for("sqrt", 0.2, n=500)
    assert estimate_mi_ksg(t, 4).value == estimate_mi_ksg(t.swapped(), 4).value
    with pytest.raises(KTooLarge):
        estimate_mi_ksg(t, 500)


def test_ksg_by_hand():
    # four points on a diagonal, k = 1: every joint radius is 1 and no
    # marginal point lies strictly inside it
    x = np.arange(4.0)
    rep = estimate_mi_ksg(MiTask.from_arrays(x, x), 1)
    assert_allclose(rep.value, digamma(1) + digamma(4) - 2 * digamma(1), rtol=1e-14)


def test_kl_decomposed_mi():
    rep = estimate_mi_kl(task_for("bivariate-gaussian", 0.9), 5)
    assert abs(rep.value - MI_RHO9) <= 0.15
    assert rep.details == {"decomposed": True}


# --- task ------------------------------------------------------------------


def test_mitask_validation():
    s = SampleSet(np.zeros((4, 3)) + np.arange(3))
    MiTask(s, (0, 2), (1,))
    for xc, yc in [((0,), (1,)), ((0, 1), (1, 2)), ((), (0, 1, 2)), ((0, 3), (1, 2)), ((0, 0), (1, 2))]:
        with pytest.raises(DimensionMismatch):
            MiTask(s, xc, yc)
    with pytest.raises(DimensionMismatch):
        MiTask.from_arrays(np.zeros(3), np.zeros(4))


def test_mitask_views():
    data = np.arange(12.0).reshape(4, 3)
    t = MiTask(SampleSet(data), (2,), (0, 1))
    assert_allclose(t.x.data, data[:, [2]])
    assert_allclose(t.y.data, data[:, [0, 1]])
    assert_allclose(t.xy.data, data)
    assert t.swapped().x_cols == (0, 1)
