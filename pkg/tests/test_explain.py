"""Attribution engines against each other and a permutation oracle."""
import numpy as np
import pytest

from msaf import (
    EmptyBackground,
    TooManyFeatures,
    exact_shapley,
    explain,
    global_ranking,
    kernel_shap,
    make_trainer,
    train_gbt,
    train_rf,
    train_svm_ovr,
    tree_shap,
)
from msaf.explain import _score_fn_for

from oracles import shapley_by_permutations


def _data(rng, n_per=12, d=5):
    centers = np.eye(3, d) * 3.0
    x = np.vstack([
        centers[c] + 0.5 * rng.standard_normal((n_per, d))
        for c in range(3)
    ])
    y = np.repeat(np.arange(3), n_per)
    return x, y


def test_exact_matches_permutation_oracle():
    rng = np.random.default_rng(0)
    x, y = _data(rng, d=5)
    model = train_rf(x, y, n_trees=10, max_depth=4, seed=1)
    fn = _score_fn_for(model)
    background = x[::9][:4]
    for row in (x[0], x[13], x[29]):
        phi, phi0 = exact_shapley(fn, row, background)
        phi_o, phi0_o = shapley_by_permutations(fn, row, background)
        assert np.max(np.abs(phi - phi_o)) < 1e-10
        assert np.max(np.abs(phi0 - phi0_o)) < 1e-12


def test_local_accuracy_all_methods():
    rng = np.random.default_rng(1)
    x, y = _data(rng, d=6)
    background = x[:8]
    models = [
        train_svm_ovr(x, y, c=5.0, gamma=0.2),
        train_rf(x, y, n_trees=12, seed=0),
        train_gbt(x, y, n_rounds=15, learning_rate=0.3,
                  valid_fraction=0.0, seed=0),
    ]
    for model in models:
        fn = _score_fn_for(model)
        scores = fn(x[:6])
        methods = ["exact", "kernel"]
        if hasattr(model, "trees"):
            methods.append("tree")
        for method in methods:
            expl = explain(model, x[:6], background, method=method, seed=2)
            recon = expl.phi0[None, :] + expl.phi.sum(axis=1)
            assert np.max(np.abs(recon - scores)) < 1e-6, method


def test_tree_equals_exact_on_forest():
    rng = np.random.default_rng(2)
    x, y = _data(rng, d=6)
    model = train_rf(x, y, n_trees=15, max_depth=5, seed=3)
    fn = _score_fn_for(model)
    background = x[: 10]
    for row in x[::7]:
        phi_t, phi0_t = tree_shap(model, row, background)
        phi_e, phi0_e = exact_shapley(fn, row, background)
        assert np.max(np.abs(phi_t - phi_e)) < 1e-9
        assert np.max(np.abs(phi0_t - phi0_e)) < 1e-9


def test_tree_equals_exact_on_gbt():
    rng = np.random.default_rng(3)
    x, y = _data(rng, d=5)
    model = train_gbt(x, y, n_rounds=12, learning_rate=0.3,
                      valid_fraction=0.0, seed=0)
    fn = _score_fn_for(model)
    background = x[:10]
    for row in x[::11]:
        phi_t, phi0_t = tree_shap(model, row, background)
        phi_e, phi0_e = exact_shapley(fn, row, background)
        assert np.max(np.abs(phi_t - phi_e)) < 1e-9


def test_kernel_full_enumeration_equals_exact():
    rng = np.random.default_rng(4)
    x, y = _data(rng, d=5)
    model = train_svm_ovr(x, y, c=2.0, gamma=0.3)
    fn = _score_fn_for(model)
    background = x[:6]
    # 2^5 - 2 = 30 proper coalitions; any budget >= that enumerates
    for row in x[::13]:
        phi_k, phi0_k, meta = kernel_shap(fn, row, background,
                                          n_samples=64, seed=0)
        phi_e, phi0_e = exact_shapley(fn, row, background)
        assert meta.get("enumerated", False)
        assert np.max(np.abs(phi_k - phi_e)) < 1e-6
        assert np.max(np.abs(phi0_k - phi0_e)) < 1e-9


def test_explain_auto_dispatch():
    rng = np.random.default_rng(5)
    x, y = _data(rng, d=4)
    bg = x[:5]
    rf = train_rf(x, y, n_trees=8, seed=0)
    svm = train_svm_ovr(x, y, c=1.0, gamma=0.3)
    assert explain(rf, x[:2], bg, method="auto").method == "tree"
    # non-tree models fall back to the sampling method
    assert explain(svm, x[:2], bg, method="auto").method == "kernel"


def test_explain_kernel_is_seed_deterministic():
    rng = np.random.default_rng(6)
    x, y = _data(rng, d=8)
    model = train_svm_ovr(x, y, c=1.0, gamma=0.2)
    a = explain(model, x[:3], x[:6], method="kernel", n_samples=128, seed=9)
    b = explain(model, x[:3], x[:6], method="kernel", n_samples=128, seed=9)
    assert np.array_equal(a.phi, b.phi)


def test_exact_refuses_high_dimension():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((8, 21))
    y = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    model = train_svm_ovr(x, y, c=1.0, gamma=0.1)
    with pytest.raises(TooManyFeatures):
        explain(model, x[:1], x, method="exact")


def test_empty_background_rejected():
    rng = np.random.default_rng(8)
    x, y = _data(rng, d=4)
    model = train_svm_ovr(x, y, c=1.0, gamma=0.3)
    with pytest.raises(EmptyBackground):
        explain(model, x[:2], x[:0], method="exact")


def test_global_ranking_orders_by_mean_abs():
    rng = np.random.default_rng(9)
    x, y = _data(rng, d=4)
    model = train_rf(x, y, n_trees=10, seed=0)
    expl = explain(model, x, x[:8], method="tree",
                   feature_names=("a", "b", "c", "d"))
    ranking = global_ranking(expl)
    scores = [s for _, s in ranking.entries]
    assert scores == sorted(scores, reverse=True)
    assert set(n for n, _ in ranking.entries) == {"a", "b", "c", "d"}
    by_hand = np.abs(expl.phi).mean(axis=(0, 2))
    assert max(scores) == pytest.approx(by_hand.max(), abs=1e-12)
