import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from fairrobust.data import Dataset, Schema
from fairrobust.fairness import eod_from_arrays
from fairrobust.interventions import (Intervention, PostProcError, PostProcModel, anova_f_scores,
                                      fit_calibrated_eq_odds, fit_threshold_optimizer, generalized_fnr,
                                      postproc_labels, select_features)
from fairrobust.learners import perf_from_labels

from _gen import realistic


def test_parse_and_str():
    iv = Intervention.parse("kbest:3")
    assert (iv.variant, iv.param, str(iv)) == ("kbest", 3.0, "kbest:3")
    assert Intervention.parse("Threshold_Optimizer").variant == "threshold-optimizer"
    assert not Intervention.parse("calibrated-eq-odds").is_selection
    for bad in ("kbest:0", "fpr:2", "percentile:0", "random-drop:5", "reweighing"):
        with pytest.raises(ValueError):
            Intervention.parse(bad)


def test_anova_matches_scipy():
    d = realistic(500)
    F, p = anova_f_scores(d)
    y = d.y.astype(bool)
    for j in range(d.X.shape[1]):
        ref = stats.f_oneway(d.X[y, j], d.X[~y, j])
        assert F[j] == pytest.approx(ref.statistic, rel=1e-9)
        assert p[j] == pytest.approx(ref.pvalue, rel=1e-6, abs=1e-300)


SIX = Schema((("s", "boolean"), ("a", "continuous"), ("c", "continuous"), ("z", "continuous")), "s", "y")


def six_rows():
    # a separates classes perfectly with zero within-class variance; c is constant; z is noisy
    return Dataset(SIX, np.array([
        [0, 1, 5, 0.1, 0], [1, 1, 5, 0.9, 0], [0, 1, 5, 0.4, 0],
        [1, 3, 5, 0.2, 1], [0, 3, 5, 0.8, 1], [1, 3, 5, 0.6, 1],
    ]))


def test_anova_hand_case():
    F, p = anova_f_scores(six_rows())
    # s: means 1/3 vs 2/3, between = 6 * (1/6)^2 = 1/6, within = 4/3 -> F = (1/6) / (1/3) = 0.5
    assert F[0] == pytest.approx(0.5)
    assert np.isinf(F[1]) and p[1] == 0.0
    assert F[2] == 0.0 and p[2] == 1.0


def test_selection_variants():
    d = six_rows()
    assert select_features(d, Intervention("drop-sens"))[0] == ("a", "c", "z")
    assert select_features(d, Intervention("kbest", 1))[0] == ("a",)
    assert select_features(d, Intervention("kbest"))[0] == ("s", "a")   # ceil(4 / 2) = 2
    assert select_features(d, Intervention("percentile", 10))[0] == ("a",)
    assert select_features(d, Intervention("fpr", 0.05))[0] == ("a",)
    with pytest.raises(ValueError):
        select_features(d, Intervention("threshold-optimizer"))


def test_fpr_falls_back_to_top_feature():
    d = six_rows()
    d2 = Dataset(SIX, np.column_stack([d.X[:, 0], d.X[:, 2], d.X[:, 2], d.X[:, 3], d.y]))
    keep, flags = select_features(d2, Intervention("fpr", 0.001))
    assert len(keep) == 1 and "empty_selection" in flags


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_random_drop_invariants(seed, m):
    d = realistic(50)
    keep, _ = select_features(d, Intervention("random-drop", m, seed))
    names = d.schema.feature_names
    assert 1 <= len(names) - len(keep) <= m
    assert set(keep) < set(names)
    assert keep == select_features(d, Intervention("random-drop", m, seed))[0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(["kbest", "percentile", "fpr"]),
       st.floats(0.01, 0.99))
def test_anova_selection_keeps_top_ranked(seed, variant, q):
    d = realistic(80, seed)
    param = {"kbest": 1 + int(q * 4), "percentile": 100 * q, "fpr": q}[variant]
    keep, _ = select_features(d, Intervention(variant, param))
    F, _ = anova_f_scores(d)
    names = list(d.schema.feature_names)
    kept = [names.index(k) for k in keep]
    dropped = [j for j in range(len(names)) if j not in kept]
    assert keep
    if variant != "fpr" and dropped:
        assert min(F[kept]) >= max(F[dropped])


def shifted_scores(n=4000, seed=0):
    rng = np.random.default_rng(seed)
    g = (rng.random(n) < 0.5).astype(int)
    p = rng.random(n)
    y = (rng.random(n) < p).astype(int)
    s = np.where(g == 1, p, np.clip(p - 0.25, 0, 1))
    return s, y, g


def test_threshold_optimizer_closes_gap():
    s, y, g = shifted_scores()
    raw = (s >= 0.5).astype(int)
    pp = fit_threshold_optimizer(s, y, g)
    out = postproc_labels(pp, s, g)
    assert eod_from_arrays(y, raw, g).eod > 0.2
    assert eod_from_arrays(y, out, g).eod <= 0.02
    assert perf_from_labels(y, out).accuracy >= perf_from_labels(y, raw).accuracy - 0.05
    assert pp.thresholds[1] - pp.thresholds[0] == pytest.approx(0.25, abs=0.05)
    assert not pp.flags


def test_threshold_optimizer_needs_both_classes():
    with pytest.raises(PostProcError):
        fit_threshold_optimizer([0.2, 0.7, 0.9], [1, 1, 0], [0, 0, 1])


def test_calibrated_eq_odds_hand_fixture():
    # group 0: positives score 0.8 (gFNR 0.2), base rate 0.5; group 1: positives 0.6 (gFNR 0.4)
    s = np.array([0.8, 0.8, 0.2, 0.2, 0.6, 0.6, 0.3, 0.3])
    y = np.array([1, 1, 0, 0, 1, 1, 0, 0])
    g = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    pp = fit_calibrated_eq_odds(s, y, g)
    assert pp.lambdas[0] == pytest.approx(2 / 3)
    assert pp.lambdas[1] == 0.0
    mixed = np.where(g == 0, pp.lambdas[0] * 0.5 + (1 - pp.lambdas[0]) * s, s)
    assert generalized_fnr(mixed, y, g, 0) == pytest.approx(generalized_fnr(mixed, y, g, 1), abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10_000))
def test_calibrated_eq_odds_equalizes_gfnr(seed):
    rng = np.random.default_rng(seed)
    n = 300
    g = (rng.random(n) < 0.5).astype(int)
    y = (rng.random(n) < 0.4).astype(int)
    y[:2], g[:2] = 1, [0, 1]
    y[2:4], g[2:4] = 0, [0, 1]
    s = np.clip(0.3 * y + 0.35 * rng.random(n) + 0.2 * g, 0, 1)
    pp = fit_calibrated_eq_odds(s, y, g)
    mixed = s.copy()
    for b in (0, 1):
        lam = pp.lambdas[b]
        mixed[g == b] = lam * pp.base_rates[b] + (1 - lam) * s[g == b]
    gap = abs(generalized_fnr(mixed, y, g, 0) - generalized_fnr(mixed, y, g, 1))
    if "lambda_clamped" not in pp.flags:
        assert gap <= 1e-6
    assert min(pp.lambdas.values()) == 0.0


def test_postproc_model_validation():
    with pytest.raises(ValueError):
        PostProcModel("threshold", thresholds={0: 1.5})
    pp = PostProcModel("threshold", thresholds={0: 0.5, 1: 0.5})
    with pytest.raises(PostProcError):
        postproc_labels(pp, [0.1], [2])
