import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairrobust.data import SplitSpec, split
from fairrobust.fairness import (NoPositivesInGroup, bias_fn, eod, eod_from_arrays, group_tpr,
                                 tpr_from_arrays)
from fairrobust.learners import LearnerKind, LRConfig, ParamConfig, train

from _gen import planted_triangle

ROW_TYPES = list(itertools.product((0, 1), repeat=3))   # (y, yhat, group)


def counting_oracle(rows):
    """EOD by explicit confusion counting, or None when a group has no positives."""
    tp = {0: 0, 1: 0}
    pos = {0: 0, 1: 0}
    for y, yhat, g in rows:
        if y == 1:
            pos[g] += 1
            if yhat == 1:
                tp[g] += 1
    if pos[0] == 0 or pos[1] == 0:
        return None
    return abs(tp[1] / pos[1] - tp[0] / pos[0])


def check(rows):
    arr = np.array(rows, int).reshape(-1, 3)
    want = counting_oracle(rows)
    if want is None:
        with pytest.raises(NoPositivesInGroup):
            eod_from_arrays(arr[:, 0], arr[:, 1], arr[:, 2])
    else:
        assert eod_from_arrays(arr[:, 0], arr[:, 1], arr[:, 2]).eod == want


def test_all_ordered_datasets_up_to_four_rows():
    for n in range(1, 5):
        for rows in itertools.product(ROW_TYPES, repeat=n):
            check(rows)


def test_all_row_multisets_up_to_twelve_rows():
    # EOD is a function of the row-type counts; permutation invariance is checked separately
    for n in range(1, 13):
        for rows in itertools.combinations_with_replacement(ROW_TYPES, n):
            check(rows)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(ROW_TYPES), min_size=1, max_size=40), st.randoms())
def test_eod_permutation_invariant_and_bounded(rows, rnd):
    shuffled = list(rows)
    rnd.shuffle(shuffled)
    a = np.array(rows).reshape(-1, 3)
    b = np.array(shuffled).reshape(-1, 3)
    try:
        ea = eod_from_arrays(a[:, 0], a[:, 1], a[:, 2]).eod
    except NoPositivesInGroup:
        with pytest.raises(NoPositivesInGroup):
            eod_from_arrays(b[:, 0], b[:, 1], b[:, 2])
        return
    assert ea == eod_from_arrays(b[:, 0], b[:, 1], b[:, 2]).eod
    assert 0.0 <= ea <= 1.0


def test_group_denominator_variant():
    y = [1, 1, 0, 1, 0, 0]
    yhat = [1, 0, 0, 1, 1, 0]
    g = [1, 1, 1, 0, 0, 0]
    assert tpr_from_arrays(y, yhat, g, 1) == 0.5
    assert tpr_from_arrays(y, yhat, g, 1, "group") == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        tpr_from_arrays(y, yhat, g, 1, "other")


def test_model_level_eod_and_bias_fn():
    d = planted_triangle(3000)
    parts = split(d, SplitSpec(seed=0))
    cfg = ParamConfig(LRConfig(), d.schema.feature_names)
    m = train(LearnerKind.LR, cfg, parts[0])
    rates = eod(m, parts[2])
    assert rates.tpr_priv == group_tpr(m, parts[2], 1)
    res = bias_fn(parts, LearnerKind.LR, cfg)
    assert res.eod == rates.eod
    assert res.acceptable
    dropped = bias_fn(parts, LearnerKind.LR, ParamConfig(LRConfig(), ("m",)), reference=res.perf)
    assert dropped.acceptable == (res.perf.accuracy - dropped.perf.accuracy <= 0.05
                                  and res.perf.f1 - dropped.perf.f1 <= 0.05)
