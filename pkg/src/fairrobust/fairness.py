"""Equal opportunity difference and the data-to-bias function used by the audits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .learners import (LearnerKind, ParamConfig, PerfMetrics, TrainedModel, default_config,
                       evaluate, perf_within, predict, train)

PERF_TOLERANCE = 0.05


class NoPositivesInGroup(ValueError):
    pass


@dataclass(frozen=True)
class GroupRates:
    tpr_priv: float
    tpr_unpriv: float

    @property
    def eod(self) -> float:
        return abs(self.tpr_priv - self.tpr_unpriv)


def tpr_from_arrays(y, yhat, groups, b: int, denominator: str = "positives") -> float:
    """TPR of group ``b``.

    ``denominator="positives"`` divides by the group's actual positives (the
    usual definition); ``"group"`` divides by the whole group's size.
    """
    y = np.asarray(y).astype(bool)
    yhat = np.asarray(yhat).astype(bool)
    in_group = np.asarray(groups) == b
    if denominator == "positives":
        den = int(np.sum(in_group & y))
    elif denominator == "group":
        den = int(np.sum(in_group))
    else:
        raise ValueError(f"unknown denominator {denominator!r}")
    if den == 0 or not np.any(in_group & y):
        raise NoPositivesInGroup(f"group {b} has no positive rows")
    return int(np.sum(in_group & y & yhat)) / den


def eod_from_arrays(y, yhat, groups, denominator: str = "positives") -> GroupRates:
    return GroupRates(tpr_from_arrays(y, yhat, groups, 1, denominator),
                      tpr_from_arrays(y, yhat, groups, 0, denominator))


def group_tpr(m: TrainedModel, test: Dataset, b: int, denominator: str = "positives") -> float:
    labels, _ = predict(m, test)
    return tpr_from_arrays(test.y, labels, test.sensitive, b, denominator)


def eod(m: TrainedModel, test: Dataset, denominator: str = "positives") -> GroupRates:
    labels, _ = predict(m, test)
    return eod_from_arrays(test.y, labels, test.sensitive, denominator)


@dataclass(frozen=True)
class BiasResult:
    eod: float
    perf: PerfMetrics
    acceptable: bool       # accuracy and F1 within tolerance of the full-feature default model
    rates: GroupRates


def bias_fn(parts: tuple[Dataset, Dataset, Dataset], kind: LearnerKind, cfg: ParamConfig,
            seed: int = 0, reference: PerfMetrics | None = None) -> BiasResult:
    """Train on the train part under ``cfg`` and measure EOD and performance on the test part.

    ``reference`` is the performance of the full-feature default model; it is
    computed here when not supplied.
    """
    train_d, _, test = parts
    m = train(kind, cfg, train_d, seed)
    rates = eod(m, test)
    perf = evaluate(m, test)
    if reference is None:
        ref_cfg = ParamConfig(default_config(kind), train_d.schema.feature_names)
        reference = perf if ref_cfg == cfg else evaluate(train(kind, ref_cfg, train_d, seed), test)
    return BiasResult(rates.eod, perf, perf_within(reference, perf, PERF_TOLERANCE), rates)


__all__ = ["GroupRates", "NoPositivesInGroup", "BiasResult", "PERF_TOLERANCE", "tpr_from_arrays",
           "eod_from_arrays", "group_tpr", "eod", "bias_fn"]
