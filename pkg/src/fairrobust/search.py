"""Local robustness search over the causal equivalence class of a dataset.

The input is explained by every DAG in its discovered equivalence class.  Each
DAG is fitted as an SCM, posterior draws of its weights generate neighbor
datasets, and a fairness property is evaluated on each.  A violation is a
pair of neighbors on which the property's truth value differs (flip mode) or
whose intervention effects on EOD differ by more than epsilon (diff mode).
"""
from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np

from .data import Dataset, SplitSpec, DegenerateSplitWarning, split
from .discovery import discover
from .fairness import NoPositivesInGroup, eod, eod_from_arrays
from .graphs import Dag, edge_diff, enumerate_dags
from .interventions import Intervention, fit_postproc, postproc_labels, select_features
from .learners import (HpConfig, LearnerKind, ParamConfig, PerfMetrics, TrainingError,
                       default_config, evaluate, perf_from_labels, perf_within, predict, train)
from .scm import (SamplingWarning, ScmModel, ShiftSpec, WeightPosterior, apply_label_shift,
                  baseline_weights, draw_models, fit_scm, sample)
from .validator import AcceptanceCriterion, build_criterion, mean_distance, uniform_probe

log = logging.getLogger(__name__)

CLAIMS = ("bias_decreases", "bias_not_increased")


class UngeneratableDistribution(RuntimeError):
    pass


def derive_seed(*parts: int) -> int:
    """Stable 63-bit seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(2, np.uint64)[0] >> 1)


@dataclass(frozen=True)
class PropertySpec:
    intervention: Intervention
    learner: LearnerKind = LearnerKind.LR
    base_hp: HpConfig | None = None
    claim: str = "bias_decreases"

    def __post_init__(self):
        object.__setattr__(self, "learner", LearnerKind(self.learner))
        if self.claim not in CLAIMS:
            raise ValueError(f"unknown claim {self.claim!r}")
        if self.base_hp is None:
            object.__setattr__(self, "base_hp", default_config(self.learner))

    def holds(self, eod_base: float, eod_treated: float) -> bool:
        if self.claim == "bias_decreases":
            return eod_base > eod_treated
        return eod_base >= eod_treated


@dataclass(frozen=True)
class PropertyEval:
    holds: bool
    eod_base: float
    eod_treated: float
    perf_base: PerfMetrics
    perf_treated: PerfMetrics
    perf_ok: bool
    treated_features: tuple[str, ...]

    @property
    def effect(self) -> float:
        return self.eod_treated - self.eod_base

    def to_dict(self) -> dict:
        return {"holds": self.holds, "eod_base": self.eod_base, "eod_treated": self.eod_treated,
                "perf_base": self.perf_base.to_dict(), "perf_treated": self.perf_treated.to_dict(),
                "perf_ok": self.perf_ok, "treated_features": list(self.treated_features)}


def eval_property(prop: PropertySpec, parts: tuple[Dataset, Dataset, Dataset], seed: int = 0,
                  perf_tolerance: float = 0.05) -> PropertyEval:
    """Train under the base and treated configurations on one split and compare test EOD."""
    train_d, val, test = parts
    features = train_d.schema.feature_names
    base_cfg = ParamConfig(prop.base_hp, features)
    m1 = train(prop.learner, base_cfg, train_d, seed)
    eod1 = eod(m1, test).eod
    perf1 = evaluate(m1, test)
    iv = prop.intervention
    if iv.is_selection:
        kept, _ = select_features(train_d, iv)
        m2 = train(prop.learner, ParamConfig(prop.base_hp, kept), train_d, seed)
        eod2 = eod(m2, test).eod
        perf2 = evaluate(m2, test)
    else:
        kept = features
        pp = fit_postproc(iv, m1, val)
        _, scores = predict(m1, test)
        labels = postproc_labels(pp, scores, test.sensitive)
        eod2 = eod_from_arrays(test.y, labels, test.sensitive).eod
        perf2 = perf_from_labels(test.y, labels)
    ok = perf_within(perf1, perf2, perf_tolerance)
    return PropertyEval(prop.holds(eod1, eod2), eod1, eod2, perf1, perf2, ok, tuple(kept))


@dataclass(frozen=True)
class SearchOptions:
    epsilon: float = 0.05
    n_posterior_models: int = 1000
    timeout: float = 600.0
    seed: int = 0
    shift: ShiftSpec | None = None
    perf_tolerance: float = 0.05
    mode: str = "flip"
    round_draws: int = 10
    n_clusters: int = 100
    max_rows: int = 20000
    min_accept: float = 0.1
    dag_cap: int = 256

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        if self.mode not in ("flip", "diff"):
            raise ValueError("mode must be 'flip' or 'diff'")
        if self.n_posterior_models < 1 or self.round_draws < 1:
            raise ValueError("draw counts must be positive")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass(frozen=True, eq=False)
class Candidate:
    """One generated neighbor dataset and the property evaluated on it."""

    dag_index: int
    draw_seed: int
    scm: ScmModel
    data: Dataset
    accept_rate: float
    result: PropertyEval


@dataclass(frozen=True, eq=False)
class NeighborPair:
    dag_a: Dag
    dag_b: Dag
    scm_a: ScmModel
    scm_b: ScmModel
    dataset_a: Dataset
    dataset_b: Dataset
    edge_diff: int
    eval_a: PropertyEval
    eval_b: PropertyEval
    kind: str                      # "dag" or "weights"

    @property
    def eod_diff(self) -> float:
        return abs(self.eval_a.effect - self.eval_b.effect)


@dataclass(frozen=True, eq=False)
class RobustnessVerdict:
    status: str                    # Violation, RobustWithinBudget, Timeout
    witness: NeighborPair | None
    prop_truth: tuple[bool, bool] | None
    max_observed_eod_diff: float
    iterations: int
    evaluated: int
    n_dags: int
    flags: tuple[str, ...] = ()
    input_truth: bool | None = None
    history: tuple[float, ...] = field(default=())
    dag_effects: tuple[tuple[str, float], ...] = ()   # round-1 mean EOD change per DAG

    def to_dict(self) -> dict:
        d = {"status": self.status, "dag_effects": dict(self.dag_effects), "max_observed_eod_diff": self.max_observed_eod_diff,
             "iterations": self.iterations, "evaluated": self.evaluated, "n_dags": self.n_dags,
             "flags": list(self.flags), "input_truth": self.input_truth,
             "prop_truth": list(self.prop_truth) if self.prop_truth else None,
             "history": list(self.history)}
        if self.witness is not None:
            w = self.witness
            d["witness"] = {"kind": w.kind, "edge_diff": w.edge_diff, "eod_diff": w.eod_diff,
                            "dag_a": str(w.dag_a), "dag_b": str(w.dag_b),
                            "eval_a": w.eval_a.to_dict(), "eval_b": w.eval_b.to_dict(),
                            "rows_a": w.dataset_a.n, "rows_b": w.dataset_b.n}
        return d


class _Searcher:
    def __init__(self, data: Dataset, prop: PropertySpec, opts: SearchOptions, deadline: float):
        self.prop = prop
        self.opts = opts
        self.deadline = deadline
        self.split_spec = SplitSpec(seed=opts.seed)
        self.n_rows = min(data.n, opts.max_rows)
        self.evaluated = 0

    def timed_out(self) -> bool:
        return time.monotonic() > self.deadline

    def evaluate(self, dag_index: int, model: ScmModel, draw_seed: int,
                 crit: AcceptanceCriterion) -> Candidate | None:
        self.evaluated += 1
        if self.opts.shift is not None:
            model = apply_label_shift(model, self.opts.shift)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SamplingWarning)
            raw = sample(model, self.n_rows, draw_seed)
        keep = crit.accepts(raw)
        rate = float(keep.mean())
        if rate < self.opts.min_accept:
            return None
        data = raw.mask(keep)
        if data.n < 10:
            return None
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateSplitWarning)
                parts = split(data, self.split_spec)
            res = eval_property(self.prop, parts, self.opts.seed, self.opts.perf_tolerance)
        except (NoPositivesInGroup, TrainingError, ValueError) as e:
            log.debug("candidate skipped: %s", e)
            return None
        return Candidate(dag_index, draw_seed, model, data, rate, res)

    def violates(self, a: Candidate, b: Candidate) -> bool:
        if not (a.result.perf_ok and b.result.perf_ok):
            return False
        if self.opts.mode == "flip":
            return a.result.holds != b.result.holds
        return abs(a.result.effect - b.result.effect) > self.opts.epsilon


def _pairs(pools: dict[int, list[Candidate]], weights_only: bool):
    keys = sorted(pools)
    if not keys:
        return
    if weights_only:
        for a, b in combinations(pools[keys[0]], 2):
            yield a, b
        return
    for i, j in combinations(keys, 2):
        for a in pools[i]:
            for b in pools[j]:
                yield a, b


def _center_at(post: WeightPosterior, model: ScmModel) -> WeightPosterior:
    mean = {name: np.array([nm.bias, *nm.weights]) for name, nm in model.nodes.items()}
    return WeightPosterior(mean, post.cov)


def _unshifted(model: ScmModel, base: ScmModel) -> ScmModel:
    label = base.schema.label
    nodes = dict(model.nodes)
    nodes[label] = replace(nodes[label], shift_eps=base.nodes[label].shift_eps)
    return ScmModel(model.dag, nodes, model.schema)


def search(data: Dataset, prop: PropertySpec, discovery: str = "ges",
           opts: SearchOptions = SearchOptions()) -> RobustnessVerdict:
    start = time.monotonic()
    s = _Searcher(data, prop, opts, start + opts.timeout)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSplitWarning)
        train_d, val, test = split(data, s.split_spec)
    input_truth = None
    try:
        input_truth = eval_property(prop, (train_d, val, test), opts.seed, opts.perf_tolerance).holds
    except (NoPositivesInGroup, TrainingError, ValueError) as e:
        log.info("property not evaluable on the input: %s", e)

    cpdag = discover(train_d, discovery)
    dags = enumerate_dags(cpdag, cap=opts.dag_cap)
    crit = build_criterion(train_d, val, k=opts.n_clusters, seed=opts.seed)
    fits = [fit_scm(dag, train_d) for dag in dags]
    weights_only = len(dags) == 1
    flags = ["WeightsOnlyNeighborhood"] if weights_only else []
    log.info("%d DAG(s) in the equivalence class", len(dags))

    budget = opts.n_posterior_models * len(dags)
    drawn = 0
    pools: dict[int, list[Candidate]] = {}
    timed_out = False
    # round 1: the fitted model plus posterior draws for every DAG
    for i, (scm, post) in enumerate(fits):
        models = [scm]
        if opts.round_draws > 1:
            models += draw_models(scm, post, opts.round_draws - 1, derive_seed(opts.seed, 1, i))
        for k, model in enumerate(models):
            if s.timed_out():
                timed_out = True
                break
            drawn += 1
            cand = s.evaluate(i, model, derive_seed(opts.seed, 1, i, k, 7), crit)
            if cand is not None:
                pools.setdefault(i, []).append(cand)
    if not pools and not timed_out:
        raise UngeneratableDistribution(
            f"no DAG produced samples with accept rate >= {opts.min_accept}")

    dag_effects = tuple((str(dags[i]), float(np.mean([c.result.effect for c in pool])))
                        for i, pool in sorted(pools.items()))
    best_pair: tuple[Candidate, Candidate] | None = None
    max_diff = 0.0
    history: list[float] = []
    rounds = 1
    while True:
        violation, strength = None, -1.0
        for a, b in _pairs(pools, weights_only):
            d = abs(a.result.effect - b.result.effect)
            if best_pair is None or d > max_diff:
                best_pair, max_diff = (a, b), d
            if s.violates(a, b):
                # flip mode keeps the most decisive flip; diff mode the largest gap
                st = (min(abs(a.result.effect), abs(b.result.effect))
                      if opts.mode == "flip" else d)
                if st > strength:
                    violation, strength = (a, b), st
        history.append(max_diff)
        if violation is not None:
            a, b = violation
            if not a.result.holds and b.result.holds:
                a, b = b, a
            kind = "weights" if a.dag_index == b.dag_index else "dag"
            pair = NeighborPair(dags[a.dag_index], dags[b.dag_index], a.scm, b.scm, a.data, b.data,
                                edge_diff(dags[a.dag_index], dags[b.dag_index]), a.result, b.result, kind)
            return RobustnessVerdict("Violation", pair, (a.result.holds, b.result.holds), max_diff,
                                     rounds, s.evaluated, len(dags), tuple(flags), input_truth,
                                     tuple(history), dag_effects)
        if timed_out or s.timed_out():
            return RobustnessVerdict("Timeout", None, None, max_diff, rounds, s.evaluated, len(dags),
                                     tuple(flags), input_truth, tuple(history), dag_effects)
        if drawn >= budget or best_pair is None:
            return RobustnessVerdict("RobustWithinBudget", None, None, max_diff, rounds, s.evaluated,
                                     len(dags), tuple(flags), input_truth, tuple(history), dag_effects)
        # later rounds: redraw around the pair with the largest observed difference
        rounds += 1
        new_pools: dict[int, list[Candidate]] = {}
        for side, cand in enumerate(best_pair):
            key = cand.dag_index if not weights_only else 0
            scm, post = fits[cand.dag_index]
            centre = _unshifted(cand.scm, scm)
            models = draw_models(centre, _center_at(post, centre), opts.round_draws,
                                 derive_seed(opts.seed, rounds, side))
            pool = new_pools.setdefault(key, [])
            if cand not in pool:
                pool.append(cand)
            for k, model in enumerate(models):
                if s.timed_out() or drawn >= budget:
                    break
                drawn += 1
                c = s.evaluate(cand.dag_index, model, derive_seed(opts.seed, rounds, side, k, 7), crit)
                if c is not None:
                    pool.append(c)
        pools = new_pools


def replay(pair: NeighborPair, prop: PropertySpec, opts: SearchOptions) -> tuple[bool, bool]:
    """Re-evaluate the property on a stored witness; the truth values must repeat."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSplitWarning)
        pa = split(pair.dataset_a, SplitSpec(seed=opts.seed))
        pb = split(pair.dataset_b, SplitSpec(seed=opts.seed))
    ra = eval_property(prop, pa, opts.seed, opts.perf_tolerance)
    rb = eval_property(prop, pb, opts.seed, opts.perf_tolerance)
    return ra.holds, rb.holds


# ---------------------------------------------------------------- success rates

@dataclass(frozen=True)
class SuccessRow:
    algorithm: str
    n_dags: int
    avg: float
    std: float
    min: float
    max: float
    dist: float

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "n_dags": self.n_dags, "avg": self.avg, "std": self.std,
                "min": self.min, "max": self.max, "dist": self.dist}


def _row(name: str, rates: list[float], dists: list[float]) -> SuccessRow:
    if not rates:
        return SuccessRow(name, 0, float("nan"), float("nan"), float("nan"), float("nan"), float("nan"))
    r = np.array(rates)
    return SuccessRow(name, len(rates), float(r.mean()), float(r.std()), float(r.min()),
                      float(r.max()), float(np.mean(dists)))


def rq1_report(data: Dataset, algorithms=("pc", "ges"), opts: SearchOptions = SearchOptions(),
               n_samples: int | None = None) -> tuple[list[SuccessRow], dict]:
    """Accept rate of generated samples per discovery algorithm and for the RND/EQ baselines.

    The baselines reuse every discovered DAG with random (RND) or shared (EQ)
    standard-normal edge weights.  Also returns the validator's accept rate on
    held-out rows and on a uniform probe.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateSplitWarning)
        train_d, val, test = split(data, SplitSpec(seed=opts.seed))
    crit = build_criterion(train_d, val, k=opts.n_clusters, seed=opts.seed)
    n = n_samples or min(data.n, opts.max_rows)
    rows = []
    all_fits: list[ScmModel] = []
    seen: set = set()

    def rate_of(model: ScmModel, seed: int) -> tuple[float, float]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SamplingWarning)
            gen = sample(model, n, seed)
        return float(crit.accepts(gen).mean()), mean_distance(crit, gen)

    for alg in algorithms:
        dags = enumerate_dags(discover(train_d, alg), cap=opts.dag_cap)
        rates, dists = [], []
        for i, dag in enumerate(dags):
            scm, _ = fit_scm(dag, train_d)
            r, dd = rate_of(scm, derive_seed(opts.seed, 11, i))
            rates.append(r)
            dists.append(dd)
            key = frozenset(dag.edges)
            if key not in seen:
                seen.add(key)
                all_fits.append(scm)
        rows.append(_row(alg.upper(), rates, dists))
    for mode in ("RND", "EQ"):
        rates, dists = [], []
        for i, scm in enumerate(all_fits):
            base = baseline_weights(scm, mode, derive_seed(opts.seed, 13, i))
            r, dd = rate_of(base, derive_seed(opts.seed, 11, i))
            rates.append(r)
            dists.append(dd)
        rows.append(_row(mode, rates, dists))
    probe = uniform_probe(train_d, max(test.n, 1000), derive_seed(opts.seed, 17))
    quality = {"held_out_accept": float(crit.accepts(test).mean()),
               "probe_accept": float(crit.accepts(probe).mean()),
               "threshold": crit.threshold}
    return rows, quality


__all__ = ["PropertySpec", "PropertyEval", "SearchOptions", "NeighborPair", "RobustnessVerdict",
           "UngeneratableDistribution", "Candidate", "CLAIMS", "eval_property", "search", "replay",
           "rq1_report", "SuccessRow", "derive_seed"]
