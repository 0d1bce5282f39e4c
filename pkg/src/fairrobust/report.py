"""Audit orchestration: repeated searches, ranking, and report files."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .data import Dataset, load_csv, load_schema, write_csv
from .graphs import Dag, edge_diff, enumerate_dags
from .hp_analysis import evolve, shapley_importance, top4_clauses, write_samples_csv
from .interventions import Intervention
from .learners import LearnerKind
from .ranking import scott_knott
from .scm import draw_models, fit_scm, sample, save_model
from .search import (PropertySpec, RobustnessVerdict, SearchOptions, SuccessRow,
                     UngeneratableDistribution, derive_seed, search)
from .discovery import discover
from .data import SplitSpec, split

log = logging.getLogger(__name__)

EXIT_ROBUST, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2


def dump_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n",
                          encoding="utf-8")


def json_safe(x):
    """NaN/inf are not valid JSON; report them as null."""
    if isinstance(x, float) and not np.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    return x


@dataclass(frozen=True)
class RunConfig:
    data_path: str
    schema_path: str
    out_dir: str
    discovery: str = "ges"
    intervention: str = "drop-sens"
    learner: str = "lr"
    claim: str = "bias_decreases"
    options: SearchOptions = SearchOptions()
    repeats: int = 30

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        for p in (self.data_path, self.schema_path):
            if not Path(p).is_file():
                raise FileNotFoundError(p)
        Intervention.parse(self.intervention)
        LearnerKind.parse(self.learner)

    def to_dict(self) -> dict:
        opts = asdict(self.options)
        opts["shift"] = None if self.options.shift is None else self.options.shift.epsilon
        return {"data": Path(self.data_path).name, "schema": Path(self.schema_path).name,
                "discovery": self.discovery, "intervention": self.intervention,
                "learner": LearnerKind.parse(self.learner).value, "claim": self.claim,
                "repeats": self.repeats, "options": opts}


def _write_witness(v: RobustnessVerdict, folder: Path, root: Path) -> dict:
    folder.mkdir(parents=True, exist_ok=True)
    w = v.witness
    files = {}
    for side, dag, scm, data in (("a", w.dag_a, w.scm_a, w.dataset_a), ("b", w.dag_b, w.scm_b, w.dataset_b)):
        csv_path = folder / f"dataset_{side}.csv"
        dot_path = folder / f"dag_{side}.dot"
        model_path = folder / f"scm_{side}.json"
        write_csv(data, csv_path)
        dot_path.write_text(dag.to_dot(), encoding="utf-8")
        save_model(model_path, scm)
        files[f"dataset_{side}"] = csv_path.relative_to(root).as_posix()
        files[f"dag_{side}"] = dot_path.relative_to(root).as_posix()
        files[f"scm_{side}"] = model_path.relative_to(root).as_posix()
    return files


def _summary_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"


def run_audit(cfg: RunConfig) -> tuple[int, dict]:
    """Run ``cfg.repeats`` seeded searches and write report.json, summary.txt and witnesses."""
    schema = load_schema(cfg.schema_path)
    data = load_csv(cfg.data_path, schema)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    learner = LearnerKind.parse(cfg.learner)
    repeats = []
    effects: dict[str, list[float]] = {}
    for r in range(cfg.repeats):
        seed = derive_seed(cfg.options.seed, r)
        opts = replace(cfg.options, seed=seed)
        prop = PropertySpec(Intervention.parse(cfg.intervention, seed=seed), learner, claim=cfg.claim)
        entry = {"index": r, "seed": seed, "witness_files": None, "error": None}
        try:
            v = search(data, prop, cfg.discovery, opts)
        except (UngeneratableDistribution, ValueError, RuntimeError) as e:
            log.warning("repeat %d failed: %s", r, e)
            entry.update(status="Error", error=f"{type(e).__name__}: {e}", verdict=None)
            repeats.append(entry)
            continue
        entry.update(status=v.status, verdict=v.to_dict())
        if v.witness is not None:
            entry["witness_files"] = _write_witness(v, out / "witnesses" / f"repeat_{r:02d}", out)
        for name, eff in v.dag_effects:
            effects.setdefault(name, []).append(eff)
        repeats.append(entry)
        log.info("repeat %d: %s", r, v.status)

    statuses = [e["status"] for e in repeats]
    if "Violation" in statuses:
        code, overall = EXIT_VIOLATION, "Violation"
    elif "Error" in statuses:
        code, overall = EXIT_ERROR, "Error"
    else:
        code, overall = EXIT_ROBUST, "RobustWithinBudget"
    ranked_groups = {k: v for k, v in effects.items() if len(v) >= 2}
    ranks = scott_knott(ranked_groups, 0.05, higher_is_better=False) if ranked_groups else {}
    report = {
        "config": cfg.to_dict(),
        "status": overall,
        "exit_code": code,
        "counts": {s: statuses.count(s) for s in ("Violation", "RobustWithinBudget", "Timeout", "Error")},
        "repeats": repeats,
        "scott_knott": {
            "variant": "classic",
            "alpha": 0.05,
            "metric": "mean EOD change (treated - base) per DAG; rank 1 = largest reduction",
            "ranks": ranks,
            "means": {k: float(np.mean(v)) for k, v in sorted(ranked_groups.items())},
        },
    }
    report = json_safe(report)
    dump_json(report, out / "report.json")

    rows = [["repeat", "status", "truth", "max_eod_diff", "evaluated", "dags"]]
    for e in repeats:
        v = e.get("verdict") or {}
        truth = v.get("prop_truth")
        rows.append([str(e["index"]), e["status"], "-" if not truth else f"{truth[0]}/{truth[1]}",
                     "-" if not v else f"{v['max_observed_eod_diff']:.4f}",
                     str(v.get("evaluated", "-")), str(v.get("n_dags", "-"))])
    text = f"overall: {overall}\n\n" + _summary_table(rows)
    if ranks:
        rrows = [["rank", "mean_effect", "dag"]] + [
            [str(ranks[k]), f"{report['scott_knott']['means'][k]:+.4f}", k]
            for k in sorted(ranks, key=lambda k: (ranks[k], k))]
        text += "\nScott-Knott ranks (classic)\n" + _summary_table(rrows)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    return code, report


def success_table(rows: list[SuccessRow], quality: dict) -> str:
    def f(x):
        return "nan" if x is None or not np.isfinite(x) else f"{x:.3f}"
    body = [["Algorithm", "#DAGs", "Avg", "Std", "Min", "Max", "Dist"]]
    for r in rows:
        body.append([r.algorithm, str(r.n_dags), f(r.avg), f(r.std), f(r.min), f(r.max), f(r.dist)])
    return (_summary_table(body)
            + f"\nvalidator: held-out accept {quality['held_out_accept']:.3f}, "
              f"uniform-probe accept {quality['probe_accept']:.3f}\n")


def _neighbor_pair(dags: list[Dag]) -> tuple[int, int]:
    if len(dags) == 1:
        return 0, 0
    best = max(((i, j) for i in range(len(dags)) for j in range(i + 1, len(dags))),
               key=lambda ij: (edge_diff(dags[ij[0]], dags[ij[1]]), -ij[0], -ij[1]))
    return best


def run_hp_audit(data: Dataset, out_dir, budget: int = 500, seed: int = 0, discovery: str = "ges",
                 learner: str = "lr") -> tuple[int, dict]:
    """Compare hyperparameter importance on two neighbor datasets of the input.

    The neighbors come from the two DAGs of the equivalence class with the
    largest edge difference (or two posterior draws of a single DAG).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    kind = LearnerKind.parse(learner)
    train_d, val, _ = split(data, SplitSpec(seed=seed))
    dags = enumerate_dags(discover(train_d, discovery))
    i, j = _neighbor_pair(dags)
    n = min(data.n, 20000)
    sides = {}
    for side, idx in (("a", i), ("b", j)):
        scm, post = fit_scm(dags[idx], train_d)
        if i == j and side == "b":
            scm = draw_models(scm, post, 1, derive_seed(seed, 31))[0]
        gen = sample(scm, n, derive_seed(seed, 29, ord(side)))
        parts = split(gen, SplitSpec(seed=seed))
        samples = evolve(parts, kind, budget, seed)
        write_samples_csv(samples, out / f"hp_samples_{side}.csv")
        imp = shapley_importance(samples, min_samples=min(50, budget))
        sides[side] = (dags[idx], samples, imp)
    membership, order = top4_clauses(sides["a"][2], sides["b"][2])
    violation = membership or order
    report = {
        "seed": seed, "budget": budget, "learner": kind.value, "discovery": discovery,
        "n_dags": len(dags), "edge_diff": edge_diff(dags[i], dags[j]),
        "neighbors": {
            side: {"dag": str(d), "best_eod": min(s.eod for s in smp),
                   "importance": imp.as_dict(), "ranking": list(imp.ranking),
                   "top4": list(imp.top(4)), "surrogate_r2": imp.r2, "flags": list(imp.flags)}
            for side, (d, smp, imp) in sides.items()},
        "top4_violation": violation,
        "clauses": {"membership": membership, "order": order},
    }
    dump_json(json_safe(report), out / "hp_report.json")
    return (EXIT_VIOLATION if violation else EXIT_ROBUST), report


__all__ = ["RunConfig", "run_audit", "run_hp_audit", "success_table", "dump_json", "json_safe",
           "EXIT_ROBUST", "EXIT_ERROR", "EXIT_VIOLATION"]
