"""Batch evaluation over trial corpora, per-category reports and the frequency audit."""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from .genome import Genome, decode
from .trials import BASE_CATEGORIES, LABELS, TrialCorpus, base_category_many
from .world import MAX_SCORE, TrialResult, WorldConfig, _result, scores_from_offsets, simulate

REPORT_SCHEMA = "selattn.report/1"
AUDIT_SCHEMA = "selattn.audit/1"


@dataclass
class BatchResults:
    ids: list
    scores: np.ndarray
    offsets: np.ndarray  # (n, 2)
    steps: np.ndarray
    ok: np.ndarray
    catch_radius: float = 28.0

    def __len__(self) -> int:
        return self.scores.size

    def __getitem__(self, i: int) -> TrialResult:
        return _result(self.offsets[i], int(self.steps[i]), bool(self.ok[i]),
                       WorldConfig(catch_radius=self.catch_radius))

    @property
    def first(self) -> np.ndarray:
        return self.ok & (self.offsets[:, 0] <= self.catch_radius)

    @property
    def second(self) -> np.ndarray:
        return self.ok & (self.offsets[:, 1] <= self.catch_radius)

    @property
    def both(self) -> np.ndarray:
        return self.first & self.second


def batch_evaluate(genome: Genome, corpus: TrialCorpus, world: WorldConfig = WorldConfig(),
                   threads: int = 1, chunk: int = 2000) -> BatchResults:
    """One result per corpus trial, in corpus order."""
    if len(corpus) == 0:
        raise ValueError("corpus is empty")
    params = decode(genome)
    if int(np.sum(params.input_mask)) != world.sensor_count:
        raise ValueError(f"genome has {int(np.sum(params.input_mask))} sensors, world has {world.sensor_count} rays")
    bounds = [(a, min(a + chunk, len(corpus))) for a in range(0, len(corpus), chunk)]

    def run(ab):
        a, b = ab
        return simulate(params, corpus.trials[a:b], world)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, bounds))
    else:
        parts = [run(ab) for ab in bounds]
    offsets = np.concatenate([p[0] for p in parts])
    steps = np.concatenate([p[1] for p in parts])
    ok = np.concatenate([p[2] for p in parts])
    return BatchResults(list(corpus.ids), scores_from_offsets(offsets, ok), offsets, steps, ok, world.catch_radius)


def stationary_baseline(corpus, world: WorldConfig = WorldConfig()) -> float:
    """Mean score of an agent that never leaves the centre, from closed-form landings."""
    arr = corpus.trials if isinstance(corpus, TrialCorpus) else np.atleast_2d(np.asarray(corpus, dtype=float))
    if arr.shape[0] == 0:
        raise ValueError("corpus is empty")
    x1 = arr[:, 0] + arr[:, 2] * arr[:, 1] / arr[:, 3]
    x2 = arr[:, 4] + arr[:, 6] * arr[:, 5] / arr[:, 7]
    c = world.agent_start_x
    return float(np.mean(MAX_SCORE - np.abs(x1 - c) - np.abs(x2 - c)))


# ---------------------------------------------------------------------------
# category report


@dataclass(frozen=True)
class CategoryRow:
    name: str
    group: str  # "overall" | "base" | "label"
    count: int
    mean_score: float
    fitness_pct: float
    first_pct: float
    second_pct: float
    both_pct: float
    first_count: int
    second_count: int
    both_count: int


@dataclass
class CategoryReport:
    rows: List[CategoryRow]
    both_sd: float  # population SD of both-catch % over non-empty base categories
    sd_over: List[str]

    def row(self, name: str) -> CategoryRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(name)

    @property
    def overall(self) -> CategoryRow:
        return self.row("overall")


def _row(name, group, mask, res: BatchResults) -> CategoryRow:
    n = int(mask.sum())
    if n == 0:
        nan = math.nan
        return CategoryRow(name, group, 0, nan, nan, nan, nan, nan, 0, 0, 0)
    s = res.scores[mask]
    f, sc, b = int(res.first[mask].sum()), int(res.second[mask].sum()), int(res.both[mask].sum())
    mean = float(s.mean())
    return CategoryRow(name, group, n, mean, 100.0 * mean / MAX_SCORE,
                       100.0 * f / n, 100.0 * sc / n, 100.0 * b / n, f, sc, b)


def category_report(results: BatchResults, labels: Dict[str, np.ndarray],
                    label_ids: Optional[Sequence] = None) -> CategoryReport:
    n = len(results)
    if label_ids is not None and [str(i) for i in label_ids] != [str(i) for i in results.ids]:
        raise ValueError("labels and results are not aligned by trial id")
    for k in LABELS:
        if len(labels[k]) != n:
            raise ValueError(f"label column {k!r} has {len(labels[k])} entries, results have {n}")
    rows = [_row("overall", "overall", np.ones(n, dtype=bool), results)]
    base = base_category_many(labels)
    for name in BASE_CATEGORIES:
        rows.append(_row(name, "base", base == name, results))
    for name in LABELS:
        rows.append(_row(name, "label", np.asarray(labels[name], dtype=bool), results))
    used = [r for r in rows if r.group == "base" and r.count > 0]
    sd = float(np.std([r.both_pct for r in used])) if used else math.nan
    return CategoryReport(rows, sd, [r.name for r in used])


def format_report(report: CategoryReport) -> str:
    head = f"{'category':<28}{'trials':>9}{'fitness%':>10}{'first%':>9}{'second%':>9}{'both%':>8}"
    lines = [head, "-" * len(head)]
    group = None
    for r in report.rows:
        if group is not None and r.group != group:
            lines.append("")
        group = r.group
        if r.count == 0:
            lines.append(f"{r.name:<28}{0:>9}{'-':>10}{'-':>9}{'-':>9}{'-':>8}")
            continue
        lines.append(f"{r.name:<28}{r.count:>9}{r.fitness_pct:>10.2f}{r.first_pct:>9.2f}"
                     f"{r.second_pct:>9.2f}{r.both_pct:>8.2f}")
    lines.append("")
    lines.append(f"both-catch SD across {len(report.sd_over)} base categories: {report.both_sd:.2f}")
    return "\n".join(lines)


def _clean(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def report_records(report: CategoryReport, meta: Optional[dict] = None) -> List[dict]:
    recs = [{"kind": "header", "schema": REPORT_SCHEMA, **(meta or {})}]
    for r in report.rows:
        recs.append({"kind": "category", **{k: _clean(v) for k, v in asdict(r).items()}})
    recs.append({"kind": "summary", "both_sd": _clean(report.both_sd), "sd_over": report.sd_over,
                 "sd_definition": "population SD of both-catch % over non-empty exclusive base categories"})
    return recs


# ---------------------------------------------------------------------------
# frequency audit


@dataclass(frozen=True)
class Band:
    label: str
    target: float
    lo: float
    hi: float
    of: Optional[str] = None  # denominator label; None = all trials


AUDIT_BANDS = (
    Band("trivial_stationary", 5.2, 3.2, 7.2),
    Band("trivial_reactive", 31.0, 26.0, 36.0),
    Band("delayed_decision", 48.0, 43.0, 53.0),
    Band("object_permanence", 39.0, 33.0, 45.0),
    Band("overlap_or_cross", 58.6, 52.6, 64.6),
    Band("same_direction_solvable", 30.0, 25.0, 35.0),
    Band("same_direction_solvable", 78.0, 70.0, 86.0, of="object_permanence"),
    Band("reverse_required", 8.4, 5.4, 11.4),
    Band("unseen_passing", 0.099, 0.02, 0.5),
    Band("fig7_diagonal", 0.74, 0.2, 2.0),
)


@dataclass(frozen=True)
class AuditRow:
    name: str
    count: int
    denominator: int
    percent: float
    target: float
    lo: float
    hi: float
    passed: bool


@dataclass
class FrequencyAudit:
    rows: List[AuditRow]
    total: int

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def percent(self, label: str) -> float:
        return next(r.percent for r in self.rows if r.name == label)


def label_percentages(labels: Dict[str, np.ndarray]) -> Dict[str, float]:
    n = len(labels[LABELS[0]])
    return {k: 100.0 * float(np.sum(labels[k])) / n for k in LABELS}


def frequency_audit(labels: Dict[str, np.ndarray], bands: Sequence[Band] = AUDIT_BANDS) -> FrequencyAudit:
    n = len(labels[LABELS[0]])
    if n == 0:
        raise ValueError("no labels to audit")
    rows = []
    for b in bands:
        num = np.asarray(labels[b.label], dtype=bool)
        if b.of is None:
            den, name = n, b.label
        else:
            dmask = np.asarray(labels[b.of], dtype=bool)
            num = num & dmask
            den, name = int(dmask.sum()), f"{b.label}/{b.of}"
        c = int(num.sum())
        pct = 100.0 * c / den if den else math.nan
        rows.append(AuditRow(name, c, den, pct, b.target, b.lo, b.hi, bool(b.lo <= pct <= b.hi)))
    return FrequencyAudit(rows, n)


def format_audit(audit: FrequencyAudit) -> str:
    head = f"{'category':<44}{'count':>8}{'percent':>10}{'target':>9}{'band':>18}  result"
    lines = [head, "-" * len(head)]
    for r in audit.rows:
        band = f"[{r.lo:g}, {r.hi:g}]"
        lines.append(f"{r.name:<44}{r.count:>8}{r.percent:>10.3f}{r.target:>9g}{band:>18}  "
                     f"{'pass' if r.passed else 'FAIL'}")
    lines.append(f"{audit.total} trials; {'all bands pass' if audit.passed else 'audit FAILED'}")
    return "\n".join(lines)


def audit_records(audit: FrequencyAudit, meta: Optional[dict] = None) -> List[dict]:
    recs = [{"kind": "header", "schema": AUDIT_SCHEMA, "total": audit.total, **(meta or {})}]
    recs += [{"kind": "band", **{k: _clean(v) for k, v in asdict(r).items()}} for r in audit.rows]
    recs.append({"kind": "summary", "passed": audit.passed})
    return recs


def write_jsonl(path, records: List[dict]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
