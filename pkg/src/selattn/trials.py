"""Trial generation and the subproblem taxonomy.

A trial is two falling objects, each ``(x0, y0, vx, vy)``; the first is the
fast one and lands first. Generation is rejection sampling against the
catchability constraints. Classification is a property of the trial alone:
agent-dependent questions ("is the second object visible when the first is
caught?") are asked of an idealised agent that sits under the first object
from the moment it touches the body until it lands.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .world import WorldConfig, ray_circle_distance, ray_directions

CORPUS_SCHEMA = "selattn.trials/1"
LABELS_SCHEMA = "selattn.labels/1"

TrialId = Union[int, str]


class ObjectSpec(NamedTuple):
    x0: float
    y0: float
    vx: float
    vy: float


@dataclass(frozen=True)
class Trial:
    obj1: ObjectSpec
    obj2: ObjectSpec
    id: TrialId = 0

    def __post_init__(self):
        object.__setattr__(self, "obj1", ObjectSpec(*map(float, self.obj1)))
        object.__setattr__(self, "obj2", ObjectSpec(*map(float, self.obj2)))

    def as_array(self) -> np.ndarray:
        return np.array([*self.obj1, *self.obj2], dtype=float)

    @classmethod
    def from_array(cls, arr, id: TrialId = 0) -> "Trial":
        arr = [float(v) for v in arr]
        return cls(ObjectSpec(*arr[:4]), ObjectSpec(*arr[4:]), id)

    def mirrored(self, cfg: WorldConfig = WorldConfig()) -> "Trial":
        w = cfg.world_width
        a, b = self.obj1, self.obj2
        return Trial(ObjectSpec(w - a.x0, a.y0, -a.vx, a.vy), ObjectSpec(w - b.x0, b.y0, -b.vx, b.vy), self.id)


@dataclass(frozen=True)
class TrialConfig:
    # start heights differ per object; see README "Trial generator"
    y0_first: Tuple[float, float] = (90.0, 180.0)
    y0_second: Tuple[float, float] = (120.0, 200.0)
    vy_first: Tuple[float, float] = (3.0, 4.0)
    vy_second: Tuple[float, float] = (1.0, 2.0)
    vx: Tuple[float, float] = (-2.0, 2.0)
    alpha: float = 0.7
    max_attempts: int = 100_000
    # classifier
    fig7_tolerance: float = 2.0
    world: WorldConfig = field(default_factory=WorldConfig)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["world"] = asdict(self.world)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrialConfig":
        d = dict(d)
        world = WorldConfig(**d.pop("world", {}))
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(world=world, **kw)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# kinematics


def landing(trial: Trial, which: int) -> Tuple[float, float]:
    """``(x_land, t_land)`` of object 1 or 2."""
    if which not in (1, 2):
        raise ValueError("which must be 1 or 2")
    o = trial.obj1 if which == 1 else trial.obj2
    t = o.y0 / o.vy
    return o.x0 + o.vx * t, t


def passing_time(trial: Trial) -> Optional[float]:
    """Time the faster object overtakes the slower one in height, if before it lands."""
    a, b = trial.obj1, trial.obj2
    if a.y0 <= b.y0 or a.vy <= b.vy:
        return None
    tp = (a.y0 - b.y0) / (a.vy - b.vy)
    t1 = a.y0 / a.vy
    if 0.0 < tp < t1:
        return tp
    return None


def reachable(gap: float, dt_land: float, alpha: float = 0.7, max_speed: float = 5.0) -> bool:
    return abs(gap) <= max_speed * alpha * dt_land


# ---------------------------------------------------------------------------
# field of view


def in_fov(agent_x: float, center, cfg: WorldConfig = WorldConfig()) -> bool:
    """Whether the object circle at ``center`` crosses any sensor ray within range."""
    for d in ray_directions(cfg):
        if ray_circle_distance((agent_x, 0.0), d, cfg.sensor_range, center, cfg.object_radius) is not None:
            return True
    return False


def in_fov_many(agent_x, cx, cy, cfg: WorldConfig = WorldConfig()) -> np.ndarray:
    """Vectorised :func:`in_fov`."""
    dirs = ray_directions(cfg)
    fx = (np.asarray(cx, float) - np.asarray(agent_x, float))[..., None]
    fy = np.asarray(cy, float)[..., None]
    r = cfg.object_radius
    b = fx * dirs[:, 0] + fy * dirs[:, 1]
    c = fx * fx + fy * fy - r * r
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(disc)
    s1 = b - sq
    s = np.where(s1 >= 0.0, s1, b + sq)
    hit = (disc >= 0.0) & (s >= 0.0) & (s <= cfg.sensor_range)
    return hit.any(axis=-1)


# ---------------------------------------------------------------------------
# constraints and sampling


def _columns(arr: np.ndarray):
    arr = np.atleast_2d(arr)
    return arr.T


def validity_many(arr: np.ndarray, cfg: TrialConfig = TrialConfig()) -> Dict[str, np.ndarray]:
    """Each trial invariant as a boolean column."""
    w = cfg.world
    x01, y01, vx1, vy1, x02, y02, vx2, vy2 = _columns(arr)
    t1 = y01 / vy1
    t2 = y02 / vy2
    xl1 = x01 + vx1 * t1
    xl2 = x02 + vx2 * t2
    lo, hi = w.agent_bounds
    return {
        "in_view": in_fov_many(w.agent_start_x, x01, y01, w) & in_fov_many(w.agent_start_x, x02, y02, w),
        "first_lands_first": t1 < t2,
        "second_reachable": np.abs(xl2 - xl1) <= w.max_speed * cfg.alpha * (t2 - t1),
        "first_reachable": np.abs(xl1 - w.agent_start_x) <= w.max_speed * t1,
        "inside_world": (xl1 >= lo) & (xl1 <= hi) & (xl2 >= lo) & (xl2 <= hi),
        "velocity_ranges": ((vy1 >= cfg.vy_first[0]) & (vy1 <= cfg.vy_first[1])
                            & (vy2 >= cfg.vy_second[0]) & (vy2 <= cfg.vy_second[1])
                            & (vx1 >= cfg.vx[0]) & (vx1 <= cfg.vx[1])
                            & (vx2 >= cfg.vx[0]) & (vx2 <= cfg.vx[1])),
        "above_agent": (y01 > 0) & (y02 > 0),
    }


def valid_many(arr: np.ndarray, cfg: TrialConfig = TrialConfig()) -> np.ndarray:
    checks = validity_many(arr, cfg)
    ok = np.ones(np.atleast_2d(arr).shape[0], dtype=bool)
    for v in checks.values():
        ok &= v
    return ok


def violations(trial: Trial, cfg: TrialConfig = TrialConfig()) -> List[str]:
    return [k for k, v in validity_many(trial.as_array(), cfg).items() if not v[0]]


def is_catchable(trial: Trial, cfg: TrialConfig = TrialConfig()) -> bool:
    """Both objects catchable by an agent starting at the centre at speed limits."""
    checks = validity_many(trial.as_array(), cfg)
    return bool(checks["first_lands_first"][0] and checks["second_reachable"][0]
                and checks["first_reachable"][0] and checks["inside_world"][0])


_BLOCK = 16


def draw_candidates(rng: np.random.Generator, cfg: TrialConfig, n: int) -> np.ndarray:
    w = cfg.world
    t = math.tan(w.visual_angle / 2)
    # widest start offset whose circle can still touch the outermost ray
    pad = w.object_radius / math.cos(w.visual_angle / 2)
    cols = []
    for yr, vyr in ((cfg.y0_first, cfg.vy_first), (cfg.y0_second, cfg.vy_second)):
        y0 = rng.uniform(yr[0], yr[1], n)
        x0 = w.agent_start_x + rng.uniform(-1.0, 1.0, n) * (y0 * t + pad)
        vx = rng.uniform(cfg.vx[0], cfg.vx[1], n)
        vy = rng.uniform(vyr[0], vyr[1], n)
        cols += [x0, y0, vx, vy]
    return np.stack(cols, axis=1)


def sample_trial(rng: np.random.Generator, cfg: TrialConfig = TrialConfig(), id: TrialId = 0) -> Trial:
    """Rejection-sample one valid trial."""
    attempts = 0
    while attempts < cfg.max_attempts:
        block = draw_candidates(rng, cfg, _BLOCK)
        ok = valid_many(block, cfg)
        idx = np.flatnonzero(ok)
        if idx.size:
            return Trial.from_array(block[idx[0]], id)
        attempts += _BLOCK
    raise RuntimeError(f"no valid trial after {cfg.max_attempts} attempts; check generator geometry")


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


@dataclass(eq=False)
class TrialCorpus:
    trials: np.ndarray  # (n, 8)
    ids: List[TrialId]
    header: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.trials.shape[0]

    def __getitem__(self, i: int) -> Trial:
        return Trial.from_array(self.trials[i], self.ids[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def index_of(self, trial_id: TrialId) -> int:
        for i, t in enumerate(self.ids):
            if t == trial_id or str(t) == str(trial_id):
                return i
        raise KeyError(f"no trial with id {trial_id!r}")

    @classmethod
    def from_trials(cls, trials: Sequence[Trial], header: Optional[dict] = None) -> "TrialCorpus":
        return cls(np.array([t.as_array() for t in trials]).reshape(-1, 8), [t.id for t in trials], header or {})


def generate_corpus(count: int, seed: int, cfg: TrialConfig = TrialConfig()) -> TrialCorpus:
    """Trial ``i`` depends only on ``(seed, i)``."""
    if count < 0:
        raise ValueError("count must be non-negative")
    arr = np.empty((count, 8))
    for i in range(count):
        arr[i] = sample_trial(trial_rng(seed, i), cfg).as_array()
    header = {"schema": CORPUS_SCHEMA, "kind": "header", "count": count, "seed": seed,
              "generator": cfg.to_dict(), "config_hash": cfg.digest()}
    return TrialCorpus(arr, list(range(count)), header)


# ---------------------------------------------------------------------------
# taxonomy

LABELS = (
    "trivial_stationary",
    "trivial_reactive",
    "delayed_decision",
    "unseen_passing",
    "object_permanence",
    "overlap_or_cross",
    "same_direction_solvable",
    "reverse_required",
    "fig7_diagonal",
)


@dataclass(frozen=True)
class CategoryLabels:
    trivial_stationary: bool
    trivial_reactive: bool
    delayed_decision: bool
    unseen_passing: bool
    object_permanence: bool
    overlap_or_cross: bool
    same_direction_solvable: bool
    reverse_required: bool
    fig7_diagonal: bool

    def names(self) -> List[str]:
        return [f.name for f in fields(self) if getattr(self, f.name)]


def classify_many(arr: np.ndarray, cfg: TrialConfig = TrialConfig()) -> Dict[str, np.ndarray]:
    """Label columns for a trial array of shape (n, 8)."""
    w = cfg.world
    cx = w.agent_start_x
    x01, y01, vx1, vy1, x02, y02, vx2, vy2 = _columns(arr)
    t1 = y01 / vy1
    t2 = y02 / vy2
    xl1 = x01 + vx1 * t1
    xl2 = x02 + vx2 * t2
    reach = w.catch_radius

    stationary = (np.abs(xl1 - cx) <= reach) & (np.abs(xl2 - cx) <= reach)
    delayed = np.abs(x01 - cx) > np.abs(x02 - cx)

    # first catch: the first object touches the agent body directly below it
    tc = np.maximum(t1 - reach / vy1, 0.0)
    agent_c = x01 + vx1 * tc
    seen = in_fov_many(agent_c, x02 + vx2 * tc, y02 - vy2 * tc, w)
    permanence = ~seen
    reactive = ~delayed & seen

    with np.errstate(divide="ignore", invalid="ignore"):
        tp = (y01 - y02) / (vy1 - vy2)
    passes = (y01 > y02) & (vy1 > vy2) & (tp > 0) & (tp < t1)
    tp = np.where(passes, tp, 0.0)
    yp = y01 - vy1 * tp
    sep = np.abs((x01 + vx1 * tp) - (x02 + vx2 * tp))
    span = 2.0 * yp * math.tan(w.visual_angle / 2) + w.object_diameter
    unseen = delayed & passes & (sep > span)

    dx0 = x01 - x02
    dx1 = (x01 + vx1 * t1) - (x02 + vx2 * t1)
    overlap = (np.abs(dx0) <= w.object_diameter) | (np.sign(dx0) != np.sign(dx1))

    # the hidden object ends up on the side it is drifting toward
    same = permanence & (np.sign(xl2 - agent_c) == np.sign(vx2))
    reverse = permanence & ~same

    fig7 = (np.abs(x01 - cx) <= cfg.fig7_tolerance) & (vx1 * vx2 > 0) & ~overlap

    return {
        "trivial_stationary": stationary,
        "trivial_reactive": reactive,
        "delayed_decision": delayed,
        "unseen_passing": unseen,
        "object_permanence": permanence,
        "overlap_or_cross": overlap,
        "same_direction_solvable": same,
        "reverse_required": reverse,
        "fig7_diagonal": fig7,
    }


def classify(trial: Trial, cfg: TrialConfig = TrialConfig()) -> CategoryLabels:
    cols = classify_many(trial.as_array(), cfg)
    return CategoryLabels(**{k: bool(v[0]) for k, v in cols.items()})


BASE_CATEGORIES = (
    "stationary",
    "direct",
    "direct+overlap",
    "direct+permanence",
    "direct+permanence+overlap",
    "delayed",
    "delayed+overlap",
    "delayed+permanence",
    "delayed+permanence+overlap",
)


def base_category_many(labels: Dict[str, np.ndarray]) -> np.ndarray:
    """Exclusive partition: stationary, else delayed/direct x permanence x overlap."""
    n = len(labels["delayed_decision"])
    out = np.empty(n, dtype=object)
    for i in range(n):
        if labels["trivial_stationary"][i]:
            out[i] = "stationary"
            continue
        parts = ["delayed" if labels["delayed_decision"][i] else "direct"]
        if labels["object_permanence"][i]:
            parts.append("permanence")
        if labels["overlap_or_cross"][i]:
            parts.append("overlap")
        out[i] = "+".join(parts)
    return out


# ---------------------------------------------------------------------------
# files


def write_corpus(path, corpus: TrialCorpus) -> None:
    header = dict(corpus.header) or {"schema": CORPUS_SCHEMA, "kind": "header"}
    header.setdefault("schema", CORPUS_SCHEMA)
    header.setdefault("kind", "header")
    header["count"] = len(corpus)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(len(corpus)):
            row = corpus.trials[i]
            rec = {"id": corpus.ids[i], "obj1": [float(v) for v in row[:4]], "obj2": [float(v) for v in row[4:]]}
            fh.write(json.dumps(rec) + "\n")


def read_corpus(path) -> TrialCorpus:
    with open(path) as fh:
        first = fh.readline()
        if not first.strip():
            raise ValueError(f"{path}: empty corpus file")
        header = json.loads(first)
        if header.get("schema") != CORPUS_SCHEMA:
            raise ValueError(f"{path}: not a trial corpus (schema {header.get('schema')!r})")
        ids, rows = [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                rows.append([*rec["obj1"], *rec["obj2"]])
                ids.append(rec["id"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed trial record") from exc
    if not rows:
        raise ValueError(f"{path}: corpus has no trials")
    arr = np.array(rows, dtype=float)
    if arr.shape[1] != 8:
        raise ValueError(f"{path}: trials must have 8 parameters")
    return TrialCorpus(arr, ids, header)


def write_labels(path, corpus: TrialCorpus, labels: Dict[str, np.ndarray], cfg: TrialConfig) -> None:
    header = {"schema": LABELS_SCHEMA, "kind": "header", "count": len(corpus), "classifier": cfg.to_dict(),
              "config_hash": cfg.digest(), "corpus": {k: corpus.header.get(k) for k in ("seed", "config_hash")}}
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for i in range(len(corpus)):
            names = [k for k in LABELS if labels[k][i]]
            fh.write(json.dumps({"id": corpus.ids[i], "labels": names}) + "\n")


def read_labels(path) -> Tuple[List[TrialId], Dict[str, np.ndarray], dict]:
    with open(path) as fh:
        header = json.loads(fh.readline() or "{}")
        if header.get("schema") != LABELS_SCHEMA:
            raise ValueError(f"{path}: not a label file")
        ids, sets = [], []
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                ids.append(rec["id"])
                sets.append(set(rec["labels"]))
    labels = {k: np.array([k in s for s in sets], dtype=bool) for k in LABELS}
    return ids, labels, header
