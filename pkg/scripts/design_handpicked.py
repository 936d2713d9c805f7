"""Regenerate src/selattn/data/handpicked_v1.json.

The 35 shaping trials (30 initial pool + 5 scheduled replacements) are drawn
from a fixed seeded corpus, one category quota at a time, so the set spans
the taxonomy. A separate unseen-passing trial backs the augmented variant.

    python3 scripts/design_handpicked.py [--check]
"""
import argparse
import json
import sys
from pathlib import Path

import numpy as np

from selattn import trials as T

SEED = 20240
CORPUS = 40_000
OUT = Path(__file__).resolve().parents[1] / "src" / "selattn" / "data" / "handpicked_v1.json"


def intents(L):
    st = L["trivial_stationary"]
    ov = L["overlap_or_cross"]
    op = L["object_permanence"]
    free = ~st & ~L["unseen_passing"]
    return {
        "stationary": st & ~L["unseen_passing"],
        "reactive": free & L["trivial_reactive"] & ~ov,
        "reactive_overlap": free & L["trivial_reactive"] & ov,
        "delayed": free & L["delayed_decision"] & ~op & ~ov,
        "delayed_overlap": free & L["delayed_decision"] & ~op & ov,
        "permanence_same": free & L["same_direction_solvable"] & ~ov,
        "permanence_reverse": free & L["reverse_required"],
        "permanence_overlap": free & L["same_direction_solvable"] & ov,
        "fig7": free & L["fig7_diagonal"],
        "delayed_permanence": free & L["delayed_decision"] & op,
    }


POOL_QUOTA = [("stationary", 3), ("reactive", 5), ("reactive_overlap", 3), ("delayed", 5),
              ("delayed_overlap", 3), ("permanence_same", 5), ("permanence_reverse", 3),
              ("permanence_overlap", 2), ("fig7", 1)]
REPLACEMENT_ORDER = ["permanence_reverse", "delayed_permanence", "permanence_same",
                     "permanence_overlap", "permanence_reverse"]


def build():
    cfg = T.TrialConfig()
    corpus = T.generate_corpus(CORPUS, SEED, cfg)
    L = T.classify_many(corpus.trials, cfg)
    masks = intents(L)
    used = set()

    def take(kind):
        for i in np.flatnonzero(masks[kind]):
            if int(i) not in used:
                used.add(int(i))
                return int(i)
        raise RuntimeError(f"no trial left for {kind}")

    picked = {kind: [take(kind) for _ in range(q)] for kind, q in POOL_QUOTA}
    pool = []
    while any(picked.values()):  # round-robin so every category appears early
        for kind, _ in POOL_QUOTA:
            if picked[kind]:
                pool.append((kind, picked[kind].pop(0)))
    repl = [(kind, take(kind)) for kind in REPLACEMENT_ORDER]
    up = int(np.flatnonzero(L["unseen_passing"])[0])

    def rec(tag, kind, i):
        row = corpus.trials[i]
        return {"id": tag, "intent": kind, "source_index": i,
                "obj1": [float(v) for v in row[:4]], "obj2": [float(v) for v in row[4:]]}

    return {
        "schema": "selattn.handpicked/1",
        "version": 1,
        "source": {"seed": SEED, "count": CORPUS, "generator_hash": cfg.digest()},
        "pool": [rec(f"hp{k:02d}", kind, i) for k, (kind, i) in enumerate(pool)],
        "replacements": [rec(f"hp{30 + k:02d}", kind, i) for k, (kind, i) in enumerate(repl)],
        "unseen_passing": rec("up00", "unseen_passing", up),
        "augmented_slot": 0,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true", help="fail if the shipped file differs")
    args = ap.parse_args()
    text = json.dumps(build(), indent=1) + "\n"
    if args.check:
        same = OUT.exists() and OUT.read_text() == text
        print("up to date" if same else "handpicked file is stale")
        return 0 if same else 1
    OUT.write_text(text)
    print(f"wrote {OUT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
