"""Real-valued genome and its decoding into a bilaterally symmetric CTRNN.

Neuron layout: sensors ``0..8`` (left to right), interneurons next, then the
left and right motor neurons. Mirroring maps sensor ``k`` to ``8 - k``,
interneuron ``h`` to ``H - 1 - h`` and swaps the motors. One gene encodes each
mirror orbit of free parameters, so symmetry holds by construction.

Gene layout is sensors, interneurons, motors; within each group: gains,
biases, time constants, then outgoing weights in row-major orbit order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np

from .ctrnn import CtrnnParams

GENOME_SCHEMA = "selattn.genome/1"
MOTOR_GAIN = 5.0
TAU_FLOOR_NUDGE = 1e-9

DEFAULT_RANGES: Dict[str, Tuple[float, float]] = {
    "bias": (-5.0, 5.0),
    "weight": (-16.0, 16.0),
    "gain": (1.0, 10.0),
    "time_constant": (1.0, 30.0),
}


@dataclass(frozen=True)
class Architecture:
    n_interneurons: int = 4
    n_sensors: int = 9
    n_motors: int = 2

    def __post_init__(self):
        if self.n_interneurons < 0 or self.n_interneurons % 2:
            raise ValueError(f"interneuron count must be even and >= 0, got {self.n_interneurons}")
        if self.n_sensors < 1 or self.n_sensors % 2 == 0:
            raise ValueError("sensor count must be odd")
        if self.n_motors != 2:
            raise ValueError("exactly two motor neurons are supported")

    @property
    def n_neurons(self) -> int:
        return self.n_sensors + self.n_interneurons + self.n_motors

    @property
    def sensors(self) -> range:
        return range(self.n_sensors)

    @property
    def interneurons(self) -> range:
        return range(self.n_sensors, self.n_sensors + self.n_interneurons)

    @property
    def motors(self) -> range:
        return range(self.n_neurons - self.n_motors, self.n_neurons)

    def mirror(self) -> np.ndarray:
        m = np.empty(self.n_neurons, dtype=np.int64)
        s, h = self.n_sensors, self.n_interneurons
        for k in range(s):
            m[k] = s - 1 - k
        for k in range(h):
            m[s + k] = s + h - 1 - k
        left, right = self.n_neurons - 2, self.n_neurons - 1
        m[left], m[right] = right, left
        return m

    def to_dict(self) -> dict:
        return {"n_sensors": self.n_sensors, "n_interneurons": self.n_interneurons, "n_motors": self.n_motors}


@dataclass(frozen=True)
class GeneMap:
    """Where each gene lands in the decoded network."""

    n_genes: int
    gain_gene: np.ndarray  # per neuron; -1 = fixed motor gain
    bias_gene: np.ndarray
    tau_gene: np.ndarray
    weight_src: np.ndarray  # one entry per allowed connection
    weight_dst: np.ndarray
    weight_gene: np.ndarray
    labels: Tuple[str, ...]


@lru_cache(maxsize=None)
def gene_map(arch: Architecture) -> GeneMap:
    n = arch.n_neurons
    m = arch.mirror()
    sensors = list(arch.sensors)
    inter = list(arch.interneurons)
    motors = list(arch.motors)
    targets = inter + motors
    gain = np.full(n, -1, dtype=np.int64)
    bias = np.full(n, -1, dtype=np.int64)
    tau = np.full(n, -1, dtype=np.int64)
    wsrc: List[int] = []
    wdst: List[int] = []
    wgene: List[int] = []
    labels: List[str] = []

    def new_gene(label: str) -> int:
        labels.append(label)
        return len(labels) - 1

    def neuron_orbit_genes(group, kind, table):
        for j in group:
            if j <= m[j]:
                g = new_gene(f"{kind}[{j}]")
                table[j] = g
                table[m[j]] = g

    def weight_genes(sources):
        for j in sources:
            for i in targets:
                if (j, i) <= (int(m[j]), int(m[i])):
                    g = new_gene(f"weight[{j}->{i}]")
                    pair = [(j, i)]
                    if (int(m[j]), int(m[i])) != (j, i):
                        pair.append((int(m[j]), int(m[i])))
                    for a, b in pair:
                        wsrc.append(a)
                        wdst.append(b)
                        wgene.append(g)

    # all sensors share one gain, bias and time constant
    for table, kind in ((gain, "sensor_gain"), (bias, "sensor_bias"), (tau, "sensor_time_constant")):
        g = new_gene(kind)
        table[sensors] = g
    weight_genes(sensors)
    neuron_orbit_genes(inter, "gain", gain)
    neuron_orbit_genes(inter, "bias", bias)
    neuron_orbit_genes(inter, "time_constant", tau)
    weight_genes(inter)
    neuron_orbit_genes(motors, "bias", bias)
    neuron_orbit_genes(motors, "time_constant", tau)
    weight_genes(motors)
    return GeneMap(len(labels), gain, bias, tau, np.array(wsrc), np.array(wdst), np.array(wgene), tuple(labels))


def genome_length(arch: Architecture) -> int:
    return gene_map(arch).n_genes


@dataclass(eq=False)
class Genome:
    genes: np.ndarray
    architecture: Architecture = Architecture()
    provenance: Optional[dict] = field(default=None)

    def __post_init__(self):
        self.genes = np.asarray(self.genes, dtype=float)
        expected = genome_length(self.architecture)
        if self.genes.shape != (expected,):
            raise ValueError(f"genome has {self.genes.size} genes, architecture needs {expected}")
        if not np.all(np.isfinite(self.genes)):
            raise ValueError("genes must be finite")

    def __eq__(self, other):
        return (isinstance(other, Genome) and self.architecture == other.architecture
                and np.array_equal(self.genes, other.genes))


def _scale(x, lo_hi):
    lo, hi = lo_hi
    return lo + (hi - lo) * (x + 1.0) / 2.0


def decode(genome: Genome, ranges: Dict[str, Tuple[float, float]] = DEFAULT_RANGES) -> CtrnnParams:
    arch = genome.architecture
    gm = gene_map(arch)
    if genome.genes.size != gm.n_genes:
        raise ValueError(f"genome has {genome.genes.size} genes, architecture needs {gm.n_genes}")
    x = np.clip(genome.genes, -1.0, 1.0)
    n = arch.n_neurons
    gains = np.where(gm.gain_gene >= 0, _scale(x[gm.gain_gene], ranges["gain"]), MOTOR_GAIN)
    biases = _scale(x[gm.bias_gene], ranges["bias"])
    taus = _scale(x[gm.tau_gene], ranges["time_constant"])
    taus = np.where(taus <= 1.0, 1.0 + TAU_FLOOR_NUDGE, taus)
    weights = np.zeros((n, n))
    weights[gm.weight_src, gm.weight_dst] = _scale(x[gm.weight_gene], ranges["weight"])
    mask = np.zeros(n, dtype=bool)
    mask[list(arch.sensors)] = True
    return CtrnnParams(weights=weights, gains=gains, biases=biases, time_constants=taus,
                       input_mask=mask, mirror=arch.mirror())


def random_genome(arch: Architecture, rng: np.random.Generator) -> Genome:
    return Genome(rng.uniform(-1.0, 1.0, genome_length(arch)), arch)


def genome_to_dict(genome: Genome, ranges=DEFAULT_RANGES) -> dict:
    return {
        "schema": GENOME_SCHEMA,
        "architecture": genome.architecture.to_dict(),
        "ranges": {k: list(v) for k, v in ranges.items()},
        "motor_gain": MOTOR_GAIN,
        "layout": "sensors, interneurons, motors; gains, biases, time constants, weights per group",
        "genes": [float(g) for g in genome.genes],
        "provenance": genome.provenance,
    }


def genome_from_dict(d: dict) -> Genome:
    if d.get("schema") != GENOME_SCHEMA:
        raise ValueError(f"unsupported genome schema {d.get('schema')!r}")
    arch = Architecture(**d["architecture"])
    return Genome(np.array(d["genes"], dtype=float), arch, d.get("provenance"))


def save_genome(path, genome: Genome, ranges=DEFAULT_RANGES) -> None:
    with open(path, "w") as fh:
        json.dump(genome_to_dict(genome, ranges), fh, indent=1)
        fh.write("\n")


def load_genome(path) -> Genome:
    with open(path) as fh:
        return genome_from_dict(json.load(fh))
