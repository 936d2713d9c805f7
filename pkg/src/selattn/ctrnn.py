"""Continuous-time recurrent neural network with forward-Euler integration.

State equation, per neuron ``i``::

    tau_i * dy_i/dt = -y_i + sum_j w[j, i] * sigma(g_j * (y_j + theta_j)) + I_i

``weights[j, i]`` is the connection from neuron ``j`` to neuron ``i``. All
neurons are updated synchronously from the pre-step outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# exp(500) is finite in float64; keeps logistic free of overflow warnings
_EXP_CLIP = 500.0


def logistic(x):
    """Standard logistic 1 / (1 + exp(-x)); works on scalars and arrays."""
    x = np.clip(x, -_EXP_CLIP, _EXP_CLIP)
    out = 1.0 / (1.0 + np.exp(-x))
    if np.ndim(out) == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class CtrnnParams:
    weights: np.ndarray
    gains: np.ndarray
    biases: np.ndarray
    time_constants: np.ndarray
    input_mask: np.ndarray
    # mirror[i] is the bilateral partner of neuron i (identity when unset)
    mirror: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        n = len(self.gains)
        for name in ("biases", "time_constants", "input_mask"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if self.weights.shape != (n, n):
            raise ValueError(f"weights shape {self.weights.shape} != ({n}, {n})")
        if not np.all(self.gains > 0):
            raise ValueError("gains must be strictly positive")
        if not np.all(self.time_constants > 1):
            raise ValueError("time constants must be greater than 1")
        mask = np.asarray(self.input_mask, dtype=bool)
        if np.any(self.weights[:, mask] != 0):
            raise ValueError("sensory neurons may not receive network connections")
        if self.mirror is not None and sorted(self.mirror) != list(range(n)):
            raise ValueError("mirror must be a permutation")

    @property
    def n_neurons(self) -> int:
        return len(self.gains)

    def mirror_perm(self) -> np.ndarray:
        if self.mirror is None:
            return np.arange(self.n_neurons)
        return np.asarray(self.mirror, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class CtrnnState:
    y: np.ndarray
    t: float = 0.0


def reset(params: CtrnnParams) -> CtrnnState:
    return CtrnnState(y=np.zeros(params.n_neurons), t=0.0)


def outputs(params: CtrnnParams, state: CtrnnState) -> np.ndarray:
    return logistic(params.gains * (state.y + params.biases))


def output(params: CtrnnParams, state: CtrnnState, i: int) -> float:
    if not 0 <= i < params.n_neurons:
        raise IndexError(f"neuron index {i} out of range for {params.n_neurons} neurons")
    return logistic(params.gains[i] * (state.y[i] + params.biases[i]))


def step(params: CtrnnParams, state: CtrnnState, external_inputs, dt: float) -> CtrnnState:
    """Advance one forward-Euler step and return the new state."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    inputs = np.asarray(external_inputs, dtype=float)
    if inputs.shape != (params.n_neurons,):
        raise ValueError(f"expected {params.n_neurons} inputs, got shape {inputs.shape}")
    if not np.all(np.isfinite(inputs)) or not np.all(np.isfinite(state.y)):
        raise ValueError("non-finite input or state")
    if np.any(inputs[~np.asarray(params.input_mask, dtype=bool)] != 0):
        raise ValueError("external input is only allowed on sensory neurons")
    net = outputs(params, state) @ params.weights
    y = state.y + (dt / params.time_constants) * (-state.y + net + inputs)
    return CtrnnState(y=y, t=state.t + dt)


def pair_order(mirror: np.ndarray):
    """Summation order pairing each neuron with its mirror partner.

    Returns ``(a, b)`` index arrays; ``b[k] == -1`` marks a self-mirrored
    neuron. Summing ``term[a] + term[b]`` pairwise in this order makes the
    network input exactly mirror-equivariant in floating point, because each
    pair sum is commutative.
    """
    mirror = np.asarray(mirror, dtype=np.int64)
    a, b = [], []
    for j in range(len(mirror)):
        m = int(mirror[j])
        if m == j:
            a.append(j)
            b.append(-1)
        elif j < m:
            a.append(j)
            b.append(m)
    return np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)
