"""Monte Carlo measurement trajectories through a chain of instruments.

Random numbers come from Philox4x64-10, a counter-based generator. A
trajectory uses the key ``(seed, trajectory_index)`` (two 64-bit words).
Output block ``b = 0, 1, ...`` is the block function at counter
``(b + 1, 0, 0, 0)``, and the uniform for step ``k`` is word ``k % 4`` of
block ``k // 4``, mapped to ``[0, 1)`` as ``(word >> 11) * 2**-53``. The
outcome at a step is the first index whose cumulative probability exceeds
``u * total``. Any implementation of Philox4x64-10 therefore reproduces
the same outcomes.
"""

from __future__ import annotations

import hashlib
import math
import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, StructureError, VanishingDistributionError
from .instruments import (Instrument, instrument_distribution, outcome_images,
                          sequential_instruments)
from .linalg import DEFAULT_TOL
from .observables import _as_state_matrix
from .outcomes import OutcomeSpace

_MASK64 = (1 << 64) - 1


_local = threading.local()


def _philox(seed: int, trajectory: int) -> np.random.Philox:
    # one generator per thread, re-keyed in place; constructing a fresh
    # Philox per trajectory dominates the sampling cost otherwise
    bg = getattr(_local, "philox", None)
    if bg is None:
        bg = _local.philox = np.random.Philox(0)
    bg.state = {
        "bit_generator": "Philox",
        "state": {"counter": np.zeros(4, dtype=np.uint64),
                  "key": np.array([int(seed) & _MASK64, int(trajectory) & _MASK64], dtype=np.uint64)},
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }
    return bg


def uniforms(seed: int, trajectory: int, n: int) -> np.ndarray:
    """First ``n`` uniforms of the stream for ``(seed, trajectory)``."""
    raw = _philox(seed, trajectory).random_raw(n)
    return (raw >> np.uint64(11)).astype(np.float64) * 2.0 ** -53


@dataclass
class TrajectorySample:
    seed: int
    trajectory: int
    outcomes: list[tuple] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    distributions: list[dict] = field(default_factory=list)

    @property
    def joint_outcome(self) -> tuple:
        return sum(self.outcomes, ())


def unrolled_chain(chain: Sequence[Instrument], steps: int | None = None) -> list[Instrument]:
    """The instrument used at each step; a short chain repeats cyclically."""
    chain = list(chain)
    if not chain:
        raise StructureError("need at least one instrument")
    steps = len(chain) if steps is None else int(steps)
    if steps < 1:
        raise ValueError("steps must be positive")
    seq = [chain[k % len(chain)] for k in range(steps)]
    for k in range(steps - 1):
        if seq[k].out_dim != seq[k + 1].in_dim:
            raise DimensionError(f"step {k} outputs dimension {seq[k].out_dim} but step {k + 1} "
                                 f"expects {seq[k + 1].in_dim}")
    return seq


def _step(inst: Instrument, rhos: np.ndarray, us: np.ndarray, tol: float, k: int):
    """Advance a batch of states ``(n, d, d)`` through one instrument.

    Outcome ``x`` is drawn as the first index whose cumulative (negative-
    clipped) probability exceeds ``u * total``, so zero-probability outcomes
    are never drawn. Returns the outcome indices, the outcome probabilities
    table ``(n, m)`` and the normalized post-measurement states.
    """
    images = outcome_images(inst, rhos)
    probs = np.real(np.trace(images, axis1=2, axis2=3))
    cum = np.cumsum(np.where(probs > 0.0, probs, 0.0), axis=1)
    total = cum[:, -1]
    if np.any(total < tol):
        raise VanishingDistributionError(f"step {k}: total outcome probability underflowed")
    idx = np.argmax((us * total)[:, None] < cum, axis=1)
    rows = np.arange(len(idx))
    chosen = probs[rows, idx]
    return idx, probs, images[rows, idx] / chosen[:, None, None]


def sample_trajectory(chain: Sequence[Instrument], rho0, seed: int, steps: int | None = None,
                      trajectory: int = 0, tol: float = DEFAULT_TOL) -> TrajectorySample:
    """Sample one measurement record and the normalized post-measurement states.

    At each step the outcome ``x`` is drawn with probability ``tr[I_x(rho)]``
    and the state becomes ``I_x(rho) / tr[I_x(rho)]``.
    """
    seq = unrolled_chain(chain, steps)
    rho = _as_state_matrix(rho0)
    if rho.shape != (seq[0].in_dim, seq[0].in_dim):
        raise DimensionError(f"initial state is {rho.shape}, chain input is {seq[0].in_dim}-dimensional")
    us = uniforms(seed, trajectory, len(seq))
    out = TrajectorySample(seed=int(seed), trajectory=int(trajectory))
    rhos = rho[None]
    for k, inst in enumerate(seq):
        idx, probs, rhos = _step(inst, rhos, us[k:k + 1], tol, k)
        labels = inst.outcomes
        out.outcomes.append(labels[idx[0]])
        out.states.append(rhos[0])
        out.weights.append(float(probs[0, idx[0]]))
        out.distributions.append(dict(zip(labels, probs[0].tolist())))
    return out


def sample_outcome_indices(chain: Sequence[Instrument], rho0, seed: int, trajectories: Sequence[int],
                           steps: int | None = None, tol: float = DEFAULT_TOL,
                           batch: int = 8192) -> np.ndarray:
    """Outcome indices ``(len(trajectories), steps)``, many trajectories at a time.

    Each trajectory uses its own stream, so row ``t`` matches
    ``sample_trajectory(..., trajectory=trajectories[t])``.
    """
    seq = unrolled_chain(chain, steps)
    rho = _as_state_matrix(rho0)
    if rho.shape != (seq[0].in_dim, seq[0].in_dim):
        raise DimensionError(f"initial state is {rho.shape}, chain input is {seq[0].in_dim}-dimensional")
    trajectories = list(trajectories)
    out = np.empty((len(trajectories), len(seq)), dtype=np.intp)
    for lo in range(0, len(trajectories), batch):
        ids = trajectories[lo:lo + batch]
        us = np.stack([uniforms(seed, t, len(seq)) for t in ids])
        rhos = np.broadcast_to(rho, (len(ids),) + rho.shape)
        for k, inst in enumerate(seq):
            idx, _, rhos = _step(inst, rhos, us[:, k], tol, k)
            out[lo:lo + len(ids), k] = idx
    return out


@dataclass
class SampleSummary:
    seed: int
    trajectories: int
    counts: dict
    analytic: dict
    sequences: list[tuple]

    def frequencies(self) -> dict:
        return {x: c / self.trajectories for x, c in self.counts.items()}

    def digest(self) -> str:
        """SHA-256 of the outcome sequences, for reproducibility checks."""
        h = hashlib.sha256()
        for seq in self.sequences:
            h.update(OutcomeSpace.key(seq).encode())
            h.update(b"\n")
        return h.hexdigest()

    def z_scores(self) -> dict:
        """Standardized deviation of each count from its binomial mean."""
        n = self.trajectories
        zs = {}
        for x, p in self.analytic.items():
            c = self.counts.get(x, 0)
            sigma = math.sqrt(n * p * (1.0 - p)) if 0.0 < p < 1.0 else 0.0
            diff = c - n * p
            if sigma == 0.0:
                zs[x] = 0.0 if abs(diff) < 1e-6 * max(n, 1) else math.inf
            else:
                zs[x] = diff / sigma
        return zs

    def within(self, sigmas: float = 4.0) -> bool:
        return all(abs(z) <= sigmas for z in self.z_scores().values())


def sample_trajectories(chain: Sequence[Instrument], rho0, seed: int, n: int,
                        steps: int | None = None, tol: float = DEFAULT_TOL) -> SampleSummary:
    """Sample ``n`` trajectories (indices ``0..n-1``) and tally joint outcomes.

    ``analytic`` is the exact distribution of the sequential product of the
    unrolled chain, against which the counts can be tested.
    """
    seq = unrolled_chain(chain, steps)
    joint = sequential_instruments(seq, tol=max(tol, 1e-9))
    analytic = instrument_distribution(joint, rho0)
    counts = {x: 0 for x in analytic}
    indices = sample_outcome_indices(seq, rho0, seed, range(int(n)), tol=tol)
    labels = [inst.outcomes for inst in seq]
    sequences = [sum((labels[k][j] for k, j in enumerate(row)), ()) for row in indices.tolist()]
    for x in sequences:
        counts[x] += 1
    return SampleSummary(int(seed), int(n), counts, analytic, sequences)
