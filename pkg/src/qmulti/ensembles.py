"""Random states, observables and instruments for property checks.

All generators take a ``numpy.random.Generator`` so callers control seeding.
"""

from __future__ import annotations

import numpy as np

from .instruments import Instrument, Operation
from .linalg import dagger, hermitian_part
from .observables import Observable, State
from .outcomes import OutcomeSpace


def ginibre(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    return rng.normal(size=(rows, cols)) + 1j * rng.normal(size=(rows, cols))


def random_psd(rng: np.random.Generator, d: int, rank: int | None = None) -> np.ndarray:
    b = ginibre(rng, d, rank or d)
    return hermitian_part(b @ dagger(b))


def random_state(rng: np.random.Generator, d: int, rank: int | None = None) -> State:
    m = random_psd(rng, d, rank)
    return State(m / np.trace(m).real)


def random_matrix(rng: np.random.Generator, d: int) -> np.ndarray:
    return ginibre(rng, d, d)


def random_unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(ginibre(rng, d, d))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _inverse_sqrt(s: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(s)
    return (v / np.sqrt(w)) @ dagger(v)


def default_space(shape) -> OutcomeSpace:
    if isinstance(shape, int):
        shape = (shape,)
    return OutcomeSpace(tuple(tuple(str(k) for k in range(n)) for n in shape))


def random_observable(rng: np.random.Generator, d: int, shape=2,
                      space: OutcomeSpace | None = None) -> Observable:
    """Random POVM: random PSD seeds ``G_x`` normalized by ``S^{-1/2} G_x S^{-1/2}``."""
    space = space or default_space(shape)
    seeds = {x: random_psd(rng, d) for x in space.outcomes()}
    norm = _inverse_sqrt(sum(seeds.values()))
    return Observable(space, {x: hermitian_part(norm @ g @ norm) for x, g in seeds.items()})


def random_projective(rng: np.random.Generator, d: int) -> Observable:
    u = random_unitary(rng, d)
    effects = {str(k): np.outer(u[:, k], u[:, k].conj()) for k in range(d)}
    return Observable(OutcomeSpace.flat(effects), effects)


def random_instrument(rng: np.random.Generator, d_in: int, d_out: int | None = None, shape=2,
                      kraus_per_outcome: int = 2, space: OutcomeSpace | None = None,
                      out_factors=None) -> Instrument:
    """Random instrument: Ginibre Kraus operators rescaled so the total is a channel."""
    d_out = d_out or d_in
    space = space or default_space(shape)
    if space.size * kraus_per_outcome * d_out < d_in:
        raise ValueError("too few Kraus operators to span the input space")
    raw = {x: [ginibre(rng, d_out, d_in) for _ in range(kraus_per_outcome)] for x in space.outcomes()}
    total = sum(dagger(k) @ k for ks in raw.values() for k in ks)
    norm = _inverse_sqrt(total)
    ops = {x: Operation([k @ norm for k in ks], check=False) for x, ks in raw.items()}
    return Instrument(space, ops, out_factors=out_factors)


def random_operation(rng: np.random.Generator, d_in: int, d_out: int | None = None,
                     n_kraus: int = 2, scale: float = 1.0) -> Operation:
    """Random trace non-increasing operation (a channel when ``scale == 1``)."""
    d_out = d_out or d_in
    if n_kraus * d_out < d_in:
        raise ValueError("too few Kraus operators to span the input space")
    ks = [ginibre(rng, d_out, d_in) for _ in range(n_kraus)]
    norm = _inverse_sqrt(sum(dagger(k) @ k for k in ks))
    return Operation([np.sqrt(scale) * k @ norm for k in ks])
