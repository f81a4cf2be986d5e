"""Observables, multi-observables and states.

An ``Observable`` is a family of effects indexed by an ``OutcomeSpace``.
A plain observable has one axis; a multi-observable has several, and its
marginals, parts, reductions and products are computed here.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (DimensionError, NotApplicableError, StructureError,
                     ValidationError)
from .linalg import (DEFAULT_TOL, eigvalsh, frozen, hermitian_part, identity,
                     is_hermitian, keep_factor, kron, max_abs, max_abs_diff,
                     psd_sqrt, validate_effect)
from .outcomes import (DELIMITER, OutcomeMap, OutcomeSpace, ProductCheck,
                       check_product_structure)


class State:
    """A density matrix: PSD with unit trace."""

    def __init__(self, matrix, tol: float = DEFAULT_TOL):
        m = np.array(matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"state must be square, got shape {m.shape}")
        problems = []
        if not np.all(np.isfinite(m)):
            raise ValidationError("state has non-finite entries")
        if not is_hermitian(m, tol):
            problems.append("not Hermitian")
        else:
            w = eigvalsh(m, tol)
            if w[0] < -tol:
                problems.append(f"not PSD: eigenvalue {w[0]:.6g} < 0")
        tr = np.trace(m)
        if abs(tr - 1.0) > tol:
            problems.append(f"trace {tr.real:.12g} != 1")
        if problems:
            raise ValidationError(problems)
        self.matrix = frozen(m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def pure(cls, vector) -> "State":
        v = np.asarray(vector, dtype=complex).reshape(-1)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "State":
        return cls(identity(dim) / dim)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __repr__(self):
        return f"State(dim={self.dim})"


def _as_state_matrix(rho) -> np.ndarray:
    if isinstance(rho, State):
        return rho.matrix
    return np.asarray(rho, dtype=complex)


class Observable:
    """A finite family of effects summing to the identity.

    Parameters
    ----------
    space : OutcomeSpace
    effects : mapping
        Outcome (tuple, ``"a|b"`` key, or bare label) to matrix. Every
        outcome of ``space`` must be present.
    tol : float
        Tolerance for the effect and completeness checks.
    factors : sequence of int, optional
        Tensor-factor dimensions of the Hilbert space, if it has any.
    """

    def __init__(self, space: OutcomeSpace, effects: Mapping, tol: float = DEFAULT_TOL,
                 factors: Sequence[int] | None = None):
        table = {}
        for x, m in effects.items():
            try:
                key = space.normalize(x)
            except KeyError:
                raise StructureError(f"effect label {x!r} is not an outcome of the space") from None
            if key in table:
                raise StructureError(f"duplicate effect for outcome {key}")
            table[key] = np.asarray(m, dtype=complex)
        missing = [x for x in space.outcomes() if x not in table]
        if missing:
            raise StructureError(f"no effect given for outcomes {missing[:3]}")
        if not table:
            raise ValidationError("an observable needs at least one effect")
        shapes = {m.shape for m in table.values()}
        if len(shapes) != 1:
            raise DimensionError(f"effects have differing shapes {sorted(shapes)}")
        (shape,) = shapes
        if len(shape) != 2 or shape[0] != shape[1]:
            raise DimensionError(f"effects must be square, got {shape}")
        dim = shape[0]
        if factors is not None:
            factors = tuple(int(f) for f in factors)
            if math.prod(factors) != dim:
                raise DimensionError(f"factor dims {factors} do not multiply to {dim}")

        problems = []
        for x in space.outcomes():
            if not np.all(np.isfinite(table[x])):
                problems.append(f"effect {OutcomeSpace.key(x)}: non-finite entries")
                continue
            check = validate_effect(table[x], tol)
            if not check:
                problems.append(f"effect {OutcomeSpace.key(x)}: {check.reason}")
        residual = sum(table[x] for x in space.outcomes()) - identity(dim)
        if max_abs(residual) > tol:
            problems.append(f"completeness residual {max_abs(residual):.3g} > {tol:g}")
        if problems:
            raise ValidationError(problems, residual=residual)

        self.space = space
        self.dim = dim
        self.factors = factors
        self._effects = {x: frozen(table[x]) for x in space.outcomes()}

    @property
    def outcomes(self) -> list[tuple]:
        return list(self._effects)

    @property
    def n_axes(self) -> int:
        return self.space.n_axes

    @property
    def is_trivial(self) -> bool:
        """A single-outcome observable, necessarily ``{I}``."""
        return self.space.size == 1

    def __getitem__(self, outcome) -> np.ndarray:
        return self._effects[self.space.normalize(outcome)]

    def items(self):
        return self._effects.items()

    def effect(self, delta: Iterable) -> np.ndarray:
        """``A(delta)``: the sum of effects over a set of outcomes."""
        keys = [self.space.normalize(x) for x in delta]
        total = np.zeros((self.dim, self.dim), dtype=complex)
        for x in dict.fromkeys(keys):
            total = total + self._effects[x]
        return total

    def __len__(self) -> int:
        return len(self._effects)

    def __repr__(self):
        return f"Observable(dim={self.dim}, shape={self.space.shape})"


def validate_observable(effects: Mapping, dim: int | None = None, tol: float = DEFAULT_TOL,
                        axes: Sequence[Sequence[str]] | None = None,
                        factors: Sequence[int] | None = None) -> Observable:
    """Build an ``Observable`` from labelled matrices.

    Without ``axes`` the space is inferred: plain string keys give a single
    axis in key order, while tuple or ``"a|b"`` keys give one axis per
    component with labels in order of first appearance.
    """
    if not effects:
        raise ValidationError("an observable needs at least one effect")
    if axes is None:
        axes = _infer_axes(effects.keys())
    space = OutcomeSpace(tuple(tuple(a) for a in axes))
    obs = Observable(space, effects, tol=tol, factors=factors)
    if dim is not None and obs.dim != dim:
        raise DimensionError(f"effects are {obs.dim}-dimensional, expected {dim}")
    return obs


def _infer_axes(keys) -> tuple[tuple[str, ...], ...]:
    split = []
    for k in keys:
        if isinstance(k, (tuple, list)):
            split.append(tuple(str(p) for p in k))
        else:
            split.append(tuple(str(k).split(DELIMITER)))
    widths = {len(s) for s in split}
    if len(widths) != 1:
        raise StructureError("effect keys have differing numbers of components")
    (n,) = widths
    return tuple(tuple(dict.fromkeys(s[k] for s in split)) for k in range(n))


def distribution(a: Observable, rho, delta: Iterable | None = None):
    """Outcome probabilities ``tr(rho A_x)``.

    Returns a dict over all outcomes, or the single probability
    ``tr(rho A(delta))`` when ``delta`` is given.
    """
    m = _as_state_matrix(rho)
    if m.shape != (a.dim, a.dim):
        raise DimensionError(f"state is {m.shape}, observable acts on dimension {a.dim}")
    if delta is not None:
        return float(np.real(np.trace(m @ a.effect(delta))))
    return {x: float(np.real(np.trace(m @ e))) for x, e in a.items()}


def part(a: Observable, f: OutcomeMap, tol: float = DEFAULT_TOL) -> Observable:
    """The part ``f(A)``: ``B_y`` sums ``A_x`` over the fiber ``f(x) = y``."""
    if f.source != a.space:
        raise StructureError("outcome map source does not match the observable's space")
    sums = {y: np.zeros((a.dim, a.dim), dtype=complex) for y in f.target.outcomes()}
    for x, e in a.items():
        y = f.mapping[x]
        sums[y] = sums[y] + e
    return Observable(f.target, sums, tol=tol, factors=a.factors)


def marginal(a: Observable, axis: int, tol: float = DEFAULT_TOL) -> Observable:
    """The ``axis``-marginal (0-based): sum over all other components."""
    if not 0 <= axis < a.n_axes:
        raise StructureError(f"axis {axis} out of range for {a.n_axes} axes")
    if a.n_axes == 1:
        return a
    labels = a.space.axes[axis]
    sums = {(y,): np.zeros((a.dim, a.dim), dtype=complex) for y in labels}
    for x, e in a.items():
        sums[(x[axis],)] = sums[(x[axis],)] + e
    return Observable(OutcomeSpace((labels,)), sums, tol=tol, factors=a.factors)


def tensor_observables(parts: Sequence[Observable], tol: float = DEFAULT_TOL) -> Observable:
    """``A_{x1..xn} = A_{1 x1} (x) ... (x) A_{n xn}`` on the tensor product space.

    The outcome axes are the parts' axes concatenated; ``factors`` records the
    part dimensions.
    """
    parts = list(parts)
    if len(parts) < 2:
        raise StructureError("a tensor product needs at least two observables")
    space = parts[0].space.product(*(p.space for p in parts[1:]))
    effects = {}
    for combo in _combos(parts):
        outcome = sum((x for x, _ in combo), ())
        effects[outcome] = kron(*(e for _, e in combo))
    factors = []
    for p in parts:
        factors.extend(p.factors if p.factors else (p.dim,))
    return Observable(space, effects, tol=tol, factors=factors)


def _combos(parts):
    return itertools.product(*(list(p.items()) for p in parts))


def reduced_observable(a: Observable, factor: int, dims: Sequence[int] | None = None,
                       tol: float = DEFAULT_TOL) -> Observable:
    """Normalized partial trace of every effect onto one tensor factor.

    ``dims`` defaults to the observable's recorded factors. The outcome
    space is unchanged.
    """
    dims = tuple(dims) if dims is not None else a.factors
    if dims is None:
        raise StructureError("reduced_observable needs factor dimensions")
    if math.prod(dims) != a.dim:
        raise DimensionError(f"factor dims {dims} do not multiply to {a.dim}")
    if not 0 <= factor < len(dims):
        raise StructureError(f"factor {factor} out of range for {len(dims)} factors")
    norm = math.prod(dims) // dims[factor]
    if len(dims) == 1:
        return Observable(a.space, dict(a.items()), tol=tol)
    effects = {x: keep_factor(e, dims, factor) / norm for x, e in a.items()}
    return Observable(a.space, effects, tol=tol)


def identity_observable_check(a: Observable, tol: float = DEFAULT_TOL) -> dict | None:
    """Weights ``lambda_x`` if every effect is ``lambda_x I`` within ``tol``, else ``None``."""
    eye = identity(a.dim)
    weights = {}
    for x, e in a.items():
        lam = np.trace(e) / a.dim
        if abs(lam.imag) > tol or max_abs(e - lam * eye) > tol:
            return None
        weights[x] = float(lam.real)
    return weights


def luders_sequential(parts: Sequence[Observable], tol: float = DEFAULT_TOL) -> Observable:
    """Lüders sequential product ``A_1 o ... o A_n``.

    The effect for ``(x1, ..., xn)`` is the nested conjugation
    ``A_{1x1}^{1/2} ... A_{n xn} ... A_{1x1}^{1/2}``.
    """
    parts = list(parts)
    if not parts:
        raise StructureError("need at least one observable")
    dim = parts[0].dim
    if any(p.dim != dim for p in parts):
        raise DimensionError("Lüders sequential product needs observables on one space")
    if len(parts) == 1:
        return parts[0]
    roots = [{x: psd_sqrt(e, tol) for x, e in p.items()} for p in parts[:-1]]
    space = parts[0].space.product(*(p.space for p in parts[1:]))
    effects = {}
    for combo in _combos(parts):
        e = combo[-1][1]
        for k in range(len(parts) - 2, -1, -1):
            s = roots[k][combo[k][0]]
            e = s @ e @ s
        effects[sum((x for x, _ in combo), ())] = hermitian_part(e)
    return Observable(space, effects, tol=tol, factors=parts[0].factors)


def commuting_joint(parts: Sequence[Observable], tol: float = DEFAULT_TOL) -> Observable:
    """Joint observable ``C_{x1..xn} = B_{1x1} ... B_{nxn}`` for mutually commuting parts.

    Raises ``NotApplicableError`` when some pair of effects from different
    parts fails to commute; that says nothing about coexistence.
    """
    parts = list(parts)
    if not parts:
        raise StructureError("need at least one observable")
    dim = parts[0].dim
    if any(p.dim != dim for p in parts):
        raise DimensionError("commuting_joint needs observables on one space")
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            for x, e in parts[i].items():
                for y, f in parts[j].items():
                    c = max_abs(e @ f - f @ e)
                    if c > tol:
                        raise NotApplicableError(
                            f"construction not applicable: effects {OutcomeSpace.key(x)} of part {i} and "
                            f"{OutcomeSpace.key(y)} of part {j} have commutator norm {c:.3g}")
    if len(parts) == 1:
        return parts[0]
    space = parts[0].space.product(*(p.space for p in parts[1:]))
    effects = {}
    for combo in _combos(parts):
        prod = combo[0][1]
        for _, e in combo[1:]:
            prod = prod @ e
        effects[sum((x for x, _ in combo), ())] = hermitian_part(prod)
    return Observable(space, effects, tol=tol, factors=parts[0].factors)


@dataclass
class JointReport:
    """Per-axis maximum entry deviation between a joint's marginals and targets."""

    deviations: list[float]
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(d <= self.tol for d in self.deviations)

    def __bool__(self) -> bool:
        return self.passed

    @property
    def worst_axis(self) -> int:
        return int(np.argmax(self.deviations))


def observable_deviation(a: Observable, b: Observable) -> float:
    """Max entry deviation between two observables with the same outcome labels."""
    if a.dim != b.dim:
        raise DimensionError(f"observables act on dimensions {a.dim} and {b.dim}")
    if a.space.n_axes != b.space.n_axes or any(set(p) != set(q) for p, q in zip(a.space.axes, b.space.axes)):
        raise StructureError("observables have different outcome labels")
    return max(max_abs_diff(e, b[x]) for x, e in a.items())


def verify_joint(c: Observable, targets: Sequence[Observable], tol: float = DEFAULT_TOL) -> JointReport:
    """Compare each marginal of ``c`` with the matching target observable."""
    targets = list(targets)
    if len(targets) != c.n_axes:
        raise StructureError(f"joint has {c.n_axes} axes but {len(targets)} targets were given")
    devs = []
    for i, t in enumerate(targets):
        m = marginal(c, i, tol)
        if t.n_axes != 1:
            raise StructureError(f"target {i} must be a single-axis observable")
        devs.append(observable_deviation(m, t))
    return JointReport(devs, tol)


@dataclass
class ProductStructureReport:
    check: ProductCheck
    part_deviations: list[float] = field(default_factory=list)
    reindexed: Observable | None = None

    tol: float = DEFAULT_TOL

    @property
    def passed(self) -> bool:
        return self.check.passed and all(d <= self.tol for d in self.part_deviations)

    @property
    def bijection(self):
        return self.check.bijection

    @property
    def bad_intersection(self):
        return self.check.bad_intersection

    def __bool__(self) -> bool:
        return self.passed


def verify_product_structure(a: Observable, fs: Sequence[OutcomeMap],
                             tol: float = DEFAULT_TOL) -> ProductStructureReport:
    """Check that the maps ``fs`` exhibit ``a`` as a nontrivial n-observable.

    On success the observable is re-indexed through the bijection
    ``h(x) = (f_1(x), ..., f_n(x))`` and each part ``f_i(a)`` is compared
    with the ``i``-marginal of the re-indexed observable.
    """
    check = check_product_structure(a.space, fs)
    if not check.passed:
        return ProductStructureReport(check)
    reindexed = Observable(check.space, {check.bijection[x]: e for x, e in a.items()},
                           tol=tol, factors=a.factors)
    devs = [observable_deviation(part(a, f, tol), marginal(reindexed, i, tol))
            for i, f in enumerate(fs)]
    return ProductStructureReport(check, devs, reindexed, tol)
