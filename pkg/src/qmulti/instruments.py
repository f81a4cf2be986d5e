"""Operations, instruments and multi-instruments in Kraus form.

Operations are stored only as Kraus lists, so complete positivity holds by
construction. Two operations are compared extensionally, by their action on
the matrix units of the input space, never by their Kraus lists.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (DimensionError, MeasurementMismatchError, StructureError,
                     ValidationError)
from .linalg import (DEFAULT_TOL, basis_bra, eigvalsh, frozen, hermitian_part,
                     identity, kron, max_abs, psd_factors, psd_sqrt)
from .observables import (JointReport, Observable, State, _as_state_matrix,
                          _infer_axes, distribution, observable_deviation,
                          verify_joint)
from .outcomes import OutcomeMap, OutcomeSpace, check_product_structure


class Operation:
    """A trace non-increasing CP map ``B -> sum_i K_i B K_i^*``.

    Parameters
    ----------
    kraus : sequence of matrices
        Each ``out_dim x in_dim``; at least one.
    tol : float
        Tolerance for ``sum K^* K <= I``.
    check : bool
        Skip the eigenvalue check when the caller already guarantees it
        (instruments check their total instead).
    """

    def __init__(self, kraus, tol: float = DEFAULT_TOL, check: bool = True):
        ks = [np.asarray(k, dtype=complex) for k in kraus]
        if not ks:
            raise ValidationError("an operation needs at least one Kraus operator")
        shapes = {k.shape for k in ks}
        if len(shapes) != 1 or len(next(iter(shapes))) != 2:
            raise DimensionError(f"Kraus operators have inconsistent shapes {sorted(shapes)}")
        if not all(np.all(np.isfinite(k)) for k in ks):
            raise ValidationError("Kraus operator has non-finite entries")
        self.kraus = frozen(np.stack(ks))
        self.out_dim, self.in_dim = ks[0].shape
        if check:
            w = eigvalsh(self.effect, tol)
            if w[-1] > 1.0 + tol:
                raise ValidationError(f"not trace non-increasing: sum K^*K has eigenvalue {w[-1]:.6g} > 1")

    @property
    def effect(self) -> np.ndarray:
        """``sum K_i^* K_i``, the effect this operation measures."""
        k = self.kraus
        return np.einsum("rai,raj->ij", k.conj(), k)

    def is_channel(self, tol: float = DEFAULT_TOL) -> bool:
        return max_abs(self.effect - identity(self.in_dim)) <= tol

    def apply(self, b) -> np.ndarray:
        b = _as_state_matrix(b)
        if b.shape != (self.in_dim, self.in_dim):
            raise DimensionError(f"operation input is {self.in_dim}-dimensional, got {b.shape}")
        k = self.kraus
        return (k @ b @ np.conj(np.swapaxes(k, 1, 2))).sum(axis=0)

    __call__ = apply

    def dual_apply(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=complex)
        if c.shape != (self.out_dim, self.out_dim):
            raise DimensionError(f"dual input is {self.out_dim}-dimensional, got {c.shape}")
        k = self.kraus
        return (np.conj(np.swapaxes(k, 1, 2)) @ c @ k).sum(axis=0)

    def unit_images(self) -> np.ndarray:
        """Images of all matrix units ``E_kl``, shape ``(in, in, out, out)``."""
        k = self.kraus
        return np.einsum("rak,rbl->klab", k, k.conj())

    def __add__(self, other: "Operation") -> "Operation":
        if (self.in_dim, self.out_dim) != (other.in_dim, other.out_dim):
            raise DimensionError("cannot add operations between different spaces")
        return Operation(list(self.kraus) + list(other.kraus), check=False)

    def then(self, other: "Operation") -> "Operation":
        """``other o self``: apply ``self`` first."""
        if self.out_dim != other.in_dim:
            raise DimensionError(f"cannot chain {self.out_dim}-dim output into {other.in_dim}-dim input")
        return Operation([k2 @ k1 for k1 in self.kraus for k2 in other.kraus], check=False)

    def __repr__(self):
        return f"Operation({self.in_dim}->{self.out_dim}, kraus={len(self.kraus)})"


def apply(j: Operation, b) -> np.ndarray:
    return j.apply(b)


def dual_apply(j: Operation, c) -> np.ndarray:
    return j.dual_apply(c)


def operation_deviation(j1: Operation, j2: Operation) -> float:
    """Max entry deviation of ``j1(E_kl) - j2(E_kl)`` over all matrix units."""
    if (j1.in_dim, j1.out_dim) != (j2.in_dim, j2.out_dim):
        raise DimensionError("operations act between different spaces")
    return max_abs(j1.unit_images() - j2.unit_images())


def _sum_operations(ops: Iterable[Operation], in_dim: int, out_dim: int) -> Operation:
    kraus = [k for op in ops for k in op.kraus]
    if not kraus:
        kraus = [np.zeros((out_dim, in_dim), dtype=complex)]
    return Operation(kraus, check=False)


class Instrument:
    """Operations indexed by an outcome space whose sum is a channel.

    ``out_factors`` optionally records a tensor factorization of the output
    space; joint-instrument checks and reductions need it.
    """

    def __init__(self, space: OutcomeSpace, operations: Mapping, tol: float = DEFAULT_TOL,
                 out_factors: Sequence[int] | None = None):
        table = {}
        for x, op in operations.items():
            try:
                key = space.normalize(x)
            except KeyError:
                raise StructureError(f"operation label {x!r} is not an outcome of the space") from None
            if key in table:
                raise StructureError(f"duplicate operation for outcome {key}")
            table[key] = op if isinstance(op, Operation) else Operation(_kraus_list(op), check=False)
        missing = [x for x in space.outcomes() if x not in table]
        if missing:
            raise StructureError(f"no operation given for outcomes {missing[:3]}")
        dims = {(op.in_dim, op.out_dim) for op in table.values()}
        if len(dims) != 1:
            raise DimensionError(f"operations act between differing spaces {sorted(dims)}")
        ((self.in_dim, self.out_dim),) = dims
        if out_factors is not None:
            out_factors = tuple(int(m) for m in out_factors)
            if math.prod(out_factors) != self.out_dim:
                raise DimensionError(f"out_factors {out_factors} do not multiply to {self.out_dim}")
        self.space = space
        self.out_factors = out_factors
        self._ops = {x: table[x] for x in space.outcomes()}
        self._stack = None
        residual = self.channel_residual()
        if residual > tol:
            raise ValidationError(
                f"summed operation is not a channel: |sum K^*K - I|_max = {residual:.3g} > {tol:g}",
                residual=self.total().effect - identity(self.in_dim))

    def _stacked(self):
        # all Kraus operators in outcome order, with the start index of each outcome
        if self._stack is None:
            stack = np.concatenate([op.kraus for op in self._ops.values()])
            stack.flags.writeable = False
            lengths = [len(op.kraus) for op in self._ops.values()]
            self._stack = (stack, np.cumsum([0] + lengths[:-1]))
        return self._stack

    def channel_residual(self) -> float:
        return max_abs(self.total().effect - identity(self.in_dim))

    def total(self) -> Operation:
        """The summed operation, a channel."""
        return _sum_operations(self._ops.values(), self.in_dim, self.out_dim)

    @property
    def outcomes(self) -> list[tuple]:
        return list(self._ops)

    @property
    def n_axes(self) -> int:
        return self.space.n_axes

    def __getitem__(self, outcome) -> Operation:
        return self._ops[self.space.normalize(outcome)]

    def items(self):
        return self._ops.items()

    def operation(self, delta: Iterable) -> Operation:
        """``I(delta)``: the sum of operations over a set of outcomes."""
        keys = dict.fromkeys(self.space.normalize(x) for x in delta)
        return _sum_operations((self._ops[x] for x in keys), self.in_dim, self.out_dim)

    def __len__(self) -> int:
        return len(self._ops)

    def __repr__(self):
        return f"Instrument({self.in_dim}->{self.out_dim}, shape={self.space.shape})"


def _kraus_list(op) -> list:
    arr = np.asarray(op, dtype=complex)
    if arr.ndim == 2:
        return [arr]
    if arr.ndim == 3:
        return list(arr)
    raise DimensionError(f"cannot read a Kraus list from an array of shape {arr.shape}")


def validate_instrument(operations: Mapping, tol: float = DEFAULT_TOL,
                        axes: Sequence[Sequence[str]] | None = None,
                        out_factors: Sequence[int] | None = None) -> Instrument:
    """Build an ``Instrument`` from labelled operations or Kraus lists."""
    if not operations:
        raise ValidationError("an instrument needs at least one operation")
    if axes is None:
        axes = _infer_axes(operations.keys())
    return Instrument(OutcomeSpace(tuple(tuple(a) for a in axes)), operations, tol=tol,
                      out_factors=out_factors)


def instrument_deviation(i1: Instrument, i2: Instrument) -> float:
    """Extensional distance: worst matrix-unit deviation over all outcomes."""
    if i1.space.n_axes != i2.space.n_axes or any(set(p) != set(q) for p, q in zip(i1.space.axes, i2.space.axes)):
        raise StructureError("instruments have different outcome labels")
    return max(operation_deviation(op, i2[x]) for x, op in i1.items())


def measured_observable(i: Instrument, tol: float = DEFAULT_TOL) -> Observable:
    """The observable ``x -> I_x^*(I)`` that the instrument measures."""
    effects = {x: hermitian_part(op.effect) for x, op in i.items()}
    return Observable(i.space, effects, tol=tol)


def instrument_distribution(i: Instrument, rho, delta: Iterable | None = None):
    """``tr[I_x(rho)]`` per outcome, or ``tr[I(delta)(rho)]`` for a subset."""
    m = _as_state_matrix(rho)
    if m.shape != (i.in_dim, i.in_dim):
        raise DimensionError(f"state is {m.shape}, instrument input is {i.in_dim}-dimensional")
    if delta is not None:
        return float(np.real(np.trace(i.operation(delta).apply(m))))
    images = outcome_images(i, m)
    traces = np.real(np.trace(images, axis1=1, axis2=2))
    return {x: float(t) for x, t in zip(i.outcomes, traces)}


def outcome_images(i: Instrument, rho) -> np.ndarray:
    """``I_x(rho)`` for every outcome, stacked in outcome order.

    ``rho`` may also be a batch ``(n, d, d)``, giving ``(n, m, d', d')``;
    a single matrix is evaluated as a batch of one, so both forms share
    the same arithmetic.
    """
    rhos = np.asarray(rho)
    single = rhos.ndim == 2
    if single:
        rhos = rhos[None]
    stack, starts = i._stacked()
    terms = stack[None] @ rhos[:, None] @ np.conj(np.swapaxes(stack, 1, 2))[None]
    images = np.add.reduceat(terms, starts, axis=1)
    return images[0] if single else images


def instrument_part(i: Instrument, f: OutcomeMap, tol: float = DEFAULT_TOL) -> Instrument:
    """``f(I)``: Kraus lists concatenated over each fiber of ``f``."""
    if f.source != i.space:
        raise StructureError("outcome map source does not match the instrument's space")
    fibers = {y: [] for y in f.target.outcomes()}
    for x, op in i.items():
        fibers[f.mapping[x]].append(op)
    ops = {y: _sum_operations(v, i.in_dim, i.out_dim) for y, v in fibers.items()}
    return Instrument(f.target, ops, tol=tol, out_factors=i.out_factors)


def instrument_marginal(i: Instrument, axis: int, tol: float = DEFAULT_TOL) -> Instrument:
    """The ``axis``-marginal (0-based) of a multi-instrument."""
    if not 0 <= axis < i.n_axes:
        raise StructureError(f"axis {axis} out of range for {i.n_axes} axes")
    if i.n_axes == 1:
        return i
    labels = i.space.axes[axis]
    slices = {(y,): [] for y in labels}
    for x, op in i.items():
        slices[(x[axis],)].append(op)
    ops = {y: _sum_operations(v, i.in_dim, i.out_dim) for y, v in slices.items()}
    return Instrument(OutcomeSpace((labels,)), ops, tol=tol, out_factors=i.out_factors)


def reduced_instrument(i: Instrument, factor: int, out_dims: Sequence[int] | None = None,
                       tol: float = DEFAULT_TOL) -> Instrument:
    """Compose every operation with the partial trace onto output factor ``factor``.

    The result is again in Kraus form: each Kraus operator ``K`` becomes the
    family ``(I_factor (x) <k|) K`` over basis labels ``k`` of the traced
    factors.
    """
    dims = tuple(out_dims) if out_dims is not None else i.out_factors
    if dims is None:
        raise StructureError("reduced_instrument needs output factor dimensions")
    if math.prod(dims) != i.out_dim:
        raise DimensionError(f"out_dims {dims} do not multiply to {i.out_dim}")
    if not 0 <= factor < len(dims):
        raise StructureError(f"factor {factor} out of range for {len(dims)} factors")
    if len(dims) == 1:
        return Instrument(i.space, dict(i.items()), tol=tol, out_factors=dims)
    others = [range(m) for j, m in enumerate(dims) if j != factor]
    bras = [basis_bra(dims, factor, idx) for idx in itertools.product(*others)]
    ops = {x: Operation([b @ k for k in op.kraus for b in bras], check=False) for x, op in i.items()}
    return Instrument(i.space, ops, tol=tol, out_factors=(dims[factor],))


def construct_kraus(kraus_by_outcome: Mapping, tol: float = DEFAULT_TOL,
                    axes: Sequence[Sequence[str]] | None = None,
                    out_factors: Sequence[int] | None = None) -> Instrument:
    """Kraus instrument ``K_x(B) = K_x B K_x^*``; a value may also be a list of operators."""
    ops = {x: Operation(_kraus_list(k), check=False) for x, k in kraus_by_outcome.items()}
    return validate_instrument(ops, tol=tol, axes=axes, out_factors=out_factors)


def construct_luders(a: Observable, tol: float = DEFAULT_TOL) -> Instrument:
    """Lüders instrument with the single Kraus operator ``A_x^{1/2}`` per outcome."""
    ops = {x: Operation([psd_sqrt(e, tol)], check=False) for x, e in a.items()}
    return Instrument(a.space, ops, tol=tol, out_factors=a.factors)


def construct_holevo(a: Observable, alphas: Mapping, tol: float = DEFAULT_TOL,
                     out_factors: Sequence[int] | None = None) -> Instrument:
    """Holevo instrument ``B -> tr(B A_x) alpha_x``.

    Each operation gets the Kraus operators ``sqrt(b_k a_j) |u_k><v_j|``
    built from eigenpairs ``(a_j, v_j)`` of ``A_x`` and ``(b_k, u_k)`` of
    ``alpha_x``.
    """
    states = {}
    for x, s in alphas.items():
        key = a.space.normalize(x)
        states[key] = s if isinstance(s, State) else State(s, tol)
    if set(states) != set(a.outcomes):
        raise StructureError("alphas must be keyed exactly by the observable's outcomes")
    out_dims = {s.dim for s in states.values()}
    if len(out_dims) != 1:
        raise DimensionError(f"alpha states have differing dimensions {sorted(out_dims)}")
    (out_dim,) = out_dims
    ops = {}
    for x, e in a.items():
        kraus = []
        for b, u in psd_factors(states[x].matrix, tol):
            for w, v in psd_factors(e, tol):
                kraus.append(math.sqrt(b * w) * np.outer(u, v.conj()))
        if not kraus:
            kraus = [np.zeros((out_dim, a.dim), dtype=complex)]
        ops[x] = Operation(kraus, check=False)
    return Instrument(a.space, ops, tol=tol, out_factors=out_factors)


def tensor_instruments(parts: Sequence[Instrument], tol: float = DEFAULT_TOL) -> Instrument:
    """``K_{x1..xn} = I_{1x1} (x) ... (x) I_{nxn}`` with all Kronecker Kraus combinations."""
    parts = list(parts)
    if len(parts) < 2:
        raise StructureError("a tensor product needs at least two instruments")
    space = parts[0].space.product(*(p.space for p in parts[1:]))
    ops = {}
    for combo in itertools.product(*(list(p.items()) for p in parts)):
        outcome = sum((x for x, _ in combo), ())
        kraus = [kron(*ks) for ks in itertools.product(*(op.kraus for _, op in combo))]
        ops[outcome] = Operation(kraus, check=False)
    out_factors = []
    for p in parts:
        out_factors.extend(p.out_factors if p.out_factors else (p.out_dim,))
    return Instrument(space, ops, tol=tol, out_factors=out_factors)


def sequential_instruments(parts: Sequence[Instrument], tol: float = DEFAULT_TOL) -> Instrument:
    """``I_{x1..xn}(rho) = I_{nxn}(...I_{1x1}(rho))``; Kraus operators ``K^n ... K^1``."""
    parts = list(parts)
    if not parts:
        raise StructureError("need at least one instrument")
    for k in range(len(parts) - 1):
        if parts[k].out_dim != parts[k + 1].in_dim:
            raise DimensionError(
                f"instrument {k} outputs dimension {parts[k].out_dim} but instrument {k + 1} "
                f"expects {parts[k + 1].in_dim}")
    if len(parts) == 1:
        return parts[0]
    space = parts[0].space.product(*(p.space for p in parts[1:]))
    ops = {}
    for combo in itertools.product(*(list(p.items()) for p in parts)):
        op = combo[0][1]
        for _, nxt in combo[1:]:
            op = op.then(nxt)
        ops[sum((x for x, _ in combo), ())] = op
    return Instrument(space, ops, tol=tol, out_factors=parts[-1].out_factors)


def _check_measures(a: Observable, i: Instrument, tol: float) -> None:
    if i.in_dim != a.dim:
        raise DimensionError(f"instrument input is {i.in_dim}-dimensional, observable {a.dim}")
    measured = measured_observable(i, tol)
    dev = observable_deviation(measured, a)
    if dev > tol:
        raise MeasurementMismatchError(f"instrument does not measure the observable (deviation {dev:.3g})", dev)


def seq_product_observables(a: Observable, i: Instrument, b: Observable,
                            tol: float = DEFAULT_TOL) -> Observable:
    """``(A[I]B)_{xy} = I_x^*(B_y)`` for an instrument ``I`` measuring ``A``."""
    _check_measures(a, i, tol)
    if b.dim != i.out_dim:
        raise DimensionError(f"second observable is {b.dim}-dimensional, instrument output {i.out_dim}")
    effects = {}
    for x in a.outcomes:
        op = i[x]
        for y, e in b.items():
            effects[x + y] = hermitian_part(op.dual_apply(e))
    return Observable(a.space.product(b.space), effects, tol=tol, factors=a.factors)


def conditioned_observable(b: Observable, i: Instrument, a: Observable,
                           tol: float = DEFAULT_TOL) -> Observable:
    """``(B|I|A)_y = sum_x I_x^*(B_y)``."""
    _check_measures(a, i, tol)
    if b.dim != i.out_dim:
        raise DimensionError(f"observable is {b.dim}-dimensional, instrument output {i.out_dim}")
    effects = {}
    for y, e in b.items():
        total = np.zeros((a.dim, a.dim), dtype=complex)
        for x in a.outcomes:
            total = total + i[x].dual_apply(e)
        effects[y] = hermitian_part(total)
    return Observable(b.space, effects, tol=tol, factors=a.factors)


@dataclass
class JointInstrumentReport:
    """Outcome of checking a joint instrument against target instruments.

    ``deviations[i]`` is the worst matrix-unit deviation between the reduced
    marginal of the joint and target ``i``; ``observables`` compares the
    marginals of the joint's measured observable with the targets'
    measured observables.
    """

    deviations: list[float]
    observables: JointReport
    tol: float
    passed: bool = field(init=False)

    def __post_init__(self):
        self.passed = all(d <= self.tol for d in self.deviations)

    @property
    def observables_coexist(self) -> bool:
        return self.observables.passed

    def __bool__(self) -> bool:
        return self.passed


def verify_joint_instrument(j: Instrument, targets: Sequence[Instrument],
                            tol: float = DEFAULT_TOL) -> JointInstrumentReport:
    """Check that each reduced marginal of ``j`` equals the matching target."""
    targets = list(targets)
    if j.out_factors is None:
        raise StructureError("joint instrument needs out_factors")
    if not (len(targets) == j.n_axes == len(j.out_factors)):
        raise StructureError(
            f"joint has {j.n_axes} axes and {len(j.out_factors)} output factors "
            f"but {len(targets)} targets were given")
    for k, t in enumerate(targets):
        if t.in_dim != j.in_dim or t.out_dim != j.out_factors[k]:
            raise StructureError(
                f"target {k} maps {t.in_dim}->{t.out_dim}, joint needs {j.in_dim}->{j.out_factors[k]}")
    devs = []
    for k, t in enumerate(targets):
        reduced = reduced_instrument(instrument_marginal(j, k, tol), k, tol=tol)
        devs.append(instrument_deviation(reduced, t))
    obs = verify_joint(measured_observable(j, tol), [measured_observable(t, tol) for t in targets], tol)
    return JointInstrumentReport(devs, obs, tol)


def verify_instrument_product_structure(i: Instrument, fs: Sequence[OutcomeMap],
                                        tol: float = DEFAULT_TOL):
    """Product-structure check for instruments: on success the parts ``f_k(I)``
    are compared extensionally with the marginals of the re-indexed instrument.

    Returns ``(check, reindexed, deviations)``.
    """
    check = check_product_structure(i.space, fs)
    if not check.passed:
        return check, None, []
    reindexed = Instrument(check.space, {check.bijection[x]: op for x, op in i.items()},
                           tol=tol, out_factors=i.out_factors)
    devs = [instrument_deviation(instrument_part(i, f, tol), instrument_marginal(reindexed, k, tol))
            for k, f in enumerate(fs)]
    return check, reindexed, devs


def distribution_of(obj, rho, delta=None):
    """Dispatch ``distribution`` / ``instrument_distribution`` by type."""
    if isinstance(obj, Instrument):
        return instrument_distribution(obj, rho, delta)
    return distribution(obj, rho, delta)
