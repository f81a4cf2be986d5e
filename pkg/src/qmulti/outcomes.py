"""Finite outcome spaces, outcome maps and product structure."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .errors import NotSurjectiveError, StructureError

DELIMITER = "|"

Outcome = tuple  # tuple[str, ...], one label per axis


@dataclass(frozen=True)
class OutcomeSpace:
    """A product of finite label sets; a plain outcome set has one axis."""

    axes: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        axes = tuple(tuple(str(label) for label in axis) for axis in self.axes)
        if not axes:
            raise StructureError("an outcome space needs at least one axis")
        for k, axis in enumerate(axes):
            if not axis:
                raise StructureError(f"axis {k} is empty")
            if len(set(axis)) != len(axis):
                raise StructureError(f"axis {k} has duplicate labels: {list(axis)}")
            for label in axis:
                if DELIMITER in label:
                    raise StructureError(f"label {label!r} contains the reserved {DELIMITER!r}")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def flat(cls, labels: Iterable) -> "OutcomeSpace":
        return cls((tuple(labels),))

    @property
    def n_axes(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        n = 1
        for a in self.axes:
            n *= len(a)
        return n

    @property
    def is_nontrivial_product(self) -> bool:
        return all(len(a) >= 2 for a in self.axes)

    def outcomes(self) -> list[Outcome]:
        """All outcomes in canonical order (last axis varies fastest)."""
        return list(itertools.product(*self.axes))

    def __contains__(self, outcome) -> bool:
        try:
            self.normalize(outcome)
        except KeyError:
            return False
        return True

    def normalize(self, outcome) -> Outcome:
        """Accept a tuple, a ``"a|b"`` key, or a bare label for one-axis spaces."""
        if isinstance(outcome, str):
            parts = tuple(outcome.split(DELIMITER)) if self.n_axes > 1 else (outcome,)
        elif isinstance(outcome, (tuple, list)):
            parts = tuple(str(p) for p in outcome)
        else:
            parts = (str(outcome),)
        if len(parts) != self.n_axes or any(p not in ax for p, ax in zip(parts, self.axes)):
            raise KeyError(f"unknown outcome {outcome!r}")
        return parts

    @staticmethod
    def key(outcome: Outcome) -> str:
        return DELIMITER.join(outcome)

    def product(self, *others: "OutcomeSpace") -> "OutcomeSpace":
        axes = list(self.axes)
        for o in others:
            axes.extend(o.axes)
        return OutcomeSpace(tuple(axes))


@dataclass(frozen=True)
class OutcomeMap:
    """A total, surjective map between outcome spaces."""

    source: OutcomeSpace
    target: OutcomeSpace
    mapping: Mapping = field(hash=False)

    def __post_init__(self):
        table = {}
        for x, y in self.mapping.items():
            try:
                table[self.source.normalize(x)] = self.target.normalize(y)
            except KeyError as exc:
                raise StructureError(f"outcome map entry {x!r} -> {y!r}: {exc}") from None
        missing = [x for x in self.source.outcomes() if x not in table]
        if missing:
            raise StructureError(f"outcome map is not total; missing {missing[:3]}")
        unhit = set(self.target.outcomes()) - set(table.values())
        if unhit:
            raise NotSurjectiveError(f"outcome map misses target outcomes {sorted(unhit)[:3]}")
        object.__setattr__(self, "mapping", table)

    def __call__(self, outcome) -> Outcome:
        return self.mapping[self.source.normalize(outcome)]

    def fiber(self, y) -> list[Outcome]:
        """Source outcomes mapping to ``y``, in source order."""
        y = self.target.normalize(y)
        return [x for x in self.source.outcomes() if self.mapping[x] == y]

    @classmethod
    def from_function(cls, source: OutcomeSpace, fn: Callable[[Outcome], object],
                      target: OutcomeSpace | None = None) -> "OutcomeMap":
        """Build a map from a callable; the default target is the image, as one axis
        labelled in order of first appearance."""
        images = {x: fn(x) for x in source.outcomes()}
        if target is None:
            labels = list(dict.fromkeys(str(v) for v in images.values()))
            target = OutcomeSpace.flat(labels)
            images = {x: (str(v),) for x, v in images.items()}
        return cls(source, target, images)

    @classmethod
    def projection(cls, source: OutcomeSpace, axis: int) -> "OutcomeMap":
        """The coordinate map ``x -> x_axis``."""
        if not 0 <= axis < source.n_axes:
            raise StructureError(f"axis {axis} out of range for {source.n_axes} axes")
        target = OutcomeSpace((source.axes[axis],))
        return cls(source, target, {x: (x[axis],) for x in source.outcomes()})

    @classmethod
    def identity(cls, source: OutcomeSpace) -> "OutcomeMap":
        return cls(source, source, {x: x for x in source.outcomes()})


@dataclass(frozen=True)
class ProductCheck:
    """Result of testing whether maps ``f_1..f_n`` realize a product structure.

    On success ``bijection`` maps every source outcome to its coordinate
    tuple ``(f_1(x), ..., f_n(x))`` and ``space`` is the product of the map
    targets. On failure ``bad_intersection`` names one coordinate tuple whose
    preimage intersection does not have exactly one element, together with
    that intersection.
    """

    passed: bool
    space: OutcomeSpace | None = None
    bijection: dict | None = None
    bad_intersection: tuple | None = None
    members: tuple = ()

    def __bool__(self) -> bool:
        return self.passed


def check_product_structure(source: OutcomeSpace, maps: Sequence[OutcomeMap]) -> ProductCheck:
    """Decide whether ``h(x) = (f_1(x), ..., f_n(x))`` is a bijection onto the
    product of the (single-axis) targets, each with at least two labels."""
    if not maps:
        raise StructureError("need at least one outcome map")
    for k, f in enumerate(maps):
        if f.source != source:
            raise StructureError(f"map {k} has a different source space")
        if f.target.n_axes != 1:
            raise StructureError(f"map {k} must target a single axis")
        if f.target.size < 2:
            raise StructureError(f"map {k} has a one-point image; product factors need >= 2 outcomes")
    target = OutcomeSpace(tuple(f.target.axes[0] for f in maps))
    h = {x: tuple(f.mapping[x][0] for f in maps) for x in source.outcomes()}
    preimages: dict[tuple, list] = {y: [] for y in target.outcomes()}
    for x, y in h.items():
        preimages[y].append(x)
    for y in target.outcomes():
        if len(preimages[y]) != 1:
            return ProductCheck(False, bad_intersection=y, members=tuple(preimages[y]))
    return ProductCheck(True, space=target, bijection=h)
