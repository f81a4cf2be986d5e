"""JSON-compatible encodings of matrices, states, observables and instruments.

A complex entry is ``[re, im]`` and a matrix is a list of rows. Plain real
numbers are accepted on input. Outcome tuples are keyed as ``"x1|...|xn"``.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, StructureError
from .instruments import Instrument, Operation
from .linalg import DEFAULT_TOL, as_matrix
from .observables import Observable, State, validate_observable
from .outcomes import OutcomeSpace


def matrix_from_literal(lit) -> np.ndarray:
    if not isinstance(lit, list) or not lit or not all(isinstance(r, list) for r in lit):
        raise StructureError("a matrix literal is a non-empty list of rows")
    width = {len(r) for r in lit}
    if len(width) != 1:
        raise DimensionError("matrix literal rows have differing lengths")
    rows = []
    for r in lit:
        row = []
        for entry in r:
            if isinstance(entry, (int, float)) and not isinstance(entry, bool):
                row.append(complex(entry, 0.0))
            elif isinstance(entry, list) and len(entry) == 2 and all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in entry):
                row.append(complex(entry[0], entry[1]))
            else:
                raise StructureError(f"bad complex entry {entry!r}; expected [re, im]")
        rows.append(row)
    return as_matrix(rows)


def matrix_to_literal(m) -> list:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


def state_to_dict(rho: State) -> dict:
    return {"kind": "state", "matrix": matrix_to_literal(rho.matrix)}


def state_from_dict(doc: dict, tol: float = DEFAULT_TOL) -> State:
    return State(matrix_from_literal(doc["matrix"]), tol)


def observable_to_dict(a: Observable) -> dict:
    doc = {
        "kind": "observable",
        "dim": a.dim,
        "axes": [list(ax) for ax in a.space.axes],
        "effects": {OutcomeSpace.key(x): matrix_to_literal(e) for x, e in a.items()},
    }
    if a.factors is not None:
        doc["factors"] = list(a.factors)
    return doc


def observable_from_dict(doc: dict, tol: float = DEFAULT_TOL) -> Observable:
    effects = doc.get("effects")
    if not isinstance(effects, dict) or not effects:
        raise StructureError("observable needs a non-empty 'effects' object")
    mats = {k: matrix_from_literal(v) for k, v in effects.items()}
    axes = doc.get("axes")
    if axes is None:
        axes = [list(mats)] if all("|" not in k for k in mats) else None
    return validate_observable(mats, dim=doc.get("dim"), tol=tol, axes=axes, factors=doc.get("factors"))


def instrument_to_dict(i: Instrument) -> dict:
    doc = {
        "kind": "instrument",
        "space": [list(ax) for ax in i.space.axes],
        "in_dim": i.in_dim,
        "out_dim": i.out_dim,
        "operations": {OutcomeSpace.key(x): [matrix_to_literal(k) for k in op.kraus] for x, op in i.items()},
    }
    if i.out_factors is not None:
        doc["out_factors"] = list(i.out_factors)
    return doc


def instrument_from_dict(doc: dict, tol: float = DEFAULT_TOL) -> Instrument:
    ops = doc.get("operations")
    if not isinstance(ops, dict) or not ops:
        raise StructureError("instrument needs a non-empty 'operations' object")
    space = doc.get("space")
    if space is None:
        space = [list(ops)]
    space = OutcomeSpace(tuple(tuple(a) for a in space))
    table = {}
    for k, kraus in ops.items():
        if not isinstance(kraus, list) or not kraus:
            raise StructureError(f"operation {k!r} needs a non-empty Kraus list")
        table[k] = Operation([matrix_from_literal(m) for m in kraus], check=False)
    inst = Instrument(space, table, tol=tol, out_factors=doc.get("out_factors"))
    for field_name, actual in (("in_dim", inst.in_dim), ("out_dim", inst.out_dim)):
        if field_name in doc and doc[field_name] != actual:
            raise DimensionError(f"{field_name} is {doc[field_name]} but Kraus operators imply {actual}")
    return inst


def to_document(obj) -> dict | list:
    """Encode any library value (or a nested container of them) for JSON."""
    if isinstance(obj, Observable):
        return observable_to_dict(obj)
    if isinstance(obj, Instrument):
        return instrument_to_dict(obj)
    if isinstance(obj, State):
        return state_to_dict(obj)
    if isinstance(obj, np.ndarray):
        return matrix_to_literal(obj)
    if isinstance(obj, dict):
        return {(OutcomeSpace.key(k) if isinstance(k, tuple) else str(k)): to_document(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_document(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def from_document(doc: dict, tol: float = DEFAULT_TOL):
    kind = doc.get("kind")
    if kind == "matrix":
        return matrix_from_literal(doc["matrix"])
    if kind == "state":
        return state_from_dict(doc, tol)
    if kind == "observable":
        return observable_from_dict(doc, tol)
    if kind == "instrument":
        return instrument_from_dict(doc, tol)
    raise StructureError(f"unknown declaration kind {kind!r}")
