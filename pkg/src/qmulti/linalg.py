"""Dense complex linear algebra kernel.

Every operator in the library is a 2-D ``complex128`` numpy array. Tensor
products follow numpy's Kronecker convention: for factor dimensions
``(m_1, ..., m_n)`` the composite index of ``(i_1, ..., i_n)`` is
``i_1 m_2...m_n + ... + i_n`` (leftmost factor most significant).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, NotHermitianError, NotPSDError

DEFAULT_TOL = 1e-9

_JACOBI_MAX_SWEEPS = 100


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a finite 2-D complex array (copying if needed)."""
    arr = np.array(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix has non-finite entries")
    return arr


def frozen(m: np.ndarray) -> np.ndarray:
    m = np.array(m, dtype=complex)
    m.flags.writeable = False
    return m


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.transpose(m))


def identity(d: int) -> np.ndarray:
    return np.eye(d, dtype=complex)


def max_abs(m) -> float:
    m = np.asarray(m)
    return float(np.max(np.abs(m))) if m.size else 0.0


def max_abs_diff(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return max_abs(a - b)


def require_square(m: np.ndarray, what: str = "matrix") -> int:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"{what} must be square, got shape {m.shape}")
    return m.shape[0]


def is_hermitian(m, tol: float = DEFAULT_TOL) -> bool:
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and max_abs(m - dagger(m)) <= tol


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dagger(m))


def kron(*factors) -> np.ndarray:
    """Kronecker product of one or more matrices, folded left to right."""
    if not factors:
        raise ValueError("kron needs at least one factor")
    return reduce(np.kron, (np.asarray(f, dtype=complex) for f in factors))


def _check_dims(n: int, dims: Sequence[int]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not dims or any(d < 1 for d in dims):
        raise DimensionError(f"factor dimensions must be positive, got {dims}")
    if math.prod(dims) != n:
        raise DimensionError(f"factor dimensions {dims} do not multiply to {n}")
    return dims


def partial_trace(m, dims: Sequence[int], traced: Iterable[int]) -> np.ndarray:
    """Trace out the factors listed in ``traced`` (0-based factor indices).

    The remaining factors keep their original order. Tracing every factor
    is rejected; use ``np.trace`` for that.
    """
    m = np.asarray(m, dtype=complex)
    n = require_square(m)
    dims = _check_dims(n, dims)
    traced = sorted(set(int(t) for t in traced))
    if any(t < 0 or t >= len(dims) for t in traced):
        raise DimensionError(f"traced factors {traced} out of range for {len(dims)} factors")
    if len(traced) == len(dims):
        raise DimensionError("cannot trace out every factor; use the full trace")
    if not traced:
        return m.copy()
    k = len(dims)
    t = m.reshape(dims + dims)
    # einsum subscripts: row index i_j, column index i_j' ; traced factors share a letter
    letters = iter("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")
    rows = [next(letters) for _ in range(k)]
    cols = [rows[j] if j in traced else next(letters) for j in range(k)]
    kept = [j for j in range(k) if j not in traced]
    out = "".join(rows[j] for j in kept) + "".join(cols[j] for j in kept)
    r = np.einsum("".join(rows) + "".join(cols) + "->" + out, t)
    side = math.prod(dims[j] for j in kept)
    return r.reshape(side, side)


def keep_factor(m, dims: Sequence[int], keep: int) -> np.ndarray:
    """Partial trace over every factor except ``keep``."""
    dims = tuple(dims)
    return partial_trace(m, dims, [j for j in range(len(dims)) if j != keep])


def jacobi_eigh(h, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Parameters
    ----------
    h : array_like
        Square matrix, Hermitian to within ``tol``.
    tol : float
        Hermiticity tolerance; the rotations themselves run to machine
        precision.

    Returns
    -------
    (w, v) : eigenvalues in ascending order and the unitary whose columns
        are the matching eigenvectors, so that ``h = v @ diag(w) @ v^H``.

    Notes
    -----
    Sweeps visit pivots ``(p, q)`` with ``p < q`` in row order, so the
    result is reproducible bit for bit. Each pivot is made real by a phase
    on column ``q`` and then annihilated by a real plane rotation.
    """
    a = as_matrix(h)
    n = require_square(a, "Hermitian input")
    if max_abs(a - dagger(a)) > tol:
        raise NotHermitianError(f"matrix is not Hermitian (deviation {max_abs(a - dagger(a)):.3g})")
    a = hermitian_part(a)
    v = identity(n)
    scale = max(np.linalg.norm(a), np.finfo(float).tiny)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= 1e-300:
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                theta = (aqq - app) / (2.0 * r)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # u = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                u = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ u
                a[idx, :] = dagger(u) @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                v[:, idx] = v[:, idx] @ u
    w = np.real(np.diag(a)).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eigvalsh(h, tol: float = DEFAULT_TOL) -> np.ndarray:
    return jacobi_eigh(h, tol)[0]


def psd_sqrt(h, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Unique positive square root of a PSD matrix.

    Eigenvalues in ``[-tol, 0)`` are clamped to zero; anything lower raises
    ``NotPSDError``.
    """
    w, v = jacobi_eigh(h, tol)
    if w[0] < -tol:
        raise NotPSDError(f"matrix is not PSD: eigenvalue {w[0]:.6g} < 0")
    root = np.sqrt(np.clip(w, 0.0, None))
    return hermitian_part((v * root) @ dagger(v))


def psd_factors(h, tol: float = DEFAULT_TOL, cutoff: float = 1e-14) -> list[tuple[float, np.ndarray]]:
    """Rank factorization of a PSD matrix as ``[(eigenvalue, eigenvector), ...]``.

    Eigenvalues at or below ``cutoff * max(1, |h|_max)`` are dropped. The
    cutoff stays far below ``tol`` so that the discarded mass cannot add up
    to a visible error.
    """
    w, v = jacobi_eigh(h, tol)
    if w[0] < -tol:
        raise NotPSDError(f"matrix is not PSD: eigenvalue {w[0]:.6g} < 0")
    floor = cutoff * max(1.0, max_abs(h))
    return [(float(w[k]), v[:, k].copy()) for k in range(len(w)) if w[k] > floor]


@dataclass(frozen=True)
class EffectCheck:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def validate_effect(m, tol: float = DEFAULT_TOL) -> EffectCheck:
    """Check ``0 <= m <= I`` within ``tol`` and say what failed if not."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return EffectCheck(False, f"not square: shape {m.shape}")
    herm_dev = max_abs(m - dagger(m))
    if herm_dev > tol:
        return EffectCheck(False, f"not Hermitian: deviation {herm_dev:.3g}")
    w = eigvalsh(m, tol)
    if w[0] < -tol:
        return EffectCheck(False, f"eigenvalue {w[0]:.6g} < 0")
    if w[-1] > 1.0 + tol:
        return EffectCheck(False, f"eigenvalue {w[-1]:.6g} > 1")
    return EffectCheck(True)


def is_psd(m, tol: float = DEFAULT_TOL) -> bool:
    m = np.asarray(m)
    return is_hermitian(m, tol) and eigvalsh(m, tol)[0] >= -tol


def matrix_units(d: int) -> list[np.ndarray]:
    """The standard basis ``E_kl`` of d x d matrices."""
    units = []
    for k in range(d):
        for l in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[k, l] = 1.0
            units.append(e)
    return units


def basis_bra(dims: Sequence[int], keep: int, index: Sequence[int]) -> np.ndarray:
    """``I_keep`` tensored with bras ``<index_j|`` on every other factor.

    ``index`` lists the basis labels for the non-kept factors in order.
    The result maps the composite space onto factor ``keep``.
    """
    it = iter(index)
    pieces = []
    for j, m in enumerate(dims):
        if j == keep:
            pieces.append(identity(m))
        else:
            bra = np.zeros((1, m), dtype=complex)
            bra[0, next(it)] = 1.0
            pieces.append(bra)
    return kron(*pieces)
