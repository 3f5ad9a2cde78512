"""Pointwise algebra of symmetric matrices and metric-cone elements.

Every object here holds either a single n-by-n matrix or an arbitrary
batch of them (leading axes), so the same operations serve hand-sized
examples and whole lattice fields.  Matrices are kept exactly symmetric
by construction; serialization elsewhere uses the packed upper-triangle
layout produced by :func:`pack_triangle`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "DEFAULT_SPD_FLOOR",
    "SYMMETRY_TOL",
    "DegenerateMetric",
    "SymMat",
    "SpdMat",
    "tri_size",
    "pack_triangle",
    "unpack_triangle",
    "symmetrize",
    "times",
    "trace_chain",
    "traceless_part",
    "dir_deriv_trace",
    "spd_guard",
]

# Eigenvalue floor below which a symmetric matrix no longer counts as a
# point of the open cone of metrics.
DEFAULT_SPD_FLOOR = 1e-12

# Largest antisymmetric residual tolerated when an equation guarantees a
# symmetric result (scaled by 1 + max |entry|).
SYMMETRY_TOL = 1e-10


class DegenerateMetric(Exception):
    """A candidate metric left the positive-definite cone.

    Carries the smallest eigenvalue encountered and, when raised from a
    time integrator, the time at which the failure occurred.  Signals
    either genuine blow-up (the cone has a boundary at finite distance)
    or an over-large time step.
    """

    def __init__(self, min_eigenvalue: float, time: float | None = None):
        self.min_eigenvalue = float(min_eigenvalue)
        self.time = time
        msg = f"metric left the SPD cone (min eigenvalue {self.min_eigenvalue:.6g}"
        if time is not None:
            msg += f" at t={time:.6g}"
        super().__init__(msg + ")")


def tri_size(n: int) -> int:
    """Number of independent components of a symmetric n-by-n matrix."""
    return n * (n + 1) // 2


def pack_triangle(mat: np.ndarray) -> np.ndarray:
    """Upper triangle of ``mat`` in row-major order, shape (..., n(n+1)/2)."""
    n = mat.shape[-1]
    iu, ju = np.triu_indices(n)
    return np.ascontiguousarray(mat[..., iu, ju])


def unpack_triangle(tri: np.ndarray, n: int) -> np.ndarray:
    """Mirror packed upper-triangle components into full symmetric matrices."""
    tri = np.asarray(tri, dtype=float)
    if tri.shape[-1] != tri_size(n):
        raise ValueError(f"expected {tri_size(n)} components for n={n}, got {tri.shape[-1]}")
    iu, ju = np.triu_indices(n)
    out = np.zeros(tri.shape[:-1] + (n, n))
    out[..., iu, ju] = tri
    out[..., ju, iu] = tri
    return out


def symmetrize(mat: np.ndarray, tol: float | None = SYMMETRY_TOL) -> np.ndarray:
    """Return (X + X^T)/2 over the trailing two axes.

    With ``tol`` set, asserts that the antisymmetric residual is below
    ``tol * (1 + max|X|)``; use it where an equation guarantees a
    symmetric result, so transcription errors fail loudly.
    """
    mat = np.asarray(mat, dtype=float)
    sym = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    if tol is not None:
        residual = np.max(np.abs(mat - np.swapaxes(mat, -1, -2))) if mat.size else 0.0
        scale = 1.0 + (np.max(np.abs(mat)) if mat.size else 0.0)
        if not residual <= tol * scale:
            raise AssertionError(
                f"antisymmetric residual {residual:.3e} exceeds {tol:.1e} * {scale:.3e}"
            )
    return sym


def _validate_square(mat: np.ndarray) -> None:
    if mat.ndim < 2 or mat.shape[-1] != mat.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {mat.shape}")


@dataclass(frozen=True)
class SymMat:
    """Symmetric n-by-n matrices, exactly equal to their transpose.

    ``mat`` has shape (..., n, n); leading axes are a free batch (a
    lattice of values, Monte Carlo samples, ...).  The array is made
    read-only so values can be shared between threads.
    """

    mat: np.ndarray

    def __post_init__(self):
        mat = np.array(self.mat, dtype=float)
        _validate_square(mat)
        if not np.all(np.isfinite(mat)):
            raise ValueError("non-finite entries in symmetric matrix")
        if not np.array_equal(mat, np.swapaxes(mat, -1, -2)):
            raise ValueError("matrix is not exactly symmetric; use SymMat.from_matrix")
        mat.flags.writeable = False
        object.__setattr__(self, "mat", mat)

    @classmethod
    def from_matrix(cls, mat: np.ndarray, tol: float | None = SYMMETRY_TOL) -> "SymMat":
        """Symmetrize a nearly-symmetric matrix and wrap it."""
        return cls(symmetrize(mat, tol))

    @classmethod
    def from_triangle(cls, tri: np.ndarray, n: int) -> "SymMat":
        return cls(unpack_triangle(tri, n))

    @classmethod
    def zeros(cls, n: int, batch_shape: tuple = ()) -> "SymMat":
        return cls(np.zeros(batch_shape + (n, n)))

    @classmethod
    def eye(cls, n: int, batch_shape: tuple = ()) -> "SymMat":
        return cls(np.broadcast_to(np.eye(n), batch_shape + (n, n)).copy())

    @property
    def dim(self) -> int:
        return self.mat.shape[-1]

    @property
    def batch_shape(self) -> tuple:
        return self.mat.shape[:-2]

    @property
    def tri(self) -> np.ndarray:
        """Packed upper-triangle components, row-major."""
        return pack_triangle(self.mat)

    def __add__(self, other: "SymMat") -> "SymMat":
        return SymMat(self.mat + other.mat)

    def __sub__(self, other: "SymMat") -> "SymMat":
        return SymMat(self.mat - other.mat)

    def __mul__(self, c: float) -> "SymMat":
        return SymMat(self.mat * c)

    __rmul__ = __mul__

    def __neg__(self) -> "SymMat":
        return SymMat(-self.mat)


@dataclass(frozen=True)
class SpdMat:
    """A symmetric positive-definite matrix with cached inverse and volume data.

    Construct through :func:`spd_guard`, which enforces the eigenvalue
    floor; ``inv`` is exactly symmetric, ``sqrt_det`` equals
    ``sqrt(det)`` to rounding.
    """

    base: SymMat
    inv: np.ndarray
    det: np.ndarray
    sqrt_det: np.ndarray

    def __post_init__(self):
        for name in ("inv", "det", "sqrt_det"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def mat(self) -> np.ndarray:
        return self.base.mat

    @property
    def dim(self) -> int:
        return self.base.dim

    @property
    def batch_shape(self) -> tuple:
        return self.base.batch_shape


def det_sym(mat: np.ndarray) -> np.ndarray:
    """Determinant over the trailing axes; cofactor formulas for n <= 3."""
    n = mat.shape[-1]
    m = mat
    if n == 1:
        return m[..., 0, 0].copy()
    if n == 2:
        return m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    if n == 3:
        return (
            m[..., 0, 0] * (m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1])
            - m[..., 0, 1] * (m[..., 1, 0] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 0])
            + m[..., 0, 2] * (m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0])
        )
    return np.linalg.det(mat)


def inv_sym(mat: np.ndarray, det: np.ndarray | None = None) -> np.ndarray:
    """Inverse of symmetric matrices, exactly symmetric in its entries.

    Adjugate formulas for n <= 3, LU factorization above; either way the
    result is mirrored from its upper triangle so the inverse of a
    symmetric matrix is bit-symmetric.
    """
    n = mat.shape[-1]
    if det is None:
        det = det_sym(mat)
    m = mat
    if n == 1:
        return (1.0 / m).copy()
    if n == 2:
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1] / det
        out[..., 1, 1] = m[..., 0, 0] / det
        out[..., 0, 1] = out[..., 1, 0] = -m[..., 0, 1] / det
        return out
    if n == 3:
        a, b, c = m[..., 0, 0], m[..., 0, 1], m[..., 0, 2]
        d, e, f = m[..., 1, 1], m[..., 1, 2], m[..., 2, 2]
        out = np.empty_like(m)
        out[..., 0, 0] = (d * f - e * e) / det
        out[..., 1, 1] = (a * f - c * c) / det
        out[..., 2, 2] = (a * d - b * b) / det
        out[..., 0, 1] = out[..., 1, 0] = (c * e - b * f) / det
        out[..., 0, 2] = out[..., 2, 0] = (b * e - c * d) / det
        out[..., 1, 2] = out[..., 2, 1] = (b * c - a * e) / det
        return out
    inv = np.linalg.inv(mat)
    iu, ju = np.triu_indices(n)
    inv[..., ju, iu] = inv[..., iu, ju]
    return inv


def spd_guard(m: SymMat, floor: float = DEFAULT_SPD_FLOOR) -> SpdMat:
    """Admit ``m`` into the metric cone, caching inverse and volume data.

    Raises :class:`DegenerateMetric` unless every eigenvalue exceeds
    ``floor``.  The loud failure is deliberate: geodesics can reach the
    boundary of the cone in finite time, and silent NaNs would corrupt
    every downstream statistic.
    """
    eigs = np.linalg.eigvalsh(m.mat)
    min_eig = float(np.min(eigs))
    if not min_eig > floor:
        raise DegenerateMetric(min_eig)
    det = det_sym(m.mat)
    return SpdMat(base=m, inv=inv_sym(m.mat, det), det=det, sqrt_det=np.sqrt(det))


def _check_dims(g: SpdMat, *hs: SymMat) -> None:
    for h in hs:
        if h.dim != g.dim:
            raise ValueError(f"dimension mismatch: {h.dim} vs {g.dim}")


def times(g: SpdMat, h: SymMat, k: SymMat) -> np.ndarray:
    """The g-twisted product h g^-1 k.

    Generally non-symmetric, so the full matrix is returned; callers
    symmetrize only where an equation guarantees symmetry.
    """
    _check_dims(g, h, k)
    return h.mat @ g.inv @ k.mat


def trace_chain(g: SpdMat, hs: Sequence[SymMat]) -> np.ndarray:
    """tr(g^-1 h1 g^-1 h2 ... g^-1 hm) over the batch.

    For a single entry this is the g-trace tr(g^-1 h).
    """
    if len(hs) == 0:
        raise ValueError("trace_chain needs at least one matrix")
    _check_dims(g, *hs)
    acc = g.inv @ hs[0].mat
    for h in hs[1:]:
        acc = acc @ g.inv @ h.mat
    return np.trace(acc, axis1=-2, axis2=-1)


def traceless_part(g: SpdMat, h: SymMat) -> SymMat:
    """Projection of h onto the g-traceless subspace: h - tr_g(h) g / n."""
    _check_dims(g, h)
    n = g.dim
    tr = trace_chain(g, [h]) / n
    return SymMat(h.mat - tr[..., None, None] * g.mat)


def dir_deriv_trace(g: SpdMat, H: SymMat, A: SymMat) -> np.ndarray:
    """Directional derivative of g -> tr_g(H) along the direction A.

    Equals -tr(g^-1 A g^-1 H); agrees with central finite differences of
    tr((g + eps A)^-1 H).
    """
    _check_dims(g, H, A)
    return -trace_chain(g, [A, H])
