"""Lattice fields over a flat periodic torus and the L2 metric on them.

The base manifold is discretized as a uniform periodic lattice; the
evolution equations contain no spatial derivatives, so a plain Riemann
sum is spectrally accurate quadrature for smooth fields.  Only the Lie
derivative noise generator touches neighbouring points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .symtensor import (
    DEFAULT_SPD_FLOOR,
    SpdMat,
    SymMat,
    spd_guard,
    symmetrize,
    trace_chain,
    tri_size,
)

__all__ = [
    "Lattice",
    "TensorField",
    "MetricField",
    "NoiseBasis",
    "ebin_inner",
    "project_V0_V1",
    "lie_derivative_metric",
    "make_basis_elementary",
    "make_basis_conformal",
    "make_basis_traceless_random",
    "make_basis_lie",
    "named_vector_field",
]


@dataclass(frozen=True)
class Lattice:
    """Uniform periodic lattice on the torus [0, extent)^dim."""

    dim: int = 3
    points_per_axis: int = 1
    extent: float = 2.0 * math.pi

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.points_per_axis < 1:
            raise ValueError("points_per_axis must be >= 1")
        if not self.extent > 0:
            raise ValueError("extent must be positive")

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def num_points(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def total_weight(self) -> float:
        return self.extent**self.dim

    @property
    def cell_weight(self) -> float:
        return self.total_weight / self.num_points

    @property
    def spacing(self) -> float:
        return self.extent / self.points_per_axis

    def axis_coordinates(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.spacing

    def coordinate_grid(self) -> np.ndarray:
        """Coordinates of every point, shape (*shape, dim)."""
        axes = np.meshgrid(*([self.axis_coordinates()] * self.dim), indexing="ij")
        return np.stack(axes, axis=-1)


def _check_batch(lattice: Lattice, values) -> None:
    if values.batch_shape != lattice.shape:
        raise ValueError(
            f"field batch shape {values.batch_shape} does not match lattice {lattice.shape}"
        )
    if values.dim != lattice.dim:
        raise ValueError(f"matrix dim {values.dim} does not match lattice dim {lattice.dim}")


@dataclass(frozen=True)
class TensorField:
    """One symmetric matrix per lattice point (a tangent vector to the cone)."""

    lattice: Lattice
    values: SymMat

    def __post_init__(self):
        _check_batch(self.lattice, self.values)

    @classmethod
    def constant(cls, lattice: Lattice, mat: np.ndarray) -> "TensorField":
        full = np.broadcast_to(np.asarray(mat, dtype=float), lattice.shape + mat.shape).copy()
        return cls(lattice, SymMat(full))

    @classmethod
    def zeros(cls, lattice: Lattice) -> "TensorField":
        return cls(lattice, SymMat.zeros(lattice.dim, lattice.shape))

    @property
    def mats(self) -> np.ndarray:
        return self.values.mat

    def __add__(self, other: "TensorField") -> "TensorField":
        return TensorField(self.lattice, self.values + other.values)

    def __sub__(self, other: "TensorField") -> "TensorField":
        return TensorField(self.lattice, self.values - other.values)

    def __mul__(self, c: float) -> "TensorField":
        return TensorField(self.lattice, self.values * c)

    __rmul__ = __mul__


@dataclass(frozen=True)
class MetricField:
    """A Riemannian metric on the lattice: SPD at every point."""

    lattice: Lattice
    values: SpdMat

    def __post_init__(self):
        _check_batch(self.lattice, self.values)

    @classmethod
    def from_sym(
        cls, lattice: Lattice, values: SymMat, floor: float = DEFAULT_SPD_FLOOR
    ) -> "MetricField":
        return cls(lattice, spd_guard(values, floor))

    @classmethod
    def constant(cls, lattice: Lattice, mat: np.ndarray) -> "MetricField":
        return cls.from_sym(lattice, TensorField.constant(lattice, mat).values)

    @classmethod
    def identity(cls, lattice: Lattice) -> "MetricField":
        return cls.constant(lattice, np.eye(lattice.dim))

    @property
    def mats(self) -> np.ndarray:
        return self.values.mat

    def tangent(self) -> TensorField:
        """The same matrices viewed as a tangent vector (e.g. conformal noise)."""
        return TensorField(self.lattice, self.values.base)


def _same_lattice(*fields) -> Lattice:
    lattice = fields[0].lattice
    for f in fields[1:]:
        if f.lattice != lattice:
            raise ValueError("fields live on different lattices")
    return lattice


def ebin_inner(g: MetricField, h: TensorField, k: TensorField) -> float:
    """Discrete L2 inner product of tangent vectors h, k at the metric g.

    Riemann sum of tr(g^-1 h g^-1 k) sqrt(det g) over the lattice.
    """
    lattice = _same_lattice(g, h, k)
    dens = trace_chain(g.values, [h.values, k.values]) * g.values.sqrt_det
    return float(np.sum(dens) * lattice.cell_weight)


def project_V0_V1(g: MetricField, h: TensorField) -> tuple[TensorField, TensorField]:
    """Split h into its g-traceless part and its conformal part f*g.

    The parts sum to h and are orthogonal in the L2 inner product.
    """
    lattice = _same_lattice(g, h)
    n = lattice.dim
    f = trace_chain(g.values, [h.values]) / n
    conformal = SymMat(f[..., None, None] * g.mats)
    return (
        TensorField(lattice, SymMat(h.mats - conformal.mat)),
        TensorField(lattice, conformal),
    )


def _periodic_deriv4(values: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """Fourth-order central difference with periodic wrap-around."""
    f1 = np.roll(values, -1, axis=axis)
    f2 = np.roll(values, -2, axis=axis)
    b1 = np.roll(values, 1, axis=axis)
    b2 = np.roll(values, 2, axis=axis)
    return (8.0 * (f1 - b1) - (f2 - b2)) / (12.0 * spacing)


def lie_derivative_metric(X: np.ndarray, g: MetricField) -> TensorField:
    """Lie derivative of the metric along the vector field X.

    (L_X g)_ab = X^c d_c g_ab + g_cb d_a X^c + g_ac d_b X^c, with
    fourth-order periodic stencils.  X has shape (*lattice.shape, dim).
    """
    lattice = g.lattice
    n = lattice.dim
    X = np.asarray(X, dtype=float)
    if X.shape != lattice.shape + (n,):
        raise ValueError(f"vector field shape {X.shape} does not match lattice")
    if lattice.points_per_axis < 4:
        raise ValueError("lattice too small for the 5-point stencil (need N >= 4)")

    gm = g.mats
    # d_a X^c for all axes a: shape (*shape, a, c)
    dX = np.stack([_periodic_deriv4(X, axis, lattice.spacing) for axis in range(n)], axis=-2)
    transport = np.zeros_like(gm)
    for c in range(n):
        dg_c = _periodic_deriv4(gm, c, lattice.spacing)
        transport += X[..., c, None, None] * dg_c
    strain = dX @ gm  # (d_a X^c) g_cb
    out = transport + strain + np.swapaxes(strain, -1, -2)
    return TensorField(lattice, SymMat(out))


@dataclass(frozen=True)
class NoiseBasis:
    """A family of noise directions H_i with per-direction amplitudes.

    ``amplitudes[i]`` is the standard-deviation weight sqrt(nu_i) the
    i-th direction carries in the diffusion; operations that also accept
    a global ``nu`` treat these as relative weights (effective variance
    nu * amplitudes[i]**2).  Use :meth:`scaled` to fold a global
    sqrt(nu) into the amplitudes before driving a simulation.
    """

    elements: tuple
    amplitudes: tuple = ()

    def __post_init__(self):
        elements = tuple(self.elements)
        amps = tuple(float(a) for a in self.amplitudes) or (1.0,) * len(elements)
        if len(amps) != len(elements):
            raise ValueError("one amplitude per basis element required")
        if any(not math.isfinite(a) or a < 0 for a in amps):
            raise ValueError("amplitudes must be finite and nonnegative")
        if elements:
            _same_lattice(*elements)
        object.__setattr__(self, "elements", elements)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def size(self) -> int:
        return len(self.elements)

    @property
    def lattice(self) -> Lattice:
        return self.elements[0].lattice

    def variances(self) -> np.ndarray:
        return np.asarray(self.amplitudes) ** 2

    def scaled(self, factor: float) -> "NoiseBasis":
        return NoiseBasis(self.elements, tuple(a * factor for a in self.amplitudes))

    def stacked(self) -> np.ndarray:
        """Element matrices stacked on a new leading axis, shape (size, *lattice, n, n)."""
        return np.stack([e.mats for e in self.elements], axis=0)


def make_basis_elementary(lattice: Lattice, n: int | None = None) -> NoiseBasis:
    """Constant elementary directions: ones at (i,j) and (j,i), zero elsewhere.

    One element per unordered index pair, in row-major upper-triangle
    order; n(n+1)/2 elements in total.
    """
    n = lattice.dim if n is None else n
    if n != lattice.dim:
        raise ValueError("basis dimension must match the lattice dimension")
    elements = []
    for i in range(n):
        for j in range(i, n):
            m = np.zeros((n, n))
            m[i, j] = m[j, i] = 1.0
            elements.append(TensorField.constant(lattice, m))
    return NoiseBasis(tuple(elements))


def make_basis_conformal(g: MetricField) -> NoiseBasis:
    """Single noise direction along the metric itself (the conformal ray)."""
    return NoiseBasis((g.tangent(),))


def make_basis_traceless_random(
    g: MetricField, count: int | None = None, seed: int = 0
) -> NoiseBasis:
    """Random orthonormal constant directions, g-traceless at every point.

    Draws symmetric matrices, projects out the conformal part and
    Gram-Schmidt orthonormalizes in the Frobenius inner product, so the
    directions carry comparable weight.  Deterministic in ``seed``; by
    default spans the whole traceless subspace.
    """
    lattice = g.lattice
    n = lattice.dim
    count = (tri_size(n) - 1) if count is None else count
    if count > tri_size(n) - 1:
        raise ValueError(f"traceless subspace has only {tri_size(n) - 1} dimensions")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0x7A11,)))
    elements: list[TensorField] = []
    while len(elements) < count:
        raw = rng.standard_normal((n, n))
        h = TensorField.constant(lattice, 0.5 * (raw + raw.T))
        h0, _ = project_V0_V1(g, h)
        mat = h0.mats
        for prev in elements:
            overlap = np.sum(mat * prev.mats) / lattice.num_points
            mat = mat - overlap * prev.mats
        norm = np.sqrt(np.sum(mat * mat) / lattice.num_points)
        if norm < 1e-8:  # unlucky draw inside the span; try again
            continue
        elements.append(TensorField(lattice, SymMat(mat / norm)))
    return NoiseBasis(tuple(elements))


def make_basis_lie(g: MetricField, vector_fields: Sequence[np.ndarray]) -> NoiseBasis:
    """Noise directions L_X g for a family of vector fields X."""
    return NoiseBasis(tuple(lie_derivative_metric(X, g) for X in vector_fields))


def named_vector_field(name: str, lattice: Lattice) -> list[np.ndarray]:
    """Small catalog of vector-field families for Lie-derivative noise."""
    coords = lattice.coordinate_grid()
    n = lattice.dim
    if name == "sine":
        fields = []
        for c in range(n):
            X = np.zeros(lattice.shape + (n,))
            X[..., c] = np.sin(coords[..., c])
            fields.append(X)
        return fields
    raise ValueError(f"unknown vector field family '{name}' (available: sine)")
