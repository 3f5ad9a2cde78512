"""Time integration on the cone of metrics.

Deterministic flows (the L2 geodesic equation and its noise-corrected
Euler-Lagrange counterpart) use classical fixed-step RK4.  The additive
diffusion is stepped with Euler-Maruyama, which is exact in
distribution for constant drift because the noise is state-independent.
Every accepted deterministic stage passes the SPD guard; stochastic
paths record cone exits per sample but keep running, since only the
drift is required to stay inside the cone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .fields import Lattice, MetricField, NoiseBasis, TensorField
from .symtensor import (
    DEFAULT_SPD_FLOOR,
    DegenerateMetric,
    SpdMat,
    SymMat,
    symmetrize,
    trace_chain,
)

__all__ = [
    "TimeGrid",
    "TimePath",
    "SdeEnsemble",
    "geodesic_rhs",
    "integrate_geodesic",
    "correction_L",
    "el_rhs",
    "integrate_el",
    "simulate_metric_sde",
    "inverse_sde_coeffs",
    "volume_ito_coeffs",
    "conformal_scale",
]


def conformal_scale(t, a0: float, n: int = 3):
    """Closed-form scale factor of the conformal geodesic g(t) = c(t) g0.

    Starting from dg/dt = a0 g0 at t = 0, the geodesic flow keeps the
    conformal ray and c(t) = (1 + n a0 t / 4)^(4/n); for a0 < 0 the
    metric collapses at t = -4 / (n a0).
    """
    return (1.0 + 0.25 * n * a0 * np.asarray(t)) ** (4.0 / n)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_j = a + j dt on [a, b] with the given number of steps."""

    a: float
    b: float
    steps: int

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("need b > a")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    @property
    def dt(self) -> float:
        return (self.b - self.a) / self.steps

    def times(self) -> np.ndarray:
        return self.a + self.dt * np.arange(self.steps + 1)

    def refined(self, factor: int) -> "TimeGrid":
        return TimeGrid(self.a, self.b, self.steps * factor)


@dataclass(frozen=True)
class TimePath:
    """A field sampled at every node of a time grid."""

    grid: TimeGrid
    samples: tuple

    def __post_init__(self):
        samples = tuple(self.samples)
        if len(samples) != self.grid.steps + 1:
            raise ValueError(f"need {self.grid.steps + 1} samples, got {len(samples)}")
        lattice = samples[0].lattice
        for s in samples[1:]:
            if s.lattice != lattice:
                raise ValueError("path samples live on different lattices")
        object.__setattr__(self, "samples", samples)

    @property
    def lattice(self) -> Lattice:
        return self.samples[0].lattice

    @classmethod
    def constant(cls, grid: TimeGrid, field) -> "TimePath":
        return cls(grid, (field,) * (grid.steps + 1))

    @classmethod
    def from_stack(cls, grid: TimeGrid, lattice: Lattice, stack: np.ndarray) -> "TimePath":
        fields = tuple(TensorField(lattice, SymMat(stack[j])) for j in range(stack.shape[0]))
        return cls(grid, fields)

    def stack(self) -> np.ndarray:
        """Raw matrices, shape (steps+1, *lattice.shape, n, n)."""
        return np.stack([s.mats for s in self.samples], axis=0)

    def derivative_stack(self) -> np.ndarray:
        """Second-order time derivative at every node (one-sided at the ends)."""
        f = self.stack()
        dt = self.grid.dt
        out = np.empty_like(f)
        out[1:-1] = (f[2:] - f[:-2]) / (2.0 * dt)
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dt)
        out[-1] = (3.0 * f[-1] - 4.0 * f[-2] + f[-3]) / (2.0 * dt)
        return out

    def require_variation(self, tol: float = 0.0) -> None:
        """Check the endpoint condition V(a) = V(b) = 0 demanded of variations."""
        for idx in (0, -1):
            worst = float(np.max(np.abs(self.samples[idx].mats)))
            if worst > tol:
                raise ValueError(f"variation path is nonzero at an endpoint (max {worst:.3e})")


# ---------------------------------------------------------------------------
# Right-hand sides


def _geodesic_rhs_raw(gmat: np.ndarray, ginv: np.ndarray, kmat: np.ndarray) -> np.ndarray:
    m = ginv @ kmat
    quad = kmat @ m  # k g^-1 k
    tr_kk = np.trace(m @ m, axis1=-2, axis2=-1)
    tr_k = np.trace(m, axis1=-2, axis2=-1)
    return quad + 0.25 * tr_kk[..., None, None] * gmat - 0.5 * tr_k[..., None, None] * kmat


def geodesic_rhs(g: MetricField, gdot: TensorField) -> TensorField:
    """Acceleration of the L2 geodesic flow at (g, gdot).

    d2g/dt2 = gdot x gdot + tr_g(gdot x gdot) g / 4 - tr_g(gdot) gdot / 2,
    where x is the g-twisted product.
    """
    raw = _geodesic_rhs_raw(g.mats, g.values.inv, gdot.mats)
    return TensorField(g.lattice, SymMat.from_matrix(raw))


def _correction_raw(
    gmat: np.ndarray,
    ginv: np.ndarray,
    kmat: np.ndarray,
    element_mats: Sequence[np.ndarray],
    weights: Sequence[float],
) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(gmat.shape, kmat.shape))
    k_g = kmat @ ginv
    for hmat, w in zip(element_mats, weights):
        if w == 0.0:
            continue
        h_g = hmat @ ginv  # H g^-1
        hh = h_g @ hmat  # H g^-1 H
        tr_h = np.trace(ginv @ hmat, axis1=-2, axis2=-1)
        dd = -np.trace(h_g @ h_g, axis1=-2, axis2=-1)  # derivative of tr_g(H) along H
        chains = h_g @ h_g @ kmat + h_g @ k_g @ hmat + k_g @ h_g @ hmat
        scalar = 0.25 * (dd + 0.5 * tr_h**2)
        cross = h_g @ kmat + k_g @ hmat
        out = out + w * (
            chains
            + scalar[..., None, None] * kmat
            - 0.5 * tr_h[..., None, None] * cross
        )
    return out


def correction_L(g: MetricField, K: TensorField, basis: NoiseBasis) -> TensorField:
    """Second-order noise correction operator applied to K.

    Sums, over the basis directions H weighted by their squared
    amplitudes, the three twisted chains HxHxK + HxKxH + KxHxH, the
    scalar term (H tr_g(H) + tr_g(H)^2 / 2) K / 4 and the cross term
    - tr_g(H) (HxK + KxH) / 2.  Linear in K; an empty basis gives zero.
    """
    if basis.size and basis.lattice != g.lattice:
        raise ValueError("noise basis lives on a different lattice")
    raw = _correction_raw(
        g.mats,
        g.values.inv,
        K.mats,
        [e.mats for e in basis.elements],
        basis.variances(),
    )
    return TensorField(g.lattice, SymMat.from_matrix(raw))


def el_rhs(g: MetricField, K: TensorField, basis: NoiseBasis, nu: float) -> TensorField:
    """Right side of the noise-corrected Euler-Lagrange equation for K.

    dK/dt = K x K + tr_g(K x K) g / 4 - tr_g(K) K / 2 - nu * correction;
    at nu = 0 this is exactly the geodesic acceleration.
    """
    raw = _geodesic_rhs_raw(g.mats, g.values.inv, K.mats)
    if nu != 0.0 and basis.size:
        raw = raw - nu * _correction_raw(
            g.mats, g.values.inv, K.mats, [e.mats for e in basis.elements], basis.variances()
        )
    return TensorField(g.lattice, SymMat.from_matrix(raw))


# ---------------------------------------------------------------------------
# Deterministic integration (classical RK4 on the first-order system)


def _integrate_pair(
    g0: MetricField,
    v0: TensorField,
    accel: Callable[[MetricField, TensorField], TensorField],
    grid: TimeGrid,
    floor: float,
) -> tuple[TimePath, TimePath]:
    lattice = g0.lattice
    dt = grid.dt

    def guarded(gmat: np.ndarray, t: float) -> MetricField:
        try:
            return MetricField.from_sym(lattice, SymMat(gmat), floor)
        except DegenerateMetric as err:
            raise DegenerateMetric(err.min_eigenvalue, time=t) from None

    g_samples = [g0]
    v_samples = [v0]
    gmat, vmat = g0.mats, v0.mats
    gfield = g0
    vfield = v0
    for j in range(grid.steps):
        t = grid.a + j * dt
        k1g = vmat
        k1v = accel(gfield, vfield).mats

        g2 = guarded(gmat + 0.5 * dt * k1g, t + 0.5 * dt)
        v2 = TensorField(lattice, SymMat(vmat + 0.5 * dt * k1v))
        k2g, k2v = v2.mats, accel(g2, v2).mats

        g3 = guarded(gmat + 0.5 * dt * k2g, t + 0.5 * dt)
        v3 = TensorField(lattice, SymMat(vmat + 0.5 * dt * k2v))
        k3g, k3v = v3.mats, accel(g3, v3).mats

        g4 = guarded(gmat + dt * k3g, t + dt)
        v4 = TensorField(lattice, SymMat(vmat + dt * k3v))
        k4g, k4v = v4.mats, accel(g4, v4).mats

        gmat = gmat + (dt / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        vmat = vmat + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        gfield = guarded(gmat, t + dt)
        vfield = TensorField(lattice, SymMat(vmat))
        g_samples.append(gfield)
        v_samples.append(vfield)
    return TimePath(grid, tuple(g_samples)), TimePath(grid, tuple(v_samples))


def integrate_geodesic(
    g0: MetricField,
    gdot0: TensorField,
    grid: TimeGrid,
    floor: float = DEFAULT_SPD_FLOOR,
) -> tuple[TimePath, TimePath]:
    """Integrate the L2 geodesic equation from (g0, gdot0).

    Returns the metric path and the velocity path on the grid nodes.
    Raises DegenerateMetric, tagged with the failure time, if the flow
    reaches the cone boundary.
    """
    return _integrate_pair(g0, gdot0, geodesic_rhs, grid, floor)


def integrate_el(
    g0: MetricField,
    K0: TensorField,
    basis: NoiseBasis,
    nu: float,
    grid: TimeGrid,
    floor: float = DEFAULT_SPD_FLOOR,
) -> tuple[TimePath, TimePath]:
    """Integrate the coupled system dg/dt = K, dK/dt = el_rhs(g, K).

    The drift path of a critical diffusion; at nu = 0 it reproduces
    integrate_geodesic exactly (same arithmetic).
    """
    return _integrate_pair(
        g0, K0, lambda g, K: el_rhs(g, K, basis, nu), grid, floor
    )


# ---------------------------------------------------------------------------
# Stochastic simulation


@dataclass(frozen=True)
class SdeEnsemble:
    """Euler-Maruyama sample paths of the metric diffusion.

    ``values[s, j]`` is the sample-s state at grid node j (full matrices
    over the lattice).  ``spd_exit_step[s]`` is the first node at which
    sample s left the SPD cone, or -1 if it never did.  Paths are kept
    after an exit; only statistics that need the volume element must
    mask them.
    """

    grid: TimeGrid
    lattice: Lattice
    values: np.ndarray
    spd_exit_step: np.ndarray

    def __post_init__(self):
        self.values.flags.writeable = False
        self.spd_exit_step.flags.writeable = False

    @property
    def sample_count(self) -> int:
        return self.values.shape[0]

    def path(self, s: int) -> TimePath:
        return TimePath.from_stack(self.grid, self.lattice, self.values[s])

    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def _noise_step(increments_j: np.ndarray, amps: np.ndarray, stacked: np.ndarray) -> np.ndarray:
    """Sum_i amp_i H_i dW_i(j) for every sample; increments_j has shape (S, B)."""
    return np.einsum("sb,b...->s...", increments_j * amps, stacked)


def simulate_metric_sde(
    g0: MetricField,
    K: TimePath,
    basis: NoiseBasis,
    dW,
    check_spd: bool = True,
    floor: float = DEFAULT_SPD_FLOOR,
) -> SdeEnsemble:
    """Euler-Maruyama on dg = sum_i amp_i H_i dW_i + K dt.

    The basis amplitudes are used as absolute noise weights sqrt(nu_i);
    fold any global sqrt(nu) in with ``basis.scaled`` beforehand.  The
    drift uses the left-endpoint rule, so the sample mean of
    (g_{j+1} - g_j)/dt is exactly K(t_j) in expectation.
    """
    grid = K.grid
    if dW.grid != grid:
        raise ValueError("Brownian increments live on a different time grid")
    if dW.basis_count != basis.size:
        raise ValueError(f"need {basis.size} Brownian motions, got {dW.basis_count}")
    if basis.size and basis.lattice != g0.lattice:
        raise ValueError("noise basis lives on a different lattice")
    if K.lattice != g0.lattice:
        raise ValueError("drift path lives on a different lattice")

    S = dW.samples
    J = grid.steps
    dt = grid.dt
    lattice = g0.lattice
    n = lattice.dim
    kstack = K.stack()
    stacked = basis.stacked() if basis.size else np.zeros((0,) + lattice.shape + (n, n))
    amps = np.asarray(basis.amplitudes)

    values = np.empty((S, J + 1) + lattice.shape + (n, n))
    values[:, 0] = g0.mats
    state = np.broadcast_to(g0.mats, (S,) + lattice.shape + (n, n)).copy()
    exit_step = np.full(S, -1, dtype=int)

    def record_exits(j: int) -> None:
        eigs = np.linalg.eigvalsh(state)
        min_eig = eigs[..., 0].reshape(S, -1).min(axis=1)
        newly = (exit_step < 0) & (min_eig <= floor)
        exit_step[newly] = j

    for j in range(J):
        drift = kstack[j]
        if basis.size:
            state = state + _noise_step(dW.increments[:, :, j], amps, stacked) + dt * drift
        else:
            state = state + dt * drift
        values[:, j + 1] = state
        if check_spd:
            record_exits(j + 1)
    return SdeEnsemble(grid=grid, lattice=lattice, values=values, spd_exit_step=exit_step)


# ---------------------------------------------------------------------------
# Ito coefficients for derived processes


def _element_list(elements) -> list:
    return list(elements)


def inverse_sde_coeffs(
    g: SpdMat,
    K: SymMat,
    elements: Sequence[SymMat],
    nu: float,
    amplitudes: Sequence[float] | None = None,
) -> tuple[list[np.ndarray], np.ndarray]:
    """Ito coefficients of the inverse-metric process.

    d(g^-1) = sum_i D_i dW_i + drift dt with
    D_i = -sqrt(nu_i) g^-1 H_i g^-1 and
    drift = -g^-1 (K - sum_i nu_i H_i g^-1 H_i) g^-1,
    where nu_i = nu * amplitude_i^2.
    """
    elements = _element_list(elements)
    amps = np.ones(len(elements)) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    ginv = g.inv
    diffusions = []
    correction = np.zeros_like(g.mat)
    for h, a in zip(elements, amps):
        gh = ginv @ h.mat
        diffusions.append(-np.sqrt(nu) * a * (gh @ ginv))
        correction = correction + (nu * a * a) * (h.mat @ ginv @ h.mat)
    drift = -ginv @ (K.mat - correction) @ ginv
    return diffusions, drift


def volume_ito_coeffs(
    g: SpdMat,
    K: SymMat,
    elements: Sequence[SymMat],
    nu: float,
    amplitudes: Sequence[float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Ito coefficients of the volume density sqrt(det g), per unit volume.

    d vol = (sum_i c_i dW_i + c0 dt) vol with
    c_i = sqrt(nu_i) tr_g(H_i) / 2 and
    c0 = (tr_g(K) + sum_i nu_i (H_i tr_g(H_i) + tr_g(H_i)^2 / 2) / 2) / 2,
    where H_i tr_g(H_i) = -tr(g^-1 H_i g^-1 H_i) is the derivative of
    the g-trace along the direction itself.
    """
    elements = _element_list(elements)
    amps = np.ones(len(elements)) if amplitudes is None else np.asarray(amplitudes, dtype=float)
    tr_k = trace_chain(g, [K])
    noise = []
    second_order = np.zeros(np.shape(tr_k))
    for h, a in zip(elements, amps):
        tr_h = trace_chain(g, [h])
        dd = -trace_chain(g, [h, h])
        noise.append(0.5 * np.sqrt(nu) * a * tr_h)
        second_order = second_order + (nu * a * a) * (dd + 0.5 * tr_h**2)
    drift = 0.5 * (tr_k + 0.5 * second_order)
    return np.asarray(noise), drift
