"""Monte Carlo verification of the stochastic calculus on the metric cone.

Every two-sided comparison here runs both sides on identical Brownian
paths (common random numbers), so the statistical error of the
difference is far below that of either side.  Reductions use numpy's
pairwise summation over arrays of fixed layout, which makes every
reported number independent of thread count.

The pass rule is |lhs - rhs| <= 3 * SE + abs_floor with
abs_floor = 1e-9 * (|lhs| + |rhs| + 1): the identities under test are
exact in expectation, so three standard errors plus a rounding floor
covers both Monte Carlo noise and arithmetic error.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import TimeGrid, TimePath, SdeEnsemble, simulate_metric_sde
from .fields import MetricField, NoiseBasis, TensorField
from .randomness import BrownianPaths, sample_brownian
from .symtensor import SymMat, det_sym, inv_sym

__all__ = [
    "BrownianPaths",
    "sample_brownian",
    "McReport",
    "DriftEstimate",
    "estimate_drift",
    "verify_ibp",
    "ibp_martingale_sums",
    "action_J",
    "verify_critical_point",
    "verify_volume_ito",
    "verify_inverse_sde",
    "convergence_order",
]

_DET_FLOOR = 1e-12


@dataclass(frozen=True)
class McReport:
    """Outcome of one Monte Carlo comparison."""

    lhs: float
    rhs: float
    standard_error: float
    samples: int
    passed: bool

    @classmethod
    def from_comparison(
        cls,
        lhs: float,
        rhs: float,
        standard_error: float,
        samples: int,
        extra_allowance: float = 0.0,
    ) -> "McReport":
        abs_floor = 1e-9 * (abs(lhs) + abs(rhs) + 1.0)
        passed = abs(lhs - rhs) <= 3.0 * standard_error + extra_allowance + abs_floor
        return cls(lhs, rhs, float(standard_error), int(samples), bool(passed))

    def as_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "se": self.standard_error,
            "samples": self.samples,
            "pass": self.passed,
        }


# ---------------------------------------------------------------------------
# Streaming path evaluation


class _StateStream:
    """Walk an ensemble of diffusion paths one time node at a time.

    Keeps only the current state (samples, points, n, n) in memory;
    the drift integral is accumulated with the trapezoid rule, which is
    exact for the additive-noise process whenever the drift is linear
    between nodes.
    """

    def __init__(
        self,
        g0: MetricField,
        K: TimePath,
        basis: NoiseBasis,
        nu: float,
        paths: BrownianPaths,
    ):
        if K.grid != paths.grid:
            raise ValueError("drift path and Brownian paths use different time grids")
        if basis.size and basis.lattice != g0.lattice:
            raise ValueError("noise basis lives on a different lattice")
        if K.lattice != g0.lattice:
            raise ValueError("drift path lives on a different lattice")
        if basis.size != paths.basis_count:
            raise ValueError(f"need {basis.size} Brownian motions, got {paths.basis_count}")
        lattice = g0.lattice
        n = lattice.dim
        P = lattice.num_points
        self.lattice = lattice
        self.n = n
        self.P = P
        self.grid = K.grid
        self.kflat = K.stack().reshape(self.grid.steps + 1, P, n, n)
        self.increments = paths.increments
        self.amps = np.sqrt(max(nu, 0.0)) * np.asarray(basis.amplitudes)
        self.stacked = (
            basis.stacked().reshape(basis.size, P, n, n)
            if basis.size
            else np.zeros((0, P, n, n))
        )
        # With the noise off every sample is the same deterministic path:
        # walk one representative and report the requested sample count.
        self.noise_off = not np.any(self.amps > 0.0)
        self.reported_samples = paths.samples
        self.S = 1 if self.noise_off else paths.samples
        self.state = np.broadcast_to(g0.mats.reshape(P, n, n), (self.S, P, n, n)).copy()
        self.valid = np.ones(self.S, dtype=bool)

    def advance(self, j: int) -> None:
        """Move the state from node j to node j+1."""
        dt = self.grid.dt
        drift = 0.5 * (self.kflat[j] + self.kflat[j + 1])
        if self.stacked.shape[0] and not self.noise_off:
            noise = np.einsum(
                "sb,bpij->spij", self.increments[:, :, j] * self.amps, self.stacked
            )
            self.state = self.state + noise + dt * drift
        else:
            self.state = self.state + dt * drift

    def inv_det(self, state: np.ndarray | None = None):
        """Inverse and determinant of the current (or given) state.

        Points whose determinant or diagonal leaves the positive cone
        mark their whole sample invalid; their matrices are replaced by
        the identity so downstream arithmetic stays finite.
        """
        G = self.state if state is None else state
        det = det_sym(G)
        diag_min = np.diagonal(G, axis1=-2, axis2=-1).min(axis=-1)
        bad = ~((det > _DET_FLOOR) & (diag_min > 0.0))
        if bad.any():
            self.valid &= ~bad.any(axis=tuple(range(1, bad.ndim)))
            G = np.where(bad[..., None, None], np.eye(self.n), G)
            det = np.where(bad, 1.0, det)
        return inv_sym(G, det), det


def _trace_pair(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ji->...", a, b)


def _ebin_raw(ginv, sqdet, a, b, cell_weight) -> np.ndarray:
    """L2 inner product per sample: sum over points of tr(g^-1 a g^-1 b) sqrt(det)."""
    dens = _trace_pair(ginv @ a, ginv @ b)
    return (dens * sqdet).sum(axis=-1) * cell_weight


def _trapezoid_weight(j: int, steps: int, dt: float) -> float:
    return 0.5 * dt if j in (0, steps) else dt


# ---------------------------------------------------------------------------
# Drift extraction


@dataclass(frozen=True)
class DriftEstimate:
    """Sample mean of (g_{j+1} - g_j)/dt with per-entry standard errors."""

    mean: TensorField
    stderr: np.ndarray
    samples: int


def estimate_drift(ensemble: SdeEnsemble, j: int) -> DriftEstimate:
    """Estimate the bounded-variation part of the diffusion at node j.

    Averages the forward difference quotient across samples; with the
    noise off this returns the drift exactly.
    """
    S = ensemble.sample_count
    if S < 2:
        raise ValueError("need at least 2 samples to estimate a drift")
    if not 0 <= j < ensemble.grid.steps:
        raise ValueError(f"step index {j} outside 0..{ensemble.grid.steps - 1}")
    dt = ensemble.grid.dt
    quotients = (ensemble.values[:, j + 1] - ensemble.values[:, j]) / dt
    mean = quotients.mean(axis=0)
    stderr = quotients.std(axis=0, ddof=1) / np.sqrt(S)
    return DriftEstimate(
        mean=TensorField(ensemble.lattice, SymMat(mean)),
        stderr=stderr,
        samples=S,
    )


# ---------------------------------------------------------------------------
# Integration by parts


def verify_ibp(
    g0: MetricField,
    K: TimePath,
    V: TimePath,
    basis: NoiseBasis,
    nu: float,
    paths: BrownianPaths,
) -> McReport:
    """Check the stochastic integration-by-parts identity.

    Left side: E integral of <K, dV/dt> in the L2 metric along the
    simulated diffusion; right side: the drift and noise-correction
    terms moved onto V.  Both sides ride the same Brownian paths and are
    integrated with the trapezoid rule; time derivatives of the supplied
    paths use second-order differences.

    With the noise off (nu = 0, an empty basis, or all-zero amplitudes)
    every sample coincides and the standard error collapses to zero; the
    comparison is then judged at a 1e-6 relative tolerance, which is the
    reach of the time discretization.
    """
    V.require_variation()
    if V.grid != K.grid:
        raise ValueError("K and V must share a time grid")
    stream = _StateStream(g0, K, basis, nu, paths)
    grid = stream.grid
    steps = grid.steps
    P, n = stream.P, stream.n
    cw = stream.lattice.cell_weight

    kflat = stream.kflat
    vflat = V.stack().reshape(steps + 1, P, n, n)
    dkflat = K.derivative_stack().reshape(steps + 1, P, n, n)
    dvflat = V.derivative_stack().reshape(steps + 1, P, n, n)
    variances = max(nu, 0.0) * np.asarray(basis.variances())

    lhs_acc = np.zeros(stream.S)
    rhs_acc = np.zeros(stream.S)
    for j in range(steps + 1):
        w = _trapezoid_weight(j, steps, grid.dt)
        ginv, det = stream.inv_det()
        sqdet = np.sqrt(det)
        kj, vj, dkj, dvj = kflat[j], vflat[j], dkflat[j], dvflat[j]

        lhs_acc += w * _ebin_raw(ginv, sqdet, kj, dvj, cw)

        m = ginv @ kj
        kxk = kj @ m
        tr_k = np.trace(m, axis1=-2, axis2=-1)
        first = -2.0 * kxk + dkj + 0.5 * tr_k[..., None, None] * kj
        total = -_ebin_raw(ginv, sqdet, first, vj, cw)
        for h, var in zip(stream.stacked, variances):
            if var == 0.0:
                continue
            h_g = h @ ginv
            tr_h = np.trace(ginv @ h, axis1=-2, axis2=-1)
            dd = -_trace_pair(h_g, h_g)
            chains = h_g @ h_g @ kj + kj @ ginv @ h_g @ h + h_g @ kj @ ginv @ h
            scalar = 0.5 * (dd + 0.5 * tr_h**2)
            cross = h_g @ kj + kj @ ginv @ h
            second = scalar[..., None, None] * kj - tr_h[..., None, None] * cross
            total -= var * (
                _ebin_raw(ginv, sqdet, chains, vj, cw)
                + 0.5 * _ebin_raw(ginv, sqdet, second, vj, cw)
            )
        rhs_acc += w * total
        if j < steps:
            stream.advance(j)

    valid = stream.valid
    count = int(valid.sum())
    if count == 0:
        raise RuntimeError("every sample left the metric cone; reduce noise or horizon")
    lhs = float(lhs_acc[valid].mean())
    rhs = float(rhs_acc[valid].mean())
    diff = lhs_acc[valid] - rhs_acc[valid]
    se = float(diff.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    if stream.noise_off:
        count = stream.reported_samples
        se = 0.0
    allowance = 1e-6 * (abs(lhs) + abs(rhs)) if stream.noise_off else 0.0
    return McReport.from_comparison(lhs, rhs, se, count, extra_allowance=allowance)


def ibp_martingale_sums(
    g0: MetricField,
    K: TimePath,
    V: TimePath,
    basis: NoiseBasis,
    nu: float,
    paths: BrownianPaths,
) -> np.ndarray:
    """Per-sample Ito integrals dropped by the integration-by-parts identity.

    Accumulates the dW-weighted integrands (left-point rule) whose
    expectation vanishes; used to test the martingale property directly.
    """
    V.require_variation()
    stream = _StateStream(g0, K, basis, nu, paths)
    grid = stream.grid
    steps = grid.steps
    P, n = stream.P, stream.n
    cw = stream.lattice.cell_weight
    kflat = stream.kflat
    vflat = V.stack().reshape(steps + 1, P, n, n)

    sums = np.zeros(stream.S)
    for j in range(steps):
        ginv, det = stream.inv_det()
        sqdet = np.sqrt(det)
        kj, vj = kflat[j], vflat[j]
        k_g = ginv @ kj
        v_g = ginv @ vj
        tr_kv = _trace_pair(k_g, v_g)
        for i, (h, amp) in enumerate(zip(stream.stacked, stream.amps)):
            if amp == 0.0:
                continue
            h_g = ginv @ h
            tr_h = np.trace(h_g, axis1=-2, axis2=-1)
            chain = _trace_pair(h_g @ k_g, v_g) + _trace_pair(k_g @ h_g, v_g)
            dens = (-chain + 0.5 * tr_kv * tr_h) * sqdet
            coeff = amp * dens.sum(axis=-1) * cw
            sums += coeff * paths.increments[:, i, j]
        stream.advance(j)
    return sums[stream.valid]


# ---------------------------------------------------------------------------
# Kinetic action and its criticality


def _action_samples(
    g0: MetricField,
    K: TimePath,
    V: TimePath,
    svals,
    basis: NoiseBasis,
    nu: float,
    paths: BrownianPaths,
):
    """Per-sample kinetic action at each variation size s.

    The varied process shifts the simulated path by s V(t) and its drift
    by s dV/dt; all s values share one ensemble (common random numbers).
    Returns (actions with shape (samples, len(svals)), validity mask).
    """
    V.require_variation()
    if V.grid != K.grid:
        raise ValueError("K and V must share a time grid")
    stream = _StateStream(g0, K, basis, nu, paths)
    grid = stream.grid
    steps = grid.steps
    P, n = stream.P, stream.n
    cw = stream.lattice.cell_weight
    kflat = stream.kflat
    vflat = V.stack().reshape(steps + 1, P, n, n)
    dvflat = V.derivative_stack().reshape(steps + 1, P, n, n)
    svals = np.asarray(list(svals), dtype=float)

    acc = np.zeros((stream.S, svals.size))
    for j in range(steps + 1):
        w = _trapezoid_weight(j, steps, grid.dt)
        for col, s in enumerate(svals):
            shifted = stream.state + s * vflat[j]
            ginv, det = stream.inv_det(shifted)
            sqdet = np.sqrt(det)
            vel = kflat[j] + s * dvflat[j]
            acc[:, col] += w * 0.5 * _ebin_raw(ginv, sqdet, vel, vel, cw)
        if j < steps:
            stream.advance(j)
    return acc, stream


def action_J(
    g0: MetricField,
    K: TimePath,
    V: TimePath,
    s: float,
    basis: NoiseBasis,
    nu: float,
    paths: BrownianPaths,
) -> float:
    """Monte Carlo estimate of the stochastic kinetic energy at variation size s."""
    acc, stream = _action_samples(g0, K, V, [s], basis, nu, paths)
    if not stream.valid.any():
        raise RuntimeError("every sample left the metric cone; reduce noise or horizon")
    return float(acc[stream.valid, 0].mean())


def verify_critical_point(
    g0: MetricField,
    K: TimePath,
    V: TimePath,
    basis: NoiseBasis,
    nu: float,
    paths: BrownianPaths,
    delta_s: float = 1e-3,
    return_details: bool = False,
):
    """Central-difference derivative of the kinetic action at s = 0.

    Compares dJ/ds against zero under the 3 SE rule with a curvature
    allowance of 10 * delta_s**2 for the finite-difference truncation.
    A Richardson estimate at delta_s / 2 is computed from the same
    ensemble and reported in the details.
    """
    if delta_s <= 0:
        raise ValueError("delta_s must be positive")
    svals = [-delta_s, -0.5 * delta_s, 0.5 * delta_s, delta_s]
    acc, stream = _action_samples(g0, K, V, svals, basis, nu, paths)
    valid = stream.valid
    count = int(valid.sum())
    if count == 0:
        raise RuntimeError("not enough in-cone samples for a derivative estimate")
    d_full = (acc[valid, 3] - acc[valid, 0]) / (2.0 * delta_s)
    d_half = (acc[valid, 2] - acc[valid, 1]) / delta_s
    est = float(d_full.mean())
    se = float(d_full.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    se_half = float(d_half.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    if stream.noise_off:
        count = stream.reported_samples
    allowance = 10.0 * delta_s**2
    report = McReport.from_comparison(est, 0.0, se, count, extra_allowance=allowance)
    if not return_details:
        return report
    details = {
        "richardson": float(d_half.mean()),
        "richardson_se": se_half,
        "delta_s": delta_s,
        "allowance": allowance,
        "excluded_samples": int((~valid).sum()),
    }
    return report, details


# ---------------------------------------------------------------------------
# Ito lemma checks


def verify_volume_ito(
    g0: MetricField,
    K: TimePath,
    basis: NoiseBasis,
    nu: float,
    paths: BrownianPaths,
) -> McReport:
    """Compare the Ito-integrated volume process with the direct volume.

    Euler-Maruyama steps the scalar process d vol = (sum_i c_i dW_i +
    c0 dt) vol with coefficients read off the simulated metric path; the
    terminal total volume is compared against sqrt(det g(T)) summed over
    the lattice, on the same Brownian paths.
    """
    stream = _StateStream(g0, K, basis, nu, paths)
    grid = stream.grid
    cw = stream.lattice.cell_weight
    variances = stream.amps**2

    ginv, det = stream.inv_det()
    F = np.broadcast_to(np.sqrt(det), (stream.S, stream.P)).copy()
    for j in range(grid.steps):
        ginv, det = stream.inv_det()
        kj = stream.kflat[j]
        tr_k = np.trace(ginv @ kj, axis1=-2, axis2=-1)
        second = np.zeros_like(tr_k)
        noise = np.zeros_like(F)
        for i, (h, var) in enumerate(zip(stream.stacked, variances)):
            h_g = ginv @ h
            tr_h = np.trace(h_g, axis1=-2, axis2=-1)
            dd = -_trace_pair(h_g, h_g)
            second = second + var * (dd + 0.5 * tr_h**2)
            noise = noise + 0.5 * np.sqrt(var) * tr_h * paths.increments[:, i, j, None]
        drift = 0.5 * (tr_k + 0.5 * second)
        F = F + F * (noise + drift * grid.dt)
        stream.advance(j)

    _, det_final = stream.inv_det()
    direct = np.sqrt(det_final).sum(axis=-1) * cw
    integrated = F.sum(axis=-1) * cw
    valid = stream.valid
    count = int(valid.sum())
    if count == 0:
        raise RuntimeError("not enough in-cone samples for the volume comparison")
    lhs = float(direct[valid].mean())
    rhs = float(integrated[valid].mean())
    diff = direct[valid] - integrated[valid]
    se = float(diff.std(ddof=1) / np.sqrt(count)) if count > 1 else 0.0
    allowance = 0.0
    if stream.noise_off:
        # Pure ODE mode: judged against the first-order truncation of the
        # volume stepper instead of a vanishing standard error.
        count = stream.reported_samples
        se = 0.0
        allowance = 10.0 * grid.dt * (abs(lhs) + abs(rhs))
    return McReport.from_comparison(lhs, rhs, se, count, extra_allowance=allowance)


def verify_inverse_sde(
    g0: MetricField,
    K: TimePath,
    basis: NoiseBasis,
    nu: float,
    paths: BrownianPaths,
    coarsenings=(16, 8, 4, 2, 1),
):
    """Strong consistency of the inverse-metric process across step sizes.

    For each coarsening of the same Brownian paths, both the metric and
    its inverse are stepped with Euler-Maruyama (the latter on the
    coefficients of the inverse process) and the worst-node Frobenius
    gap to inv(g) is averaged over samples.  Returns the (dt, error)
    pairs, finest first in dt, and the fitted order.
    """
    sqrt_nu = np.sqrt(max(nu, 0.0))
    scaled = basis.scaled(sqrt_nu) if basis.size else basis
    per_level = []
    valid = None
    for factor in coarsenings:
        coarse = paths.coarsened(factor) if factor > 1 else paths
        kstack = K.stack()[::factor]
        kpath = TimePath.from_stack(coarse.grid, K.lattice, kstack)
        ensemble = simulate_metric_sde(g0, kpath, scaled, coarse, check_spd=False)
        worst, ok = _inverse_em_gap(ensemble, kpath, scaled, coarse)
        per_level.append((coarse.grid.dt, worst))
        valid = ok if valid is None else (valid & ok)
    # Condition every level on the samples that stayed well-behaved at all
    # of them, so the comparison across step sizes is paired.
    if not valid.any():
        raise RuntimeError("every sample left the stable region; reduce noise or horizon")
    pairs = [(dt, float(worst[valid].mean())) for dt, worst in per_level]
    pairs.sort(key=lambda p: -p[0])
    return pairs, convergence_order(pairs)


_INVERSE_CAP = 1e3


def _inverse_em_gap(ensemble: SdeEnsemble, K: TimePath, basis: NoiseBasis, paths):
    """Per-sample max_j ||Y_j - inv(g_j)||_F for the inverse EM chain.

    Samples whose metric path leaves the cone, or whose inverse chain
    leaves the Lipschitz region (norm above _INVERSE_CAP), are flagged
    invalid; the quadratic update is explosive out there and the gap is
    meaningless.
    """
    lattice = ensemble.lattice
    n = lattice.dim
    P = lattice.num_points
    S = ensemble.sample_count
    J = ensemble.grid.steps
    dt = ensemble.grid.dt
    values = ensemble.values.reshape(S, J + 1, P, n, n)
    kflat = K.stack().reshape(J + 1, P, n, n)
    stacked = basis.stacked().reshape(basis.size, P, n, n)
    amps = np.asarray(basis.amplitudes)

    det = det_sym(values)
    valid = (det > _DET_FLOOR).all(axis=(1, 2))
    safe = np.where((det > _DET_FLOOR)[..., None, None], values, np.eye(n))
    inv_true = inv_sym(safe, np.where(det > _DET_FLOOR, det, 1.0))

    Y = np.broadcast_to(inv_true[:, 0], (S, P, n, n)).copy()
    worst = np.zeros(S)
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(J + 1):
            gap = np.linalg.norm(Y - inv_true[:, j], axis=(-2, -1)).max(axis=-1)
            ynorm = np.linalg.norm(Y, axis=(-2, -1)).max(axis=-1)
            valid &= np.isfinite(gap) & (ynorm < _INVERSE_CAP)
            worst = np.where(valid, np.maximum(worst, gap), worst)
            if j == J:
                break
            correction = np.zeros_like(Y)
            noise = np.zeros_like(Y)
            for i, (h, a) in enumerate(zip(stacked, amps)):
                yh = Y @ h
                correction = correction + (a * a) * (h @ Y @ h)
                noise = noise - a * paths.increments[:, i, j, None, None, None] * (yh @ Y)
            drift = -Y @ (kflat[j] - correction) @ Y
            Y = Y + noise + drift * dt
            Y = np.where(valid[:, None, None, None], Y, np.eye(n))
    return worst, valid


# ---------------------------------------------------------------------------
# Convergence fitting


def convergence_order(errors) -> float:
    """Least-squares slope of log(error) against log(dt).

    ``errors`` is a sequence of (dt, error) pairs with dt strictly
    decreasing and errors positive; at least three points required.
    """
    pts = list(errors)
    if len(pts) < 3:
        raise ValueError("need at least 3 (dt, error) points")
    dts = np.asarray([p[0] for p in pts], dtype=float)
    errs = np.asarray([p[1] for p in pts], dtype=float)
    if not np.all(np.diff(dts) < 0):
        raise ValueError("dt values must be strictly decreasing")
    if not np.all(errs > 0):
        raise ValueError("errors must be positive to fit a power law")
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    return float(slope)
