"""Geodesics and stochastically perturbed geodesics on the cone of metrics.

The package simulates the L2 geodesic flow on the space of Riemannian
metrics over a periodic lattice, drives it with matrix-valued Brownian
noise, and verifies the resulting Ito formulas, the stochastic
integration-by-parts identity, and the criticality of the kinetic
energy functional by Monte Carlo with common random numbers.
"""

__version__ = "0.1.0"

from .symtensor import (
    DegenerateMetric,
    SpdMat,
    SymMat,
    dir_deriv_trace,
    pack_triangle,
    spd_guard,
    symmetrize,
    times,
    trace_chain,
    traceless_part,
    tri_size,
    unpack_triangle,
)
from .fields import (
    Lattice,
    MetricField,
    NoiseBasis,
    TensorField,
    ebin_inner,
    lie_derivative_metric,
    make_basis_conformal,
    make_basis_elementary,
    make_basis_lie,
    make_basis_traceless_random,
    project_V0_V1,
)
from .dynamics import (
    SdeEnsemble,
    TimeGrid,
    TimePath,
    conformal_scale,
    correction_L,
    el_rhs,
    geodesic_rhs,
    integrate_el,
    integrate_geodesic,
    inverse_sde_coeffs,
    simulate_metric_sde,
    volume_ito_coeffs,
)
from .verification import (
    BrownianPaths,
    DriftEstimate,
    McReport,
    action_J,
    convergence_order,
    estimate_drift,
    ibp_martingale_sums,
    sample_brownian,
    verify_critical_point,
    verify_ibp,
    verify_inverse_sde,
    verify_volume_ito,
)
