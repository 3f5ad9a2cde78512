"""Command-line driver: config parsing, experiment orchestration, manifests.

Configs are flat ``key = value`` text files ('#' starts a comment).
Unknown keys are rejected outright, since a silent typo in ``nu`` or
``dt`` would invalidate every verification claim downstream.  A run
manifest (config echo, digest, seed, per-check outcomes) is written
last, even when the run fails.

Exit codes: 0 all checks passed, 1 a check failed, 2 config error,
3 the metric left the SPD cone, 4 output could not be written.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, fields as dc_fields, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (
    TimeGrid,
    TimePath,
    conformal_scale,
    integrate_el,
    integrate_geodesic,
    simulate_metric_sde,
)
from .fields import (
    Lattice,
    MetricField,
    NoiseBasis,
    TensorField,
    ebin_inner,
    make_basis_conformal,
    make_basis_elementary,
    make_basis_lie,
    make_basis_traceless_random,
    named_vector_field,
)
from .io import (
    read_state_csv,
    write_convergence_csv,
    write_energy_csv,
    write_json,
    write_report_json,
    write_samples_csv,
    write_trajectory_csv,
)
from .symtensor import DegenerateMetric, SymMat
from .verification import (
    convergence_order,
    sample_brownian,
    verify_critical_point,
    verify_ibp,
    verify_inverse_sde,
    verify_volume_ito,
)

SUBCOMMANDS = (
    "geodesic",
    "el",
    "sde",
    "verify-ibp",
    "verify-critical",
    "verify-ito",
    "convergence",
)


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    dimension: int = 3
    lattice_points: int = 1
    extent: float = 2.0 * math.pi
    time_a: float = 0.0
    time_b: float = 1.0
    dt: float = 1e-3
    nu: float = 0.0
    amplitudes: tuple | None = None
    noise_basis: str = "elementary"
    initial_data: str = "conformal:1.0"
    mc_samples: int = 1000
    seed: int = 0
    output_dir: str = "out"
    delta_s: float = 1e-3
    convergence_levels: int = 5

    def canonical_text(self) -> str:
        lines = []
        for f in sorted(f.name for f in dc_fields(self)):
            value = getattr(self, f)
            if isinstance(value, tuple):
                value = ",".join(repr(v) for v in value)
            lines.append(f"{f}={value!r}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


_PARSERS = {
    "dimension": int,
    "lattice_points": int,
    "extent": float,
    "time_a": float,
    "time_b": float,
    "dt": float,
    "nu": float,
    "amplitudes": lambda s: tuple(float(v) for v in s.split(",") if v.strip()),
    "noise_basis": str,
    "initial_data": str,
    "mc_samples": int,
    "seed": int,
    "output_dir": str,
    "delta_s": float,
    "convergence_levels": int,
}


def parse_config(path) -> RunConfig:
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as err:
        raise ConfigError(f"cannot read config: {err}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _PARSERS:
            raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as err:
            raise ConfigError(f"{path}:{lineno}: bad value for '{key}': {err}") from None
    cfg = RunConfig(**values)
    validate_config(cfg)
    return cfg


def validate_config(cfg: RunConfig) -> None:
    if cfg.dimension < 1:
        raise ConfigError("dimension must be >= 1")
    if cfg.lattice_points < 1:
        raise ConfigError("lattice_points must be >= 1")
    if not cfg.extent > 0:
        raise ConfigError("extent must be positive")
    if not cfg.time_b > cfg.time_a:
        raise ConfigError("time_b must exceed time_a")
    if not cfg.dt > 0:
        raise ConfigError("dt must be positive")
    if cfg.nu < 0:
        raise ConfigError("nu must be nonnegative")
    if cfg.mc_samples < 1:
        raise ConfigError("mc_samples must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("seed must be a nonnegative 64-bit integer")
    if not cfg.delta_s > 0:
        raise ConfigError("delta_s must be positive")
    if cfg.convergence_levels < 3:
        raise ConfigError("convergence_levels must be >= 3")
    if cfg.amplitudes is not None and any(a < 0 for a in cfg.amplitudes):
        raise ConfigError("amplitudes must be nonnegative")
    steps_from_config(cfg)


def steps_from_config(cfg: RunConfig) -> int:
    span = cfg.time_b - cfg.time_a
    raw = span / cfg.dt
    steps = round(raw)
    if steps < 1 or abs(raw - steps) > 1e-8 * max(1.0, raw):
        raise ConfigError(f"dt={cfg.dt} does not divide the interval [{cfg.time_a}, {cfg.time_b}]")
    return steps


# ---------------------------------------------------------------------------
# Builders


def _rng(seed: int, salt: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(salt,)))


def build_lattice(cfg: RunConfig) -> Lattice:
    return Lattice(dim=cfg.dimension, points_per_axis=cfg.lattice_points, extent=cfg.extent)


def build_grid(cfg: RunConfig) -> TimeGrid:
    return TimeGrid(cfg.time_a, cfg.time_b, steps_from_config(cfg))


def build_initial(cfg: RunConfig, lattice: Lattice) -> tuple[MetricField, TensorField]:
    """Initial metric and velocity from the ``initial_data`` selector."""
    selector, _, arg = cfg.initial_data.partition(":")
    n = lattice.dim
    if selector == "identity":
        return MetricField.identity(lattice), TensorField.zeros(lattice)
    if selector == "conformal":
        try:
            a0 = float(arg) if arg else 1.0
        except ValueError:
            raise ConfigError(f"bad conformal rate '{arg}'") from None
        g0 = MetricField.identity(lattice)
        return g0, TensorField.constant(lattice, a0 * np.eye(n))
    if selector == "random_spd":
        try:
            scale = float(arg) if arg else 0.3
        except ValueError:
            raise ConfigError(f"bad random_spd scale '{arg}'") from None
        rng = _rng(cfg.seed, 0x1D1)
        raw_g = rng.standard_normal((n, n))
        raw_k = rng.standard_normal((n, n))
        g0 = MetricField.constant(lattice, np.eye(n) + scale * 0.5 * (raw_g + raw_g.T))
        k0 = TensorField.constant(lattice, scale * 0.5 * (raw_k + raw_k.T))
        return g0, k0
    if selector == "file":
        if not arg:
            raise ConfigError("initial_data=file:<path> needs a path")
        try:
            return read_state_csv(arg, lattice)
        except (OSError, ValueError) as err:
            raise ConfigError(f"cannot load initial data: {err}") from None
    raise ConfigError(f"unknown initial_data selector '{cfg.initial_data}'")


def build_basis(cfg: RunConfig, lattice: Lattice, g0: MetricField) -> NoiseBasis:
    selector, _, arg = cfg.noise_basis.partition(":")
    if selector == "elementary":
        basis = make_basis_elementary(lattice)
    elif selector == "conformal":
        basis = make_basis_conformal(g0)
    elif selector == "traceless_random":
        basis = make_basis_traceless_random(g0, seed=cfg.seed)
    elif selector == "lie":
        name = arg or "sine"
        basis = make_basis_lie(g0, named_vector_field(name, lattice))
    else:
        raise ConfigError(f"unknown noise_basis selector '{cfg.noise_basis}'")
    if cfg.amplitudes is not None:
        if len(cfg.amplitudes) != basis.size:
            raise ConfigError(
                f"{len(cfg.amplitudes)} amplitudes given for {basis.size} basis elements"
            )
        basis = NoiseBasis(basis.elements, cfg.amplitudes)
    return basis


def build_variation(grid: TimeGrid, lattice: Lattice) -> TimePath:
    """Built-in smooth variation: a half-sine bump, exactly zero at both ends."""
    n = lattice.dim
    vhat = 0.2 * np.eye(n)
    if n >= 2:
        vhat[0, 1] = vhat[1, 0] = 0.1
    profile = np.sin(math.pi * (grid.times() - grid.a) / (grid.b - grid.a))
    profile[0] = 0.0
    profile[-1] = 0.0
    base = np.broadcast_to(vhat, lattice.shape + (n, n))
    stack = profile[(...,) + (None,) * (lattice.dim + 2)] * base
    return TimePath.from_stack(grid, lattice, stack)


def perturbed_path(K: TimePath, magnitude: float) -> TimePath:
    """Shift a drift path by a constant unit-norm tensor of the given size.

    The direction is the (1,2) off-diagonal shear for n >= 2 (it has a
    strong response in the built-in variation), the identity for n = 1.
    """
    lattice = K.lattice
    n = lattice.dim
    if n >= 2:
        direction = np.zeros((n, n))
        direction[0, 1] = direction[1, 0] = 1.0 / math.sqrt(2.0)
    else:
        direction = np.eye(n)
    return TimePath.from_stack(K.grid, lattice, K.stack() + magnitude * direction)


# ---------------------------------------------------------------------------
# Subcommands


def run_geodesic(cfg: RunConfig, out: Path) -> dict:
    lattice = build_lattice(cfg)
    grid = build_grid(cfg)
    g0, k0 = build_initial(cfg, lattice)
    gpath, vpath = integrate_geodesic(g0, k0, grid)
    energies = [ebin_inner(g, v, v) for g, v in zip(gpath.samples, vpath.samples)]
    write_trajectory_csv(out / "trajectory.csv", gpath)
    write_energy_csv(out / "energy.csv", grid.times(), energies)
    return {}


def run_el(cfg: RunConfig, out: Path) -> dict:
    lattice = build_lattice(cfg)
    grid = build_grid(cfg)
    g0, k0 = build_initial(cfg, lattice)
    basis = build_basis(cfg, lattice, g0)
    gpath, kpath = integrate_el(g0, k0, basis, cfg.nu, grid)
    energies = [ebin_inner(g, k, k) for g, k in zip(gpath.samples, kpath.samples)]
    write_trajectory_csv(out / "trajectory.csv", gpath, kpath)
    write_energy_csv(out / "energy.csv", grid.times(), energies)
    return {}


def run_sde(cfg: RunConfig, out: Path) -> dict:
    lattice = build_lattice(cfg)
    grid = build_grid(cfg)
    g0, k0 = build_initial(cfg, lattice)
    basis = build_basis(cfg, lattice, g0).scaled(math.sqrt(cfg.nu))
    paths = sample_brownian(cfg.seed, cfg.mc_samples, basis.size, grid)
    ensemble = simulate_metric_sde(g0, TimePath.constant(grid, k0), basis, paths)
    write_samples_csv(out / "samples.csv", ensemble, grid.dt)
    return {}


def run_verify_ibp(cfg: RunConfig, out: Path) -> dict:
    lattice = build_lattice(cfg)
    grid = build_grid(cfg)
    g0, k0 = build_initial(cfg, lattice)
    basis = build_basis(cfg, lattice, g0)
    V = build_variation(grid, lattice)
    paths = sample_brownian(cfg.seed, cfg.mc_samples, basis.size, grid)
    report = verify_ibp(g0, TimePath.constant(grid, k0), V, basis, cfg.nu, paths)
    write_report_json(out / "report_ibp.json", report, cfg.seed, cfg.digest())
    return {"ibp": report.passed}


def run_verify_critical(cfg: RunConfig, out: Path) -> dict:
    lattice = build_lattice(cfg)
    grid = build_grid(cfg)
    g0, k0 = build_initial(cfg, lattice)
    basis = build_basis(cfg, lattice, g0)
    _, kpath = integrate_el(g0, k0, basis, cfg.nu, grid)
    V = build_variation(grid, lattice)
    paths = sample_brownian(cfg.seed, cfg.mc_samples, basis.size, grid)
    report, details = verify_critical_point(
        g0, kpath, V, basis, cfg.nu, paths, cfg.delta_s, return_details=True
    )
    bound = (
        3.0 * report.standard_error
        + details["allowance"]
        + 1e-9 * (abs(report.lhs) + abs(report.rhs) + 1.0)
    )
    report_b = verify_critical_point(
        g0, perturbed_path(kpath, 0.5), V, basis, cfg.nu, paths, cfg.delta_s
    )
    contrast_pass = abs(report_b.lhs) > 10.0 * bound
    payload = report.as_dict()
    payload.update(
        {
            "seed": cfg.seed,
            "config_digest": cfg.digest(),
            "richardson": details["richardson"],
            "contrast": {
                "derivative": report_b.lhs,
                "se": report_b.standard_error,
                "bound": bound,
                "pass": contrast_pass,
            },
        }
    )
    write_json(out / "report_critical.json", payload)
    return {"critical_point": report.passed, "contrast": contrast_pass}


def run_verify_ito(cfg: RunConfig, out: Path) -> dict:
    lattice = build_lattice(cfg)
    grid = build_grid(cfg)
    g0, k0 = build_initial(cfg, lattice)
    basis = build_basis(cfg, lattice, g0)
    kpath = TimePath.constant(grid, k0)

    paths = sample_brownian(cfg.seed, cfg.mc_samples, basis.size, grid)
    volume_report = verify_volume_ito(g0, kpath, basis, cfg.nu, paths)
    write_report_json(out / "report_volume.json", volume_report, cfg.seed, cfg.digest())

    factors = [2**k for k in range(cfg.convergence_levels)][::-1]
    if grid.steps % factors[0]:
        raise ConfigError(
            f"inverse check needs steps divisible by {factors[0]}; got {grid.steps}"
        )
    inv_samples = min(cfg.mc_samples, 512)
    inv_paths = sample_brownian(cfg.seed + 1, inv_samples, basis.size, grid)
    pairs, order = verify_inverse_sde(g0, kpath, basis, cfg.nu, inv_paths, factors)
    inverse_pass = order >= 0.4
    write_convergence_csv(out / "inverse_error.csv", pairs)
    write_json(
        out / "report_inverse.json",
        {
            "order": order,
            "pass": inverse_pass,
            "samples": inv_samples,
            "seed": cfg.seed + 1,
            "config_digest": cfg.digest(),
        },
    )
    return {"volume_ito": volume_report.passed, "inverse_ito": inverse_pass}


def run_convergence(cfg: RunConfig, out: Path) -> dict:
    lattice = build_lattice(cfg)
    grid = build_grid(cfg)
    g0, k0 = build_initial(cfg, lattice)
    selector, _, arg = cfg.initial_data.partition(":")
    exact = None
    if selector == "conformal":
        a0 = float(arg) if arg else 1.0
        exact = conformal_scale(grid.b, a0, lattice.dim) * g0.mats

    pairs = []
    for level in range(cfg.convergence_levels):
        coarse = TimeGrid(grid.a, grid.b, grid.steps * 2**level)
        gpath, _ = integrate_geodesic(g0, k0, coarse)
        terminal = gpath.samples[-1].mats
        if exact is not None:
            err = float(np.max(np.abs(terminal - exact)))
        else:
            fine, _ = integrate_geodesic(g0, k0, coarse.refined(2))
            err = float(np.max(np.abs(terminal - fine.samples[-1].mats)))
        pairs.append((coarse.dt, err))
    order = convergence_order(pairs)
    passed = order >= 3.5
    write_convergence_csv(out / "convergence.csv", pairs)
    write_json(
        out / "report.json",
        {"order": order, "pass": passed, "reference": "exact" if exact is not None else "half-step"},
    )
    return {"convergence": passed}


_RUNNERS = {
    "geodesic": run_geodesic,
    "el": run_el,
    "sde": run_sde,
    "verify-ibp": run_verify_ibp,
    "verify-critical": run_verify_critical,
    "verify-ito": run_verify_ito,
    "convergence": run_convergence,
}


# ---------------------------------------------------------------------------
# Entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ebinflow",
        description="Simulate and verify (stochastic) geodesics of the L2 metric "
        "on the cone of Riemannian metrics.",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--samples", type=int, default=None, help="override mc_samples")
    parser.add_argument("--out", default=None, help="override output_dir")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        if args.samples is not None:
            cfg = replace(cfg, mc_samples=args.samples)
        if args.out is not None:
            cfg = replace(cfg, output_dir=args.out)
        validate_config(cfg)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        print(f"cannot create output directory: {err}", file=sys.stderr)
        return 4

    manifest = {
        "artifact_version": __version__,
        "subcommand": args.subcommand,
        "config": {f.name: getattr(cfg, f.name) for f in dc_fields(cfg)},
        "config_digest": cfg.digest(),
        "seed": cfg.seed,
        "started": datetime.now(timezone.utc).isoformat(),
        "status": "running",
        "checks": {},
    }
    manifest["config"]["amplitudes"] = (
        list(cfg.amplitudes) if cfg.amplitudes is not None else None
    )

    t0 = time.monotonic()
    status = 0
    try:
        checks = _RUNNERS[args.subcommand](cfg, out)
        manifest["checks"] = checks
        manifest["status"] = "ok"
        if not all(checks.values()):
            manifest["status"] = "check-failed"
            status = 1
    except ConfigError as err:
        manifest["status"] = "config-error"
        manifest["error"] = str(err)
        print(f"config error: {err}", file=sys.stderr)
        status = 2
    except DegenerateMetric as err:
        manifest["status"] = "degenerate-metric"
        manifest["failure_time"] = err.time
        manifest["min_eigenvalue"] = err.min_eigenvalue
        print(f"degenerate metric: {err}", file=sys.stderr)
        status = 3
    except OSError as err:
        manifest["status"] = "io-error"
        manifest["error"] = str(err)
        print(f"output error: {err}", file=sys.stderr)
        status = 4
    finally:
        manifest["wall_clock_seconds"] = time.monotonic() - t0
        try:
            write_json(out / "manifest.json", manifest)
        except OSError as err:
            print(f"cannot write manifest: {err}", file=sys.stderr)
            status = status or 4

    if not args.quiet:
        for name, ok in manifest["checks"].items():
            print(f"check {name}: {'PASS' if ok else 'FAIL'}")
        print(f"status: {manifest['status']} ({manifest['wall_clock_seconds']:.2f}s)")
    return status


if __name__ == "__main__":
    sys.exit(main())
