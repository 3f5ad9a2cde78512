"""CSV and JSON writers for simulation outputs.

Every number is written with shortest round-trip formatting and '.' as
the decimal separator; rows are newline-terminated and preceded by a
header row.  For a fixed (config, seed) the bytes are identical run to
run.  Tensor components appear in row-major upper-triangle order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dynamics import TimePath
from .fields import Lattice, MetricField, TensorField
from .symtensor import SymMat, pack_triangle, tri_size, unpack_triangle
from .verification import McReport

__all__ = [
    "component_names",
    "write_trajectory_csv",
    "write_energy_csv",
    "write_samples_csv",
    "write_convergence_csv",
    "write_report_json",
    "write_json",
    "write_field_csv",
    "write_state_csv",
    "read_state_csv",
]


def fmt(x) -> str:
    return repr(float(x))


def component_names(n: int, prefix: str) -> list[str]:
    return [f"{prefix}{i + 1}{j + 1}" for i in range(n) for j in range(i, n)]


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_trajectory_csv(path, g_path: TimePath, k_path: TimePath | None = None) -> None:
    """Rows of (t, point_index, metric components [, velocity components])."""
    lattice = g_path.lattice
    n = lattice.dim
    header = ["t", "point_index"] + component_names(n, "g")
    gstack = pack_triangle(g_path.stack().reshape(-1, lattice.num_points, n, n))
    kstack = None
    if k_path is not None:
        header += component_names(n, "k")
        kstack = pack_triangle(k_path.stack().reshape(-1, lattice.num_points, n, n))
    times = g_path.grid.times()

    def rows():
        for j, t in enumerate(times):
            for p in range(lattice.num_points):
                row = [fmt(t), str(p)] + [fmt(v) for v in gstack[j, p]]
                if kstack is not None:
                    row += [fmt(v) for v in kstack[j, p]]
                yield row

    _write_rows(Path(path), header, rows())


def write_energy_csv(path, times, energies) -> None:
    _write_rows(
        Path(path),
        ["t", "energy"],
        ([fmt(t), fmt(e)] for t, e in zip(times, energies)),
    )


def write_samples_csv(path, ensemble, dt: float) -> None:
    """Per-sample terminal summary: point-averaged components, total volume,
    and the time of the first cone exit (empty if none)."""
    lattice = ensemble.lattice
    n = lattice.dim
    terminal = ensemble.terminal().reshape(ensemble.sample_count, lattice.num_points, n, n)
    comps = pack_triangle(terminal).mean(axis=1)
    from .symtensor import det_sym

    det = det_sym(terminal)
    volume = np.where(det > 0, np.sqrt(np.maximum(det, 0.0)), np.nan).sum(axis=1) * (
        lattice.cell_weight
    )
    header = ["sample"] + component_names(n, "g") + ["volume", "spd_exit_time"]

    def rows():
        for s in range(ensemble.sample_count):
            exit_step = ensemble.spd_exit_step[s]
            exit_str = fmt(ensemble.grid.a + exit_step * dt) if exit_step >= 0 else ""
            yield [str(s)] + [fmt(v) for v in comps[s]] + [fmt(volume[s]), exit_str]

    _write_rows(Path(path), header, rows())


def write_convergence_csv(path, pairs) -> None:
    _write_rows(
        Path(path),
        ["dt", "error"],
        ([fmt(dt), fmt(err)] for dt, err in pairs),
    )


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_json(path, report: McReport, seed: int, config_digest: str, **extra) -> None:
    payload = report.as_dict()
    payload["seed"] = seed
    payload["config_digest"] = config_digest
    payload.update(extra)
    write_json(path, payload)


def write_field_csv(path, field) -> None:
    """Serialize a tensor or metric field: point index, then components."""
    lattice = field.lattice
    n = lattice.dim
    tri = pack_triangle(field.mats.reshape(lattice.num_points, n, n))
    header = ["point_index"] + component_names(n, "g")
    _write_rows(
        Path(path),
        header,
        ([str(p)] + [fmt(v) for v in tri[p]] for p in range(lattice.num_points)),
    )


def write_state_csv(path, g, k) -> None:
    """Serialize initial data (metric plus velocity) readable by read_state_csv."""
    lattice = g.lattice
    n = lattice.dim
    gtri = pack_triangle(g.mats.reshape(lattice.num_points, n, n))
    ktri = pack_triangle(k.mats.reshape(lattice.num_points, n, n))
    header = ["point_index"] + component_names(n, "g") + component_names(n, "k")
    _write_rows(
        Path(path),
        header,
        (
            [str(p)] + [fmt(v) for v in gtri[p]] + [fmt(v) for v in ktri[p]]
            for p in range(lattice.num_points)
        ),
    )


def read_state_csv(path, lattice: Lattice) -> tuple[MetricField, TensorField]:
    """Read initial data (metric and velocity) from one CSV.

    Expects a header row, then one row per lattice point holding the
    point index, n(n+1)/2 metric components and n(n+1)/2 velocity
    components in row-major upper-triangle order.
    """
    n = lattice.dim
    ts = tri_size(n)
    gtri = np.zeros((lattice.num_points, ts))
    ktri = np.zeros((lattice.num_points, ts))
    seen = np.zeros(lattice.num_points, dtype=bool)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.strip():
            raise ValueError(f"{path}: empty file")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != 1 + 2 * ts:
                raise ValueError(
                    f"{path}:{lineno}: expected {1 + 2 * ts} columns, got {len(parts)}"
                )
            p = int(parts[0])
            if not 0 <= p < lattice.num_points:
                raise ValueError(f"{path}:{lineno}: point index {p} out of range")
            gtri[p] = [float(v) for v in parts[1 : 1 + ts]]
            ktri[p] = [float(v) for v in parts[1 + ts :]]
            seen[p] = True
    if not seen.all():
        raise ValueError(f"{path}: missing rows for {int((~seen).sum())} lattice points")
    gmats = unpack_triangle(gtri, n).reshape(lattice.shape + (n, n))
    kmats = unpack_triangle(ktri, n).reshape(lattice.shape + (n, n))
    g0 = MetricField.from_sym(lattice, SymMat(gmats))
    return g0, TensorField(lattice, SymMat(kmats))
