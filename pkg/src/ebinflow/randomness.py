"""Reproducible Brownian increments on a fixed time grid.

Each (sample, basis index) pair gets its own counter-based Philox
stream, keyed by the seed and located by the pair itself.  The
increment for (seed, sample, basis, step) is therefore a pure function
of those four integers: regenerating with more samples, more basis
elements, or under any parallel schedule reproduces the same numbers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import TimeGrid

__all__ = ["BrownianPaths", "sample_brownian"]

_KEY_SALT = 0x9E3779B97F4A7C15  # fixed second key word; distinguishes this stream family


@dataclass(frozen=True)
class BrownianPaths:
    """Increments dW of independent scalar Brownian motions.

    ``increments[s, i, j]`` is the step-j increment of the i-th motion in
    sample s, distributed Normal(0, dt).
    """

    seed: int
    samples: int
    basis_count: int
    grid: TimeGrid
    increments: np.ndarray

    def __post_init__(self):
        expected = (self.samples, self.basis_count, self.grid.steps)
        if self.increments.shape != expected:
            raise ValueError(f"increments shape {self.increments.shape} != {expected}")
        self.increments.flags.writeable = False

    def coarsened(self, factor: int) -> "BrownianPaths":
        """Sum consecutive increments: the same Brownian paths on a grid
        ``factor`` times coarser.  Requires steps to divide evenly."""
        if self.grid.steps % factor:
            raise ValueError("factor must divide the number of steps")
        coarse = self.increments.reshape(
            self.samples, self.basis_count, self.grid.steps // factor, factor
        ).sum(axis=-1)
        grid = TimeGrid(self.grid.a, self.grid.b, self.grid.steps // factor)
        return BrownianPaths(self.seed, self.samples, self.basis_count, grid, coarse)


def sample_brownian(seed: int, samples: int, basis_count: int, grid: TimeGrid) -> BrownianPaths:
    """Draw all increments for ``samples`` paths of ``basis_count`` motions.

    Deterministic in ``seed`` and independent of evaluation order; see
    the module docstring for the counter layout.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if basis_count < 0:
        raise ValueError("basis_count must be >= 0")
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    steps = grid.steps
    sqrt_dt = np.sqrt(grid.dt)
    out = np.empty((samples, basis_count, steps))
    # One bit generator, re-pointed at the (s, i) counter before each row:
    # bit-identical to constructing Philox(counter=[0, 0, s, i]) afresh,
    # without the per-row construction overhead.
    bitgen = np.random.Philox(counter=[0, 0, 0, 0], key=[seed, _KEY_SALT])
    gen = np.random.Generator(bitgen)
    template = bitgen.state
    counter = template["state"]["counter"]
    for s in range(samples):
        counter[2] = s
        for i in range(basis_count):
            counter[3] = i
            template["buffer_pos"] = 4
            template["has_uint32"] = 0
            template["uinteger"] = 0
            bitgen.state = template
            gen.standard_normal(out=out[s, i, :])
    out *= sqrt_dt
    return BrownianPaths(seed, samples, basis_count, grid, out)
