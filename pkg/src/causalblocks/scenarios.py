"""Canonical scenarios for demos, tests, and quick experiments."""

from __future__ import annotations

import numpy as np

from .core import (
    BlockSpec,
    NoiseModel,
    PlacedBlock,
    Scenario,
    TowerState,
    derive_sample_seed,
)

_COLORS = ("red", "green", "blue", "yellow", "orange", "purple")


def cube(block_id: str, size: float = 0.1, mass: float = 0.25,
         color: str = "gray") -> BlockSpec:
    # default mass is a power of two so mass-weighted centroids of equal
    # cubes incur no rounding, keeping boundary verdicts unambiguous
    return BlockSpec(id=block_id, width=size, depth=size, height=size,
                     mass=mass, color=color)


def column(specs, offsets, support_half_extents=(0.5, 0.5)) -> TowerState:
    """Tower with the given block specs at the given (x, y) centers."""
    blocks = tuple(PlacedBlock(s, float(x), float(y))
                   for s, (x, y) in zip(specs, offsets))
    return TowerState(blocks, support_half_extents=support_half_extents)


def two_cube_scenario(sigma_s: float = 0.02, sigma_a: float = 0.02,
                      size: float = 0.1,
                      support_half_extents=(0.5, 0.5)) -> Scenario:
    """One centered cube on the table, one more waiting to be placed."""
    base = cube("b1", size=size, color="red")
    pending = cube("b2", size=size, color="green")
    tower = column([base], [(0.0, 0.0)], support_half_extents)
    return Scenario(
        scenario_id="two-cubes",
        tower=tower,
        pending_blocks=(pending,),
        noise=NoiseModel(sigma_s, sigma_a),
    )


def random_scenario(seed: int, max_blocks: int = 4, sigma_s: float = 0.01,
                    sigma_a: float = 0.01) -> Scenario:
    """A deterministic pseudo-random scenario: 1..max_blocks stacked cuboids
    with valid (positive-overlap) but not necessarily stable geometry, plus
    one pending block."""
    rng = np.random.default_rng(derive_sample_seed(seed, "scenario-gen", 0))
    n = int(rng.integers(1, max_blocks + 1))
    specs = []
    for i in range(n + 1):
        w, d = rng.uniform(0.06, 0.14, size=2)
        h = rng.uniform(0.04, 0.08)
        m = rng.uniform(0.1, 0.5)
        specs.append(BlockSpec(id=f"b{i + 1}", width=float(w), depth=float(d),
                               height=float(h), mass=float(m),
                               color=_COLORS[i % len(_COLORS)]))

    offsets = [(0.0, 0.0)]
    for i in range(1, n):
        lower, upper = specs[i - 1], specs[i]
        # keep within 90% of the overlap bound so adjacent footprints overlap
        lim_x = 0.9 * (lower.width + upper.width) / 2.0
        lim_y = 0.9 * (lower.depth + upper.depth) / 2.0
        px, py = offsets[-1]
        dx = float(rng.uniform(-lim_x, lim_x))
        dy = float(rng.uniform(-lim_y, lim_y))
        offsets.append((px + dx, py + dy))

    tower = column(specs[:n], offsets)
    tower.validate()
    return Scenario(
        scenario_id=f"random-{seed}",
        tower=tower,
        pending_blocks=(specs[n],),
        noise=NoiseModel(sigma_s, sigma_a),
    )
