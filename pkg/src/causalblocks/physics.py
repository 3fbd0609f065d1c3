"""Quasi-static stability of single-column cuboid towers.

A tower stands if, at every support interface, the combined center of mass
of everything above projects strictly inside the contact rectangle at that
interface. For flat stacked cuboids the contact rectangle is the exact
intersection of the two footprints (support surface and bottom block at
interface 0). A center of mass exactly on the boundary counts as unstable;
the boundary is a measure-zero set and the conservative call is the right
one for a robot.

This criterion is the reference semantics of the whole package: transition
outcomes, Monte-Carlo estimates, and counterfactual replays all reduce to
it. ``is_stable`` and ``transition`` are the readable per-tower forms;
``stability_mask`` is the same arithmetic vectorized across many candidate
towers at once (same operations in the same order, so the two paths agree
bit for bit).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import (
    Action,
    BlockSpec,
    NullAction,
    PlaceAction,
    PlacedBlock,
    TowerState,
    ValidationError,
)


@dataclass(frozen=True)
class InterfaceCheck:
    """One support-interface test: where the above-group mass acts, the
    contact rectangle it must stay inside, and the signed clearance.

    ``margin`` is the signed distance from ``com_above`` to the rectangle
    boundary, positive strictly inside. Interface 0 is support-to-block-0.
    """

    interface_index: int
    com_above: tuple[float, float]
    support_polygon: tuple[float, float, float, float]
    margin: float


@dataclass(frozen=True)
class StabilityResult:
    stable: bool
    checks: tuple[InterfaceCheck, ...]


@dataclass(frozen=True)
class TransitionResult:
    s1: TowerState
    outcome: bool
    checks: tuple[InterfaceCheck, ...]

    @property
    def failed_interface(self) -> Optional[int]:
        """Lowest interface whose check failed, None when the tower stood."""
        for check in self.checks:
            if check.margin <= 0.0:
                return check.interface_index
        return None


def stack_com(blocks: Sequence[PlacedBlock]) -> tuple[float, float]:
    """Mass-weighted centroid of the block centers."""
    if not blocks:
        raise ValidationError("stack_com of an empty block list")
    total = 0.0
    wx = 0.0
    wy = 0.0
    for b in blocks:
        total += b.spec.mass
        wx += b.spec.mass * b.center_x
        wy += b.spec.mass * b.center_y
    return (wx / total, wy / total)


def rect_margin(px: float, py: float,
                rect: tuple[float, float, float, float]) -> float:
    """Signed distance from (px, py) to the boundary of an axis-aligned
    rectangle, positive inside. Degenerate rectangles (min >= max) are
    treated as empty, so every point is outside."""
    min_x, min_y, max_x, max_y = rect
    qx = max(min_x - px, px - max_x)
    qy = max(min_y - py, py - max_y)
    outside = float(np.hypot(max(qx, 0.0), max(qy, 0.0)))
    inside = min(max(qx, qy), 0.0)
    return -(outside + inside)


def _support_rect(state: TowerState) -> tuple[float, float, float, float]:
    hx, hy = state.support_half_extents
    return (-hx, -hy, hx, hy)


def _intersect(a: tuple[float, float, float, float],
               b: tuple[float, float, float, float]) -> tuple[float, float, float, float]:
    return (max(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), min(a[3], b[3]))


def is_stable(state: TowerState) -> StabilityResult:
    """Check every interface of a tower, bottom to top.

    An invalid geometry (zero footprint overlap somewhere) comes back as
    unstable at the offending interface rather than as an error. The COM of
    each above-group is accumulated from the top block downward; the
    vectorized path sums in the same order.
    """
    blocks = state.blocks
    n = len(blocks)
    if n == 0:
        return StabilityResult(True, ())

    checks = []
    stable = True
    # Mass-weighted partial sums over blocks k..n-1, built top-down.
    wx = 0.0
    wy = 0.0
    m = 0.0
    coms: list[tuple[float, float]] = [(0.0, 0.0)] * n
    for k in range(n - 1, -1, -1):
        b = blocks[k]
        wx += b.spec.mass * b.center_x
        wy += b.spec.mass * b.center_y
        m += b.spec.mass
        coms[k] = (wx / m, wy / m)

    for k in range(n):
        below = _support_rect(state) if k == 0 else blocks[k - 1].footprint()
        contact = _intersect(below, blocks[k].footprint())
        margin = rect_margin(coms[k][0], coms[k][1], contact)
        checks.append(InterfaceCheck(k, coms[k], contact, margin))
        if margin <= 0.0:
            stable = False

    return StabilityResult(stable, tuple(checks))


def transition(state: TowerState, action: Action, wa: tuple[float, float],
               intended_center: Optional[tuple[float, float]] = None) -> TransitionResult:
    """Apply one action under actuation error ``wa`` and report the outcome.

    A Null action returns the state unchanged with its current stability as
    the outcome. A Place action puts the new block at ``intended_center +
    wa``; by default the intended center is the current top center plus the
    action offset, but callers that plan against a different believed state
    pass the intended center explicitly. A placement with zero footprint
    overlap on the old top block collapses the tower outright.
    """
    if state.collapsed:
        raise ValidationError("transition from a collapsed state")

    if isinstance(action, NullAction):
        result = is_stable(state)
        return TransitionResult(state, result.stable, result.checks)

    if not isinstance(action, PlaceAction):
        raise TypeError(f"unknown action type: {action!r}")

    if intended_center is None:
        tx, ty = state.top_center()
        intended_center = (tx + action.offset_x, ty + action.offset_y)
    cx = intended_center[0] + wa[0]
    cy = intended_center[1] + wa[1]

    new_block = PlacedBlock(action.spec, cx, cy)
    if state.blocks:
        contact_base = state.blocks[-1].footprint()
    else:
        contact_base = _support_rect(state)
    contact = _intersect(contact_base, new_block.footprint())
    if not (contact[2] > contact[0] and contact[3] > contact[1]):
        s1 = state.appended(action.spec, cx, cy, collapsed=True)
        check = InterfaceCheck(len(state.blocks), (cx, cy), contact,
                               rect_margin(cx, cy, contact))
        return TransitionResult(s1, False, (check,))

    candidate = state.appended(action.spec, cx, cy)
    result = is_stable(candidate)
    s1 = candidate if result.stable else replace(candidate, collapsed=True)
    return TransitionResult(s1, result.stable, result.checks)


# ---------------------------------------------------------------------------
# Vectorized kernel
# ---------------------------------------------------------------------------


def stability_mask(centers: np.ndarray, halves: np.ndarray, masses: np.ndarray,
                   support_half_extents: tuple[float, float]) -> np.ndarray:
    """Stability verdicts for ``n`` towers that share specs but not poses.

    ``centers`` is (n, B, 2); ``halves`` (B, 2) and ``masses`` (B,) apply to
    every tower. Returns an (n,) boolean array. Implements exactly the
    ``is_stable`` criterion; above-group COMs are accumulated from the top
    block downward to match the scalar code's float arithmetic.
    """
    n, nb, _ = centers.shape
    if nb == 0:
        return np.ones(n, dtype=bool)

    weighted = centers * masses[None, :, None]
    # cum[:, k] = sum over blocks k..B-1, added top-down.
    wsum = np.cumsum(weighted[:, ::-1, :], axis=1)[:, ::-1, :]
    msum = np.cumsum(masses[::-1])[::-1]
    coms = wsum / msum[None, :, None]

    lower_min = np.empty((n, nb, 2))
    lower_max = np.empty((n, nb, 2))
    hx, hy = support_half_extents
    lower_min[:, 0, :] = (-hx, -hy)
    lower_max[:, 0, :] = (hx, hy)
    lower_min[:, 1:, :] = centers[:, :-1, :] - halves[None, :-1, :]
    lower_max[:, 1:, :] = centers[:, :-1, :] + halves[None, :-1, :]

    upper_min = centers - halves[None, :, :]
    upper_max = centers + halves[None, :, :]

    lo = np.maximum(lower_min, upper_min)
    hi = np.minimum(lower_max, upper_max)

    ok = (lo < hi).all(axis=2) & (coms > lo).all(axis=2) & (coms < hi).all(axis=2)
    return ok.all(axis=1)


def _composite_arrays(tower: TowerState, extra: Optional[BlockSpec] = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """(halves, masses) for a tower, optionally with one more block on top."""
    specs = [b.spec for b in tower.blocks]
    if extra is not None:
        specs.append(extra)
    halves = np.array([s.half_extents for s in specs], dtype=float).reshape(len(specs), 2)
    masses = np.array([s.mass for s in specs], dtype=float)
    return halves, masses


def outcome_mask(s0_centers: np.ndarray, belief_top: np.ndarray, action: Action,
                 wa: np.ndarray, base: TowerState) -> np.ndarray:
    """Episode outcomes for n worlds sharing one base tower's specs.

    ``s0_centers`` (n, B, 2) are the true block poses per world and
    ``belief_top`` (n, 2) the believed top-block center the agent plans
    from (the support origin for an empty tower). For a Place action the
    new block lands at ``belief_top + offset + wa``; Null ignores both.
    """
    if isinstance(action, NullAction):
        halves, masses = _composite_arrays(base)
        return stability_mask(s0_centers, halves, masses, base.support_half_extents)

    if not isinstance(action, PlaceAction):
        raise TypeError(f"unknown action type: {action!r}")

    n = s0_centers.shape[0]
    intended = belief_top + np.array([action.offset_x, action.offset_y])
    new_centers = intended + wa
    centers = np.concatenate([s0_centers, new_centers.reshape(n, 1, 2)], axis=1)
    halves, masses = _composite_arrays(base, extra=action.spec)
    return stability_mask(centers, halves, masses, base.support_half_extents)


