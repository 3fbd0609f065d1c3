"""Structural equations of the stacking task and twin-world machinery.

The generative story for one episode:

    s0  (true tower)      exogenous, flat prior
    z0  = s0              recorded state estimate
    s0' = z0 + ws         the belief the agent plans from
    s1  = T(s0, a, wa)    physics on the true state, with the intended
                          placement computed from the believed top block
    y   = s1 stood

Sensor noise matters because the agent aims relative to where it believes
the top block is, while the block lands in the true world. Interventional
queries (``do_sample``) condition on the belief and invert it: a
hypothesized true state is ``belief - ws``. Counterfactual queries condition
a recorded episode on its observation and outcome: abduction keeps the
noise draws that replay to the observed outcome, anchoring the replayed
belief at ``z0`` exactly (equivalently, sampling the true state's posterior
under a flat prior). ``counterfactual_outcomes`` then replays those worlds
with one variable forced.

Every draw comes from a per-sample seed (see ``core.derive_sample_seed``),
so estimates do not depend on batching or worker scheduling.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
import json
from typing import Optional, Union

import numpy as np

from .core import (
    Action,
    EpisodeTrace,
    ExogenousSample,
    GroundTruth,
    NoiseModel,
    NullAction,
    PlaceAction,
    PlacedBlock,
    SchemaError,
    TowerState,
    ValidationError,
    derive_sample_seeds,
    _block_spec_from_dict,
    _block_spec_to_dict,
    _check_keys,
    _number,
    _pair,
)
from .physics import TransitionResult, outcome_mask, transition


class AbductionFailure(RuntimeError):
    """No exogenous draw consistent with the observed outcome was found
    within the attempt budget."""

    def __init__(self, requested: int, attempts: int):
        super().__init__(
            f"abduction failed: 0 of {attempts} attempts reproduced the "
            f"observed outcome ({requested} samples requested)")
        self.requested = requested
        self.attempts = attempts
        self.accepted = 0


# ---------------------------------------------------------------------------
# Exogenous draws
# ---------------------------------------------------------------------------
#
# Draw order contract: one episode consumes a single (B+1, 2) block of unit
# draws from its seeded generator; rows 0..B-1 scale by sigma_s into the
# per-block sensing errors, row B scales by sigma_a into the actuation
# error. The batch form repeats the identical per-seed construction, so a
# batched estimate equals the sample-by-sample one bit for bit.


def _unit_draws(rng: np.random.Generator, rows: int, noise: NoiseModel) -> np.ndarray:
    if noise.discrete:
        grid = noise.support_grid()
        idx = rng.integers(0, noise.support_points, size=(rows, 2))
        return grid[idx]
    return rng.standard_normal((rows, 2))


def draw_exogenous(seed: int, nblocks: int, noise: NoiseModel) -> ExogenousSample:
    """One draw of (ws, wa) from the noise priors."""
    rng = np.random.default_rng(seed)
    eps = _unit_draws(rng, nblocks + 1, noise)
    ws = noise.sigma_s * eps[:nblocks]
    wa = noise.sigma_a * eps[nblocks]
    return ExogenousSample(
        ws=tuple((float(x), float(y)) for x, y in ws),
        wa=(float(wa[0]), float(wa[1])),
    )


def draw_exogenous_batch(seeds: np.ndarray, nblocks: int,
                         noise: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    """Stacked draws for many seeds: ws (n, B, 2) and wa (n, 2)."""
    n = len(seeds)
    eps = np.empty((n, nblocks + 1, 2))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        eps[i] = _unit_draws(rng, nblocks + 1, noise)
    ws = noise.sigma_s * eps[:, :nblocks, :]
    wa = noise.sigma_a * eps[:, nblocks, :]
    return ws, wa


# ---------------------------------------------------------------------------
# Forward sampling and interventional draws
# ---------------------------------------------------------------------------


def _intended_center(belief: TowerState, action: Action) -> Optional[tuple[float, float]]:
    if isinstance(action, PlaceAction):
        bx, by = belief.top_center()
        return (bx + action.offset_x, by + action.offset_y)
    return None


def sample_episode(s0: TowerState, action: Action, noise: NoiseModel, seed: int,
                   scenario_id: str = "") -> EpisodeTrace:
    """Run the full generative model once and record everything.

    The belief is the true state plus per-block sensing error; the intended
    placement is computed from the believed top block, the physics from the
    true one.
    """
    s0.validate()
    exo = draw_exogenous(seed, len(s0), noise)
    z0 = s0
    if len(s0):
        belief = s0.with_centers(s0.centers() + exo.ws_array())
    else:
        belief = s0
    result = transition(s0, action, exo.wa,
                        intended_center=_intended_center(belief, action))
    return EpisodeTrace(
        scenario_id=scenario_id,
        z0=z0,
        belief=belief,
        action=action,
        outcome=result.outcome,
        noise=noise,
        ground_truth=GroundTruth(s0=s0, exo=exo, s1=result.s1),
    )


def do_sample(belief: TowerState, action: Action, noise: NoiseModel, seed: int) -> bool:
    """One Monte-Carlo draw of P(stable | belief, do(action)).

    Inverts the belief equation: the hypothesized true state puts each block
    at ``belief - ws``. The action is set exogenously (no decision policy in
    the loop), and for Null the actuation draw is consumed but unused.
    """
    exo = draw_exogenous(seed, len(belief), noise)
    if len(belief):
        s0h = belief.with_centers(belief.centers() - exo.ws_array())
    else:
        s0h = belief
    result = transition(s0h, action, exo.wa,
                        intended_center=_intended_center(belief, action))
    return result.outcome


def replay_ground_truth(trace: EpisodeTrace) -> TransitionResult:
    """Deterministically re-run a simulated trace's transition.

    Requires ground truth; useful for reporting which interface failed and
    for checking that stored traces are self-consistent.
    """
    if trace.ground_truth is None:
        raise ValidationError("trace has no ground truth to replay")
    gt = trace.ground_truth
    return transition(gt.s0, trace.action, gt.exo.wa,
                      intended_center=_intended_center(trace.belief, trace.action))


# ---------------------------------------------------------------------------
# Abduction
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class AbductionResult:
    """Exogenous draws consistent with an observed episode.

    ``ws_accepted`` is (N, B, 2) and ``wa_accepted`` (N, 2); every row
    replays to the observed outcome with the trace's action. The hypothesized
    true state of row i puts each block at ``z0 - ws_accepted[i]``.
    """

    ws_accepted: np.ndarray
    wa_accepted: np.ndarray
    acceptance_rate: float
    requested: int
    accepted: int
    attempts: int

    def __post_init__(self) -> None:
        self.ws_accepted.setflags(write=False)
        self.wa_accepted.setflags(write=False)

    @cached_property
    def samples(self) -> tuple[ExogenousSample, ...]:
        return tuple(
            ExogenousSample(
                ws=tuple((float(x), float(y)) for x, y in ws_i),
                wa=(float(wa_i[0]), float(wa_i[1])),
            )
            for ws_i, wa_i in zip(self.ws_accepted, self.wa_accepted)
        )

    def __len__(self) -> int:
        return self.accepted


_ABDUCT_CHUNK = 8192


def default_attempt_budget(n_requested: int) -> int:
    return max(100 * n_requested, 10_000)


def abduct(trace: EpisodeTrace, noise: NoiseModel, n_requested: int, seed: int,
           max_attempts: Optional[int] = None) -> AbductionResult:
    """Posterior draws of (ws, wa) given the trace's observation and outcome.

    The observation is conditioned on exactly by inversion (each candidate
    world reconstructs its true state as ``z0 - ws``, so its belief is
    ``z0`` by construction); the binary outcome is conditioned on by
    rejection. Attempt i uses the seed stream ("abduct", i), and the result
    is identical however the attempts are batched. Raises AbductionFailure
    if the budget is exhausted with no acceptance.
    """
    if n_requested <= 0:
        raise ValidationError("n_requested must be positive")
    if trace.z0.collapsed:
        raise ValidationError("cannot abduct from a collapsed observation")
    budget = default_attempt_budget(n_requested) if max_attempts is None else max_attempts
    if budget < 1:
        raise ValidationError("attempt budget must be positive")

    z0 = trace.z0
    nb = len(z0)
    z0_centers = z0.centers()
    belief_top = np.array(z0.top_center())

    ws_chunks: list[np.ndarray] = []
    wa_chunks: list[np.ndarray] = []
    attempts = 0
    accepted = 0
    while attempts < budget and accepted < n_requested:
        m = min(_ABDUCT_CHUNK, budget - attempts)
        seeds = derive_sample_seeds(seed, "abduct", m, start=attempts)
        ws, wa = draw_exogenous_batch(seeds, nb, noise)
        s0h = z0_centers[None, :, :] - ws
        btop = np.broadcast_to(belief_top, (m, 2))
        outcomes = outcome_mask(s0h, btop, trace.action, wa, base=z0)
        hits = np.flatnonzero(outcomes == trace.outcome)
        if accepted + len(hits) >= n_requested:
            need = n_requested - accepted
            # Count only the attempts up to and including the one that
            # filled the request; keeps results batch-size independent.
            attempts += int(hits[need - 1]) + 1
            hits = hits[:need]
        else:
            attempts += m
        if len(hits):
            ws_chunks.append(ws[hits])
            wa_chunks.append(wa[hits])
            accepted += len(hits)

    if accepted == 0:
        raise AbductionFailure(n_requested, attempts)

    ws_all = np.concatenate(ws_chunks) if ws_chunks else np.empty((0, nb, 2))
    wa_all = np.concatenate(wa_chunks) if wa_chunks else np.empty((0, 2))
    return AbductionResult(
        ws_accepted=ws_all,
        wa_accepted=wa_all,
        acceptance_rate=accepted / attempts,
        requested=n_requested,
        accepted=accepted,
        attempts=attempts,
    )


# ---------------------------------------------------------------------------
# Interventions and counterfactual replay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SetAction:
    """Force the agent's action."""

    action: Action


@dataclass(frozen=True)
class SetSensorNoise:
    """Force the per-block sensing errors (one (dx, dy) per block)."""

    ws: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class SetActuationNoise:
    """Force the placement error."""

    wa: tuple[float, float]


@dataclass(frozen=True)
class SetInitialState:
    """Force the true initial tower."""

    s0: TowerState


InterventionTarget = Union[SetAction, SetSensorNoise, SetActuationNoise, SetInitialState]


def counterfactual_outcomes(trace: EpisodeTrace, target: InterventionTarget,
                            abduction: AbductionResult) -> np.ndarray:
    """Replay every abducted world with one variable forced.

    All non-intervened exogenous values keep their abducted draws; the
    belief is re-derived inside each twin world (true state plus its
    sensing error), so upstream interventions propagate downstream. Returns
    the boolean outcome per abducted sample.
    """
    if abduction.accepted == 0:
        raise ValidationError("abduction carries no samples")
    z0 = trace.z0
    nb = len(z0)
    n = abduction.accepted
    ws = abduction.ws_accepted
    wa = abduction.wa_accepted
    z0_centers = z0.centers()

    action = trace.action
    base = z0

    if isinstance(target, SetAction):
        action = target.action
        s0 = z0_centers[None, :, :] - ws
        belief_top = np.broadcast_to(np.array(z0.top_center()), (n, 2))
    elif isinstance(target, SetActuationNoise):
        s0 = z0_centers[None, :, :] - ws
        belief_top = np.broadcast_to(np.array(z0.top_center()), (n, 2))
        wa = np.broadcast_to(np.array(target.wa, dtype=float), (n, 2))
    elif isinstance(target, SetSensorNoise):
        if len(target.ws) != nb:
            raise ValidationError(
                f"sensor-noise intervention has {len(target.ws)} entries "
                f"for a {nb}-block tower")
        ws_forced = np.array(target.ws, dtype=float).reshape(nb, 2)
        s0 = z0_centers[None, :, :] - ws
        if nb:
            belief_top = s0[:, -1, :] + ws_forced[-1]
        else:
            belief_top = np.zeros((n, 2))
    elif isinstance(target, SetInitialState):
        if len(target.s0) != nb:
            raise ValidationError(
                f"initial-state intervention has {len(target.s0)} blocks "
                f"for a {nb}-block tower")
        base = target.s0
        forced = target.s0.centers()
        s0 = np.broadcast_to(forced[None, :, :], (n, nb, 2))
        if nb:
            belief_top = forced[-1] + ws[:, -1, :]
        else:
            belief_top = np.zeros((n, 2))
    else:
        raise TypeError(f"unknown intervention target: {target!r}")

    return outcome_mask(s0, belief_top, action, wa, base=base)


# ---------------------------------------------------------------------------
# Trace files
# ---------------------------------------------------------------------------


def tower_to_dict(tower: TowerState) -> dict:
    blocks = []
    for b in tower.blocks:
        entry = _block_spec_to_dict(b.spec)
        entry["center_x"] = b.center_x
        entry["center_y"] = b.center_y
        blocks.append(entry)
    return {
        "support_half_extents": list(tower.support_half_extents),
        "collapsed": tower.collapsed,
        "blocks": blocks,
    }


def tower_from_dict(doc: dict, where: str = "tower") -> TowerState:
    _check_keys(doc, ("support_half_extents", "collapsed", "blocks"), where=where)
    if not isinstance(doc["collapsed"], bool):
        raise SchemaError(f"{where}: collapsed must be a boolean")
    if not isinstance(doc["blocks"], list):
        raise SchemaError(f"{where}: blocks must be an array")
    placed = []
    spec_fields = ("id", "width", "depth", "height", "mass", "color")
    for i, entry in enumerate(doc["blocks"]):
        bwhere = f"{where}.blocks[{i}]"
        _check_keys(entry, spec_fields + ("center_x", "center_y"), where=bwhere)
        spec = _block_spec_from_dict({k: entry[k] for k in spec_fields}, bwhere)
        placed.append(PlacedBlock(spec, _number(entry, "center_x", bwhere),
                                  _number(entry, "center_y", bwhere)))
    try:
        return TowerState(tuple(placed), support_half_extents=_pair(doc, "support_half_extents", where),
                          collapsed=doc["collapsed"])
    except ValidationError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def action_to_dict(action: Action) -> dict:
    if isinstance(action, NullAction):
        return {"kind": "null"}
    if isinstance(action, PlaceAction):
        return {
            "kind": "place",
            "block": _block_spec_to_dict(action.spec),
            "offset_x": action.offset_x,
            "offset_y": action.offset_y,
        }
    raise TypeError(f"unknown action type: {action!r}")


def action_from_dict(doc: dict, where: str = "action") -> Action:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise SchemaError(f"{where}: expected an object with a 'kind' field")
    kind = doc["kind"]
    if kind == "null":
        _check_keys(doc, ("kind",), where=where)
        return NullAction()
    if kind == "place":
        _check_keys(doc, ("kind", "block", "offset_x", "offset_y"), where=where)
        spec = _block_spec_from_dict(doc["block"], f"{where}.block")
        return PlaceAction(spec, _number(doc, "offset_x", where),
                           _number(doc, "offset_y", where))
    raise SchemaError(f"{where}: unknown action kind {kind!r}")


def trace_to_dict(trace: EpisodeTrace) -> dict:
    doc = {
        "scenario_id": trace.scenario_id,
        "z0": tower_to_dict(trace.z0),
        "belief": tower_to_dict(trace.belief),
        "action": action_to_dict(trace.action),
        "outcome": trace.outcome,
        "noise": {"sigma_s": trace.noise.sigma_s, "sigma_a": trace.noise.sigma_a},
        "ground_truth": None,
    }
    if trace.ground_truth is not None:
        gt = trace.ground_truth
        doc["ground_truth"] = {
            "s0": tower_to_dict(gt.s0),
            "exo": {
                "ws": [list(pair) for pair in gt.exo.ws],
                "wa": list(gt.exo.wa),
            },
            "s1": tower_to_dict(gt.s1),
        }
    return doc


def trace_from_dict(doc: dict) -> EpisodeTrace:
    _check_keys(doc, ("scenario_id", "z0", "belief", "action", "outcome",
                      "noise", "ground_truth"), where="trace")
    if not isinstance(doc["scenario_id"], str):
        raise SchemaError("trace: scenario_id must be a string")
    if not isinstance(doc["outcome"], bool):
        raise SchemaError("trace: outcome must be a boolean")
    noise_obj = doc["noise"]
    _check_keys(noise_obj, ("sigma_s", "sigma_a"), where="trace.noise")
    try:
        noise = NoiseModel(_number(noise_obj, "sigma_s", "trace.noise"),
                           _number(noise_obj, "sigma_a", "trace.noise"))
    except ValidationError as exc:
        raise SchemaError(f"trace.noise: {exc}") from exc

    ground_truth = None
    gt_doc = doc["ground_truth"]
    if gt_doc is not None:
        _check_keys(gt_doc, ("s0", "exo", "s1"), where="trace.ground_truth")
        exo_doc = gt_doc["exo"]
        _check_keys(exo_doc, ("ws", "wa"), where="trace.ground_truth.exo")
        if not isinstance(exo_doc["ws"], list):
            raise SchemaError("trace.ground_truth.exo: ws must be an array")
        ws = []
        for i, pair in enumerate(exo_doc["ws"]):
            ws.append(_pair({"p": pair}, "p", f"trace.ground_truth.exo.ws[{i}]"))
        wa = _pair(exo_doc, "wa", "trace.ground_truth.exo")
        ground_truth = GroundTruth(
            s0=tower_from_dict(gt_doc["s0"], "trace.ground_truth.s0"),
            exo=ExogenousSample(ws=tuple(ws), wa=wa),
            s1=tower_from_dict(gt_doc["s1"], "trace.ground_truth.s1"),
        )

    trace = EpisodeTrace(
        scenario_id=doc["scenario_id"],
        z0=tower_from_dict(doc["z0"], "trace.z0"),
        belief=tower_from_dict(doc["belief"], "trace.belief"),
        action=action_from_dict(doc["action"]),
        outcome=doc["outcome"],
        noise=noise,
        ground_truth=ground_truth,
    )
    if ground_truth is not None and len(ground_truth.exo.ws) != len(trace.z0):
        raise SchemaError("trace.ground_truth.exo: ws length must equal the "
                          "observed block count")
    return trace


def save_trace(trace: EpisodeTrace, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace_to_dict(trace), fh, indent=2)
        fh.write("\n")


def load_trace(path) -> EpisodeTrace:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"trace file {path}: invalid JSON ({exc})") from exc
    return trace_from_dict(doc)
