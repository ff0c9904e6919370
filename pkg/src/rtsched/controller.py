"""Online edge-node decision loop (reference implementation).

Per-slot flow: look up each sensor's relaxed action (drawing which of
the two mixed policies applies), truncate the candidate set uniformly
to the per-slot budget, then fold the observed outcomes back into the
per-sensor trackers.  The jitted fleet engine reimplements exactly
these rules; this module is the readable single-sensor-step reference
that the engine is tested against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .belief import BeliefIndex, update_belief
from .model import SensorParams, step_aoi
from .planner import PARTIAL, RelaxedPolicyBundle
from .rng import MIX, TRUNC, SplitStream


@dataclass
class SensorTracker:
    """Edge-side view of one sensor."""

    params: SensorParams
    M: int
    belief: BeliefIndex
    delta: int
    b_tilde: int
    r: int = 0


@dataclass
class ControllerState:
    """Fleet trackers plus the controller's own random streams.

    class_ids maps each sensor to its policy-bundle class; when absent,
    lookups fall back to the bundle's own planning-fleet layout (only
    valid if the simulated fleet matches it).
    """

    trackers: list[SensorTracker]
    N: int
    mix_streams: list[SplitStream] = field(default_factory=list)
    trunc_stream: SplitStream | None = None
    class_ids: list[int] | None = None

    @classmethod
    def fresh(cls, fleet: list[SensorParams], M_of: list[int], N: int,
              base_seed: int, episode: int = 0,
              class_ids: list[int] | None = None) -> "ControllerState":
        trackers = [SensorTracker(params=p, M=m,
                                  belief=BeliefIndex(p.B, 0),
                                  delta=1, b_tilde=p.B)
                    for p, m in zip(fleet, M_of)]
        mixes = [SplitStream(base_seed, episode, k, MIX)
                 for k in range(len(fleet))]
        trunc = SplitStream(base_seed, episode, 0, TRUNC)
        return cls(trackers=trackers, N=N, mix_streams=mixes,
                   trunc_stream=trunc, class_ids=class_ids)

    @property
    def K(self) -> int:
        return len(self.trackers)

    def class_of(self, k: int) -> int | None:
        return self.class_ids[k] if self.class_ids is not None else None


def decide_relaxed(bundle: RelaxedPolicyBundle, state: ControllerState) -> list[int]:
    """Candidate set under the relaxed policy; no budget enforcement here.

    Each sensor independently applies the low-price policy with
    probability eta (one mixing draw per sensor per slot, always
    consumed to keep streams aligned across configurations).
    """
    candidates = []
    for k, tr in enumerate(state.trackers):
        u = state.mix_streams[k].uniform()
        cls = state.class_of(k)
        pair = bundle.classes[cls if cls is not None
                              else bundle.class_of_sensor[k]]
        sol = pair.minus if u < bundle.eta else pair.plus
        if bundle.kind == PARTIAL:
            a = sol.psi[tr.belief.anchor, tr.belief.age, tr.r, tr.delta - 1]
        else:
            raise ValueError("exact-knowledge bundles decide on the true "
                             "battery; use the simulator's exact path")
        if a > 0.5:
            candidates.append(k)
    return candidates


def truncate(X: list[int], N: int, stream: SplitStream) -> list[int]:
    """Uniform down-sample of the candidate set to the slot budget.

    Partial Fisher-Yates on the candidate list: exactly N draws are
    consumed when |X| > N, none otherwise.
    """
    if N < 0:
        raise ValueError("N must be >= 0")
    if len(X) <= N:
        return list(X)
    arr = list(X)
    c = len(arr)
    for i in range(N):
        j = i + stream.randint(c - i)
        arr[i], arr[j] = arr[j], arr[i]
    return arr[:N]


def greedy_decide(state: ControllerState, N: int) -> list[int]:
    """Request-aware baseline: largest-AoI requested sensors first.

    Equal ages are split by a per-slot coin from each sensor's
    randomization stream (one draw per sensor per call, requested or
    not, to keep stream consumption uniform).  An index tie-break here
    would let capped-age sensors with the lowest indices monopolize the
    budget, badly degrading the baseline.
    """
    coins = [state.mix_streams[k].uniform() for k in range(state.K)]
    requested = [k for k, tr in enumerate(state.trackers) if tr.r == 1]
    requested.sort(key=lambda k: (-state.trackers[k].delta, coins[k], k))
    return requested[:min(N, len(requested))]


def observe(state: ControllerState, commanded: list[int],
            outcomes: dict[int, tuple[bool, int | None]],
            next_r: list[int] | None = None) -> ControllerState:
    """Fold one slot's outcomes into the trackers (in place).

    outcomes maps commanded sensor -> (delivered, reported level).
    Raises on outcomes inconsistent with the command set or the battery
    reporting contract.
    """
    cmd = set(commanded)
    if set(outcomes) - cmd:
        raise ValueError("outcome reported for a sensor that was not commanded")
    for k, tr in enumerate(state.trackers):
        if k in cmd:
            delivered, reported = outcomes[k]
            if delivered:
                if reported is None or not 1 <= reported <= tr.params.B:
                    raise ValueError(f"delivered update with invalid level "
                                     f"{reported} for sensor {k}")
                tr.belief = update_belief(tr.belief, a=1, delivered=True,
                                          reported=reported, M=tr.M)
                tr.b_tilde = reported
                tr.delta = step_aoi(tr.delta, 1, tr.params.delta_max)
            else:
                tr.belief = update_belief(tr.belief, a=1, delivered=False,
                                          M=tr.M)
                tr.delta = step_aoi(tr.delta, 0, tr.params.delta_max)
        else:
            tr.belief = update_belief(tr.belief, a=0, M=tr.M)
            tr.delta = step_aoi(tr.delta, 0, tr.params.delta_max)
        if next_r is not None:
            tr.r = next_r[k]
    return state
