"""Ground-truth dynamics of one sensor and its exogenous processes.

Single source of truth for battery, age and cost stepping; the solver,
the exact benchmark, the belief filter and both simulation engines all
reuse these rules.

Slot anatomy (fixed order): the request ``r`` is observed, the edge
decides the command ``a``, the sensor transmits ``d = a * 1{b >= 1}``,
the energy arrival ``e`` lands, then battery and age step into slot
t+1.  The arrival of slot t is bankable for slot t+1 but cannot be
spent at slot t.
"""

from __future__ import annotations

from dataclasses import dataclass

from .rng import SplitStream


@dataclass(frozen=True)
class SensorParams:
    """Per-sensor environment constants; one value class per distinct tuple.

    lam       -- probability of one energy-unit arrival per slot
    p         -- probability the sensor's quantity is requested per slot
    B         -- battery capacity in energy units
    delta_max -- age-of-information cap in slots
    """

    lam: float
    p: float
    B: int
    delta_max: int

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        if self.delta_max < 2:
            raise ValueError(f"delta_max must be >= 2, got {self.delta_max}")


@dataclass
class SensorTruth:
    """Hidden per-sensor ground truth plus the edge's last-reported level.

    b_tilde is 0 only as a configured initial value; after any delivered
    update it equals the reported level in {1..B}.
    """

    b: int
    delta: int
    b_tilde: int


@dataclass(frozen=True)
class SlotDraw:
    """One slot's exogenous outcomes: request and energy-arrival bits."""

    r: int
    e: int


def effective_transmission(a: int, b: int) -> int:
    """A commanded sensor transmits iff its battery is non-empty."""
    return a if b >= 1 else 0


def step_battery(b: int, e: int, d: int, B: int) -> int:
    """Battery at t+1: spend d, bank e, saturate at capacity."""
    if d > (1 if b >= 1 else 0):
        raise ValueError(f"energy causality violated: d={d} with b={b}")
    return min(b + e - d, B)


def step_aoi(delta: int, d: int, delta_max: int) -> int:
    """Age drops to one on a delivered update, else increments to the cap."""
    if d == 1:
        return 1
    return min(delta + 1, delta_max)


def on_demand_cost(r: int, delta: int, d: int, delta_max: int) -> int:
    """Cost of the slot: the age served to the requester at slot end.

    Equals r * delta(t+1); zero when nothing was requested.
    """
    return r * min((1 - d) * delta + 1, delta_max)


def sample_exogenous(params: SensorParams, rng: SplitStream) -> SlotDraw:
    """Draw one slot's (request, energy) pair: request coin first."""
    r = rng.bernoulli(params.p)
    e = rng.bernoulli(params.lam)
    return SlotDraw(r=r, e=e)


def draw_initial_battery(params: SensorParams, rng: SplitStream) -> int:
    """Initial battery consistent with the controller's initial belief.

    Sampled from the post-update distribution anchored at a full
    battery: level B-1 with probability 1-lam, level B with lam.  This
    keeps the tracked belief exact from slot 1 onward.
    """
    u = rng.uniform()
    return params.B if u < params.lam else params.B - 1
