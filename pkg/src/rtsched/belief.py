"""Edge-side posterior over a sensor's hidden battery level.

The reachable belief set under the update rules is exactly
{Lambda^m rho_j}: a reset vector rho_j (pinned by the last command
outcome) pushed forward m times through the harvest matrix Lambda.
Beliefs are therefore indexed compactly by (anchor, age) and the whole
truncated space is precomputed once into an immutable atlas.

Anchor semantics: anchor j >= 1 means the last delivered update
reported level j; anchor 0 means a command went unanswered, proving the
battery was empty.  Age m counts no-command slots since that reset and
saturates at M-1, after which the belief is frozen (it is then within
the build tolerance of a full battery anyway).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

ATLAS_FORMAT_VERSION = 1

DEFAULT_TOL = 1e-6
DESK_TOL = 1e-4
DEFAULT_HARD_CAP = 4000


def apply_harvest(beta: np.ndarray, lam: float) -> np.ndarray:
    """One no-spend slot: each level below B gains a unit w.p. lam."""
    out = np.empty_like(beta)
    out[0] = (1.0 - lam) * beta[0]
    out[1:-1] = (1.0 - lam) * beta[1:-1] + lam * beta[:-2]
    out[-1] = beta[-1] + lam * beta[-2]
    return out


def harvest_matrix(lam: float, B: int) -> np.ndarray:
    """Dense (B+1)x(B+1) left-stochastic matrix of apply_harvest."""
    m = np.zeros((B + 1, B + 1))
    for j in range(B):
        m[j, j] = 1.0 - lam
        m[j + 1, j] = lam
    m[B, B] = 1.0
    return m


def reset_belief(j: int, lam: float, B: int) -> np.ndarray:
    """Post-command belief when the outcome pinned the battery.

    A transmitting sensor at level j drops to j-1 and then harvests;
    an unanswered command (j = 0) proves level 0, which then harvests.
    Hence rho_0 == rho_1.
    """
    if not 0 <= j <= B:
        raise ValueError(f"anchor {j} outside 0..{B}")
    out = np.zeros(B + 1)
    base = max(j - 1, 0)
    out[base] = 1.0 - lam
    out[min(base + 1, B)] += lam
    return out


@dataclass(frozen=True)
class BeliefIndex:
    """Compact handle (anchor, age) for one reachable belief."""

    anchor: int
    age: int


def update_belief(idx: BeliefIndex, a: int, delivered: bool = False,
                  reported: int | None = None, M: int | None = None) -> BeliefIndex:
    """Bayes update in index space.

    No command: the belief propagates one harvest step (age + 1,
    saturating at M-1 when M is given).  A command resets the anchor:
    to the reported level on delivery, to 0 when unanswered.
    """
    if a == 0:
        if delivered:
            raise ValueError("delivery without a command is a protocol violation")
        age = idx.age + 1
        if M is not None:
            age = min(age, M - 1)
        return BeliefIndex(idx.anchor, age)
    if not delivered:
        return BeliefIndex(0, 0)
    if reported is None or reported < 1:
        raise ValueError(f"delivered update must report a level >= 1, got {reported}")
    return BeliefIndex(reported, 0)


@dataclass(frozen=True)
class BeliefAtlas:
    """Immutable precomputed table of every truncated belief.

    table[j, m] is the belief Lambda^m rho_j; entries at age M-1 are
    within `tol` (total variation) of a point mass at a full battery
    unless the hard cap cut the depth first (then `capped` is set).
    """

    lam: float
    B: int
    M: int
    tol: float
    table: np.ndarray  # (B+1, M, B+1)
    capped: bool

    @property
    def n_anchors(self) -> int:
        return self.B + 1

    def belief(self, idx: BeliefIndex) -> np.ndarray:
        return self.belief_at(idx.anchor, idx.age)

    def belief_at(self, anchor: int, age: int) -> np.ndarray:
        if not (0 <= anchor <= self.B and 0 <= age < self.M):
            raise IndexError(f"belief index ({anchor}, {age}) outside atlas "
                             f"(B={self.B}, M={self.M})")
        return self.table[anchor, age]


def belief_of_index(atlas: BeliefAtlas, idx: BeliefIndex) -> np.ndarray:
    """Constant-time lookup of the precomputed vector for idx."""
    return atlas.belief(idx)


def build_atlas(lam: float, B: int, tol: float = DEFAULT_TOL,
                hard_cap: int = DEFAULT_HARD_CAP) -> BeliefAtlas:
    """Precompute the truncated belief space.

    The depth M is the smallest table size whose last entry (age M-1)
    is within `tol` (total variation) of the full-battery point mass
    for every anchor, i.e. M = 1 + min{m : TV(Lambda^m rho_j, e_B) <=
    tol for all j}, capped at hard_cap.  Freezing the belief at age M-1
    is then a controlled approximation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if hard_cap < 1:
        raise ValueError("hard_cap must be >= 1")

    resets = np.stack([reset_belief(j, lam, B) for j in range(B + 1)])
    rows = [resets]
    cur = resets
    capped = False
    while True:
        # TV distance to e_B is P(not full)
        worst = 1.0 - cur[:, -1].min()
        if worst <= tol:
            break
        if len(rows) >= hard_cap:
            capped = True
            break
        cur = np.stack([apply_harvest(cur[j], lam) for j in range(B + 1)])
        rows.append(cur)
    table = np.stack(rows, axis=1)  # (B+1, M, B+1)
    return BeliefAtlas(lam=lam, B=B, M=table.shape[1], tol=tol,
                       table=table, capped=capped)


def save_atlas(atlas: BeliefAtlas, path) -> None:
    """Serialize to a self-describing .npz (versioned)."""
    meta = {
        "format_version": ATLAS_FORMAT_VERSION,
        "lam": atlas.lam,
        "B": atlas.B,
        "M": atlas.M,
        "tol": atlas.tol,
        "capped": atlas.capped,
    }
    np.savez(path, table=atlas.table, meta=json.dumps(meta))


def load_atlas(path) -> BeliefAtlas:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta["format_version"] != ATLAS_FORMAT_VERSION:
            raise ValueError(f"unsupported atlas format {meta['format_version']}")
        return BeliefAtlas(lam=meta["lam"], B=meta["B"], M=meta["M"],
                           tol=meta["tol"], table=data["table"],
                           capped=meta["capped"])
