"""Relaxed-problem planner: bisection on the command price, policy mixing.

Solves the budget-relaxed fleet problem by pricing commands with a
Lagrange multiplier mu, exploiting that the fleet objective separates
across sensors: each parameter class is solved once per mu probe and
reused for every sensor in the class.  The smallest mu whose optimal
policy meets the budget is found by bracket doubling plus bisection;
when the budget does not bind exactly at the bracket, the two endpoint
policies are mixed by a per-slot coin with weight eta chosen so the
fleet command rate equals the budget.

Artifacts (per-class solutions keyed by parameters, mu and tolerances)
are memoized in-process and optionally persisted to a cache directory
(RTSCHED_CACHE or explicit path).
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import exactmdp, solver
from .belief import (DEFAULT_HARD_CAP, DEFAULT_TOL, BeliefAtlas, build_atlas)
from .model import SensorParams

ARTIFACT_VERSION = 1
CACHE_ENV_VAR = "RTSCHED_CACHE"

PARTIAL = "partial"
EXACT = "exact"


@dataclass(frozen=True)
class PlannerConfig:
    epsilon: float = 1e-3          # bisection width tolerance on mu
    eta_tol: float = 1e-6          # tolerance on |fleet J - Gamma|
    equality_tol: float = 1e-6     # "J equals Gamma" branch tolerance
    mu_plus_init: float = 1.0
    growth: float = 2.0
    bracket_cap: float = float(2 ** 40)
    theta: float = solver.THETA_RELEASE
    atlas_tol: float = DEFAULT_TOL
    atlas_hard_cap: int = DEFAULT_HARD_CAP

    def __post_init__(self):
        for name in ("epsilon", "eta_tol", "equality_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class ClassSolution:
    """One parameter class solved at one mu."""

    params: SensorParams
    mu: float
    psi: np.ndarray
    L_star: float
    c_bar: float
    j_bar: float
    converged: bool = True


@dataclass
class ClassPolicyPair:
    """Per-class slice of the relaxed fleet policy."""

    params: SensorParams
    count: int
    minus: ClassSolution
    plus: ClassSolution
    mixed_c_bar: float = float("nan")
    mixed_j_bar: float = float("nan")


@dataclass
class RelaxedPolicyBundle:
    """Fleet-wide relaxed policy: endpoint policies, mixing factor, rates."""

    kind: str
    gamma: float
    classes: list[ClassPolicyPair]
    class_of_sensor: list[int]
    eta: float
    mu_star: float
    mu_minus: float
    mu_plus: float
    inactive: bool
    fleet_j_bar: float
    fleet_c_bar: float
    mixing_flagged: bool = False
    atlases: dict[int, BeliefAtlas] = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.class_of_sensor)


class ArtifactCache:
    """Content-addressed persistent store of per-class solutions."""

    def __init__(self, directory: str | os.PathLike | None = None):
        if directory is None:
            directory = os.environ.get(CACHE_ENV_VAR)
        self.directory = str(directory) if directory else None
        if self.directory:
            os.makedirs(self.directory, exist_ok=True)

    @staticmethod
    def key(kind: str, params: SensorParams, mu: float, theta: float,
            M: int | None) -> str:
        payload = json.dumps({
            "version": ARTIFACT_VERSION, "kind": kind,
            "lam": params.lam, "p": params.p, "B": params.B,
            "delta_max": params.delta_max,
            "mu": repr(mu), "theta": repr(theta), "M": M,
        }, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:24]

    def _path(self, key: str) -> str:
        return os.path.join(self.directory, f"cls_{key}.npz")

    def get(self, key: str, params: SensorParams, mu: float) -> ClassSolution | None:
        if not self.directory:
            return None
        path = self._path(key)
        if not os.path.exists(path):
            return None
        with np.load(path, allow_pickle=False) as data:
            return ClassSolution(
                params=params, mu=mu,
                psi=data["psi"].astype(np.float64),
                L_star=float(data["L_star"]),
                c_bar=float(data["c_bar"]), j_bar=float(data["j_bar"]),
                converged=bool(data["converged"]))

    def put(self, key: str, sol: ClassSolution) -> None:
        if not self.directory:
            return
        tmp = self._path(key) + ".tmp.npz"
        np.savez_compressed(tmp, psi=sol.psi.astype(np.uint8),
                            L_star=sol.L_star, c_bar=sol.c_bar,
                            j_bar=sol.j_bar, converged=sol.converged)
        os.replace(tmp, self._path(key))


class ClassBackend:
    """Solve/evaluate machinery for one parameter class and knowledge kind."""

    def __init__(self, params: SensorParams, kind: str, cfg: PlannerConfig,
                 cache: ArtifactCache | None = None):
        if kind not in (PARTIAL, EXACT):
            raise ValueError(f"unknown knowledge kind {kind!r}")
        self.params = params
        self.kind = kind
        self.cfg = cfg
        self.cache = cache
        self.atlas = (build_atlas(params.lam, params.B, cfg.atlas_tol,
                                  cfg.atlas_hard_cap)
                      if kind == PARTIAL else None)
        self._warm_h: np.ndarray | None = None
        self._memo: dict[float, ClassSolution] = {}

    @property
    def M(self) -> int | None:
        return self.atlas.M if self.atlas is not None else None

    def solve(self, mu: float) -> ClassSolution:
        if mu in self._memo:
            return self._memo[mu]
        key = None
        if self.cache is not None:
            key = ArtifactCache.key(self.kind, self.params, mu,
                                    self.cfg.theta, self.M)
            hit = self.cache.get(key, self.params, mu)
            if hit is not None:
                self._memo[mu] = hit
                return hit
        if self.kind == PARTIAL:
            res = solver.rvia_solve(self.params, self.atlas, mu,
                                    theta=self.cfg.theta, h0=self._warm_h)
            ev = solver.evaluate_policy(res.policy, self.params, self.atlas)
        else:
            res = exactmdp.exact_rvia_solve(self.params, mu,
                                            theta=self.cfg.theta,
                                            h0=self._warm_h)
            ev = exactmdp.exact_evaluate_policy(res.policy, self.params)
        self._warm_h = res.h
        sol = ClassSolution(params=self.params, mu=mu, psi=res.policy.psi,
                            L_star=res.L_star, c_bar=ev.c_bar,
                            j_bar=ev.j_bar, converged=res.converged)
        self._memo[mu] = sol
        if self.cache is not None:
            self.cache.put(key, sol)
        return sol

    def evaluate_mixture(self, minus: ClassSolution, plus: ClassSolution,
                         eta: float) -> solver.EvalResult:
        psi = eta * minus.psi + (1.0 - eta) * plus.psi
        if self.kind == PARTIAL:
            return solver.evaluate_policy(psi, self.params, self.atlas)
        return exactmdp.exact_evaluate_policy(psi, self.params)


def group_classes(fleet: list[SensorParams]):
    """Group sensors into parameter classes, preserving first-seen order."""
    classes: list[SensorParams] = []
    counts: list[int] = []
    class_of_sensor: list[int] = []
    index: dict[SensorParams, int] = {}
    for params in fleet:
        if params not in index:
            index[params] = len(classes)
            classes.append(params)
            counts.append(0)
        counts[index[params]] += 1
        class_of_sensor.append(index[params])
    return classes, counts, class_of_sensor


def bisect_mu(backends: list[ClassBackend], counts: list[int], gamma: float,
              cfg: PlannerConfig):
    """Bracket and bisect the command price until the budget is met.

    Returns (mu_minus, mu_plus, sols_minus, sols_plus, inactive); the
    loop keeps fleet J(mu_minus) >= gamma >= fleet J(mu_plus).
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    K = sum(counts)

    def solve_all(mu: float) -> list[ClassSolution]:
        # one class per task; each backend's warm-start state is only
        # ever touched by its own task
        if len(backends) == 1:
            return [backends[0].solve(mu)]
        with ThreadPoolExecutor(max_workers=os.cpu_count()) as pool:
            return list(pool.map(lambda b: b.solve(mu), backends))

    def fleet_j(mu: float) -> float:
        sols = solve_all(mu)
        return sum(c * s.j_bar for s, c in zip(sols, counts)) / K

    j0 = fleet_j(0.0)
    if j0 <= gamma:
        sols = [b.solve(0.0) for b in backends]
        return 0.0, 0.0, sols, sols, True

    mu_minus, mu_plus = 0.0, cfg.mu_plus_init
    while fleet_j(mu_plus) > gamma:
        mu_minus = mu_plus
        mu_plus *= cfg.growth
        if mu_plus > cfg.bracket_cap:
            raise RuntimeError(
                "command-price bracket exceeded cap; command rate did not "
                "fall below the budget")
    while mu_plus - mu_minus > cfg.epsilon:
        mid = 0.5 * (mu_plus + mu_minus)
        if fleet_j(mid) >= gamma:
            mu_minus = mid
        else:
            mu_plus = mid
    sols_minus = [b.solve(mu_minus) for b in backends]
    sols_plus = [b.solve(mu_plus) for b in backends]
    return mu_minus, mu_plus, sols_minus, sols_plus, False


def find_mixing(backends: list[ClassBackend], counts: list[int],
                sols_minus: list[ClassSolution], sols_plus: list[ClassSolution],
                gamma: float, cfg: PlannerConfig,
                max_iters: int = 200):
    """Per-slot mixing weight eta making the fleet command rate hit gamma.

    Bisection on [0, 1] over the mixed chains' exact rates; if the
    bracket misbehaves (non-monotone command rate), falls back to a
    101-point grid choosing the closest rate below gamma and flags it.
    Returns (eta, per-class EvalResults at eta, flagged).
    """
    K = sum(counts)

    def fleet_eval(eta: float):
        evs = [b.evaluate_mixture(mn, pl, eta)
               for b, mn, pl in zip(backends, sols_minus, sols_plus)]
        j = sum(c * e.j_bar for c, e in zip(counts, evs)) / K
        return j, evs

    j_minus = sum(c * s.j_bar for c, s in zip(counts, sols_minus)) / K
    j_plus = sum(c * s.j_bar for c, s in zip(counts, sols_plus)) / K
    if abs(j_minus - gamma) <= cfg.equality_tol or j_minus <= j_plus:
        _, evs = fleet_eval(1.0)
        return 1.0, evs, False
    if abs(j_plus - gamma) <= cfg.equality_tol:
        _, evs = fleet_eval(0.0)
        return 0.0, evs, False

    lo, hi = 0.0, 1.0
    for _ in range(max_iters):
        eta = 0.5 * (lo + hi)
        j, evs = fleet_eval(eta)
        if abs(j - gamma) <= cfg.eta_tol:
            return eta, evs, False
        if j > j_minus + 1e-9 or j < j_plus - 1e-9:
            break  # bracket violation: command rate not monotone in eta
        if j >= gamma:
            hi = eta
        else:
            lo = eta
        if hi - lo < 1e-15:
            break

    best_eta, best_j, best_evs = None, -np.inf, None
    fallback = None
    for eta in np.linspace(0.0, 1.0, 101):
        j, evs = fleet_eval(float(eta))
        if j <= gamma and j > best_j:
            best_eta, best_j, best_evs = float(eta), j, evs
        if fallback is None or abs(j - gamma) < fallback[1]:
            fallback = ((float(eta), evs), abs(j - gamma))
    if best_eta is None:
        (best_eta, best_evs), _ = fallback
    return best_eta, best_evs, True


def plan(fleet: list[SensorParams], gamma: float,
         cfg: PlannerConfig = PlannerConfig(), kind: str = PARTIAL,
         cache: ArtifactCache | None = None,
         backends: dict | None = None) -> RelaxedPolicyBundle:
    """Plan the relaxed fleet policy for a given normalized budget.

    `backends` may carry ClassBackend instances from a previous plan to
    reuse atlases, warm starts and memoized solutions across budgets.
    """
    if not fleet:
        raise ValueError("fleet must be non-empty")
    classes, counts, class_of_sensor = group_classes(fleet)
    if backends is None:
        backends = {}
    cls_backends = []
    for params in classes:
        bk = (kind, params)
        if bk not in backends:
            backends[bk] = ClassBackend(params, kind, cfg, cache)
        cls_backends.append(backends[bk])

    mu_minus, mu_plus, sols_minus, sols_plus, inactive = bisect_mu(
        cls_backends, counts, gamma, cfg)

    if inactive:
        eta, flagged = 1.0, False
        evs = [solver.EvalResult(s.c_bar, s.j_bar) for s in sols_minus]
        mu_star = 0.0
    else:
        eta, evs, flagged = find_mixing(cls_backends, counts, sols_minus,
                                        sols_plus, gamma, cfg)
        mu_star = 0.5 * (mu_minus + mu_plus)

    K = len(fleet)
    pairs = []
    for params, count, mn, pl, ev in zip(classes, counts, sols_minus,
                                         sols_plus, evs):
        pairs.append(ClassPolicyPair(params=params, count=count, minus=mn,
                                     plus=pl, mixed_c_bar=ev.c_bar,
                                     mixed_j_bar=ev.j_bar))
    fleet_j = sum(c * e.j_bar for c, e in zip(counts, evs)) / K
    fleet_c = sum(c * e.c_bar for c, e in zip(counts, evs)) / K
    atlases = {i: b.atlas for i, b in enumerate(cls_backends)
               if b.atlas is not None}
    return RelaxedPolicyBundle(
        kind=kind, gamma=gamma, classes=pairs,
        class_of_sensor=class_of_sensor, eta=eta, mu_star=mu_star,
        mu_minus=mu_minus, mu_plus=mu_plus, inactive=inactive,
        fleet_j_bar=fleet_j, fleet_c_bar=fleet_c, mixing_flagged=flagged,
        atlases=atlases)


def lower_bound(bundle: RelaxedPolicyBundle) -> float:
    """Fleet average cost of the relaxed policy (the benchmark floor).

    Computed from the mixed chains' own stationary evaluation, not a
    linear blend of the endpoint costs.
    """
    K = bundle.K
    return sum(p.count * p.mixed_c_bar for p in bundle.classes) / K
