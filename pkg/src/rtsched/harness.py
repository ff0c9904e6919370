"""Slot-level fleet experiments: episodes, sweeps, concentration checks, CSV.

Episodes are deterministic functions of (config, base seed, episode
index); per-sensor environment streams do not depend on the policy
kind, so different policies face identical request/energy draws (paired
comparisons).  The jitted engine is the default; the pure-Python
reference path exists for validation and produces bit-identical
metrics.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from . import fastsim
from .controller import (ControllerState, decide_relaxed, greedy_decide,
                         observe, truncate)
from .model import SensorParams, draw_initial_battery
from .planner import (EXACT, PARTIAL, ArtifactCache, PlannerConfig,
                      RelaxedPolicyBundle, plan)
from .rng import ENV, INIT, MIX, TRUNC, SplitStream

RELAX_TRUNCATE = "relax-truncate"
GREEDY = "greedy"
RELAXED_LB = "relaxed-lower-bound"
EXACT_RT = "exact-knowledge-relax-truncate"
UNCONSTRAINED = "unconstrained"
POLICY_KINDS = (RELAX_TRUNCATE, GREEDY, RELAXED_LB, EXACT_RT, UNCONSTRAINED)

CSV_HEADER = ("experiment,policy,K,gamma,N,avg_cost,ci95,avg_commands,"
              "commands_ci95,episodes,slots,seed,wall_seconds")


class InvariantViolation(RuntimeError):
    """A simulated run broke a hard invariant (budget or energy causality)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: fleet shape, budget, policy kind, protocol, seeds."""

    K: int
    lambdas: tuple[float, ...]
    p: float = 0.8
    B: int = 3
    delta_max: int = 64
    gamma: float | None = None
    N: int | None = None
    policy: str = RELAX_TRUNCATE
    episodes: int = 3
    slots: int = 1_000_000
    seed: int = 20_240_501
    theta: float = 1e-6
    atlas_tol: float = 1e-6
    epsilon: float = 1e-3
    eta_tol: float = 1e-6
    engine: str = "numba"

    def __post_init__(self):
        if self.policy not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.policy!r}")
        if self.gamma is None and self.N is None:
            raise ValueError("one of gamma or N must be given")
        if self.K < 1 or self.episodes < 1 or self.slots < 1:
            raise ValueError("K, episodes and slots must be positive")

    @property
    def budget(self) -> int:
        """Per-slot command budget: N directly, else round(gamma * K)."""
        if self.N is not None:
            return self.N
        return max(1, round(self.gamma * self.K))

    @property
    def gamma_value(self) -> float:
        return self.gamma if self.gamma is not None else self.N / self.K

    def fleet(self) -> list[SensorParams]:
        """Cyclic class assignment: sensor k gets lambdas[k % len]."""
        return [SensorParams(lam=self.lambdas[k % len(self.lambdas)],
                             p=self.p, B=self.B, delta_max=self.delta_max)
                for k in range(self.K)]

    def planner_config(self) -> PlannerConfig:
        return PlannerConfig(epsilon=self.epsilon, eta_tol=self.eta_tol,
                             theta=self.theta, atlas_tol=self.atlas_tol)


@dataclass
class EpisodeMetrics:
    """Exact integer accumulators of one episode.

    x_hist counts pre-truncation candidate-set sizes per slot; cmd_hist
    counts issued command-set sizes (the budget certificate).
    """

    K: int
    slots: int
    cost_sum: int
    command_sum: int
    x_hist: np.ndarray
    cmd_hist: np.ndarray
    seed: int
    episode: int

    @property
    def max_commands_per_slot(self) -> int:
        nz = np.nonzero(self.cmd_hist)[0]
        return int(nz[-1]) if nz.size else 0

    @property
    def avg_cost(self) -> float:
        return self.cost_sum / (self.K * self.slots)

    @property
    def avg_commands(self) -> float:
        return self.command_sum / (self.K * self.slots)

    def x_stats(self) -> tuple[float, float, float]:
        """(mean, population std, mean absolute deviation) of |X(t)|."""
        n = self.x_hist.sum()
        vals = np.arange(self.x_hist.size)
        mean = float((self.x_hist * vals).sum() / n)
        var = float((self.x_hist * (vals - mean) ** 2).sum() / n)
        mad = float((self.x_hist * np.abs(vals - mean)).sum() / n)
        return mean, math.sqrt(var), mad


def build_bundle(config: ExperimentConfig,
                 cache: ArtifactCache | None = None,
                 backends: dict | None = None,
                 bundles: dict | None = None) -> RelaxedPolicyBundle | None:
    """Plan (or fetch) the policy bundle a config needs; None for greedy."""
    if config.policy == GREEDY:
        return None
    kind = EXACT if config.policy == EXACT_RT else PARTIAL
    gamma = 1.0 if config.policy == UNCONSTRAINED else config.gamma_value
    fleet = config.fleet()
    if bundles is not None:
        key = (kind, gamma, tuple(sorted(
            ((s.lam, s.p, s.B, s.delta_max), fleet.count(s))
            for s in set(fleet))))
        if key not in bundles:
            bundles[key] = plan(fleet, gamma, config.planner_config(),
                                kind=kind, cache=cache, backends=backends)
        return bundles[key]
    return plan(fleet, gamma, config.planner_config(), kind=kind,
                cache=cache, backends=backends)


def class_ids_for(bundle: RelaxedPolicyBundle,
                  fleet: list[SensorParams]) -> np.ndarray:
    """Per-sensor class index into the bundle for an arbitrary fleet.

    Bundles depend on parameter classes, not fleet size, so one bundle
    serves any fleet drawn from the same classes (K sweeps).
    """
    index = {pair.params: i for i, pair in enumerate(bundle.classes)}
    try:
        return np.array([index[s] for s in fleet], np.int64)
    except KeyError as exc:
        raise ValueError(f"bundle has no policy for sensor class "
                         f"{exc.args[0]}") from None


def _stacked_tables(bundle: RelaxedPolicyBundle):
    """Pack per-class policy tables for the jitted engine."""
    C = len(bundle.classes)
    if bundle.kind == PARTIAL:
        A = bundle.classes[0].params.B + 1
        D = bundle.classes[0].params.delta_max
        Ms = [bundle.atlases[i].M for i in range(C)]
        Mmax = max(Ms)
        minus = np.zeros((C, A, Mmax, 2, D), np.uint8)
        plus = np.zeros_like(minus)
        for i, pair in enumerate(bundle.classes):
            minus[i, :, :Ms[i]] = pair.minus.psi > 0.5
            plus[i, :, :Ms[i]] = pair.plus.psi > 0.5
        dummy = np.zeros((1, 1, 1, 1), np.uint8)
        return minus, plus, dummy, dummy, np.asarray(Ms, np.int64)
    A = bundle.classes[0].params.B + 1
    D = bundle.classes[0].params.delta_max
    xminus = np.zeros((C, A, 2, D), np.uint8)
    xplus = np.zeros_like(xminus)
    for i, pair in enumerate(bundle.classes):
        xminus[i] = pair.minus.psi > 0.5
        xplus[i] = pair.plus.psi > 0.5
    dummy = np.zeros((1, 1, 1, 1, 1), np.uint8)
    return dummy, dummy, xminus, xplus, np.ones(C, np.int64)


def run_episode(config: ExperimentConfig,
                bundle: RelaxedPolicyBundle | None,
                episode: int) -> EpisodeMetrics:
    """Simulate one episode; deterministic given (config, episode)."""
    fleet = config.fleet()
    if any(s.B != config.B or s.delta_max != config.delta_max for s in fleet):
        raise ValueError("engine requires a fleet-wide battery capacity and "
                         "AoI cap")
    if config.engine == "reference":
        return _run_reference_episode(config, bundle, episode, fleet)

    K = config.K
    if bundle is None:
        kind = fastsim.KIND_GREEDY
        eta = 1.0
        class_id = np.zeros(K, np.int64)
        dummy5 = np.zeros((1, 1, 1, 1, 1), np.uint8)
        dummy4 = np.zeros((1, 1, 1, 1), np.uint8)
        tables = (dummy5, dummy5, dummy4, dummy4, np.ones(1, np.int64))
    else:
        kind = (fastsim.KIND_EXACT if bundle.kind == EXACT
                else fastsim.KIND_PARTIAL)
        eta = bundle.eta
        class_id = class_ids_for(bundle, fleet)
        tables = _stacked_tables(bundle)
    psi_minus, psi_plus, xpsi_minus, xpsi_plus, M_of_class = tables
    do_truncate = config.policy in (RELAX_TRUNCATE, GREEDY, EXACT_RT)

    lam = np.array([s.lam for s in fleet])
    p = np.array([s.p for s in fleet])
    env_keys = np.array([SplitStream(config.seed, episode, k, ENV).key
                         for k in range(K)], np.uint64)
    mix_keys = np.array([SplitStream(config.seed, episode, k, MIX).key
                         for k in range(K)], np.uint64)
    init_keys = np.array([SplitStream(config.seed, episode, k, INIT).key
                          for k in range(K)], np.uint64)
    trunc_key = np.uint64(SplitStream(config.seed, episode, 0, TRUNC).key)

    err, cost_sum, cmd_sum, x_hist, cmd_hist, *_ = fastsim.episode_loop(
        config.slots, K, config.budget, kind, do_truncate, eta,
        config.B, config.delta_max, class_id, lam, p, M_of_class,
        psi_minus, psi_plus, xpsi_minus, xpsi_plus,
        env_keys, mix_keys, init_keys, trunc_key)
    if err == 1:
        raise InvariantViolation(
            f"slot budget exceeded in episode {episode} of {config.policy}")
    if err == 2:
        raise InvariantViolation(
            f"battery out of range in episode {episode} of {config.policy}")
    return EpisodeMetrics(K=K, slots=config.slots, cost_sum=int(cost_sum),
                          command_sum=int(cmd_sum), x_hist=x_hist,
                          cmd_hist=cmd_hist, seed=config.seed, episode=episode)


def _run_reference_episode(config: ExperimentConfig,
                           bundle: RelaxedPolicyBundle | None,
                           episode: int,
                           fleet: list[SensorParams]) -> EpisodeMetrics:
    """Pure-Python episode with identical stream consumption."""
    K = config.K
    N = config.budget
    do_truncate = config.policy in (RELAX_TRUNCATE, GREEDY, EXACT_RT)
    env = [SplitStream(config.seed, episode, k, ENV) for k in range(K)]
    init = [SplitStream(config.seed, episode, k, INIT) for k in range(K)]
    if bundle is not None:
        cls_ids = list(class_ids_for(bundle, fleet))
        M_of = ([bundle.atlases[c].M for c in cls_ids]
                if bundle.kind == PARTIAL else [1] * K)
    else:
        cls_ids = None
        M_of = [1] * K
    state = ControllerState.fresh(fleet, M_of, N, config.seed, episode,
                                  class_ids=cls_ids)
    b = [draw_initial_battery(fleet[k], init[k]) for k in range(K)]

    x_hist = np.zeros(K + 1, np.int64)
    cmd_hist = np.zeros(K + 1, np.int64)
    cost_sum = 0
    cmd_sum = 0
    for _ in range(config.slots):
        for k, tr in enumerate(state.trackers):
            tr.r = env[k].bernoulli(fleet[k].p)

        if bundle is None:
            X = [k for k, tr in enumerate(state.trackers) if tr.r == 1]
            commanded = greedy_decide(state, N)
        elif bundle.kind == PARTIAL:
            X = decide_relaxed(bundle, state)
            commanded = truncate(X, N, state.trunc_stream) if do_truncate else X
        else:
            X = []
            for k, tr in enumerate(state.trackers):
                u = state.mix_streams[k].uniform()
                pair = bundle.classes[cls_ids[k]]
                sol = pair.minus if u < bundle.eta else pair.plus
                if sol.psi[b[k], tr.r, tr.delta - 1] > 0.5:
                    X.append(k)
            commanded = truncate(X, N, state.trunc_stream) if do_truncate else X
        x_hist[len(X)] += 1
        cmd_hist[len(commanded)] += 1
        if do_truncate and len(commanded) > N:
            raise InvariantViolation("slot budget exceeded (reference engine)")

        outcomes = {}
        for k in commanded:
            d = 1 if b[k] >= 1 else 0
            outcomes[k] = (bool(d), b[k] if d else None)
        cmd_set = set(commanded)
        for k, tr in enumerate(state.trackers):
            d = 1 if (k in cmd_set and b[k] >= 1) else 0
            cost_sum += tr.r * (1 if d else min(tr.delta + 1, config.delta_max))
            cmd_sum += 1 if k in cmd_set else 0
            e = env[k].bernoulli(fleet[k].lam)
            b[k] = min(b[k] + e - d, config.B)
            if not 0 <= b[k] <= config.B:
                raise InvariantViolation("battery out of range (reference)")
        observe(state, commanded, outcomes)
    return EpisodeMetrics(K=K, slots=config.slots, cost_sum=cost_sum,
                          command_sum=cmd_sum, x_hist=x_hist,
                          cmd_hist=cmd_hist, seed=config.seed, episode=episode)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    episode_metrics: list[EpisodeMetrics]
    wall_seconds: float

    @property
    def avg_cost(self) -> float:
        return float(np.mean([m.avg_cost for m in self.episode_metrics]))

    @property
    def avg_commands(self) -> float:
        return float(np.mean([m.avg_commands for m in self.episode_metrics]))

    @property
    def cost_ci95(self) -> float:
        return _t_ci95([m.avg_cost for m in self.episode_metrics])

    @property
    def commands_ci95(self) -> float:
        return _t_ci95([m.avg_commands for m in self.episode_metrics])


def _t_ci95(values: list[float]) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    s = float(np.std(values, ddof=1))
    if s == 0.0:
        return 0.0
    return float(stats.t.ppf(0.975, n - 1) * s / math.sqrt(n))


def run_experiment(config: ExperimentConfig,
                   cache: ArtifactCache | None = None,
                   backends: dict | None = None,
                   bundles: dict | None = None,
                   bundle: RelaxedPolicyBundle | None = None) -> ExperimentResult:
    """Run all episodes of a config on derived seeds and aggregate."""
    t0 = time.perf_counter()
    if bundle is None and config.policy != GREEDY:
        bundle = build_bundle(config, cache, backends, bundles)
    metrics = [run_episode(config, bundle, ep)
               for ep in range(config.episodes)]
    return ExperimentResult(config=config, episode_metrics=metrics,
                            wall_seconds=time.perf_counter() - t0)


@dataclass
class SweepRow:
    experiment: str
    policy: str
    K: int
    gamma: float
    N: int
    avg_cost: float
    ci95: float
    avg_commands: float
    commands_ci95: float
    episodes: int
    slots: int
    seed: int
    wall_seconds: float

    @classmethod
    def from_result(cls, experiment: str, res: ExperimentResult) -> "SweepRow":
        cfg = res.config
        return cls(experiment=experiment, policy=cfg.policy, K=cfg.K,
                   gamma=cfg.gamma_value, N=cfg.budget,
                   avg_cost=res.avg_cost, ci95=res.cost_ci95,
                   avg_commands=res.avg_commands,
                   commands_ci95=res.commands_ci95, episodes=cfg.episodes,
                   slots=cfg.slots, seed=cfg.seed,
                   wall_seconds=res.wall_seconds)


def sweep(base: ExperimentConfig, axis: str, values, kinds,
          cache: ArtifactCache | None = None,
          backends: dict | None = None,
          bundles: dict | None = None) -> list[SweepRow]:
    """One row per (axis point, policy kind), in sweep order.

    axis is "k" or "gamma"; planner artifacts are shared across axis
    points through the backends/bundles maps.
    """
    if axis not in ("k", "gamma"):
        raise ValueError("axis must be 'k' or 'gamma'")
    if backends is None:
        backends = {}
    if bundles is None:
        bundles = {}
    rows = []
    label = f"sweep-{axis}"
    for value in values:
        for kind in kinds:
            if axis == "k":
                cfg = replace(base, K=int(value), policy=kind)
            else:
                cfg = replace(base, gamma=float(value), N=None, policy=kind)
            res = run_experiment(cfg, cache=cache, backends=backends,
                                 bundles=bundles)
            rows.append(SweepRow.from_result(label, res))
    return rows


@dataclass
class ConcentrationReport:
    """Dispersion checks of the pre-truncation candidate set size."""

    K: int
    slots: int
    x_mean: float
    x_std: float
    x_mad: float
    std_bound: float
    mad_ok: bool
    std_ok: bool

    @property
    def passed(self) -> bool:
        return self.mad_ok and self.std_ok


def verify_concentration(config: ExperimentConfig,
                         bundle: RelaxedPolicyBundle | None = None,
                         slots: int = 100_000,
                         cache: ArtifactCache | None = None,
                         backends: dict | None = None,
                         bundles: dict | None = None) -> ConcentrationReport:
    """Check STD(|X|) <= sqrt(K) and MAD <= STD on an untruncated run."""
    cfg = replace(config, policy=RELAXED_LB, slots=max(slots, 100_000),
                  episodes=1)
    if bundle is None:
        bundle = build_bundle(cfg, cache, backends, bundles)
    m = run_episode(cfg, bundle, 0)
    mean, std, mad = m.x_stats()
    slack = 3.0 / math.sqrt(2.0 * cfg.slots)
    bound = math.sqrt(cfg.K) * (1.0 + slack)
    return ConcentrationReport(K=cfg.K, slots=cfg.slots, x_mean=mean,
                               x_std=std, x_mad=mad, std_bound=bound,
                               mad_ok=mad <= std + 1e-12,
                               std_ok=std <= bound)


def emit_csv(rows: list[SweepRow], path) -> None:
    """Write rows in sweep order under the fixed schema header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER.split(","))
        for row in rows:
            writer.writerow([
                row.experiment, row.policy, row.K,
                repr(row.gamma), row.N,
                repr(row.avg_cost), repr(row.ci95),
                repr(row.avg_commands), repr(row.commands_ci95),
                row.episodes, row.slots, row.seed,
                repr(row.wall_seconds),
            ])
