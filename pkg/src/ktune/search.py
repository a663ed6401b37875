"""Budget-aware exploration of a configuration space.

Three strategies share one driver: exhaustive enumeration, seeded random
sampling without replacement, and successive halving (re-measure the
surviving fraction at increasing repetition counts). The driver owns the
trace, the counters, the budget, and the retry policy; strategies only
decide which config to try next.

Results are deterministic: the same space, shape, seeded strategy, and
noise-free profile always produce the same trace and the same best.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .configspace import (
    ConfigSpace,
    KernelConfig,
    ShapeKey,
    enumerate_configs,
)
from .errors import SearchAborted
from .executor import (
    DEFAULT_PLAN,
    EnvFingerprint,
    EvalOutcome,
    EvaluationPlan,
)

# Abort only after this many attempts; a single early failure is not yet
# evidence that the evaluator is broken.
MIN_ATTEMPTS_FOR_ABORT = 4


@dataclass(frozen=True)
class Exhaustive:
    """Try every valid config in enumeration order."""

    def descriptor(self) -> dict:
        return {"name": "exhaustive"}


@dataclass(frozen=True)
class RandomSearch:
    """n configs sampled without replacement, order fixed by the seed."""

    seed: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("RandomSearch.n must be >= 1")

    def descriptor(self) -> dict:
        return {"name": "random", "seed": self.seed, "n": self.n}


@dataclass(frozen=True)
class Halving:
    """Successive halving over a seeded sample of the space.

    Round i measures every surviving candidate at reps_schedule[i]
    repetitions and keeps the best ceil(keep_fraction * ok_count) of them;
    invalid and failed candidates never survive.
    """

    seed: int
    initial_fraction: float = 1.0
    keep_fraction: float = 0.5
    rounds: int = 3
    reps_schedule: tuple[int, ...] = (3, 5, 10)

    def __post_init__(self):
        if not (0.0 < self.initial_fraction <= 1.0):
            raise ValueError("initial_fraction must be in (0, 1]")
        if not (0.0 < self.keep_fraction < 1.0):
            raise ValueError("keep_fraction must be in (0, 1)")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if len(self.reps_schedule) != self.rounds:
            raise ValueError("reps_schedule length must equal rounds")
        if any(r < 1 for r in self.reps_schedule):
            raise ValueError("reps_schedule entries must be >= 1")
        if any(a > b for a, b in zip(self.reps_schedule, self.reps_schedule[1:])):
            raise ValueError("reps_schedule must be nondecreasing")

    def descriptor(self) -> dict:
        return {
            "name": "halving",
            "seed": self.seed,
            "initial_fraction": self.initial_fraction,
            "keep_fraction": self.keep_fraction,
            "rounds": self.rounds,
            "reps_schedule": list(self.reps_schedule),
        }


Strategy = Exhaustive | RandomSearch | Halving


@dataclass(frozen=True)
class SearchBudget:
    """Stop conditions checked between evaluations, never mid-measurement."""

    max_evaluations: int | None = None
    max_wall_ms: float | None = None

    def __post_init__(self):
        if self.max_evaluations is not None and self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1 or unlimited")
        if self.max_wall_ms is not None and self.max_wall_ms <= 0:
            raise ValueError("max_wall_ms must be > 0 or unlimited")

    def descriptor(self) -> dict:
        return {"max_evaluations": self.max_evaluations, "max_wall_ms": self.max_wall_ms}


UNLIMITED = SearchBudget()


@dataclass(frozen=True)
class TraceEntry:
    config_digest: str
    outcome: EvalOutcome
    wall_ms: float

    def to_json_dict(self) -> dict:
        return {
            "config": self.config_digest,
            "outcome": self.outcome.to_json_dict(),
            "wall_ms": self.wall_ms,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TraceEntry":
        return cls(
            config_digest=d["config"],
            outcome=EvalOutcome.from_json_dict(d["outcome"]),
            wall_ms=float(d.get("wall_ms", 0.0)),
        )


@dataclass
class TuningResult:
    """Outcome of one search: the best config plus the full evidence."""

    space_digest: str
    shape: ShapeKey
    fingerprint: EnvFingerprint
    strategy: dict
    budget: dict
    best: KernelConfig | None
    best_median_ms: float | None
    trace: list[TraceEntry]
    counters: dict[str, int]
    time_split: dict[str, float]

    @property
    def no_viable(self) -> bool:
        return self.best is None

    def to_json_dict(self) -> dict:
        return {
            "space_digest": self.space_digest,
            "shape": self.shape.dims,
            "fingerprint": self.fingerprint.to_json_dict(),
            "strategy": self.strategy,
            "budget": self.budget,
            "best": None if self.best is None else self.best.assignments,
            "best_median_ms": self.best_median_ms,
            "trace": [e.to_json_dict() for e in self.trace],
            "counters": dict(self.counters),
            "time_split": dict(self.time_split),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TuningResult":
        best = d.get("best")
        return cls(
            space_digest=d["space_digest"],
            shape=ShapeKey.from_dims(d["shape"]),
            fingerprint=EnvFingerprint.from_json_dict(d["fingerprint"]),
            strategy=dict(d.get("strategy", {})),
            budget=dict(d.get("budget", {})),
            best=None if best is None else KernelConfig.from_assignments(best),
            best_median_ms=d.get("best_median_ms"),
            trace=[TraceEntry.from_json_dict(e) for e in d.get("trace", [])],
            counters=dict(d.get("counters", {})),
            time_split=dict(d.get("time_split", {})),
        )


def select_best(trace: list[TraceEntry]) -> TraceEntry | None:
    """The Ok entry with the smallest median; ties go to the smaller config
    digest so selection is deterministic across platforms."""
    best = None
    for entry in trace:
        if not entry.outcome.is_ok:
            continue
        key = (entry.outcome.measurement.median_ms, entry.config_digest)
        if best is None or key < (best.outcome.measurement.median_ms, best.config_digest):
            best = entry
    return best


class _BudgetExhausted(Exception):
    pass


class _Driver:
    """Shared bookkeeping: trace, counters, budget checks, retry, abort."""

    def __init__(self, session, shape: ShapeKey, plan: EvaluationPlan, budget: SearchBudget):
        self.session = session
        self.shape = shape
        self.plan = plan
        self.budget = budget
        self.trace: list[TraceEntry] = []
        self.configs_seen: dict[str, KernelConfig] = {}
        self.counters = {"evaluated": 0, "ok": 0, "invalid": 0, "failed": 0}
        self.hard_failures = 0
        self.time_split = {"total_compile_ms": 0.0, "total_run_ms": 0.0, "total_wall_ms": 0.0}

    def _check_budget(self):
        b = self.budget
        if b.max_evaluations is not None and self.counters["evaluated"] >= b.max_evaluations:
            raise _BudgetExhausted
        if b.max_wall_ms is not None and self.time_split["total_wall_ms"] >= b.max_wall_ms:
            raise _BudgetExhausted

    def _attempt(self, config: KernelConfig, reps: int) -> EvalOutcome:
        self._check_budget()
        outcome, wall_ms = self.session.evaluate(config, self.shape, self.plan.with_reps(reps))
        self.trace.append(TraceEntry(config.digest, outcome, wall_ms))
        self.configs_seen[config.digest] = config
        self.counters["evaluated"] += 1
        self.time_split["total_wall_ms"] += wall_ms
        if outcome.is_ok:
            self.counters["ok"] += 1
            self.time_split["total_compile_ms"] += outcome.measurement.compile_ms
            self.time_split["total_run_ms"] += outcome.measurement.run_ms
        elif outcome.status == "invalid":
            self.counters["invalid"] += 1
        else:
            self.counters["failed"] += 1
            if not outcome.transient:
                self.hard_failures += 1
        attempts = self.counters["evaluated"]
        if attempts >= MIN_ATTEMPTS_FOR_ABORT and self.hard_failures * 2 > attempts:
            raise SearchAborted(
                f"{self.hard_failures} of {attempts} attempts failed hard; "
                f"last reason: {outcome.reason}"
            )
        return outcome

    def evaluate(self, config: KernelConfig, reps: int | None = None) -> EvalOutcome:
        """One evaluation with the single-retry policy for transient failures."""
        reps = self.plan.reps if reps is None else reps
        outcome = self._attempt(config, reps)
        if outcome.status == "failure" and outcome.transient:
            outcome = self._attempt(config, reps)
        return outcome


def halving_round(candidates, reps: int, keep_fraction: float, evaluate) -> list[KernelConfig]:
    """Evaluate every candidate at `reps` repetitions and keep the best
    ceil(keep_fraction * ok_count); invalid/failed candidates are dropped.

    `evaluate` is a callable (config, reps) -> EvalOutcome, typically
    provided by a running search; pass a session-wrapping lambda to use it
    standalone.
    """
    scored = []
    for config in candidates:
        outcome = evaluate(config, reps)
        if outcome.is_ok:
            scored.append((outcome.measurement.median_ms, config.digest, config))
    scored.sort(key=lambda t: (t[0], t[1]))
    keep = math.ceil(keep_fraction * len(scored))
    return [config for _, _, config in scored[:keep]]


def _shuffled_configs(space: ConfigSpace, seed: int) -> list[KernelConfig]:
    configs = list(enumerate_configs(space))
    random.Random(seed).shuffle(configs)
    return configs


def run_search(
    space: ConfigSpace,
    shape: ShapeKey,
    strategy: Strategy,
    budget: SearchBudget,
    session,
    plan: EvaluationPlan = DEFAULT_PLAN,
) -> TuningResult:
    """Explore `space` at `shape` with `strategy` until candidates or budget
    run out, whichever happens first.

    The trace records every attempt in order (a retried config appears
    twice). If nothing ever measured Ok, the result carries best=None and
    the caller decides how loudly to complain.
    """
    driver = _Driver(session, shape, plan, budget)
    try:
        if isinstance(strategy, Exhaustive):
            for config in enumerate_configs(space):
                driver.evaluate(config)
        elif isinstance(strategy, RandomSearch):
            order = _shuffled_configs(space, strategy.seed)
            for config in order[: strategy.n]:
                driver.evaluate(config)
        elif isinstance(strategy, Halving):
            order = _shuffled_configs(space, strategy.seed)
            n0 = max(1, math.ceil(strategy.initial_fraction * len(order)))
            candidates = order[:n0]
            for round_reps in strategy.reps_schedule:
                if not candidates:
                    break
                candidates = halving_round(
                    candidates, round_reps, strategy.keep_fraction, driver.evaluate
                )
                if len(candidates) <= 1:
                    break
        else:
            raise TypeError(f"unknown strategy {strategy!r}")
    except _BudgetExhausted:
        pass

    best_entry = select_best(driver.trace)
    best = driver.configs_seen[best_entry.config_digest] if best_entry else None
    return TuningResult(
        space_digest=space.digest,
        shape=shape,
        fingerprint=session.fingerprint(),
        strategy=strategy.descriptor(),
        budget=budget.descriptor(),
        best=best,
        best_median_ms=best_entry.outcome.measurement.median_ms if best_entry else None,
        trace=driver.trace,
        counters=driver.counters,
        time_split=driver.time_split,
    )
