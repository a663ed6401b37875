import pytest

from conftest import make_profile, make_space
from ktune.configspace import KernelConfig, ParamDomain, ShapeKey, enumerate_configs
from ktune.errors import SearchAborted
from ktune.executor import (
    EnvFingerprint,
    EvalOutcome,
    Measurement,
    SyntheticSession,
    synthetic_latency,
)
from ktune.search import (
    Exhaustive,
    Halving,
    RandomSearch,
    SearchBudget,
    TraceEntry,
    TuningResult,
    halving_round,
    run_search,
    select_best,
)

SHAPE = ShapeKey.from_dims({"batch_size": 2, "seq_len": 128})


def ab_space():
    return make_space(
        [ParamDomain.int_list("A", [1, 2, 3]), ParamDomain.int_list("B", [1, 2, 3, 4])],
        ["A < B"],
    )


def ab_profile(**kw):
    return make_profile({"A": 2, "B": 3}, intercept=10.0, **kw)


def brute_force_best(space, profile, shape):
    return min(
        enumerate_configs(space),
        key=lambda c: (synthetic_latency(profile, c, shape), c.digest),
    )


class ScriptedSession:
    """Evaluator whose outcomes are queued up front; for failure-path tests."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.evaluations = 0

    def fingerprint(self):
        return EnvFingerprint(
            device_name="scripted", driver_version="1", toolchain_version="1",
            runner_id="scripted", runner_version="1", kernel_source_digest="0" * 64,
            space_digest="0" * 64, protocol_version=1,
        )

    def evaluate(self, config, shape, plan):
        self.evaluations += 1
        outcome = self.outcomes.pop(0) if self.outcomes else EvalOutcome.failure("empty", False)
        return outcome, 1.0


def ok(median, reps=3, compile_ms=1.0):
    return EvalOutcome.ok(Measurement(compile_ms, (median,) * reps, warmups=0, reps=reps))


class TestExhaustive:
    def test_best_matches_brute_force(self):
        space, profile = ab_space(), ab_profile()
        session = SyntheticSession(profile, space)
        result = run_search(space, SHAPE, Exhaustive(), SearchBudget(max_evaluations=100), session)
        assert result.best.assignments == {"A": 2, "B": 3}
        assert result.counters["evaluated"] == 6
        assert result.best.digest == brute_force_best(space, profile, SHAPE).digest

    def test_budget_clamps_to_one(self):
        space, profile = ab_space(), ab_profile()
        session = SyntheticSession(profile, space)
        result = run_search(space, SHAPE, Exhaustive(), SearchBudget(max_evaluations=1), session)
        assert len(result.trace) == 1
        assert result.counters["evaluated"] == 1
        first = next(iter(enumerate_configs(space)))
        assert result.best.digest == first.digest

    def test_wall_budget_stops_early(self):
        space, profile = ab_space(), ab_profile(compile_ms=100.0)
        session = SyntheticSession(profile, space)
        # each evaluation simulates >= 100 ms wall; allow ~2.5 evaluations
        result = run_search(space, SHAPE, Exhaustive(), SearchBudget(max_wall_ms=250.0), session)
        assert 1 <= result.counters["evaluated"] < 6

    def test_monotone_budget_never_worsens_best(self):
        space, profile = ab_space(), ab_profile()
        previous = float("inf")
        for n in range(1, 7):
            session = SyntheticSession(profile, space)
            result = run_search(
                space, SHAPE, Exhaustive(), SearchBudget(max_evaluations=n), session
            )
            assert result.best_median_ms <= previous
            previous = result.best_median_ms

    def test_zero_budget_rejected(self):
        with pytest.raises(ValueError):
            SearchBudget(max_evaluations=0)
        with pytest.raises(ValueError):
            SearchBudget(max_wall_ms=0.0)


class TestRandom:
    def test_full_coverage_finds_same_best(self):
        space, profile = ab_space(), ab_profile()
        session = SyntheticSession(profile, space)
        result = run_search(
            space, SHAPE, RandomSearch(seed=7, n=6), SearchBudget(max_evaluations=100), session
        )
        assert result.best.assignments == {"A": 2, "B": 3}
        assert result.counters["evaluated"] == 6

    def test_sampling_without_replacement(self):
        space, profile = ab_space(), ab_profile()
        session = SyntheticSession(profile, space)
        result = run_search(
            space, SHAPE, RandomSearch(seed=3, n=100), SearchBudget(max_evaluations=1000), session
        )
        digests = [e.config_digest for e in result.trace]
        assert len(digests) == 6  # n > |space| caps at the space
        assert len(set(digests)) == 6

    def test_seed_determinism(self):
        space, profile = ab_space(), ab_profile()
        traces = []
        for _ in range(2):
            session = SyntheticSession(profile, space)
            result = run_search(
                space, SHAPE, RandomSearch(seed=11, n=4), SearchBudget(max_evaluations=10), session
            )
            traces.append([e.config_digest for e in result.trace])
        assert traces[0] == traces[1]


class TestSelectBest:
    def entry(self, digest, outcome):
        return TraceEntry(digest, outcome, 1.0)

    def test_minimum_median_wins(self):
        trace = [self.entry("b" * 64, ok(2.0)), self.entry("a" * 64, ok(1.5))]
        assert select_best(trace).config_digest == "a" * 64

    def test_tie_breaks_on_digest(self):
        trace = [self.entry("f" * 64, ok(1.5)), self.entry("0" * 64, ok(1.5))]
        assert select_best(trace).config_digest == "0" * 64

    def test_all_invalid_is_none(self):
        trace = [
            self.entry("a" * 64, EvalOutcome.invalid("rule")),
            self.entry("b" * 64, EvalOutcome.invalid("rule")),
        ]
        assert select_best(trace) is None


class TestHalvingRound:
    def configs(self, n):
        return [KernelConfig.from_assignments({"X": i}) for i in range(1, n + 1)]

    def test_eight_ok_keep_half(self):
        candidates = self.configs(8)
        lat = {c.digest: float(i + 1) for i, c in enumerate(candidates)}
        survivors = halving_round(candidates, 3, 0.5, lambda c, reps: ok(lat[c.digest]))
        assert len(survivors) == 4
        assert [c.assignments["X"] for c in survivors] == [1, 2, 3, 4]

    def test_invalids_always_dropped(self):
        candidates = self.configs(8)

        def evaluate(config, reps):
            if config.assignments["X"] <= 3:
                return EvalOutcome.invalid("rule")
            return ok(float(config.assignments["X"]))

        survivors = halving_round(candidates, 3, 0.5, evaluate)
        assert len(survivors) == 3  # ceil(0.5 * 5)
        assert all(c.assignments["X"] > 3 for c in survivors)

    def test_all_invalid_empty(self):
        survivors = halving_round(
            self.configs(4), 3, 0.5, lambda c, reps: EvalOutcome.invalid("x")
        )
        assert survivors == []


class TestHalvingSearch:
    def space_100(self):
        return make_space(
            [ParamDomain.int_list("A", list(range(1, 11))),
             ParamDomain.int_list("B", list(range(1, 11)))]
        )

    def test_argmin_survives_when_sampled(self):
        space = self.space_100()
        profile = make_profile({"A": 7, "B": 4}, intercept=5.0)
        target = brute_force_best(space, profile, SHAPE)
        hits = 0
        for seed in range(10):
            strategy = Halving(seed=seed, initial_fraction=0.4, keep_fraction=0.3,
                               rounds=2, reps_schedule=(3, 5))
            session = SyntheticSession(profile, space)
            result = run_search(space, SHAPE, strategy, SearchBudget(max_evaluations=1000), session)
            sampled = {e.config_digest for e in result.trace}
            if target.digest in sampled:
                hits += 1
                assert result.best.digest == target.digest
        assert hits > 0  # the property was actually exercised

    def test_determinism(self):
        space = self.space_100()
        profile = make_profile({"A": 3, "B": 9}, intercept=5.0)
        strategy = Halving(seed=5, initial_fraction=0.3, keep_fraction=0.4,
                           rounds=2, reps_schedule=(2, 4))
        results = []
        for _ in range(2):
            session = SyntheticSession(profile, space)
            results.append(run_search(space, SHAPE, strategy, SearchBudget(max_evaluations=500), session))
        assert [e.config_digest for e in results[0].trace] == [e.config_digest for e in results[1].trace]
        assert results[0].best.digest == results[1].best.digest

    def test_reps_schedule_validation(self):
        with pytest.raises(ValueError):
            Halving(seed=0, rounds=2, reps_schedule=(3,))
        with pytest.raises(ValueError):
            Halving(seed=0, rounds=2, reps_schedule=(5, 3))
        with pytest.raises(ValueError):
            Halving(seed=0, initial_fraction=0.0)


class TestFailureHandling:
    def space_ab(self):
        return make_space([ParamDomain.int_list("A", [1, 2, 3, 4, 5, 6])])

    def test_transient_retried_once_then_dropped(self):
        outcomes = [
            EvalOutcome.failure("t1", True), ok(2.0),      # config 1: retry succeeds
            EvalOutcome.failure("t2", True), EvalOutcome.failure("t3", True),  # config 2: dropped
            ok(1.0), ok(3.0), ok(4.0), ok(5.0),
        ]
        session = ScriptedSession(outcomes)
        result = run_search(
            self.space_ab(), SHAPE, Exhaustive(), SearchBudget(max_evaluations=100), session
        )
        assert result.counters["evaluated"] == 8
        assert result.counters["failed"] == 3
        assert result.counters["ok"] == 5
        assert result.best_median_ms == 1.0
        digests = [e.config_digest for e in result.trace]
        assert digests[0] == digests[1]  # the retry is its own attempt
        assert digests[2] == digests[3]

    def test_majority_hard_failures_abort(self):
        session = ScriptedSession([EvalOutcome.failure("dead", False)] * 6)
        with pytest.raises(SearchAborted) as exc:
            run_search(self.space_ab(), SHAPE, Exhaustive(),
                       SearchBudget(max_evaluations=100), session)
        assert "dead" in str(exc.value)
        assert session.evaluations == 4  # aborts as soon as the rule trips

    def test_no_viable_marker(self):
        session = ScriptedSession([EvalOutcome.invalid("rule")] * 6)
        result = run_search(self.space_ab(), SHAPE, Exhaustive(),
                            SearchBudget(max_evaluations=100), session)
        assert result.no_viable
        assert result.best is None and result.best_median_ms is None
        assert result.counters["invalid"] == 6

    def test_invalid_never_best(self):
        space = make_space([ParamDomain.pow2_range("BLOCK", 16, 512)])
        profile = make_profile({"BLOCK": 512}, rules=["BLOCK > 64"])
        # target itself is invalid: best must be the fastest *valid* config
        session = SyntheticSession(profile, space)
        result = run_search(space, SHAPE, Exhaustive(), SearchBudget(max_evaluations=100), session)
        assert result.best.assignments["BLOCK"] == 64
        assert result.counters["invalid"] == 3  # 128, 256, 512


class TestTimeSplitAndSerialization:
    def test_time_split_reproducible_from_trace(self):
        space, profile = ab_space(), ab_profile(compile_ms=9.0)
        session = SyntheticSession(profile, space)
        result = run_search(space, SHAPE, Exhaustive(), SearchBudget(max_evaluations=100), session)
        compile_total = sum(
            e.outcome.measurement.compile_ms for e in result.trace if e.outcome.is_ok
        )
        run_total = sum(
            sum(e.outcome.measurement.latencies_ms) for e in result.trace if e.outcome.is_ok
        )
        wall_total = sum(e.wall_ms for e in result.trace)
        assert result.time_split["total_compile_ms"] == pytest.approx(compile_total)
        assert result.time_split["total_run_ms"] == pytest.approx(run_total)
        assert result.time_split["total_wall_ms"] == pytest.approx(wall_total)
        assert compile_total + run_total <= wall_total + 1e-9

    def test_counters_sum_to_trace_length(self):
        space, profile = ab_space(), ab_profile(rules=["A == 1"])
        session = SyntheticSession(profile, space)
        result = run_search(space, SHAPE, Exhaustive(), SearchBudget(max_evaluations=100), session)
        c = result.counters
        assert c["ok"] + c["invalid"] + c["failed"] == len(result.trace) == c["evaluated"]

    def test_json_roundtrip(self):
        space, profile = ab_space(), ab_profile()
        session = SyntheticSession(profile, space)
        result = run_search(space, SHAPE, Exhaustive(), SearchBudget(max_evaluations=100), session)
        doc = result.to_json_dict()
        back = TuningResult.from_json_dict(doc)
        assert back.to_json_dict() == doc
        assert back.best.digest == result.best.digest
        assert back.fingerprint == result.fingerprint
