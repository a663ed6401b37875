"""`ktune` command-line interface.

Exit codes are part of the contract scripts rely on:
0 success, 1 hard error, 2 partial success (some shapes had no viable
config), 3 not found, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import queue
import shlex
import sys
import threading
from pathlib import Path

from . import __version__
from .asmstats import collect_docs, diversity_report, stats
from .cache import CacheEntry, CacheStore, default_store_root, load_entry
from .configspace import (
    ShapeKey,
    cardinality,
    enumerate_configs,
    parse_space_file,
)
from .errors import KtuneError, ProtocolError, SpaceParseError
from .executor import (
    DEFAULT_PLAN,
    PROTOCOL_VERSION,
    CostProfile,
    EvaluationPlan,
    RunnerSession,
    SyntheticSession,
)
from .report import (
    normalize,
    read_table,
    relative_cdf,
    transfer_analysis,
    write_cdf_csv,
    write_json,
    write_normalized_csv,
    write_transfer_csv,
)
from .search import (
    Exhaustive,
    Halving,
    RandomSearch,
    SearchBudget,
    run_search,
)

log = logging.getLogger("ktune")

EXIT_OK = 0
EXIT_HARD = 1
EXIT_PARTIAL = 2
EXIT_NOT_FOUND = 3
EXIT_USAGE = 64


class UsageError(KtuneError):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse, but usage problems exit with the documented code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


# ---------------------------------------------------------------------------
# small shared helpers


def _parse_scalar(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_inline_shape(text: str) -> ShapeKey:
    dims = {}
    for part in text.split(","):
        if "=" not in part:
            raise UsageError(f"bad --shape item {part!r}, expected name=value")
        k, v = part.split("=", 1)
        dims[k.strip()] = _parse_scalar(v.strip())
    return ShapeKey.from_dims(dims)


def _load_shapes(args) -> list[ShapeKey]:
    shapes: list[ShapeKey] = []
    if getattr(args, "shapes", None):
        path = Path(args.shapes)
        if not path.is_file():
            raise UsageError(f"shapes file does not exist: {path}")
        doc = json.loads(path.read_text())
        if isinstance(doc, dict):
            doc = doc.get("shapes", [])
        if not isinstance(doc, list):
            raise UsageError(f"{path}: expected an array of shape objects")
        for dims in doc:
            shapes.append(ShapeKey.from_dims(dims))
    for text in getattr(args, "shape", None) or []:
        shapes.append(_parse_inline_shape(text))
    if not shapes:
        raise UsageError("no shapes given; use --shapes FILE or --shape k=v,...")
    return shapes


def _require_file(path_text: str, what: str) -> Path:
    path = Path(path_text)
    if not path.is_file():
        raise UsageError(f"{what} does not exist: {path}")
    return path


def _plan_from_args(args) -> EvaluationPlan:
    return EvaluationPlan(
        warmups=args.warmups, reps=args.reps, timeout_ms=args.timeout_ms
    )


def _strategy_from_args(args, space):
    if args.strategy == "exhaustive":
        return Exhaustive()
    if args.strategy == "random":
        n = args.samples if args.samples is not None else 32
        return RandomSearch(seed=args.seed, n=n)
    frac = args.initial_fraction
    if frac is None:
        _, valid = cardinality(space)
        frac = 1.0 if valid <= 64 else 0.25
    reps_schedule = tuple(int(x) for x in args.reps_schedule.split(","))
    return Halving(
        seed=args.seed,
        initial_fraction=frac,
        keep_fraction=args.keep_fraction,
        rounds=len(reps_schedule),
        reps_schedule=reps_schedule,
    )


def _budget_from_args(args) -> SearchBudget:
    max_evals = args.max_evals
    if max_evals is None and args.max_wall_ms is None:
        # production invariant: at least one bound must be finite
        max_evals = 100_000
    return SearchBudget(max_evaluations=max_evals, max_wall_ms=args.max_wall_ms)


def _open_session(args, space):
    """Build the evaluator session a command asked for (synthetic or runner)."""
    runners = getattr(args, "runner", None) or []
    synthetic = getattr(args, "synthetic", None)
    if bool(runners) == bool(synthetic):
        raise UsageError("exactly one of --runner and --synthetic is required")
    if synthetic:
        profile = CostProfile.from_file(_require_file(synthetic, "profile"))
        return SyntheticSession(profile, space)
    if len(runners) > 1:
        raise UsageError("multiple --runner flags need --parallel-runners")
    session = RunnerSession(shlex.split(runners[0]))
    session.start()
    return session


def _short(digest: str | None) -> str:
    return digest[:12] if digest else "-"


def _out_path(prefix, ext: str) -> Path:
    path = Path(str(prefix) + ext)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# tune


def _tune_one_shape(space, shape, args, session, store, plan, budget) -> dict:
    fp = session.fingerprint()
    entry = None
    cache_hit = False
    evaluations = 0
    if store is not None:
        entry = store.lookup(fp, shape)
        cache_hit = entry is not None
    if entry is None:
        strategy = _strategy_from_args(args, space)
        result = run_search(space, shape, strategy, budget, session, plan)
        evaluations = result.counters["evaluated"]
        entry = CacheEntry.create(result)
        if store is not None:
            store.store(entry, force=args.force)
    result = entry.result
    result_file = None
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        result_file = out_dir / f"{space.name}-{shape.digest[:8]}.result.json"
        result_file.write_text(json.dumps(entry.to_json_dict(), indent=1))
    return {
        "shape": shape.dims,
        "shape_digest": shape.digest,
        "fingerprint_digest": fp.digest(),
        "cache_hit": cache_hit,
        "evaluations": evaluations,
        "best": None if result.best is None else result.best.assignments,
        "best_digest": None if result.best is None else result.best.digest,
        "best_median_ms": result.best_median_ms,
        "counters": result.counters,
        "time_split": result.time_split,
        "no_viable": result.no_viable,
        "result_file": None if result_file is None else str(result_file),
    }


def _print_shape_summary(s: dict):
    label = "cached" if s["cache_hit"] else "tuned"
    shape_text = ",".join(f"{k}={v}" for k, v in sorted(s["shape"].items()))
    if s["no_viable"]:
        print(f"[{label}] {shape_text}: no viable configuration "
              f"(evaluated {s['counters'].get('evaluated', 0)})")
        return
    wall = s["time_split"].get("total_wall_ms", 0.0)
    compile_share = (
        100.0 * s["time_split"].get("total_compile_ms", 0.0) / wall if wall > 0 else 0.0
    )
    c = s["counters"]
    print(
        f"[{label}] {shape_text}: best={_short(s['best_digest'])} "
        f"median={s['best_median_ms']:.6g} ms "
        f"evals={c.get('evaluated', 0)} (ok {c.get('ok', 0)} / invalid {c.get('invalid', 0)} "
        f"/ failed {c.get('failed', 0)}), compile {compile_share:.0f}% of wall"
    )


def cmd_tune(args) -> int:
    space = parse_space_file(_require_file(args.space, "space file"))
    shapes = _load_shapes(args)
    if args.synthetic:
        _require_file(args.synthetic, "profile")
    plan = _plan_from_args(args)
    budget = _budget_from_args(args)
    store = None if args.no_cache else CacheStore(args.cache_dir or default_store_root())

    runners = args.runner or []
    if args.parallel_runners and len(runners) >= 2 and not args.synthetic:
        summaries = _tune_parallel(space, shapes, args, runners, store, plan, budget)
    else:
        session = _open_session(args, space)
        try:
            summaries = [
                _tune_one_shape(space, shape, args, session, store, plan, budget)
                for shape in shapes
            ]
        finally:
            session.close()

    exit_code = EXIT_PARTIAL if any(s["no_viable"] for s in summaries) else EXIT_OK
    if args.json:
        print(json.dumps({"shapes": summaries, "exit_code": exit_code}, indent=1))
    else:
        for s in summaries:
            _print_shape_summary(s)
    return exit_code


def _tune_parallel(space, shapes, args, runners, store, plan, budget) -> list[dict]:
    """One session per runner command; shapes are pulled from a shared queue."""
    work: queue.Queue = queue.Queue()
    for i, shape in enumerate(shapes):
        work.put((i, shape))
    out: dict[int, dict] = {}
    errors: list[BaseException] = []
    lock = threading.Lock()

    def worker(cmd: str):
        try:
            session = RunnerSession(shlex.split(cmd))
            session.start()
        except BaseException as e:
            with lock:
                errors.append(e)
            return
        try:
            while True:
                try:
                    i, shape = work.get_nowait()
                except queue.Empty:
                    return
                s = _tune_one_shape(space, shape, args, session, store, plan, budget)
                with lock:
                    out[i] = s
        except BaseException as e:
            with lock:
                errors.append(e)
        finally:
            session.close()

    threads = [threading.Thread(target=worker, args=(cmd,)) for cmd in runners]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0]
    return [out[i] for i in sorted(out)]


# ---------------------------------------------------------------------------
# space


def cmd_space(args) -> int:
    try:
        space = parse_space_file(_require_file(args.space_file, "space file"))
    except SpaceParseError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_HARD
    if args.space_cmd == "check":
        raw = 1
        for p in space.params:
            raw *= p.size()
        if args.json:
            print(json.dumps({
                "name": space.name,
                "digest": space.digest,
                "params": len(space.params),
                "constraints": len(space.constraints),
                "raw": raw,
            }))
        else:
            print(f"space {space.name!r}: {len(space.params)} params, "
                  f"{len(space.constraints)} constraints, raw grid {raw}")
            print(f"digest {space.digest}")
        return EXIT_OK
    if args.space_cmd == "count":
        raw, valid = cardinality(space)
        if args.json:
            print(json.dumps({"raw": raw, "valid": valid}))
        else:
            print(f"raw {raw}, valid {valid}")
        return EXIT_OK
    # enumerate
    limit = args.limit
    for i, config in enumerate(enumerate_configs(space)):
        if limit is not None and i >= limit:
            break
        print(json.dumps({"digest": config.digest, "config": config.assignments},
                         sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# cache


def cmd_cache(args) -> int:
    store = CacheStore(args.cache_dir or default_store_root())
    sub = args.cache_cmd
    if sub == "list":
        entries = store.entries()
        rows = [
            {
                "key": e.key.short,
                "fingerprint_digest": e.key.fingerprint_digest,
                "shape": e.result.shape.dims,
                "device": e.result.fingerprint.device_name,
                "best_median_ms": e.result.best_median_ms,
                "created_at": e.created_at,
            }
            for e in entries
        ]
        if args.json:
            print(json.dumps(rows, indent=1))
        else:
            if not rows:
                print("(empty store)")
            for r in rows:
                shape_text = ",".join(f"{k}={v}" for k, v in sorted(r["shape"].items()))
                best = "no-viable" if r["best_median_ms"] is None else f"{r['best_median_ms']:.6g} ms"
                print(f"{r['key']}  {r['device']}  {shape_text}  {best}  {r['created_at']}")
        return EXIT_OK
    if sub == "show":
        matches = store.find(args.key)
        if not matches:
            print(f"no cache entry matches {args.key!r}", file=sys.stderr)
            return EXIT_NOT_FOUND
        if len(matches) > 1:
            print(f"{args.key!r} is ambiguous ({len(matches)} entries)", file=sys.stderr)
            return EXIT_HARD
        print(json.dumps(matches[0].to_json_dict(), indent=1))
        return EXIT_OK
    if sub == "invalidate":
        matches = store.find(args.key)
        if not matches:
            print(f"no cache entry matches {args.key!r}", file=sys.stderr)
            return EXIT_NOT_FOUND
        for e in matches:
            store.invalidate(e.key)
            print(f"removed {e.key.short}")
        return EXIT_OK
    if sub == "export":
        keys = None
        if args.key:
            keys = []
            for prefix in args.key:
                matches = store.find(prefix)
                if not matches:
                    print(f"no cache entry matches {prefix!r}", file=sys.stderr)
                    return EXIT_NOT_FOUND
                keys.extend(e.key for e in matches)
        count = store.export_bundle(args.output, keys)
        print(f"exported {count} entries to {args.output}")
        return EXIT_OK
    # import
    count = store.import_bundle(_require_file(args.bundle, "bundle"), force=args.force)
    print(f"imported {count} entries")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze-asm


def cmd_analyze_asm(args) -> int:
    docs = collect_docs(args.inputs)
    if not docs:
        print("no assembly documents found", file=sys.stderr)
        return EXIT_HARD
    all_stats = [stats(d) for d in docs]
    report = diversity_report(all_stats, args.best)
    prefix = args.output_prefix
    csv_path = _out_path(prefix, ".csv")
    json_path = _out_path(prefix, ".json")
    report.write_csv(csv_path)
    report.write_json(json_path)
    written = [str(csv_path), str(json_path)]
    if not args.no_plot:
        from .figures import render_diversity

        png_path = _out_path(prefix, ".png")
        render_diversity(report, png_path)
        written.append(str(png_path))
    print(
        f"{len(report.rows)} sources, max unique {report.max_unique}, "
        f"max total {report.max_total}"
        + (f", best {report.best_id}" if report.best_id else "")
    )
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def cmd_report_normalize(args) -> int:
    group_keys = tuple(k for k in (args.group_by or "").split(",") if k)
    table = read_table(_require_file(args.input, "input csv"), args.x, group_keys)
    rows = normalize(table, args.baseline, anchor=args.anchor)
    prefix = args.output_prefix
    write_normalized_csv(rows, _out_path(prefix, ".csv"))
    write_json(
        [
            {"impl": r.impl, "shape": r.shape.dims, "median_ms": r.median_ms,
             "normalized": r.normalized}
            for r in rows
        ],
        _out_path(prefix, ".json"),
    )
    if not args.no_plot:
        from .figures import render_normalized

        render_normalized(rows, args.x, group_keys, _out_path(prefix, ".png"))
    print(f"normalized {len(rows)} rows against {args.baseline!r}; wrote {prefix}.csv/.json")
    return EXIT_OK


def _read_rows_one_impl(path_text: str, label: str):
    table = read_table(_require_file(path_text, f"{label} csv"), x_key=None, group_keys=())
    impls = sorted({r.impl for r in table.rows})
    if len(impls) != 1:
        raise UsageError(f"{label} csv must contain exactly one impl, found {impls}")
    return table.rows


def cmd_report_cdf(args) -> int:
    base_rows = _read_rows_one_impl(args.baseline, "baseline")
    cand_rows = _read_rows_one_impl(args.candidate, "candidate")
    summary = relative_cdf(cand_rows, base_rows)
    prefix = args.output_prefix
    write_cdf_csv(summary, _out_path(prefix, ".csv"))
    write_json(summary.to_json_dict(), _out_path(prefix, ".json"))
    if not args.no_plot:
        from .figures import render_cdf

        render_cdf(summary, _out_path(prefix, ".png"))
    print(
        f"{len(summary.ratios)} shapes: mean {summary.mean:.4g}, min {summary.min:.4g}, "
        f"max {summary.max:.4g}, frac>=1 {summary.frac_ge_1:.2f}; wrote {prefix}.csv/.json"
    )
    return EXIT_OK


def cmd_report_transfer(args) -> int:
    space = parse_space_file(_require_file(args.space, "space file"))
    entry_a = load_entry(_require_file(args.from_result, "source result"))
    entry_b = load_entry(_require_file(args.to_result, "target result"))
    shapes = _load_shapes(args)
    plan = _plan_from_args(args)
    session = _open_session(args, space)
    try:
        cells = transfer_analysis(
            entry_a.result, space, shapes, session, entry_b.result, plan
        )
    finally:
        session.close()
    prefix = args.output_prefix
    write_transfer_csv(cells, _out_path(prefix, ".csv"))
    write_json([c.to_json_dict() for c in cells], _out_path(prefix, ".json"))
    if not args.no_plot:
        from .figures import render_transfer

        render_transfer(cells, args.x, _out_path(prefix, ".png"))
    invalid = sum(1 for c in cells if c.is_invalid)
    print(f"{len(cells)} cells ({invalid} invalid on target); wrote {prefix}.csv/.json")
    return EXIT_OK


# ---------------------------------------------------------------------------
# runner-check


def cmd_runner_check(args) -> int:
    import subprocess

    space = parse_space_file(_require_file(args.space, "space file"))
    if bool(args.runner) == bool(args.synthetic):
        raise UsageError("exactly one of --runner and --synthetic is required")
    if args.synthetic:
        profile_path = _require_file(args.synthetic, "profile")
        profile = CostProfile.from_file(profile_path)
        cmd = [
            sys.executable, "-m", "ktune", "synth-runner",
            "--profile", str(profile_path), "--space", str(args.space),
        ]
        probe_shape = _probe_shape_for(profile)
    else:
        cmd = shlex.split(args.runner)
        if not args.shape:
            raise UsageError("--shape is required with --runner (the probe workload)")
        probe_shape = None
    if args.shape:
        probe_shape = _parse_inline_shape(args.shape[0])

    probe_config = next(iter(enumerate_configs(space)), None)
    if probe_config is None:
        raise UsageError("space has no valid configuration to probe with")

    checks: list[tuple[str, bool, str]] = []

    def check(name: str, ok: bool, detail: str = ""):
        checks.append((name, ok, detail))

    timeout_s = args.timeout_ms / 1000.0
    proc = None
    try:
        try:
            proc = subprocess.Popen(
                cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True, bufsize=1
            )
            check("runner process starts", True)
        except OSError as e:
            check("runner process starts", False, str(e))
            raise _CheckDone

        from .executor import _EOF, _StdoutReader  # same reader the real client uses

        reader = _StdoutReader(proc.stdout)
        reader.start()

        def send(obj) -> bool:
            try:
                proc.stdin.write(json.dumps(obj) + "\n")
                proc.stdin.flush()
                return True
            except OSError:
                return False

        def recv():
            try:
                item = reader.lines.get(timeout=timeout_s)
            except queue.Empty:
                return None
            return None if item is _EOF else item

        send({"type": "hello", "protocol": PROTOCOL_VERSION})
        line = recv()
        check("hello reply arrives before the timeout", isinstance(line, str),
              "" if isinstance(line, str) else "no reply")
        if not isinstance(line, str):
            raise _CheckDone
        try:
            msg = json.loads(line)
            ok = isinstance(msg, dict)
        except ValueError:
            msg, ok = None, False
        check("hello reply is a JSON object", ok, "" if ok else repr(line.strip()))
        if not ok:
            raise _CheckDone
        check("hello reply has type 'hello'", msg.get("type") == "hello",
              f"got {msg.get('type')!r}")
        check(
            f"protocol version is {PROTOCOL_VERSION}",
            msg.get("protocol") == PROTOCOL_VERSION,
            f"got {msg.get('protocol')!r}",
        )
        fp = msg.get("fingerprint")
        from .executor import _FINGERPRINT_FIELDS

        if not isinstance(fp, dict):
            check("fingerprint object present", False, f"got {fp!r}")
        else:
            check("fingerprint object present", True)
            missing = [
                f for f in _FINGERPRINT_FIELDS
                if f not in fp or fp[f] in ("", None)
            ]
            check("all 8 fingerprint fields nonempty", not missing,
                  f"missing/empty: {missing}" if missing else "")
        caps = msg.get("capabilities")
        check("capabilities include 'evaluate'",
              isinstance(caps, list) and "evaluate" in caps, f"got {caps!r}")

        reps = 4
        send({
            "type": "evaluate",
            "config": probe_config.assignments,
            "shape": probe_shape.dims,
            "warmups": 1,
            "reps": reps,
        })
        line = recv()
        check("evaluate reply arrives before the timeout", isinstance(line, str),
              "" if isinstance(line, str) else "no reply")
        if isinstance(line, str):
            try:
                msg = json.loads(line)
                ok = isinstance(msg, dict)
            except ValueError:
                msg, ok = None, False
            check("evaluate reply is a JSON object", ok, "" if ok else repr(line.strip()))
            if ok:
                check("evaluate reply has type 'result'", msg.get("type") == "result",
                      f"got {msg.get('type')!r}")
                status = msg.get("status")
                check("result status is ok/invalid/error",
                      status in ("ok", "invalid", "error"), f"got {status!r}")
                if status == "ok":
                    lats = msg.get("latencies_ms")
                    good = (
                        isinstance(lats, list)
                        and len(lats) == reps
                        and all(isinstance(v, (int, float)) and v > 0 for v in lats)
                    )
                    check(f"ok result honors reps={reps} with positive latencies", good,
                          f"got {lats!r}")
                    cms = msg.get("compile_ms")
                    check("ok result reports compile_ms >= 0",
                          isinstance(cms, (int, float)) and cms >= 0, f"got {cms!r}")

        send({"type": "shutdown"})
        try:
            code = proc.wait(timeout=5)
            check("shutdown exits the runner with code 0", code == 0, f"exit code {code}")
        except subprocess.TimeoutExpired:
            check("shutdown exits the runner with code 0", False, "still running after 5 s")
    except _CheckDone:
        pass
    finally:
        if proc is not None and proc.poll() is None:
            proc.kill()
            proc.wait()

    failed = [c for c in checks if not c[1]]
    if args.json:
        print(json.dumps(
            [{"check": n, "pass": ok, "detail": d} for n, ok, d in checks], indent=1
        ))
    else:
        for name, ok, detail in checks:
            mark = "PASS" if ok else "FAIL"
            suffix = f" ({detail})" if detail and not ok else ""
            print(f"[{mark}] {name}{suffix}")
        print(f"{len(checks) - len(failed)}/{len(checks)} assertions passed")
    return EXIT_OK if not failed else EXIT_HARD


class _CheckDone(Exception):
    pass


def _probe_shape_for(profile: CostProfile) -> ShapeKey:
    dims = {dim: 64 for dim in profile.base_coeffs_ms} or {"probe": 1}
    return ShapeKey.from_dims(dims)


# ---------------------------------------------------------------------------
# synth-runner (the reference protocol server)


def cmd_synth_runner(args) -> int:
    from .synthrunner import serve

    space = parse_space_file(_require_file(args.space, "space file"))
    profile = CostProfile.from_file(_require_file(args.profile, "profile"))
    return serve(profile, space)


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ktune", description=__doc__)
    parser.add_argument("--version", action="version", version=f"ktune {__version__}")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add_eval_args(p):
        p.add_argument("--warmups", type=int, default=DEFAULT_PLAN.warmups)
        p.add_argument("--reps", type=int, default=DEFAULT_PLAN.reps)
        p.add_argument("--timeout-ms", type=float, default=DEFAULT_PLAN.timeout_ms)

    def add_session_args(p):
        p.add_argument("--runner", action="append",
                       help="benchmark-runner command line (repeatable with --parallel-runners)")
        p.add_argument("--synthetic", metavar="PROFILE",
                       help="use the built-in cost model with this profile file")

    def add_shape_args(p):
        p.add_argument("--shapes", help="JSON file with an array of shape objects")
        p.add_argument("--shape", action="append",
                       help="inline shape, e.g. batch_size=1,seq_len=512 (repeatable)")

    p = sub.add_parser("tune", help="search each shape, consulting and filling the cache")
    p.add_argument("--space", required=True)
    add_shape_args(p)
    add_session_args(p)
    p.add_argument("--strategy", choices=["exhaustive", "random", "halving"],
                   default="exhaustive")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, help="random strategy: configs to draw")
    p.add_argument("--initial-fraction", type=float,
                   help="halving: fraction of the space to sample initially")
    p.add_argument("--keep-fraction", type=float, default=0.5)
    p.add_argument("--reps-schedule", default="3,5,10",
                   help="halving: comma-separated reps per round")
    p.add_argument("--max-evals", type=int)
    p.add_argument("--max-wall-ms", type=float)
    add_eval_args(p)
    p.add_argument("--cache-dir")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--force", action="store_true",
                   help="overwrite cached entries even when worse")
    p.add_argument("--out", help="directory for per-shape result files")
    p.add_argument("--json", action="store_true")
    p.add_argument("--parallel-runners", action="store_true",
                   help="fan shapes out across multiple --runner commands")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("space", help="inspect a space file")
    p.add_argument("space_cmd", choices=["check", "count", "enumerate"])
    p.add_argument("space_file")
    p.add_argument("--limit", type=int)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_space)

    p = sub.add_parser("cache", help="manage the result store")
    p.add_argument("--cache-dir")
    csub = p.add_subparsers(dest="cache_cmd", required=True, parser_class=_Parser)
    pc = csub.add_parser("list")
    pc.add_argument("--json", action="store_true")
    pc = csub.add_parser("show")
    pc.add_argument("key")
    pc = csub.add_parser("invalidate")
    pc.add_argument("key")
    pc = csub.add_parser("export")
    pc.add_argument("output")
    pc.add_argument("--key", action="append", help="restrict to matching keys (repeatable)")
    pc = csub.add_parser("import")
    pc.add_argument("bundle")
    pc.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_cache)

    p = sub.add_parser("analyze-asm", help="instruction-diversity statistics")
    p.add_argument("inputs", nargs="+", help=".ptx/.s/.asm files or directories")
    p.add_argument("--best", help="source id the tuner selected")
    p.add_argument("-o", "--output-prefix", default="diversity")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_analyze_asm)

    p = sub.add_parser("report", help="normalization, CDF, and transfer reports")
    rsub = p.add_subparsers(dest="report_cmd", required=True, parser_class=_Parser)

    pr = rsub.add_parser("normalize")
    pr.add_argument("input")
    pr.add_argument("--baseline", required=True)
    pr.add_argument("--x", required=True, help="x-axis shape dimension")
    pr.add_argument("--group-by", help="comma-separated grouping dimensions")
    pr.add_argument("--anchor", choices=["per-group", "global"], default="per-group")
    pr.add_argument("-o", "--output-prefix", default="normalized")
    pr.add_argument("--no-plot", action="store_true")
    pr.set_defaults(func=cmd_report_normalize)

    pr = rsub.add_parser("cdf")
    pr.add_argument("candidate")
    pr.add_argument("--baseline", required=True)
    pr.add_argument("-o", "--output-prefix", default="cdf")
    pr.add_argument("--no-plot", action="store_true")
    pr.set_defaults(func=cmd_report_cdf)

    pr = rsub.add_parser("transfer")
    pr.add_argument("--space", required=True)
    pr.add_argument("--from", dest="from_result", required=True)
    pr.add_argument("--to", dest="to_result", required=True)
    add_session_args(pr)
    add_shape_args(pr)
    add_eval_args(pr)
    pr.add_argument("--x", help="shape dimension for the figure's x axis")
    pr.add_argument("-o", "--output-prefix", default="transfer")
    pr.add_argument("--no-plot", action="store_true")
    pr.set_defaults(func=cmd_report_transfer)

    p = sub.add_parser("runner-check", help="protocol conformance report for a runner")
    p.add_argument("--runner", help="runner command line to check")
    p.add_argument("--synthetic", metavar="PROFILE",
                   help="self-check the built-in synthetic runner")
    p.add_argument("--space", required=True)
    p.add_argument("--shape", action="append",
                   help="probe shape (required with --runner)")
    p.add_argument("--timeout-ms", type=float, default=10_000.0)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_runner_check)

    p = sub.add_parser("synth-runner",
                       help="serve protocol v1 on stdio with the synthetic cost model")
    p.add_argument("--profile", required=True)
    p.add_argument("--space", required=True)
    p.set_defaults(func=cmd_synth_runner)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"ktune: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ProtocolError as e:
        print(f"ktune: protocol error: {e}", file=sys.stderr)
        return EXIT_HARD
    except KtuneError as e:
        print(f"ktune: error: {e}", file=sys.stderr)
        return EXIT_HARD
    except FileNotFoundError as e:
        print(f"ktune: error: {e}", file=sys.stderr)
        return EXIT_HARD
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
