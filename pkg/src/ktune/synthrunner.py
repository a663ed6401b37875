"""Reference benchmark runner backed by the synthetic cost model.

Speaks protocol v1 on stdin/stdout, exactly like a hardware runner would,
which makes it the conformance target for `ktune runner-check` and a
convenient stand-in when developing without a GPU. One request in flight
at a time; malformed or unknown requests get an error reply and the
process stays alive.
"""

from __future__ import annotations

import json
import sys

from .configspace import ConfigSpace, KernelConfig, ShapeKey, validate_config
from .errors import ConfigStructureError, KtuneError, SpaceParseError
from .executor import (
    DEFAULT_PLAN,
    PROTOCOL_VERSION,
    SyntheticSession,
)


def _reply(stdout, obj: dict):
    stdout.write(json.dumps(obj) + "\n")
    stdout.flush()


def _error(stdout, reason: str):
    _reply(stdout, {"type": "result", "status": "error", "reason": reason})


def serve(profile, space: ConfigSpace, stdin=None, stdout=None) -> int:
    """Request loop; returns the process exit code."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    session = SyntheticSession(profile, space)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError
        except ValueError:
            _error(stdout, "request is not a JSON object")
            continue
        kind = msg.get("type")
        if kind == "hello":
            _reply(
                stdout,
                {
                    "type": "hello",
                    "protocol": PROTOCOL_VERSION,
                    "fingerprint": session.fingerprint().to_json_dict(),
                    "capabilities": ["evaluate"],
                },
            )
        elif kind == "evaluate":
            _handle_evaluate(session, space, msg, stdout)
        elif kind == "shutdown":
            return 0
        else:
            _error(stdout, f"unknown request type {kind!r}")
    return 0


def _handle_evaluate(session: SyntheticSession, space: ConfigSpace, msg: dict, stdout):
    try:
        config = KernelConfig.from_assignments(msg["config"])
        shape = ShapeKey.from_dims(msg["shape"])
        warmups = int(msg.get("warmups", DEFAULT_PLAN.warmups))
        reps = int(msg.get("reps", DEFAULT_PLAN.reps))
        plan = DEFAULT_PLAN.__class__(warmups=warmups, reps=reps)
    except (KeyError, TypeError, ValueError, SpaceParseError) as e:
        _error(stdout, f"bad evaluate request: {e}")
        return
    try:
        ok, violations = validate_config(space, config)
    except ConfigStructureError as e:
        _error(stdout, f"config does not match the space: {e}")
        return
    if not ok:
        _reply(
            stdout,
            {"type": "result", "status": "invalid", "reason": f"space: {violations[0]}"},
        )
        return
    try:
        outcome, _wall = session.evaluate(config, shape, plan)
    except KtuneError as e:
        _error(stdout, str(e))
        return
    if outcome.is_ok:
        m = outcome.measurement
        _reply(
            stdout,
            {
                "type": "result",
                "status": "ok",
                "compile_ms": m.compile_ms,
                "latencies_ms": list(m.latencies_ms),
            },
        )
    else:
        _reply(stdout, {"type": "result", "status": "invalid", "reason": outcome.reason})
