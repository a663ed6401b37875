"""Protocol v1 request loop over stdin/stdout.

One JSON object per line, one request in flight. Per-request exceptions
become `status:"error"` replies and the process stays alive; only a
shutdown request (or EOF) ends the loop. Device-rejected configurations
(shared memory, registers, OOM) are reported as `status:"invalid"` with
the toolchain's message, which is how real platform limits surface to
the tuner.
"""

from __future__ import annotations

import json
import logging
import sys

from . import __version__
from .binding import KernelBinding

log = logging.getLogger("ktune_triton_runner")

PROTOCOL_VERSION = 1


def fingerprint(binding: KernelBinding, backend) -> dict:
    fields = {
        "runner_id": "triton-runner",
        "runner_version": __version__,
        "kernel_source_digest": binding.kernel_source_digest(),
        "space_digest": binding.space_digest(),
        "protocol_version": PROTOCOL_VERSION,
    }
    fields.update(backend.fingerprint_fields())
    return fields


def serve(binding: KernelBinding, backend, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def reply(obj):
        stdout.write(json.dumps(obj) + "\n")
        stdout.flush()

    def error(reason):
        reply({"type": "result", "status": "error", "reason": reason})

    fp = fingerprint(binding, backend)
    for line in stdin:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError
        except ValueError:
            error("request is not a JSON object")
            continue
        kind = msg.get("type")
        if kind == "hello":
            reply(
                {
                    "type": "hello",
                    "protocol": PROTOCOL_VERSION,
                    "fingerprint": fp,
                    "capabilities": ["evaluate", backend.capability],
                }
            )
        elif kind == "evaluate":
            try:
                config = dict(msg["config"])
                shape = dict(msg["shape"])
                warmups = int(msg.get("warmups", 3))
                reps = int(msg.get("reps", 10))
                if reps < 1:
                    raise ValueError("reps must be >= 1")
            except (KeyError, TypeError, ValueError) as e:
                error(f"bad evaluate request: {e}")
                continue
            missing = [p for p in binding.space_param_names if p not in config]
            if missing:
                error(f"config is missing space parameter {missing[0]!r}")
                continue
            try:
                outcome = backend.evaluate(config, shape, warmups, reps)
            except Exception as e:  # keep serving; report the request as failed
                log.exception("evaluation raised")
                error(f"{type(e).__name__}: {e}")
                continue
            if outcome.status == "ok":
                reply(
                    {
                        "type": "result",
                        "status": "ok",
                        "compile_ms": outcome.compile_ms,
                        "latencies_ms": outcome.latencies_ms,
                    }
                )
            else:
                reply({"type": "result", "status": outcome.status, "reason": outcome.reason})
        elif kind == "shutdown":
            return 0
        else:
            error(f"unknown request type {kind!r}")
    return 0
