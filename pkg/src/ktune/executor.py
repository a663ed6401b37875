"""Empirical evaluation of (config, shape) pairs.

Two evaluator sessions speak the same interface:

- :class:`SyntheticSession` prices a config with a deterministic cost
  model loaded from a profile file. It stands in for a GPU during
  development and in the test suite, and its argmin is known in closed
  form, which makes it an oracle for the search layer.
- :class:`RunnerSession` drives an external benchmark-runner process over
  JSON Lines on stdin/stdout (protocol v1, documented in the README).
  The runner owns all hardware specifics; this side owns budgets,
  retries, and bookkeeping.

Evaluations against one session are strictly serialized: concurrent
requests would corrupt device timing. Sessions for distinct runners may
run in parallel.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import queue
import random
import statistics
import subprocess
import threading
import time
from dataclasses import dataclass, replace

from . import __version__
from .configspace import (
    ConfigSpace,
    Constraint,
    KernelConfig,
    ShapeKey,
    digest_of,
)
from .errors import ExprEvalError, ProfileError, ProtocolError, VersionMismatchError

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1

DEFAULT_WARMUPS = 3
DEFAULT_REPS = 10
DEFAULT_TIMEOUT_MS = 2000.0
HANDSHAKE_TIMEOUT_MS = 10_000.0


@dataclass(frozen=True)
class EvaluationPlan:
    """How one empirical evaluation is carried out."""

    warmups: int = DEFAULT_WARMUPS
    reps: int = DEFAULT_REPS
    timeout_ms: float = DEFAULT_TIMEOUT_MS

    def __post_init__(self):
        if self.warmups < 0 or self.reps < 1 or self.timeout_ms <= 0:
            raise ValueError(f"invalid evaluation plan {self}")

    def with_reps(self, reps: int) -> "EvaluationPlan":
        return replace(self, reps=reps)


DEFAULT_PLAN = EvaluationPlan()


@dataclass(frozen=True)
class Measurement:
    """Timing of one successful evaluation, compile and run kept apart."""

    compile_ms: float
    latencies_ms: tuple[float, ...]
    warmups: int
    reps: int

    def __post_init__(self):
        if self.reps != len(self.latencies_ms) or self.reps < 1:
            raise ValueError(
                f"reps={self.reps} but {len(self.latencies_ms)} latencies recorded"
            )
        if any(not (v > 0) for v in self.latencies_ms):
            raise ValueError("latencies must all be positive")
        if self.compile_ms < 0:
            raise ValueError("compile_ms must be non-negative")

    @property
    def median_ms(self) -> float:
        return statistics.median(self.latencies_ms)

    @property
    def run_ms(self) -> float:
        return sum(self.latencies_ms)


@dataclass(frozen=True)
class EvalOutcome:
    """Ok(measurement) | Invalid(reason) | Failure(reason, transient).

    Invalid means the config cannot run on this platform at all; Failure
    means the attempt broke (crash, timeout, protocol breach). Only
    transient failures are worth retrying.
    """

    status: str  # "ok" | "invalid" | "failure"
    measurement: Measurement | None = None
    reason: str | None = None
    transient: bool = False

    @classmethod
    def ok(cls, measurement: Measurement) -> "EvalOutcome":
        return cls(status="ok", measurement=measurement)

    @classmethod
    def invalid(cls, reason: str) -> "EvalOutcome":
        return cls(status="invalid", reason=reason)

    @classmethod
    def failure(cls, reason: str, transient: bool) -> "EvalOutcome":
        return cls(status="failure", reason=reason, transient=transient)

    @property
    def is_ok(self) -> bool:
        return self.status == "ok"

    def to_json_dict(self) -> dict:
        if self.status == "ok":
            m = self.measurement
            return {
                "status": "ok",
                "compile_ms": m.compile_ms,
                "latencies_ms": list(m.latencies_ms),
                "warmups": m.warmups,
                "reps": m.reps,
            }
        if self.status == "invalid":
            return {"status": "invalid", "reason": self.reason}
        return {"status": "failure", "reason": self.reason, "transient": self.transient}

    @classmethod
    def from_json_dict(cls, d: dict) -> "EvalOutcome":
        status = d.get("status")
        if status == "ok":
            return cls.ok(
                Measurement(
                    compile_ms=float(d["compile_ms"]),
                    latencies_ms=tuple(float(v) for v in d["latencies_ms"]),
                    warmups=int(d.get("warmups", 0)),
                    reps=int(d["reps"]),
                )
            )
        if status == "invalid":
            return cls.invalid(str(d.get("reason", "")))
        if status == "failure":
            return cls.failure(str(d.get("reason", "")), bool(d.get("transient", False)))
        raise ValueError(f"unknown outcome status {status!r}")


_FINGERPRINT_FIELDS = (
    "device_name",
    "driver_version",
    "toolchain_version",
    "runner_id",
    "runner_version",
    "kernel_source_digest",
    "space_digest",
    "protocol_version",
)


@dataclass(frozen=True)
class EnvFingerprint:
    """Everything a tuning result's validity depends on.

    Two fingerprints are equal iff every field is equal; the cache keys
    results by the digest of this record, so any environment change
    (driver, toolchain, kernel source, space, runner, protocol) makes old
    results invisible instead of silently wrong.
    """

    device_name: str
    driver_version: str
    toolchain_version: str
    runner_id: str
    runner_version: str
    kernel_source_digest: str
    space_digest: str
    protocol_version: int

    FIELDS = _FINGERPRINT_FIELDS

    def __post_init__(self):
        for name in _FINGERPRINT_FIELDS[:-1]:
            v = getattr(self, name)
            if not isinstance(v, str) or not v:
                raise ProtocolError(f"fingerprint field {name!r} must be a nonempty string")
        if not isinstance(self.protocol_version, int) or isinstance(self.protocol_version, bool):
            raise ProtocolError("fingerprint field 'protocol_version' must be an integer")

    def digest(self) -> str:
        return digest_of(self.to_json_dict())

    def to_json_dict(self) -> dict:
        return {name: getattr(self, name) for name in _FINGERPRINT_FIELDS}

    @classmethod
    def from_json_dict(cls, d: dict, where: str = "fingerprint") -> "EnvFingerprint":
        missing = [name for name in _FINGERPRINT_FIELDS if name not in d]
        if missing:
            raise ProtocolError(f"{where} is missing field {missing[0]!r}")
        return cls(**{name: d[name] for name in _FINGERPRINT_FIELDS})


# ---------------------------------------------------------------------------
# Synthetic cost model


@dataclass(frozen=True)
class CostProfile:
    """Deterministic latency model standing in for one platform.

    base latency is affine in the (numeric) shape dims; each targeted
    parameter multiplies in a penalty that grows with its distance from
    the target: |log2(v/t)| for numeric values, a 0/1 indicator for
    booleans and categoricals. invalid_rules are constraint expressions
    over config parameters and numeric shape dims; any rule that fires
    marks the config Invalid on this platform, the synthetic counterpart
    of a kernel the toolchain refuses to build.
    """

    base_intercept_ms: float
    base_coeffs_ms: dict[str, float]
    targets: dict[str, int | bool | str]
    weights: dict[str, float]
    invalid_rules: tuple[Constraint, ...]
    noise_seed: int
    noise_rel: float
    compile_ms: float
    digest: str

    @classmethod
    def from_dict(cls, doc: dict) -> "CostProfile":
        if not isinstance(doc, dict):
            raise ProfileError("profile must be a JSON object")
        base = doc.get("base", {})
        if not isinstance(base, dict):
            raise ProfileError("'base' must be an object")
        intercept = base.get("intercept_ms", 0.0)
        coeffs = base.get("coeffs_ms", {})
        if not isinstance(coeffs, dict):
            raise ProfileError("'base.coeffs_ms' must be an object")
        targets = doc.get("targets", {})
        weights = doc.get("weights", {})
        if not isinstance(targets, dict) or not isinstance(weights, dict):
            raise ProfileError("'targets' and 'weights' must be objects")
        for name, w in weights.items():
            if name not in targets:
                raise ProfileError(f"weight for {name!r} has no matching target")
            if not isinstance(w, (int, float)) or w < 0:
                raise ProfileError(f"weight for {name!r} must be >= 0, got {w!r}")
        rules = []
        for i, text in enumerate(doc.get("invalid_rules", [])):
            if not isinstance(text, str):
                raise ProfileError(f"invalid_rules[{i}] must be an expression string")
            try:
                rules.append(Constraint.parse(text, f"invalid_rules[{i}]"))
            except Exception as e:
                raise ProfileError(f"invalid_rules[{i}]: {e}") from None
        noise = doc.get("noise", {})
        if not isinstance(noise, dict):
            raise ProfileError("'noise' must be an object")
        noise_rel = float(noise.get("rel", 0.0))
        if not (0.0 <= noise_rel < 0.5):
            raise ProfileError(f"noise.rel must be in [0, 0.5), got {noise_rel}")
        compile_ms = float(doc.get("compile_ms", 25.0))
        if compile_ms < 0:
            raise ProfileError("compile_ms must be >= 0")
        canon = {
            "base": {"intercept_ms": intercept, "coeffs_ms": coeffs},
            "targets": targets,
            "weights": weights,
            "invalid_rules": [r.canonical_text for r in rules],
            "noise": {"seed": int(noise.get("seed", 0)), "rel": noise_rel},
            "compile_ms": compile_ms,
        }
        return cls(
            base_intercept_ms=float(intercept),
            base_coeffs_ms={k: float(v) for k, v in coeffs.items()},
            targets=dict(targets),
            weights={k: float(v) for k, v in weights.items()},
            invalid_rules=tuple(rules),
            noise_seed=int(noise.get("seed", 0)),
            noise_rel=noise_rel,
            compile_ms=compile_ms,
            digest=digest_of(canon),
        )

    @classmethod
    def from_file(cls, path) -> "CostProfile":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as e:
                raise ProfileError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(doc)

    def base_ms(self, shape: ShapeKey) -> float:
        total = self.base_intercept_ms
        for dim, coeff in self.base_coeffs_ms.items():
            v = shape.dims.get(dim)
            if v is None:
                raise ProfileError(f"shape has no dimension {dim!r} required by the profile")
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ProfileError(f"base coefficient on non-numeric dimension {dim!r}")
            total += coeff * v
        if not total > 0:
            raise ProfileError(f"base latency must be positive, got {total} for {shape}")
        return total

    def weight_for(self, name: str) -> float:
        return self.weights.get(name, 1.0)

    def rule_env(self, config: KernelConfig, shape: ShapeKey) -> dict:
        env: dict = {}
        for k, v in shape.dims.items():
            if isinstance(v, bool) or isinstance(v, (int, str)):
                env[k] = v
            elif isinstance(v, float) and v.is_integer():
                env[k] = int(v)
        env.update(config.assignments)
        return env

    def violated_rule(self, config: KernelConfig, shape: ShapeKey) -> Constraint | None:
        env = self.rule_env(config, shape)
        for rule in self.invalid_rules:
            try:
                if rule.holds(env):
                    return rule
            except ExprEvalError as e:
                raise ProfileError(
                    f"invalid_rule {rule.text!r} does not fit this space/shape: {e}"
                ) from None
        return None


def _noise_stream(profile: CostProfile, config: KernelConfig, shape: ShapeKey) -> random.Random:
    seed_material = f"{profile.noise_seed}:{profile.digest}:{config.digest}:{shape.digest}"
    seed = int.from_bytes(hashlib.sha256(seed_material.encode()).digest()[:8], "big")
    return random.Random(seed)


def deterministic_latency_ms(
    profile: CostProfile, config: KernelConfig, shape: ShapeKey
) -> float:
    """The noise-free part of the model: base times per-parameter penalties."""
    lat = profile.base_ms(shape)
    for name, target in profile.targets.items():
        if name not in config.assignments:
            continue
        v = config.assignments[name]
        w = profile.weight_for(name)
        if isinstance(v, bool) or isinstance(v, str):
            lat *= 1.0 + w * (0.0 if v == target else 1.0)
        else:
            if v <= 0:
                raise ProfileError(f"numeric parameter {name!r} must be positive, got {v}")
            if isinstance(target, bool) or not isinstance(target, (int, float)) or target <= 0:
                raise ProfileError(f"target for numeric parameter {name!r} must be positive")
            lat *= 1.0 + w * abs(math.log2(v / target))
    return lat


def synthetic_latency(profile: CostProfile, config: KernelConfig, shape: ShapeKey) -> float:
    """One latency sample. Pure in (profile, config, shape, seed)."""
    lat = deterministic_latency_ms(profile, config, shape)
    if profile.noise_rel > 0:
        u = _noise_stream(profile, config, shape).uniform(-profile.noise_rel, profile.noise_rel)
        lat *= 1.0 + u
    return lat


class SyntheticSession:
    """Evaluator backed by a cost profile instead of hardware."""

    def __init__(self, profile: CostProfile, space: ConfigSpace):
        self.profile = profile
        self.space = space
        self.evaluations = 0

    def fingerprint(self) -> EnvFingerprint:
        return EnvFingerprint(
            device_name="synthetic",
            driver_version="synthetic",
            toolchain_version=self.profile.digest,
            runner_id="synthetic",
            runner_version=__version__,
            kernel_source_digest=self.profile.digest,
            space_digest=self.space.digest,
            protocol_version=PROTOCOL_VERSION,
        )

    def evaluate(
        self, config: KernelConfig, shape: ShapeKey, plan: EvaluationPlan = DEFAULT_PLAN
    ) -> tuple[EvalOutcome, float]:
        """Returns (outcome, wall_ms). Wall time is the simulated clock:
        compile plus the sum of the repetition latencies, zero overhead."""
        self.evaluations += 1
        rule = self.profile.violated_rule(config, shape)
        if rule is not None:
            return EvalOutcome.invalid(f"rule: {rule.text}"), 0.0
        base = deterministic_latency_ms(self.profile, config, shape)
        if self.profile.noise_rel > 0:
            rng = _noise_stream(self.profile, config, shape)
            latencies = tuple(
                base * (1.0 + rng.uniform(-self.profile.noise_rel, self.profile.noise_rel))
                for _ in range(plan.reps)
            )
        else:
            latencies = (base,) * plan.reps
        m = Measurement(
            compile_ms=self.profile.compile_ms,
            latencies_ms=latencies,
            warmups=plan.warmups,
            reps=plan.reps,
        )
        return EvalOutcome.ok(m), m.compile_ms + m.run_ms

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


# ---------------------------------------------------------------------------
# External runner protocol client


_EOF = object()


class _StdoutReader(threading.Thread):
    """Drains the runner's stdout into a queue so reads can time out."""

    def __init__(self, stream):
        super().__init__(daemon=True)
        self.stream = stream
        self.lines: queue.Queue = queue.Queue()

    def run(self):
        try:
            for line in self.stream:
                self.lines.put(line)
        except ValueError:
            pass  # stream closed underneath us
        self.lines.put(_EOF)


class RunnerSession:
    """One external benchmark-runner process, strictly serialized.

    Failure mapping follows the protocol contract: process death is a
    non-transient failure, a timeout is transient (the runner is restarted
    so a late reply cannot desynchronize the stream), and a malformed
    reply is non-transient and poisons the session, because nothing after
    it can be attributed reliably.
    """

    def __init__(self, cmd: list[str], handshake_timeout_ms: float = HANDSHAKE_TIMEOUT_MS):
        self.cmd = list(cmd)
        self.handshake_timeout_ms = handshake_timeout_ms
        self.evaluations = 0
        self._proc: subprocess.Popen | None = None
        self._reader: _StdoutReader | None = None
        self._fingerprint: EnvFingerprint | None = None
        self.capabilities: tuple[str, ...] = ()
        # once set, every further evaluation fails hard with this reason;
        # covers observed process death and protocol breaches
        self._broken: str | None = None

    # -- process management --------------------------------------------------

    def start(self) -> EnvFingerprint:
        self._spawn()
        fp, caps = self._handshake()
        self._fingerprint = fp
        self.capabilities = caps
        return fp

    def _spawn(self):
        log.debug("starting runner: %s", self.cmd)
        self._proc = subprocess.Popen(
            self.cmd,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,
            text=True,
            bufsize=1,
        )
        self._reader = _StdoutReader(self._proc.stdout)
        self._reader.start()

    def _alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def _send(self, obj: dict) -> bool:
        if not self._alive():
            return False
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
            return True
        except (BrokenPipeError, OSError):
            return False

    def _recv_line(self, timeout_ms: float):
        """One line, _EOF, or None on timeout."""
        try:
            item = self._reader.lines.get(timeout=timeout_ms / 1000.0)
        except queue.Empty:
            return None
        return item

    def _kill(self):
        if self._proc is not None and self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass

    def _restart_after_timeout(self):
        """A timed-out request may still produce a late reply; the only safe
        way to keep the stream coherent is a fresh process."""
        self._kill()
        try:
            self._spawn()
            fp, caps = self._handshake()
        except (ProtocolError, OSError) as e:
            self._broken = f"restart after timeout failed: {e}"
            return
        if self._fingerprint is not None and fp != self._fingerprint:
            self._broken = "runner fingerprint changed across restart"
        self.capabilities = caps

    # -- protocol ------------------------------------------------------------

    def _handshake(self) -> tuple[EnvFingerprint, tuple[str, ...]]:
        if not self._send({"type": "hello", "protocol": PROTOCOL_VERSION}):
            raise ProtocolError("runner process did not accept the hello request")
        line = self._recv_line(self.handshake_timeout_ms)
        if line is None:
            raise ProtocolError("runner did not reply to hello within the handshake timeout")
        if line is _EOF:
            raise ProtocolError("runner exited before replying to hello")
        try:
            msg = json.loads(line)
        except json.JSONDecodeError:
            raise ProtocolError(f"hello reply is not valid JSON: {line!r}") from None
        if not isinstance(msg, dict) or msg.get("type") != "hello":
            raise ProtocolError(f"expected a hello reply, got {msg!r}")
        theirs = msg.get("protocol")
        if theirs != PROTOCOL_VERSION:
            raise VersionMismatchError(PROTOCOL_VERSION, theirs)
        fp_doc = msg.get("fingerprint")
        if not isinstance(fp_doc, dict):
            raise ProtocolError("hello reply is missing the fingerprint object")
        fp = EnvFingerprint.from_json_dict(fp_doc, "hello fingerprint")
        caps = msg.get("capabilities", [])
        if not isinstance(caps, list) or "evaluate" not in caps:
            raise ProtocolError("runner does not declare the 'evaluate' capability")
        return fp, tuple(caps)

    def fingerprint(self) -> EnvFingerprint:
        if self._fingerprint is None:
            return self.start()
        return self._fingerprint

    def evaluate(
        self, config: KernelConfig, shape: ShapeKey, plan: EvaluationPlan = DEFAULT_PLAN
    ) -> tuple[EvalOutcome, float]:
        """Returns (outcome, wall_ms) with wall measured around the request."""
        self.evaluations += 1
        if self._broken is not None:
            return EvalOutcome.failure(self._broken, transient=False), 0.0
        if self._fingerprint is None:
            raise ProtocolError("evaluate before handshake")
        started = time.monotonic()
        request = {
            "type": "evaluate",
            "config": config.assignments,
            "shape": shape.dims,
            "warmups": plan.warmups,
            "reps": plan.reps,
        }
        if not self._send(request):
            self._broken = "runner process died (request not accepted)"
            return (
                EvalOutcome.failure(self._broken, transient=False),
                (time.monotonic() - started) * 1000.0,
            )
        line = self._recv_line(plan.timeout_ms)
        wall_ms = (time.monotonic() - started) * 1000.0
        if line is None:
            self._restart_after_timeout()
            return (
                EvalOutcome.failure(
                    f"evaluation timed out after {plan.timeout_ms:g} ms", transient=True
                ),
                wall_ms,
            )
        if line is _EOF:
            try:
                code = self._proc.wait(timeout=1)
            except subprocess.TimeoutExpired:
                code = self._proc.poll()
            self._broken = f"runner process died (exit code {code})"
            return EvalOutcome.failure(self._broken, transient=False), wall_ms
        try:
            msg = json.loads(line)
            if not isinstance(msg, dict):
                raise ValueError("reply is not an object")
        except ValueError:
            self._poison(f"malformed runner reply: {line.strip()!r}")
            return EvalOutcome.failure(self._broken, transient=False), wall_ms
        if msg.get("type") != "result":
            self._poison(f"unknown reply type {msg.get('type')!r}")
            return EvalOutcome.failure(self._broken, transient=False), wall_ms
        status = msg.get("status")
        if status == "ok":
            try:
                latencies = tuple(float(v) for v in msg["latencies_ms"])
                m = Measurement(
                    compile_ms=float(msg.get("compile_ms", 0.0)),
                    latencies_ms=latencies,
                    warmups=plan.warmups,
                    reps=plan.reps,
                )
            except (KeyError, TypeError, ValueError) as e:
                self._poison(f"malformed ok result: {e}")
                return EvalOutcome.failure(self._broken, transient=False), wall_ms
            return EvalOutcome.ok(m), wall_ms
        if status == "invalid":
            return EvalOutcome.invalid(str(msg.get("reason", "unspecified"))), wall_ms
        if status == "error":
            # The runner survived and reported a per-request error; worth one retry.
            return EvalOutcome.failure(str(msg.get("reason", "unspecified")), True), wall_ms
        self._poison(f"unknown result status {status!r}")
        return EvalOutcome.failure(self._broken, transient=False), wall_ms

    def _poison(self, reason: str):
        log.warning("runner session poisoned: %s", reason)
        self._broken = reason
        self._kill()

    def shutdown(self) -> int | None:
        """Polite shutdown; returns the runner's exit code if it exited."""
        if self._proc is None:
            return None
        if self._alive():
            self._send({"type": "shutdown"})
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._kill()
        return self._proc.poll()

    def close(self):
        self.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def handshake(session: RunnerSession) -> tuple[EnvFingerprint, tuple[str, ...]]:
    """Start the runner and return its fingerprint and capabilities."""
    fp = session.start()
    return fp, session.capabilities
