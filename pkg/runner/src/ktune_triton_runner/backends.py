"""Evaluation backends.

TritonBackend owns the real work: allocate tensors for a shape, JIT the
bound kernel with a config's hyperparameters, and time it on the device.
Timing uses device events around graph-captured launches when the stack
supports capture, otherwise plain synchronized events; the chosen
fidelity is reported as a capability so the tuner can record it.

StubBackend implements the same surface with deterministic fake timings
and exists so the protocol layer can be exercised on machines without a
GPU (CI, protocol conformance checks).
"""

from __future__ import annotations

import hashlib
import importlib.util
import sys
import time
from pathlib import Path

from . import __version__
from .binding import KernelBinding


class EvaluationOutcome:
    """status is "ok" | "invalid" | "error"."""

    def __init__(self, status, compile_ms=0.0, latencies_ms=(), reason=""):
        self.status = status
        self.compile_ms = compile_ms
        self.latencies_ms = list(latencies_ms)
        self.reason = reason

    @classmethod
    def ok(cls, compile_ms, latencies_ms):
        return cls("ok", compile_ms=compile_ms, latencies_ms=latencies_ms)

    @classmethod
    def invalid(cls, reason):
        return cls("invalid", reason=reason)

    @classmethod
    def error(cls, reason):
        return cls("error", reason=reason)


class StubBackend:
    """GPU-free stand-in: positive deterministic latencies per config."""

    capability = "stub-timing"

    def __init__(self, binding: KernelBinding):
        self.binding = binding

    def fingerprint_fields(self) -> dict:
        return {
            "device_name": "stub-device",
            "driver_version": "stub",
            "toolchain_version": f"stub-{__version__}",
        }

    def evaluate(self, config: dict, shape: dict, warmups: int, reps: int) -> EvaluationOutcome:
        # derived from the request so repeated calls agree and distinct
        # configs differ; useful for exercising selection logic off-GPU
        material = repr(sorted(config.items())) + repr(sorted(shape.items()))
        bucket = int.from_bytes(hashlib.sha256(material.encode()).digest()[:4], "big")
        latency = 0.5 + (bucket % 1000) / 1000.0
        return EvaluationOutcome.ok(5.0, [latency] * reps)


class TritonBackend:
    """JIT-compile and time the bound kernel on the local GPU."""

    def __init__(self, binding: KernelBinding):
        self.binding = binding
        import torch  # deferred: only the GPU path needs it
        import triton

        self.torch = torch
        self.triton = triton
        if not torch.cuda.is_available():
            raise RuntimeError("no CUDA/HIP device is visible to torch")
        self.device = torch.device("cuda")
        self.kernel = self._load_kernel()
        self.capability = "event-timing"
        self._graphs_ok = hasattr(torch.cuda, "CUDAGraph")
        if self._graphs_ok:
            self.capability = "graph-timing"

    def _load_kernel(self):
        path = self.binding.kernel_path
        spec = importlib.util.spec_from_file_location(f"ktune_kernel_{path.stem}", path)
        module = importlib.util.module_from_spec(spec)
        sys.modules[spec.name] = module
        spec.loader.exec_module(module)
        try:
            return getattr(module, self.binding.entry)
        except AttributeError:
            raise RuntimeError(
                f"{path} has no kernel entry {self.binding.entry!r}"
            ) from None

    def fingerprint_fields(self) -> dict:
        torch = self.torch
        try:
            driver = str(torch._C._cuda_getDriverVersion())
        except AttributeError:
            driver = torch.version.cuda or torch.version.hip or "unknown"
        return {
            "device_name": torch.cuda.get_device_name(0),
            "driver_version": driver,
            "toolchain_version": (
                f"torch-{torch.__version__}+triton-{self.triton.__version__}"
                f"+runtime-{torch.version.cuda or torch.version.hip}"
            ),
        }

    def _alloc(self, shape: dict):
        torch = self.torch
        gen = torch.Generator(device="cpu").manual_seed(self.binding.seed)
        tensors = {}
        for spec in self.binding.tensors:
            sizes = self.binding.tensor_shape(spec, shape)
            dtype = getattr(torch, spec.dtype)
            if spec.init == "zeros":
                t = torch.zeros(sizes, dtype=dtype)
            elif spec.init == "ones":
                t = torch.ones(sizes, dtype=dtype)
            elif spec.init == "arange":
                t = torch.arange(0, int(torch.tensor(sizes).prod()), dtype=dtype).reshape(sizes)
            elif spec.init == "rand":
                t = torch.rand(sizes, generator=gen, dtype=torch.float32).to(dtype)
            else:  # randn
                t = torch.randn(sizes, generator=gen, dtype=torch.float32).to(dtype)
            tensors[spec.name] = t.to(self.device)
        return tensors

    def _launch_args(self, tensors: dict, shape: dict):
        args = []
        for name in self.binding.arg_order:
            if name in tensors:
                args.append(tensors[name])
            else:
                args.append(shape[name])
        return args

    def evaluate(self, config: dict, shape: dict, warmups: int, reps: int) -> EvaluationOutcome:
        torch = self.torch
        resource_errors = (torch.cuda.OutOfMemoryError,)
        try:
            from triton.runtime.errors import OutOfResources

            resource_errors = resource_errors + (OutOfResources,)
        except ImportError:
            pass

        try:
            tensors = self._alloc(shape)
            args = self._launch_args(tensors, shape)
            kwargs = self.binding.kernel_kwargs(config)
            grid = self.binding.grid_sizes(shape, config)

            def launch():
                self.kernel[grid](*args, **kwargs)

            # cold launch = JIT compile + first run
            torch.cuda.synchronize()
            compile_start = time.monotonic()
            launch()
            torch.cuda.synchronize()
            compile_ms = (time.monotonic() - compile_start) * 1000.0

            replay = launch
            if self._graphs_ok:
                try:
                    graph = torch.cuda.CUDAGraph()
                    with torch.cuda.graph(graph):
                        launch()
                    replay = graph.replay
                except RuntimeError:
                    replay = launch  # capture unsupported for this kernel

            for _ in range(warmups):
                replay()
            torch.cuda.synchronize()

            latencies = []
            for _ in range(reps):
                start = torch.cuda.Event(enable_timing=True)
                stop = torch.cuda.Event(enable_timing=True)
                start.record()
                replay()
                stop.record()
                torch.cuda.synchronize()
                latencies.append(start.elapsed_time(stop))
            if any(not (v > 0) for v in latencies):
                return EvaluationOutcome.error("device reported a non-positive latency")
            return EvaluationOutcome.ok(compile_ms, latencies)
        except resource_errors as e:
            return EvaluationOutcome.invalid(f"{type(e).__name__}: {e}")
        except Exception as e:  # kernel- or toolchain-specific failure
            text = str(e)
            if "out of resource" in text.lower() or "shared memory" in text.lower():
                return EvaluationOutcome.invalid(f"{type(e).__name__}: {text}")
            return EvaluationOutcome.error(f"{type(e).__name__}: {text}")


def make_backend(name: str, binding: KernelBinding):
    if name == "stub":
        return StubBackend(binding)
    if name == "triton":
        return TritonBackend(binding)
    raise ValueError(f"unknown backend {name!r}")
