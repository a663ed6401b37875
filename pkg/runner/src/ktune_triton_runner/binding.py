"""Kernel binding: how one Triton kernel hooks up to the tuner.

A binding file maps the three vocabularies onto each other:

- shape dims -> tensor allocation recipes and scalar kernel arguments,
- space parameters -> kernel launch hyperparameters (constexpr kwargs),
- a grid expression over both.

Every parameter of the referenced space must map to exactly one kernel
hyperparameter; anything unmapped is a startup error, because a tuner
would otherwise search a dimension the kernel never sees.
"""

from __future__ import annotations

import ast
import hashlib
import json
import operator
from dataclasses import dataclass
from pathlib import Path


class BindingError(Exception):
    pass


VALID_INITS = ("randn", "rand", "zeros", "ones", "arange")
VALID_DTYPES = ("float16", "bfloat16", "float32", "int32", "int64")


@dataclass(frozen=True)
class TensorSpec:
    name: str
    shape: tuple[str | int, ...]  # dim names or literal sizes
    dtype: str
    init: str


@dataclass(frozen=True)
class KernelBinding:
    kernel_path: Path
    entry: str
    space_path: Path
    space_param_names: tuple[str, ...]
    tensors: tuple[TensorSpec, ...]
    scalar_args: tuple[str, ...]  # shape dims passed as plain scalars
    arg_order: tuple[str, ...]  # tensor names and scalar args, in call order
    grid: tuple[str, ...]  # one expression per grid axis
    config_params: dict[str, str]  # space parameter -> kernel kwarg
    seed: int = 0

    @classmethod
    def load(cls, path) -> "KernelBinding":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise BindingError(f"cannot read binding {path}: {e}") from None
        base = path.parent

        def need(key):
            if key not in doc:
                raise BindingError(f"binding is missing {key!r}")
            return doc[key]

        kernel = need("kernel")
        kernel_path = (base / kernel["module"]).resolve()
        if not kernel_path.is_file():
            raise BindingError(f"kernel module does not exist: {kernel_path}")
        entry = kernel.get("entry")
        if not entry:
            raise BindingError("binding is missing kernel.entry")

        space_path = (base / need("space_file")).resolve()
        if not space_path.is_file():
            raise BindingError(f"space file does not exist: {space_path}")
        try:
            space_doc = json.loads(space_path.read_text())
            space_params = tuple(p["name"] for p in space_doc["params"])
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise BindingError(f"space file {space_path} is malformed: {e}") from None

        tensors = []
        for i, t in enumerate(need("tensors")):
            spec = TensorSpec(
                name=t.get("name", ""),
                shape=tuple(t.get("shape", ())),
                dtype=t.get("dtype", "float32"),
                init=t.get("init", "zeros"),
            )
            if not spec.name:
                raise BindingError(f"tensors[{i}] has no name")
            if not spec.shape:
                raise BindingError(f"tensor {spec.name!r} has an empty shape")
            if spec.dtype not in VALID_DTYPES:
                raise BindingError(f"tensor {spec.name!r}: unknown dtype {spec.dtype!r}")
            if spec.init not in VALID_INITS:
                raise BindingError(f"tensor {spec.name!r}: unknown init {spec.init!r}")
            tensors.append(spec)
        tensor_names = {t.name for t in tensors}
        if len(tensor_names) != len(tensors):
            raise BindingError("duplicate tensor names")

        scalar_args = tuple(doc.get("scalar_args", ()))
        arg_order = tuple(need("arg_order"))
        for arg in arg_order:
            if arg not in tensor_names and arg not in scalar_args:
                raise BindingError(f"arg_order references unknown argument {arg!r}")

        grid = tuple(need("grid"))
        if not grid:
            raise BindingError("grid must have at least one axis expression")

        config_params = dict(need("config_params"))
        unmapped = [p for p in space_params if p not in config_params]
        if unmapped:
            raise BindingError(
                f"space parameter {unmapped[0]!r} is not mapped to a kernel hyperparameter"
            )
        unknown = [p for p in config_params if p not in space_params]
        if unknown:
            raise BindingError(
                f"config_params maps {unknown[0]!r}, which is not in the space"
            )

        return cls(
            kernel_path=kernel_path,
            entry=entry,
            space_path=space_path,
            space_param_names=space_params,
            tensors=tuple(tensors),
            scalar_args=scalar_args,
            arg_order=arg_order,
            grid=grid,
            config_params=config_params,
            seed=int(doc.get("seed", 0)),
        )

    def kernel_source_digest(self) -> str:
        return hashlib.sha256(self.kernel_path.read_bytes()).hexdigest()

    def space_digest(self) -> str:
        return hashlib.sha256(self.space_path.read_bytes()).hexdigest()

    def kernel_kwargs(self, config: dict) -> dict:
        return {kwarg: config[param] for param, kwarg in self.config_params.items()}

    def grid_sizes(self, shape: dict, config: dict) -> tuple[int, ...]:
        env = dict(shape)
        env.update(config)
        return tuple(int(eval_expr(g, env)) for g in self.grid)

    def tensor_shape(self, spec: TensorSpec, shape: dict) -> tuple[int, ...]:
        out = []
        for d in spec.shape:
            if isinstance(d, int):
                out.append(d)
            else:
                if d not in shape:
                    raise BindingError(f"tensor {spec.name!r} needs shape dim {d!r}")
                out.append(int(shape[d]))
        return tuple(out)


# ---------------------------------------------------------------------------
# minimal arithmetic evaluator for grid expressions


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


_BIN_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
}
_FUNCS = {"ceil_div": ceil_div, "min": min, "max": max}


def eval_expr(text: str, env: dict) -> int:
    """Integer arithmetic over names in `env` plus ceil_div/min/max."""

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, int):
            return node.value
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise BindingError(f"grid expression references unknown name {node.id!r}")
            return int(env[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN_OPS:
            return _BIN_OPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -walk(node.operand)
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
            if node.func.id not in _FUNCS:
                raise BindingError(f"unknown function {node.func.id!r} in grid expression")
            return _FUNCS[node.func.id](*(walk(a) for a in node.args))
        raise BindingError(f"unsupported grid expression construct: {ast.dump(node)}")

    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as e:
        raise BindingError(f"bad grid expression {text!r}: {e}") from None
    return walk(tree)
