import json

import pytest

from ktune.configspace import ConfigSpace, ParamDomain, Constraint, ShapeKey
from ktune.executor import CostProfile


def make_space(params, constraints=(), name="test_space"):
    return ConfigSpace.build(
        name,
        params,
        [Constraint.parse(c) for c in constraints],
    )


def make_profile(
    targets,
    weights=None,
    rules=(),
    intercept=10.0,
    coeffs=None,
    noise_rel=0.0,
    seed=0,
    compile_ms=25.0,
):
    return CostProfile.from_dict(
        {
            "base": {"intercept_ms": intercept, "coeffs_ms": coeffs or {}},
            "targets": targets,
            "weights": weights if weights is not None else {k: 1.0 for k in targets},
            "invalid_rules": list(rules),
            "noise": {"seed": seed, "rel": noise_rel},
            "compile_ms": compile_ms,
        }
    )


@pytest.fixture
def ab_space():
    """A in {1,2,3}, B in {1,2,3,4}, constraint A < B: 6 valid configs."""
    return make_space(
        [ParamDomain.int_list("A", [1, 2, 3]), ParamDomain.int_list("B", [1, 2, 3, 4])],
        ["A < B"],
    )


@pytest.fixture
def shape_1():
    return ShapeKey.from_dims({"batch_size": 1, "seq_len": 512})


def write_json(path, obj):
    path.write_text(json.dumps(obj, indent=1))
    return path
