import math

import autograd
import autograd.numpy as anp
import numpy as np
import pytest

from nectfuse.distributions import check_corr_factor
from nectfuse.posterior import build_transform_spec
from nectfuse.exceptions import TransformError
from nectfuse.transforms import (
    BlockSpec,
    Constraint,
    CorrCholesky,
    Positive,
    TransformSpec,
)


def _spec():
    return TransformSpec(
        [
            BlockSpec("ct", "identity", (2,)),
            BlockSpec("sigma", "positive"),
            BlockSpec("tau", "positive-vector", (3,)),
            ("L_R", "corr-cholesky", (3, 3)),
        ]
    )


def test_registry():
    assert set(Constraint.kinds) >= {
        "identity",
        "positive",
        "positive-vector",
        "corr-cholesky",
    }
    assert Constraint.kinds["corr-cholesky"] is CorrCholesky


def test_spec_layout():
    spec = _spec()
    assert len(spec) == 4
    assert spec.size == 2 + 1 + 3 + 3
    assert spec.block_names == ["ct", "sigma", "tau", "L_R"]
    assert spec.slices["tau"] == slice(3, 6)
    assert spec.block_size("L_R") == 3
    assert "sigma" in spec
    assert spec.names(exclude={"L_R"}) == [
        "ct[1]",
        "ct[2]",
        "sigma",
        "tau[1]",
        "tau[2]",
        "tau[3]",
    ]
    assert spec.names()[-6:] == [
        "L_R[1,1]",
        "L_R[2,1]",
        "L_R[2,2]",
        "L_R[3,1]",
        "L_R[3,2]",
        "L_R[3,3]",
    ]


def test_constrain_then_unconstrain():
    spec = _spec()
    u = np.array([0.3, -1.2, 0.5, -0.1, 0.0, 2.0, 0.7, -0.4, 1.1])
    theta, _ = spec.constrain(u)

    assert theta["ct"].tolist() == [0.3, -1.2]
    assert theta["sigma"] == pytest.approx(math.exp(0.5))
    assert np.allclose(theta["tau"], np.exp([-0.1, 0.0, 2.0]))
    check_corr_factor(theta["L_R"])
    assert np.allclose(spec.unconstrain(theta), u)

    flat = spec.flatten(theta)
    assert flat.shape == (len(spec.names()),)
    assert flat[spec.names().index("L_R[1,1]")] == 1.0


def test_corr_cholesky_is_valid_far_out():
    constraint = CorrCholesky("L_R", (4, 4))
    rng = np.random.default_rng(0)
    for scale in (0.1, 3.0):
        L_R, log_jac = constraint.constrain(scale * rng.standard_normal(constraint.size))
        check_corr_factor(L_R)
        assert np.isfinite(log_jac)

    _, log_jac = CorrCholesky("L_R", (2, 2)).constrain(np.array([20.0]))
    assert np.isfinite(log_jac)


def test_corr_cholesky_log_jacobian():
    constraint = CorrCholesky("L_R", (3, 3))

    def lower(u):
        L_R, _ = constraint.constrain(u)
        return anp.stack([L_R[1, 0], L_R[2, 0], L_R[2, 1]])

    u = np.array([0.4, -0.9, 1.3])
    jacobian = autograd.jacobian(lower)(u)
    _, log_jac = constraint.constrain(u)
    assert log_jac == pytest.approx(np.log(abs(np.linalg.det(jacobian))))


def test_positive_log_jacobian():
    constraint = Positive("tau", (2,))
    value, log_jac = constraint.constrain(np.array([0.5, -2.0]))
    assert np.allclose(value, np.exp([0.5, -2.0]))
    assert log_jac == pytest.approx(-1.5)


def test_single_pipeline_factor():
    constraint = CorrCholesky("L_R", (1, 1))
    assert constraint.size == 0
    L_R, log_jac = constraint.constrain(np.zeros(0))
    assert np.allclose(L_R, [[1.0]])
    assert log_jac == 0.0
    assert constraint.element_names() == ["L_R[1,1]"]


def test_gradient_through_constrain():
    spec = _spec()

    def target(u):
        theta, log_jac = spec.constrain(u)
        return anp.sum(theta["tau"]) + theta["L_R"][2, 1] + log_jac

    grad = autograd.grad(target)(np.zeros(spec.size))
    assert grad.shape == (spec.size,)
    assert np.all(np.isfinite(grad))
    assert grad[spec.slices["tau"]] == pytest.approx([2.0, 2.0, 2.0])


def test_transform_errors():
    spec = _spec()
    with pytest.raises(TransformError):
        spec.constrain(np.zeros(spec.size + 1))

    theta, _ = spec.constrain(np.zeros(spec.size))
    with pytest.raises(TransformError) as exc:
        spec.unconstrain(dict(theta, tau=np.array([1.0, -1.0, 1.0])))
    assert exc.value.block == "tau"
    assert exc.value.exit_code == 10

    with pytest.raises(TransformError):
        spec.unconstrain(dict(theta, L_R=np.full((3, 3), 0.5)))
    with pytest.raises(TransformError):
        spec.unconstrain(dict(theta, ct=np.zeros(3)))
    with pytest.raises(TransformError):
        spec.unconstrain({"ct": np.zeros(2)})

    with pytest.raises(TransformError):
        TransformSpec([("a", "positive", ()), ("a", "identity", ())])
    with pytest.raises(TransformError):
        TransformSpec([("a", "simplex", (3,))])
    with pytest.raises(TransformError):
        TransformSpec([("a", "positive-vector", ())])
    with pytest.raises(TransformError):
        TransformSpec([("a", "corr-cholesky", (2, 3))])


def _full_spec():
    return build_transform_spec(n_rows=3, n_subjects=2, n_pipelines=7)


def _free_values(spec, u):
    """Constrained values with one coordinate per unconstrained one."""
    theta, _ = spec.constrain(u)
    parts = []
    for name in spec.block_names:
        value = np.asarray(theta[name], dtype=float)
        if name == "L_R":
            parts.append(value[np.tril_indices(7, -1)])
        else:
            parts.append(value.ravel())
    return np.concatenate(parts)


def _numeric_log_det(function, u, eps=1e-6):
    columns = []
    for index in range(len(u)):
        step = np.zeros(len(u))
        step[index] = eps
        columns.append((function(u + step) - function(u - step)) / (2 * eps))
    _, log_det = np.linalg.slogdet(np.column_stack(columns))
    return log_det


def test_round_trip_at_full_width():
    spec = _full_spec()
    rng = np.random.default_rng(17)
    for _ in range(100):
        u = rng.standard_normal(spec.size)
        theta, _ = spec.constrain(u)
        check_corr_factor(theta["L_R"])
        assert np.allclose(spec.unconstrain(theta), u, rtol=0, atol=1e-12)


def test_positive_blocks_numeric_jacobian():
    constraint = Positive("tau", (7,))
    u = np.random.default_rng(4).standard_normal(7)
    _, log_jac = constraint.constrain(u)
    numeric = _numeric_log_det(lambda point: constraint.constrain(point)[0], u)
    assert log_jac == pytest.approx(numeric, abs=1e-5)


def test_full_spec_numeric_jacobian():
    spec = _full_spec()
    rng = np.random.default_rng(5)
    for _ in range(3):
        u = 0.8 * rng.standard_normal(spec.size)
        _, log_jac = spec.constrain(u)
        numeric = _numeric_log_det(lambda point: _free_values(spec, point), u)
        assert log_jac == pytest.approx(numeric, abs=1e-5)
