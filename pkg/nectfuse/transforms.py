"""
title: Transforms
module: nectfuse.transforms
description:
    Bijections between constrained parameter blocks and one flat unconstrained
    vector, with the log-Jacobian of the constraining direction.

    Each constraint kind is a ``Constraint`` subclass that registers itself
    under its ``kind`` name; a ``TransformSpec`` is an ordered list of blocks
    built from those kinds.
"""
import dataclasses
import math
import typing

import autograd.numpy as np
import numpy as onp
from autograd.tracer import getval

from nectfuse.distributions import FACTOR_TOLERANCE
from nectfuse.exceptions import TransformError

LOG_2 = math.log(2.0)

Shape = typing.Tuple[int, ...]


def _element_label(index: typing.Tuple[int, ...]) -> str:
    return ",".join(str(position + 1) for position in index)


def _size(shape: Shape) -> int:
    return int(onp.prod(shape)) if shape else 1


class Constraint(object):
    kind: str = None
    kinds: typing.Dict[str, typing.Type["Constraint"]] = {}

    def __init_subclass__(cls, *args: typing.Any, **kwargs: typing.Any) -> None:
        super().__init_subclass__(*args, **kwargs)
        if cls.kind is not None:
            cls.kinds[cls.kind] = cls

    def __init__(self, name: str, shape: Shape) -> None:
        self.name = name
        self.shape = tuple(int(extent) for extent in shape)

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}({self.name!r}, {self.shape})"

    @property
    def size(self) -> int:
        """Length of this block inside the unconstrained vector."""
        return _size(self.shape)

    def constrain(self, u: typing.Any) -> typing.Tuple[typing.Any, typing.Any]:
        raise NotImplementedError()  # pragma: nocover

    def unconstrain(self, value: typing.Any) -> onp.ndarray:
        raise NotImplementedError()  # pragma: nocover

    def element_names(self) -> typing.List[str]:
        if not self.shape:
            return [self.name]
        return [
            f"{self.name}[{_element_label(index)}]" for index in onp.ndindex(*self.shape)
        ]

    def flatten(self, value: typing.Any) -> onp.ndarray:
        return onp.asarray(value, dtype=float).reshape(-1)

    def _reshape(self, u: typing.Any) -> typing.Any:
        if not self.shape:
            return u[0]
        return np.reshape(u, self.shape)

    def _checked(self, value: typing.Any) -> onp.ndarray:
        raw = onp.asarray(value, dtype=float)
        if raw.shape != self.shape:
            raise TransformError(
                f"expected shape {self.shape}, got {raw.shape}", block=self.name
            )
        if not onp.all(onp.isfinite(raw)):
            raise TransformError("values must be finite", block=self.name)
        return raw


class Identity(Constraint):
    kind = "identity"

    def constrain(self, u: typing.Any) -> typing.Tuple[typing.Any, typing.Any]:
        return self._reshape(u), 0.0

    def unconstrain(self, value: typing.Any) -> onp.ndarray:
        return self._checked(value).reshape(-1)


class Positive(Constraint):
    kind = "positive"

    def __init__(self, name: str, shape: Shape = ()) -> None:
        super().__init__(name, shape)

    def constrain(self, u: typing.Any) -> typing.Tuple[typing.Any, typing.Any]:
        return np.exp(self._reshape(u)), np.sum(u)

    def unconstrain(self, value: typing.Any) -> onp.ndarray:
        raw = self._checked(value)
        if onp.any(raw <= 0):
            raise TransformError("values must be > 0", block=self.name)
        return onp.log(raw).reshape(-1)


class PositiveVector(Positive):
    kind = "positive-vector"

    def __init__(self, name: str, shape: Shape) -> None:
        if not shape:
            raise TransformError("a vector block needs a shape", block=name)
        super().__init__(name, shape)


class CorrCholesky(Constraint):
    """Cholesky factor of a correlation matrix.

    The strictly lower entries, row by row, pass through ``tanh`` to
    canonical partial correlations ``z``; row ``i`` is then filled as
    ``L[i, j] = z[i, j] * sqrt(1 - sum(L[i, :j] ** 2))`` and closed with the
    positive diagonal entry that gives the row unit norm.
    """

    kind = "corr-cholesky"

    def __init__(self, name: str, shape: Shape) -> None:
        super().__init__(name, shape)
        if len(self.shape) != 2 or self.shape[0] != self.shape[1]:
            raise TransformError(f"factor must be square, got {self.shape}", name)
        self.dimension = self.shape[0]

    @property
    def size(self) -> int:
        return self.dimension * (self.dimension - 1) // 2

    def constrain(self, u: typing.Any) -> typing.Tuple[typing.Any, typing.Any]:
        size = self.dimension
        z = np.tanh(u)
        # log(1 - tanh(u)^2) without cancellation for large |u|
        abs_u = np.abs(u)
        log_jac = np.sum(2.0 * (LOG_2 - abs_u - np.log1p(np.exp(-2.0 * abs_u))))

        rows = [[1.0] + [0.0] * (size - 1)]
        position = 0
        for i in range(1, size):
            row = []
            sum_sq = 0.0
            for j in range(i):
                if j == 0:
                    entry = z[position]
                else:
                    log_jac = log_jac + 0.5 * np.log1p(-sum_sq)
                    entry = z[position] * np.sqrt(1.0 - sum_sq)
                row.append(entry)
                sum_sq = sum_sq + entry**2
                position += 1
            row.append(np.sqrt(1.0 - sum_sq))
            row.extend([0.0] * (size - i - 1))
            rows.append(row)

        L_R = np.stack([np.stack(row) for row in rows])
        return L_R, log_jac

    def unconstrain(self, value: typing.Any) -> onp.ndarray:
        L_R = self._checked(value)
        if onp.any(onp.abs(onp.triu(L_R, 1)) > FACTOR_TOLERANCE):
            raise TransformError("factor must be lower triangular", block=self.name)
        if onp.any(onp.diag(L_R) <= 0):
            raise TransformError("factor needs a positive diagonal", block=self.name)
        if onp.any(onp.abs(onp.sum(L_R**2, axis=1) - 1.0) > FACTOR_TOLERANCE):
            raise TransformError("factor rows must have unit norm", block=self.name)

        u = []
        for i in range(1, self.dimension):
            sum_sq = 0.0
            for j in range(i):
                z = L_R[i, j] / math.sqrt(1.0 - sum_sq)
                if not -1.0 < z < 1.0:
                    raise TransformError("partial correlation outside (-1, 1)", self.name)
                u.append(math.atanh(z))
                sum_sq += L_R[i, j] ** 2
        return onp.asarray(u, dtype=float)

    def element_names(self) -> typing.List[str]:
        return [
            f"{self.name}[{i + 1},{j + 1}]"
            for i in range(self.dimension)
            for j in range(i + 1)
        ]

    def flatten(self, value: typing.Any) -> onp.ndarray:
        rows, columns = onp.tril_indices(self.dimension)
        return onp.asarray(value, dtype=float)[rows, columns]


@dataclasses.dataclass(frozen=True)
class BlockSpec(object):
    name: str
    kind: str
    shape: Shape = ()


class TransformSpec(object):
    def __init__(
        self,
        blocks: typing.Sequence[
            typing.Union[BlockSpec, typing.Tuple[str, str, Shape]]
        ],
    ) -> None:
        self.constraints: typing.List[Constraint] = []
        self.slices: typing.Dict[str, slice] = {}

        start = 0
        for block in blocks:
            if not isinstance(block, BlockSpec):
                block = BlockSpec(*block)
            if block.name in self.slices:
                raise TransformError("duplicate block name", block=block.name)
            if block.kind not in Constraint.kinds:
                raise TransformError(f"unknown constraint `{block.kind}`", block.name)

            constraint = Constraint.kinds[block.kind](block.name, block.shape)
            self.constraints.append(constraint)
            self.slices[block.name] = slice(start, start + constraint.size)
            start += constraint.size
        self.size = start

    def __len__(self) -> int:
        return len(self.constraints)

    def __iter__(self) -> typing.Iterator[Constraint]:
        return iter(self.constraints)

    def __contains__(self, name: str) -> bool:
        return name in self.slices

    @property
    def block_names(self) -> typing.List[str]:
        return [constraint.name for constraint in self.constraints]

    def block_size(self, name: str) -> int:
        block = self.slices[name]
        return block.stop - block.start

    def constrain(
        self, u: typing.Any
    ) -> typing.Tuple[typing.Dict[str, typing.Any], typing.Any]:
        self._check_dimension(u)
        theta = {}
        log_jac = 0.0
        for constraint in self.constraints:
            value, block_jac = constraint.constrain(u[self.slices[constraint.name]])
            theta[constraint.name] = value
            log_jac = log_jac + block_jac
        return theta, log_jac

    def unconstrain(self, theta: typing.Mapping[str, typing.Any]) -> onp.ndarray:
        parts = []
        for constraint in self.constraints:
            if constraint.name not in theta:
                raise TransformError("missing value", block=constraint.name)
            parts.append(constraint.unconstrain(theta[constraint.name]))
        return onp.concatenate(parts) if parts else onp.zeros(0)

    def names(self, exclude: typing.Container[str] = ()) -> typing.List[str]:
        """Flat element names in block order, e.g. ``phi[1]`` or ``L_R[3,2]``."""
        names = []
        for constraint in self.constraints:
            if constraint.name not in exclude:
                names.extend(constraint.element_names())
        return names

    def flatten(
        self,
        theta: typing.Mapping[str, typing.Any],
        exclude: typing.Container[str] = (),
    ) -> onp.ndarray:
        parts = [
            constraint.flatten(getval(theta[constraint.name]))
            for constraint in self.constraints
            if constraint.name not in exclude
        ]
        return onp.concatenate(parts) if parts else onp.zeros(0)

    def _check_dimension(self, u: typing.Any) -> None:
        shape = onp.shape(getval(u))
        if shape != (self.size,):
            raise TransformError(
                f"unconstrained vector has shape {shape}, expected ({self.size},)"
            )
