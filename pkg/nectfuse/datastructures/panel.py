import dataclasses
import enum
import functools
import math
import types
import typing

import numpy as np

from nectfuse.exceptions import ConsistencyError, ParseError, SchemaError


class Diagnosis(str, enum.Enum):
    CN = "CN"
    MCI = "MCI"
    AD = "AD"

    @classmethod
    def parse(cls, value: str) -> "Diagnosis":
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown diagnosis `{value}`, expected CN, MCI or AD")


@dataclasses.dataclass(frozen=True)
class VisitRow(object):
    subject_id: str
    years: float
    age: float
    male: int
    dx: Diagnosis
    mmse: typing.Optional[float]
    ect: typing.Tuple[float, ...]

    def __post_init__(self) -> None:
        if not math.isfinite(self.years) or self.years < 0:
            raise ParseError(f"years must be finite and >= 0, got {self.years}")
        if not math.isfinite(self.age) or self.age <= 0:
            raise ParseError(f"age must be finite and > 0, got {self.age}")
        if self.male not in (0, 1):
            raise ParseError(f"male must be 0 or 1, got {self.male}")
        if self.mmse is not None and not math.isfinite(self.mmse):
            raise ParseError(f"mmse must be finite, got {self.mmse}")
        for value in self.ect:
            if not math.isfinite(value) or value <= 0:
                raise ParseError(f"ect values must be finite and > 0, got {value}")


@dataclasses.dataclass(frozen=True)
class LoadReport(object):
    n_read: int
    n_dropped_mmse: int
    n_subjects: int


@dataclasses.dataclass(frozen=True)
class PipelinePanel(object):
    """Fully observed visit rows, sorted by ``(subject_id, years)``."""

    rows: typing.Tuple[VisitRow, ...]
    pipeline_names: typing.Tuple[str, ...]
    subject_index: typing.Mapping[str, int]
    report: typing.Optional[LoadReport] = dataclasses.field(default=None, compare=False)

    def __post_init__(self) -> None:
        if len(self.pipeline_names) < 1:
            raise SchemaError("a panel needs at least one pipeline")
        if len(set(self.pipeline_names)) != len(self.pipeline_names):
            raise SchemaError(f"duplicate pipeline names {list(self.pipeline_names)}")

        n_pipelines = len(self.pipeline_names)
        for row in self.rows:
            if len(row.ect) != n_pipelines:
                raise SchemaError(
                    f"row of subject `{row.subject_id}` has {len(row.ect)} "
                    f"measurements, expected {n_pipelines}"
                )
            if row.mmse is None:
                raise ConsistencyError("missing mmse in panel", row.subject_id)

        if sorted(self.subject_index.values()) != list(
            range(1, len(self.subject_index) + 1)
        ):
            raise ConsistencyError("subject index must be a bijection onto 1..I")

        first: typing.Dict[str, VisitRow] = {}
        for row in self.rows:
            if row.subject_id not in self.subject_index:
                raise ConsistencyError("subject missing from index", row.subject_id)
            seen = first.setdefault(row.subject_id, row)
            if (seen.age, seen.male, seen.dx) != (row.age, row.male, row.dx):
                raise ConsistencyError(
                    "age, male and dx must be constant within subject", row.subject_id
                )

    @classmethod
    def from_rows(
        cls,
        rows: typing.Iterable[VisitRow],
        pipeline_names: typing.Sequence[str],
        report: LoadReport = None,
    ) -> "PipelinePanel":
        ordered = sorted(rows, key=lambda row: (row.subject_id, row.years))
        subject_index: typing.Dict[str, int] = {}
        for row in ordered:
            if row.subject_id not in subject_index:
                subject_index[row.subject_id] = len(subject_index) + 1
        return cls(
            rows=tuple(ordered),
            pipeline_names=tuple(pipeline_names),
            subject_index=types.MappingProxyType(subject_index),
            report=report,
        )

    def __eq__(self, other: typing.Any) -> bool:
        if not isinstance(other, PipelinePanel):
            return False
        return (
            self.rows == other.rows
            and self.pipeline_names == other.pipeline_names
            and dict(self.subject_index) == dict(other.subject_index)
        )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_index)

    @property
    def n_pipelines(self) -> int:
        return len(self.pipeline_names)

    @functools.cached_property
    def ect_matrix(self) -> np.ndarray:
        return _frozen(np.array([row.ect for row in self.rows], dtype=float))

    @functools.cached_property
    def subject_codes(self) -> np.ndarray:
        return _frozen(
            np.array(
                [self.subject_index[row.subject_id] - 1 for row in self.rows],
                dtype=int,
            )
        )

    @functools.cached_property
    def years(self) -> np.ndarray:
        return _frozen(np.array([row.years for row in self.rows], dtype=float))

    @functools.cached_property
    def mmse(self) -> np.ndarray:
        return _frozen(np.array([row.mmse for row in self.rows], dtype=float))

    def pipeline_position(self, name_or_index: typing.Union[str, int]) -> int:
        """Zero-based column of a pipeline given its name or 1-based index."""
        if isinstance(name_or_index, str):
            if name_or_index not in self.pipeline_names:
                raise SchemaError(f"unknown pipeline `{name_or_index}`")
            return self.pipeline_names.index(name_or_index)
        if not 1 <= name_or_index <= self.n_pipelines:
            raise SchemaError(
                f"pipeline index {name_or_index} outside 1..{self.n_pipelines}"
            )
        return name_or_index - 1


def _frozen(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array
