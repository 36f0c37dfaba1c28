"""
title: Panel input and output
module: nectfuse.dataio
description:
    Reads the visit-level panel (one row per visit, one column per pipeline)
    from delimited text, validates it and drops visits without an outcome.
"""
import dataclasses
import logging
import math
import os
import typing
import warnings

import numpy as np
import pandas as pd

from nectfuse.config import Config, ConfigSection
from nectfuse.datastructures import (
    Diagnosis,
    LoadReport,
    PipelinePanel,
    VisitRow,
    strings,
)
from nectfuse.exceptions import ConfigError, ConsistencyError, ParseError, SchemaError

logger = logging.getLogger(__name__)

MISSING_MARKERS = frozenset(["", "na", "nan", "null", "none"])

DESIGN_COLUMNS = ("MCI", "AD", "age", "male", "MCI_years", "AD_years")
MMSE_RANGE = (0.0, 30.0)


@dataclasses.dataclass(frozen=True)
class PanelSchema(ConfigSection):
    """Column names of a panel file.

    ``pipelines`` lists ``name`` or ``name:column`` entries in pipeline order.
    Left empty, every column that is not a covariate is taken as a pipeline,
    in header order.
    """

    subject_id: str = "subject_id"
    years: str = "years"
    age: str = "age"
    male: str = "male"
    dx: str = "dx"
    mmse: str = "mmse"
    pipelines: typing.Tuple[str, ...] = dataclasses.field(
        default=(), metadata={"cast": strings}
    )
    delimiter: str = ","

    @property
    def covariate_columns(self) -> typing.Tuple[str, ...]:
        return (self.subject_id, self.years, self.age, self.male, self.dx, self.mmse)

    def pipeline_columns(
        self, header: typing.Sequence[str] = ()
    ) -> typing.List[typing.Tuple[str, str]]:
        """``(pipeline name, file column)`` pairs."""
        if not self.pipelines:
            return [
                (column, column)
                for column in header
                if column not in self.covariate_columns
            ]
        pairs = []
        for entry in self.pipelines:
            name, _, column = entry.partition(":")
            pairs.append((name.strip(), (column or name).strip()))
        return pairs


def load_schema(path: str) -> PanelSchema:
    if not os.path.exists(path):
        raise ConfigError(f"schema file `{path}` does not exist")
    return PanelSchema.from_config(Config(path))


def _is_missing(value: str) -> bool:
    return value.strip().lower() in MISSING_MARKERS


def _parse_float(value: str, what: str, line: int) -> float:
    try:
        return float(value)
    except ValueError:
        raise ParseError(f"{what} `{value}` is not numeric", line=line)


def _parse_male(value: str, line: int) -> int:
    number = _parse_float(value, "male", line)
    if number not in (0.0, 1.0):
        raise ParseError(f"male must be 0 or 1, got `{value}`", line=line)
    return int(number)


def _parse_row(
    record: typing.Mapping[str, str],
    schema: PanelSchema,
    pipelines: typing.Sequence[typing.Tuple[str, str]],
    line: int,
) -> VisitRow:
    ect = []
    for name, column in pipelines:
        raw = record[column]
        if _is_missing(raw):
            raise ParseError(f"missing measurement for pipeline `{name}`", line=line)
        value = _parse_float(raw, f"measurement of `{name}`", line)
        if not math.isfinite(value) or value <= 0:
            raise ParseError(
                f"measurement of `{name}` must be finite and > 0, got `{raw}`",
                line=line,
            )
        ect.append(value)

    mmse_raw = record[schema.mmse]
    mmse = None if _is_missing(mmse_raw) else _parse_float(mmse_raw, "mmse", line)
    try:
        dx = Diagnosis.parse(record[schema.dx])
    except ValueError as exc:
        raise ParseError(str(exc), line=line)

    try:
        return VisitRow(
            subject_id=record[schema.subject_id].strip(),
            years=_parse_float(record[schema.years], "years", line),
            age=_parse_float(record[schema.age], "age", line),
            male=_parse_male(record[schema.male], line),
            dx=dx,
            mmse=mmse,
            ect=tuple(ect),
        )
    except ParseError as exc:
        if exc.line is not None:
            raise
        raise ParseError(exc.detail, line=line)


def _check_subjects(rows: typing.Sequence[VisitRow]) -> None:
    first: typing.Dict[str, VisitRow] = {}
    earliest: typing.Dict[str, float] = {}
    for row in rows:
        seen = first.setdefault(row.subject_id, row)
        if (seen.age, seen.male, seen.dx) != (row.age, row.male, row.dx):
            raise ConsistencyError(
                "age, male and dx must be constant within subject", row.subject_id
            )
        earliest[row.subject_id] = min(
            earliest.get(row.subject_id, math.inf), row.years
        )

    for subject_id, years in earliest.items():
        if years != 0.0:
            raise ConsistencyError(
                f"first visit must have years = 0, got {years}", subject_id
            )


def load_panel(path: str, schema: PanelSchema = None) -> PipelinePanel:
    schema = schema or PanelSchema()
    if not os.path.exists(path):
        raise SchemaError(f"panel file `{path}` does not exist")

    try:
        frame = pd.read_csv(
            path, sep=schema.delimiter, dtype=str, keep_default_na=False
        )
    except pd.errors.EmptyDataError:
        raise SchemaError(f"panel file `{path}` is empty")
    except pd.errors.ParserError as exc:
        raise SchemaError(f"panel file `{path}` is not delimited text: {exc}")
    header = [str(column).strip() for column in frame.columns]
    frame.columns = header
    for column in schema.covariate_columns:
        if column not in header:
            raise SchemaError(column=column)

    pipelines = schema.pipeline_columns(header)
    for _, column in pipelines:
        if column not in header:
            raise SchemaError(column=column)
    if len(pipelines) < 2:
        raise SchemaError(
            f"a panel needs at least two pipelines, found {len(pipelines)}"
        )

    rows = [
        _parse_row(record, schema, pipelines, line=position + 2)
        for position, record in enumerate(frame.to_dict("records"))
    ]
    _check_subjects(rows)

    complete = [row for row in rows if row.mmse is not None]
    n_dropped = len(rows) - len(complete)
    if n_dropped:
        warnings.warn(f"dropped {n_dropped} visits without mmse from `{path}`")
    if not complete:
        raise ParseError(f"`{path}` has no visit with an mmse score")

    out_of_range = [
        row for row in complete if not MMSE_RANGE[0] <= row.mmse <= MMSE_RANGE[1]
    ]
    if out_of_range:
        warnings.warn(
            f"{len(out_of_range)} visits in `{path}` have mmse outside "
            f"[{MMSE_RANGE[0]:g}, {MMSE_RANGE[1]:g}], "
            f"e.g. {out_of_range[0].mmse:g} for `{out_of_range[0].subject_id}`"
        )

    report = LoadReport(
        n_read=len(rows),
        n_dropped_mmse=n_dropped,
        n_subjects=len({row.subject_id for row in complete}),
    )
    logger.info(
        "loaded %s: %d rows, %d subjects, %d pipelines (%d rows dropped)",
        path,
        len(complete),
        report.n_subjects,
        len(pipelines),
        n_dropped,
    )
    return PipelinePanel.from_rows(
        complete, [name for name, _ in pipelines], report=report
    )


def panel_frame(panel: PipelinePanel, schema: PanelSchema = None) -> pd.DataFrame:
    schema = schema or PanelSchema()
    pipelines = schema.pipeline_columns(panel.pipeline_names)
    if [name for name, _ in pipelines] != list(panel.pipeline_names):
        raise SchemaError("schema pipelines do not match the panel")

    frame = pd.DataFrame(
        {
            schema.subject_id: [row.subject_id for row in panel.rows],
            schema.years: panel.years,
            schema.age: [row.age for row in panel.rows],
            schema.male: [row.male for row in panel.rows],
            schema.dx: [row.dx.value for row in panel.rows],
            schema.mmse: panel.mmse,
        }
    )
    for position, (_, column) in enumerate(pipelines):
        frame[column] = panel.ect_matrix[:, position]
    return frame


def write_panel(panel: PipelinePanel, path: str, schema: PanelSchema = None) -> None:
    schema = schema or PanelSchema()
    panel_frame(panel, schema).to_csv(path, sep=schema.delimiter, index=False)


def design_matrix(panel: PipelinePanel) -> np.ndarray:
    """Fixed effects: MCI, AD, age, male, MCI x years, AD x years; CN is the reference."""
    mci = np.array([row.dx is Diagnosis.MCI for row in panel.rows], dtype=float)
    ad = np.array([row.dx is Diagnosis.AD for row in panel.rows], dtype=float)
    age = np.array([row.age for row in panel.rows], dtype=float)
    male = np.array([row.male for row in panel.rows], dtype=float)
    years = panel.years
    return np.column_stack([mci, ad, age, male, mci * years, ad * years])


def pipeline_matrix(panel: PipelinePanel) -> np.ndarray:
    return panel.ect_matrix


def subject_codes(panel: PipelinePanel) -> np.ndarray:
    return panel.subject_codes


def _visit_frame(panel: PipelinePanel) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "subject_id": [row.subject_id for row in panel.rows],
            "years": panel.years,
            "dx": [row.dx.value for row in panel.rows],
        }
    )


def empirical_profile(panel: PipelinePanel) -> pd.DataFrame:
    """Visits ordered by the row mean of the pipelines, with every raw value."""
    frame = _visit_frame(panel)
    for position, name in enumerate(panel.pipeline_names):
        frame[name] = panel.ect_matrix[:, position]
    frame["mean"] = panel.ect_matrix.mean(axis=1)
    frame = frame.sort_values("mean", kind="mergesort").reset_index(drop=True)
    frame.insert(0, "rank", np.arange(1, len(frame) + 1))
    return frame


def group_means(
    panel: PipelinePanel, groups: typing.Mapping[str, typing.Sequence[str]]
) -> pd.DataFrame:
    """Row means of named pipeline groups, e.g. cross-sectional vs longitudinal."""
    frame = _visit_frame(panel)
    for group, members in groups.items():
        if not members:
            raise SchemaError(f"pipeline group `{group}` is empty")
        positions = [panel.pipeline_position(name) for name in members]
        frame[group] = panel.ect_matrix[:, positions].mean(axis=1)
    return frame
