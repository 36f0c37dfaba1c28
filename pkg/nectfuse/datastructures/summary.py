import dataclasses
import math
import typing

import pandas as pd

from nectfuse.datastructures.draws import parse_name

UNDEFINED = "undefined"

SUMMARY_COLUMNS = (
    "parameter",
    "element",
    "mean",
    "ci_low",
    "ci_high",
    "sd",
    "ess",
    "rhat",
    "rhat_split",
    "kurtosis",
)


@dataclasses.dataclass(frozen=True)
class SummaryRow(object):
    name: str
    mean: float
    sd: float
    ci_low: float
    ci_high: float
    ess: float
    rhat: float
    rhat_split: float
    kurtosis: typing.Optional[float] = None

    @property
    def parameter(self) -> str:
        return parse_name(self.name)[0]

    @property
    def element(self) -> str:
        return parse_name(self.name)[1]

    @property
    def defined(self) -> bool:
        return not (math.isnan(self.ess) or math.isnan(self.rhat))


@dataclasses.dataclass(frozen=True)
class SummaryTable(object):
    rows: typing.Tuple[SummaryRow, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> typing.Iterator[SummaryRow]:
        return iter(self.rows)

    def __getitem__(self, name: str) -> SummaryRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(f"no summary row named `{name}`")

    @property
    def names(self) -> typing.List[str]:
        return [row.name for row in self.rows]

    def to_frame(
        self, element_labels: typing.Mapping[str, str] = None
    ) -> pd.DataFrame:
        """Table layout: parameter, element, mean, CI bounds, then diagnostics.

        Undefined diagnostics stay NaN here; ``to_csv`` renders them as markers.
        """
        element_labels = element_labels or {}
        records = []
        for row in self.rows:
            element = row.element
            records.append(
                {
                    "parameter": row.parameter,
                    "element": element_labels.get(element, element),
                    "mean": row.mean,
                    "ci_low": row.ci_low,
                    "ci_high": row.ci_high,
                    "sd": row.sd,
                    "ess": row.ess,
                    "rhat": row.rhat,
                    "rhat_split": row.rhat_split,
                    "kurtosis": _kurtosis_cell(row),
                }
            )
        return pd.DataFrame.from_records(records, columns=list(SUMMARY_COLUMNS))

    def to_csv(
        self,
        path: str,
        element_labels: typing.Mapping[str, str] = None,
        delimiter: str = ",",
    ) -> None:
        self.to_frame(element_labels).to_csv(
            path, sep=delimiter, index=False, na_rep=UNDEFINED
        )


def _kurtosis_cell(row: SummaryRow) -> typing.Any:
    if row.parameter != "nu":
        return ""
    if row.kurtosis is None or math.isnan(row.kurtosis):
        return UNDEFINED
    return row.kurtosis
