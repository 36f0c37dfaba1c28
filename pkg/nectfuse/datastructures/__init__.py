__all__ = [
    "CommaSeparatedFloats",
    "CommaSeparatedStrings",
    "Diagnosis",
    "DrawsMatrix",
    "LoadReport",
    "PipelinePanel",
    "SamplerStats",
    "SummaryRow",
    "SummaryTable",
    "UNDEFINED",
    "VisitRow",
    "floats",
    "strings",
]


from .draws import DrawsMatrix, SamplerStats
from .panel import Diagnosis, LoadReport, PipelinePanel, VisitRow
from .strings import CommaSeparatedFloats, CommaSeparatedStrings, floats, strings
from .summary import UNDEFINED, SummaryRow, SummaryTable
