import numpy as np
import pytest

from nectfuse.datastructures import Diagnosis, PipelinePanel, VisitRow
from nectfuse.exceptions import ConsistencyError, ParseError, SchemaError


def _row(subject_id, years, ect=(2.1, 2.3), dx=Diagnosis.CN, age=70.0, mmse=29.0):
    return VisitRow(
        subject_id=subject_id,
        years=years,
        age=age,
        male=1,
        dx=dx,
        mmse=mmse,
        ect=ect,
    )


def test_diagnosis_parse():
    assert Diagnosis.parse("cn") is Diagnosis.CN
    assert Diagnosis.parse(" Mci ") is Diagnosis.MCI
    assert Diagnosis.parse("AD") == "AD"
    with pytest.raises(ValueError):
        Diagnosis.parse("SMC")


def test_panel_orders_rows():
    rows = [
        _row("S2", 1.0, (2.0, 2.2)),
        _row("S1", 0.5, (3.0, 3.1)),
        _row("S2", 0.0, (2.4, 2.6)),
        _row("S1", 0.0, (3.2, 3.3)),
    ]
    panel = PipelinePanel.from_rows(rows, ("FSCross", "FSLong"))

    assert panel.n_rows == 4
    assert panel.n_subjects == 2
    assert panel.n_pipelines == 2
    assert dict(panel.subject_index) == {"S1": 1, "S2": 2}
    assert [row.subject_id for row in panel.rows] == ["S1", "S1", "S2", "S2"]
    assert panel.years.tolist() == [0.0, 0.5, 0.0, 1.0]
    assert panel.subject_codes.tolist() == [0, 0, 1, 1]
    assert panel.ect_matrix.shape == (4, 2)
    assert panel.ect_matrix[1].tolist() == [3.0, 3.1]
    assert panel.mmse.tolist() == [29.0] * 4

    with pytest.raises(ValueError):
        panel.ect_matrix[0, 0] = 1.0

    assert panel == PipelinePanel.from_rows(list(reversed(rows)), ("FSCross", "FSLong"))
    assert panel != "panel"


def test_pipeline_position():
    panel = PipelinePanel.from_rows([_row("S1", 0.0)], ("FSCross", "FSLong"))
    assert panel.pipeline_position("FSLong") == 1
    assert panel.pipeline_position(1) == 0
    with pytest.raises(SchemaError):
        panel.pipeline_position("ANTsSST")
    with pytest.raises(SchemaError):
        panel.pipeline_position(3)


def test_visit_row_validation():
    with pytest.raises(ParseError):
        _row("S1", -1.0)
    with pytest.raises(ParseError):
        _row("S1", 0.0, ect=(2.0, 0.0))
    with pytest.raises(ParseError):
        _row("S1", 0.0, ect=(2.0, float("nan")))
    with pytest.raises(ParseError):
        _row("S1", 0.0, age=0.0)
    with pytest.raises(ParseError):
        VisitRow("S1", 0.0, 70.0, 2, Diagnosis.CN, 29.0, (2.0,))


def test_panel_validation():
    with pytest.raises(SchemaError):
        PipelinePanel.from_rows([_row("S1", 0.0)], ("FSCross",))
    with pytest.raises(SchemaError):
        PipelinePanel.from_rows([_row("S1", 0.0)], ("FSCross", "FSCross"))
    with pytest.raises(SchemaError):
        PipelinePanel.from_rows([_row("S1", 0.0)], ())
    with pytest.raises(ConsistencyError):
        PipelinePanel.from_rows([_row("S1", 0.0, mmse=None)], ("A", "B"))

    with pytest.raises(ConsistencyError) as exc:
        PipelinePanel.from_rows(
            [_row("S1", 0.0), _row("S1", 1.0, dx=Diagnosis.AD)], ("A", "B")
        )
    assert exc.value.subject_id == "S1"
    assert exc.value.exit_code == 5


def test_single_pipeline_panel():
    panel = PipelinePanel.from_rows([_row("S1", 0.0, ect=(2.0,))], ("FSCross",))
    assert panel.n_pipelines == 1
    assert np.allclose(panel.ect_matrix, [[2.0]])
