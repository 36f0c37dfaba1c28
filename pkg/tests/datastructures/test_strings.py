import pytest

from nectfuse.datastructures import (
    CommaSeparatedFloats,
    CommaSeparatedStrings,
    floats,
    strings,
)


def test_csv():
    csv = CommaSeparatedStrings('"FSCross", \'FSLong\', ANTsSST')
    assert list(csv) == ["FSCross", "FSLong", "ANTsSST"]
    assert len(csv) == 3
    assert csv[1] == "FSLong"
    assert repr(csv) == "CommaSeparatedStrings(['FSCross', 'FSLong', 'ANTsSST'])"
    assert str(csv) == "'FSCross', 'FSLong', 'ANTsSST'"

    csv = CommaSeparatedStrings(["a", "b"])
    assert list(csv) == ["a", "b"]


def test_floats():
    assert floats("-1.02, 0.92,1e-3") == (-1.02, 0.92, 0.001)
    assert floats((1, 2)) == (1.0, 2.0)
    assert floats("") == ()
    assert strings("FSLong,ANTsSST") == ("FSLong", "ANTsSST")
    assert list(CommaSeparatedFloats("2.5")) == [2.5]

    with pytest.raises(ValueError):
        floats("1.0, abc")
    with pytest.raises(ValueError):
        floats("nan")
