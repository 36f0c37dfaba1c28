import pytest

from nectfuse import synth

SMALL_TRUTH = dict(
    n_subjects=4,
    visits_min=3,
    visits_max=3,
    pipelines=("FSCross", "FSLong", "ANTsSST"),
    phi=(-1.02, -1.00, 0.23),
    tau=(0.21, 0.24, 1.27),
    nu=(17.43, 6.06, 54.78),
)


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run recovery fits"
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def small_truth():
    return synth.TruthConfig(**SMALL_TRUTH)


@pytest.fixture
def small_panel(small_truth):
    panel, _ = synth.generate(small_truth, seed=3)
    return panel
