import os

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from nectfuse import status
from nectfuse.cli import main
from nectfuse.datastructures import DrawsMatrix
from nectfuse.manifest import RunManifest, file_digest

SMALL_TRUTH = """
n_subjects = 4
visits_min = 3
visits_max = 3
pipelines = FSCross, FSLong, ANTsSST
phi = -1.02, -1.00, 0.23
tau = 0.21, 0.24, 1.27
nu = 17.43, 6.06, 54.78
"""


def _write(tmpdir, name, text):
    path = os.path.join(tmpdir, name)
    with open(path, "w") as ofile:
        ofile.write(text)
    return path


def _simulate(runner, tmpdir, out="sim", seed="1"):
    truth = _write(tmpdir, "truth.env", SMALL_TRUTH)
    out = os.path.join(tmpdir, out)
    result = runner.invoke(
        main, ["simulate", "--truth-config", truth, "--seed", seed, "--out", out]
    )
    assert result.exit_code == 0, result.output
    return out


def _iid_draws(tmpdir, shift=0.0):
    rng = np.random.default_rng(0)
    values = rng.standard_normal((2000, 3))
    values[1000:, 0] += shift
    draws = DrawsMatrix.from_arrays(
        values, ["phi[1]", "phi[2]", "sigma"], chain_id=np.repeat([1, 2, 3, 4], 500)
    )
    path = os.path.join(tmpdir, f"draws_{shift}.csv")
    draws.to_csv(path)
    return path


def test_simulate(tmpdir):
    runner = CliRunner()
    out = _simulate(runner, tmpdir)
    assert sorted(os.listdir(out)) == ["manifest.json", "panel.csv", "truth.csv"]

    panel = pd.read_csv(os.path.join(out, "panel.csv"))
    assert len(panel) == 12
    assert list(panel.columns[-3:]) == ["FSCross", "FSLong", "ANTsSST"]

    manifest = RunManifest.read(os.path.join(out, "manifest.json"))
    assert manifest.command == "simulate"
    assert manifest.seed == 1
    assert manifest.config["truth"]["n_subjects"] == 4
    assert manifest.outputs["panel.csv"] == file_digest(os.path.join(out, "panel.csv"))
    assert list(manifest.inputs.values()) == [
        file_digest(os.path.join(tmpdir, "truth.env"))
    ]

    again = _simulate(runner, tmpdir, out="again")
    for name in ("panel.csv", "truth.csv"):
        assert file_digest(os.path.join(out, name)) == file_digest(
            os.path.join(again, name)
        )


@pytest.mark.timeout(300)
def test_fit_and_follow_ups(tmpdir):
    runner = CliRunner()
    sim = _simulate(runner, tmpdir)
    panel = os.path.join(sim, "panel.csv")
    fit_dir = os.path.join(tmpdir, "fit")

    result = runner.invoke(
        main,
        [
            "fit",
            "--panel", panel,
            "--chains", "2",
            "--warmup", "60",
            "--iters", "20",
            "--max-tree-depth", "5",
            "--seed", "4",
            "--out", fit_dir,
        ],
    )
    assert result.exit_code == 0, result.output
    assert "max rhat" in result.output
    assert sorted(os.listdir(fit_dir)) == ["draws.csv", "manifest.json"]

    draws = DrawsMatrix.from_csv(os.path.join(fit_dir, "draws.csv"))
    assert draws.n_draws == 40
    assert "L_R[3,2]" in draws
    assert "chisq[1,1]" not in draws
    manifest = RunManifest.read(os.path.join(fit_dir, "manifest.json"))
    assert manifest.config["sampler"]["n_chains"] == 2
    assert manifest.config["sampler"]["seed"] == 4
    assert manifest.config["model"]["lkj_eta"] == 2.0

    summary_dir = os.path.join(tmpdir, "summary")
    result = runner.invoke(
        main,
        [
            "summarize",
            "--draws", os.path.join(fit_dir, "draws.csv"),
            "--panel", panel,
            "--out", summary_dir,
        ],
    )
    assert result.exit_code == 0, result.output
    summary = pd.read_csv(os.path.join(summary_dir, "summary.csv"), keep_default_na=False)
    assert "FSLong" in summary.loc[summary["parameter"] == "phi", "element"].tolist()
    assert "rho" in summary["parameter"].tolist()
    correlations = pd.read_csv(os.path.join(summary_dir, "correlations.csv"))
    assert len(correlations) == 3

    profile_dir = os.path.join(tmpdir, "profiles")
    result = runner.invoke(
        main,
        [
            "profiles",
            "--panel", panel,
            "--draws", os.path.join(fit_dir, "draws.csv"),
            "--out", profile_dir,
        ],
    )
    assert result.exit_code == 0, result.output
    assert len(pd.read_csv(os.path.join(profile_dir, "profile_posterior.csv"))) == 12
    assert len(pd.read_csv(os.path.join(profile_dir, "profile_raw.csv"))) == 12

    density_dir = os.path.join(tmpdir, "densities")
    result = runner.invoke(
        main,
        [
            "densities",
            "--draws", os.path.join(fit_dir, "draws.csv"),
            "--pipelines", "FSCross,FSLong,ANTsSST",
            "--grid-points", "11",
            "--out", density_dir,
        ],
    )
    assert result.exit_code == 0, result.output
    densities = pd.read_csv(os.path.join(density_dir, "error_densities.csv"))
    assert densities.shape == (11, 4)

    naive_dir = os.path.join(tmpdir, "naive")
    result = runner.invoke(
        main,
        [
            "fit",
            "--panel", panel,
            "--naive-pipeline", "2",
            "--chains", "1",
            "--warmup", "30",
            "--iters", "10",
            "--max-tree-depth", "5",
            "--out", naive_dir,
        ],
    )
    assert result.exit_code == 0, result.output
    naive = DrawsMatrix.from_csv(os.path.join(naive_dir, "draws.csv"))
    assert "phi[1]" not in naive
    assert "beta_ct" in naive

    compare_dir = os.path.join(tmpdir, "compare")
    result = runner.invoke(
        main,
        [
            "compare",
            "--combined", os.path.join(fit_dir, "draws.csv"),
            "--naive", "FSLong=" + os.path.join(naive_dir, "draws.csv"),
            "--out", compare_dir,
        ],
    )
    assert result.exit_code == 0, result.output
    effect = pd.read_csv(os.path.join(compare_dir, "ct_effect.csv"))
    assert effect["fit"].tolist() == ["combined", "FSLong"]


def test_fit_rejects_malformed_panel(tmpdir):
    panel = _write(tmpdir, "panel.csv", "subject_id,years,age\nS1,0,70\n")
    out = os.path.join(tmpdir, "fit")
    result = CliRunner().invoke(main, ["fit", "--panel", panel, "--out", out])
    assert result.exit_code == status.EXIT_3_SCHEMA_ERROR
    assert "missing required column" in result.output
    assert not os.path.exists(out)


def test_fit_rejects_empty_panel(tmpdir):
    panel = _write(tmpdir, "panel.csv", "")
    out = os.path.join(tmpdir, "fit")
    result = CliRunner().invoke(main, ["fit", "--panel", panel, "--out", out])
    assert result.exit_code == status.EXIT_3_SCHEMA_ERROR
    assert "is empty" in result.output
    assert not os.path.exists(out)


def test_fit_rejects_bad_sampler_flags(tmpdir):
    runner = CliRunner()
    sim = _simulate(runner, tmpdir)
    result = runner.invoke(
        main,
        [
            "fit",
            "--panel", os.path.join(sim, "panel.csv"),
            "--target-accept", "1.5",
            "--out", os.path.join(tmpdir, "fit"),
        ],
    )
    assert result.exit_code == status.EXIT_11_CONFIG_ERROR


def test_summarize_iid(tmpdir):
    out = os.path.join(tmpdir, "summary")
    result = CliRunner().invoke(
        main, ["summarize", "--draws", _iid_draws(tmpdir), "--names", "phi", "--out", out]
    )
    assert result.exit_code == 0, result.output
    summary = pd.read_csv(os.path.join(out, "summary.csv"))
    assert summary["element"].tolist() == [1, 2]
    assert summary["mean"].abs().max() < 0.1
    assert not os.path.exists(os.path.join(out, "correlations.csv"))


def test_diagnose(tmpdir):
    runner = CliRunner()
    result = runner.invoke(
        main, ["diagnose", "--draws", _iid_draws(tmpdir), "--min-ess", "1000"]
    )
    assert result.exit_code == 0, result.output
    assert "passed" in result.output

    out = os.path.join(tmpdir, "diagnose")
    result = runner.invoke(
        main,
        ["diagnose", "--draws", _iid_draws(tmpdir, shift=10.0), "--min-ess", "1000", "--out", out],
    )
    assert result.exit_code == status.EXIT_9_CONVERGENCE_FAILURE
    assert "failed phi[1]: rhat" in result.output
    assert os.path.exists(os.path.join(out, "diagnostics.csv"))

    result = runner.invoke(
        main, ["diagnose", "--draws", _iid_draws(tmpdir), "--min-ess", "50000"]
    )
    assert result.exit_code == status.EXIT_9_CONVERGENCE_FAILURE
    assert "failed phi[2]: ess" in result.output

    thresholds = _write(tmpdir, "thresholds.env", "min_ess = 100\n")
    result = runner.invoke(
        main, ["diagnose", "--draws", _iid_draws(tmpdir), "--thresholds", thresholds]
    )
    assert result.exit_code == 0, result.output


def test_nect_sample(tmpdir):
    out = os.path.join(tmpdir, "pair")
    result = CliRunner().invoke(
        main, ["nect-sample", "--pair", "FSLong,ANTsSST", "--n", "10000", "--out", out]
    )
    assert result.exit_code == 0, result.output
    sample = pd.read_csv(os.path.join(out, "nect_sample.csv"))
    assert list(sample.columns) == ["FSLong", "ANTsSST", "q_FSLong", "q_ANTsSST"]
    assert len(sample) == 10000
    assert sample["FSLong"].median() == pytest.approx(-1.00, abs=0.05)
    assert sample["ANTsSST"].median() == pytest.approx(0.23, abs=0.1)

    params = _write(
        tmpdir,
        "params.env",
        "pipelines = A, B\nphi = 0, 0\ntau = 1, 1\nnu = 1000000, 1000000\n"
        "corr = 1, 0.95, 0.95, 1\n",
    )
    out = os.path.join(tmpdir, "correlated")
    result = CliRunner().invoke(
        main, ["nect-sample", "--params", params, "--n", "10000", "--out", out]
    )
    assert result.exit_code == 0, result.output
    sample = pd.read_csv(os.path.join(out, "nect_sample.csv"))
    assert np.corrcoef(sample["A"], sample["B"])[0, 1] == pytest.approx(0.95, abs=0.02)

    result = CliRunner().invoke(
        main, ["nect-sample", "--pair", "FSLong,Nope", "--out", os.path.join(tmpdir, "x")]
    )
    assert result.exit_code == status.EXIT_2_USAGE


def test_missing_input_is_usage_error(tmpdir):
    result = CliRunner().invoke(
        main, ["diagnose", "--draws", os.path.join(tmpdir, "absent.csv")]
    )
    assert result.exit_code == status.EXIT_2_USAGE


def test_version():
    result = CliRunner().invoke(main, ["--version"])
    assert result.exit_code == 0
    assert "0.1.1" in result.output
