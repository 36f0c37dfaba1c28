import dataclasses

import autograd
import numpy as np
import pytest

from nectfuse import posterior, sampler, synth
from nectfuse.datastructures import DrawsMatrix
from nectfuse.exceptions import ConfigError, SchemaError


def _point(target, seed=0, scale=0.1):
    rng = np.random.default_rng(seed)
    return target.init_center() + scale * rng.standard_normal(target.dim)


def test_dimensions(small_panel):
    target = posterior.LogPosterior(small_panel)
    N, I, K = small_panel.n_rows, small_panel.n_subjects, small_panel.n_pipelines
    assert (N, I, K) == (12, 4, 3)

    explicit = N + 2 * I + 12 + 3 * K + K * (K - 1) // 2
    assert posterior.ParamView.count_explicit(N, I, K) == explicit
    assert posterior.ParamView.count_latent(N, K) == N * K
    assert target.n_explicit == explicit
    assert target.dim == explicit + N * K

    names = target.draw_names()
    assert names[: N] == [f"ct[{n + 1}]" for n in range(N)]
    assert "L_R[3,3]" in names
    assert not any(name.startswith("chisq") for name in names)
    assert len(target.draw_names(keep_latents=True)) == len(names) + N * K
    assert "chisq[12,3]" in target.draw_names(keep_latents=True)


def test_parameter_count_at_full_scale():
    assert posterior.ParamView.count_explicit(2449, 663, 7) == 3829
    assert posterior.ParamView.count_latent(2449, 7) == 17143


def _numeric_gradient(function, u, eps=1e-5):
    grad = np.zeros(len(u))
    for index in range(len(u)):
        step = np.zeros(len(u))
        step[index] = eps
        grad[index] = (function(u + step) - function(u - step)) / (2 * eps)
    return grad


def test_value_and_gradient(small_panel):
    target = posterior.LogPosterior(small_panel)
    u = _point(target)
    value, grad = target.value_and_grad(u)
    assert np.isfinite(value)
    assert value == pytest.approx(target(u))
    assert value == pytest.approx(posterior.log_posterior(u, small_panel))
    assert np.allclose(grad, posterior.grad_log_posterior(u, small_panel))


@pytest.mark.timeout(300)
def test_gradient_matches_finite_differences(small_panel):
    target = posterior.LogPosterior(small_panel)
    for seed in range(20):
        u = _point(target, seed=seed)
        _, grad = target.value_and_grad(u)
        numeric = _numeric_gradient(target, u)
        assert grad == pytest.approx(numeric, rel=1e-4, abs=1e-5)


def test_intercept_centering(small_panel):
    for target in (
        posterior.LogPosterior(small_panel),
        posterior.NaiveClinicalPosterior(small_panel, "FSLong"),
    ):
        centering = target.centering
        assert len(centering.coefficients) == len(centering.centers) == 8
        assert centering.centers[2] == pytest.approx(target.data.design[:, 2].mean())

        u = _point(target, seed=4)
        v = centering.to_sampling(u)
        assert np.allclose(centering.from_sampling(v), u, rtol=0, atol=1e-12)
        assert not np.allclose(v, u)

        value, grad = target.sampling_value_and_grad(v)
        assert value == pytest.approx(target(u))
        numeric = _numeric_gradient(
            lambda point: target.sampling_value_and_grad(point)[0], v
        )
        assert grad == pytest.approx(numeric, rel=1e-4, abs=1e-5)

        names = target.draw_names()
        assert np.allclose(
            target.flatten_sampling_draw(v), target.flatten_draw(u), rtol=0, atol=1e-10
        )
        assert len(target.flatten_sampling_draw(v)) == len(names)


@pytest.mark.timeout(600)
def test_naive_fit_keeps_short_trajectories():
    panel, _ = synth.generate(synth.TruthConfig(n_subjects=20), seed=5)
    cfg = sampler.SamplerConfig(n_chains=1, n_warmup=300, n_iterations=100, seed=2)
    draws = posterior.fit_naive_single_pipeline(panel, "ANTsSST", sampler_cfg=cfg)
    stats = draws.sampler_stats
    assert np.median(stats.tree_depth) <= 6
    assert np.mean(stats.n_leapfrog) < 100
    assert stats.step_size[-1] > 0.05


def test_density_parts(small_panel):
    target = posterior.LogPosterior(small_panel)
    u = _point(target, seed=2)
    parts = target.log_density_parts(u)
    assert list(parts) == list(posterior.DENSITY_PARTS)

    _, log_jac = target.constrain(u)
    assert sum(parts.values()) + log_jac == pytest.approx(target(u))

    quiet = posterior.LogPosterior(small_panel, posterior.ModelConfig(outcome=False))
    assert quiet.log_density_parts(u)["outcome"] == 0.0
    assert quiet.log_density_parts(u)["observations"] == pytest.approx(
        parts["observations"]
    )


def test_unconstrain_view(small_panel):
    target = posterior.LogPosterior(small_panel)
    u = _point(target, seed=4)
    view = target.view(u)
    assert view.ct.shape == (12,)
    assert view.chisq.shape == (12, 3)
    assert np.allclose(target.unconstrain(view), u)
    assert np.allclose(
        view.alpha0_subject, view.alpha0 + view.lambda0 * view.z0
    )


def test_thickness_conditional_mode(small_panel):
    """With identity correlation, ct given the rest is normal in closed form."""
    cfg = posterior.ModelConfig(outcome=False)
    target = posterior.LogPosterior(small_panel, cfg)
    view = dataclasses.replace(target.view(_point(target, seed=5)), L_R=np.eye(3))
    data = target.data

    scale = view.tau / np.sqrt(view.chisq / view.nu)
    precision = 1.0 / cfg.ct_sd**2 + np.sum(scale**-2, axis=1)
    weighted = cfg.ct_mean / cfg.ct_sd**2 + np.sum((data.ect - view.phi) / scale**2, axis=1)
    mode = weighted / precision

    def density(ct):
        return posterior.log_density(dataclasses.replace(view, ct=ct), data, cfg)

    grad = autograd.grad(density)
    assert np.allclose(grad(mode), 0.0, atol=1e-6)
    assert np.allclose(grad(mode + 0.5), -0.5 * precision)


def test_male_effect_gradient(small_panel):
    cfg = posterior.ModelConfig()
    target = posterior.LogPosterior(small_panel, cfg)
    view = target.view(_point(target, seed=6))
    data = target.data

    codes = data.subject_codes
    fixed = np.array([view.beta[name] for name in posterior.FIXED_EFFECTS])
    prediction = (
        data.design @ fixed
        + view.beta["ct"] * view.ct
        + view.alpha0_subject[codes]
        + view.alpha1_subject[codes] * data.years
    )
    male = data.design[:, posterior.FIXED_EFFECTS.index("male")]
    expected = (
        np.sum(male * (data.mmse - prediction)) / view.sigma**2
        - view.beta["male"] / cfg.beta_sd**2
    )

    def density(beta_male):
        beta = dict(view.beta, male=beta_male)
        return posterior.log_density(dataclasses.replace(view, beta=beta), data, cfg)

    assert autograd.grad(density)(float(view.beta["male"])) == pytest.approx(expected)


def test_offsets_trade_against_thickness(small_panel):
    target = posterior.LogPosterior(small_panel)
    view = target.view(_point(target, seed=7))
    shifted = dataclasses.replace(view, ct=view.ct - 0.3, phi=view.phi + 0.3)

    before = posterior.log_density(view, target.data, target.cfg, parts=True)
    after = posterior.log_density(shifted, target.data, target.cfg, parts=True)
    assert after["observations"] == pytest.approx(before["observations"])
    assert after["mixing"] == pytest.approx(before["mixing"])


def test_pipeline_order_does_not_matter(small_panel):
    target = posterior.LogPosterior(small_panel)
    view = target.view(_point(target, seed=8))
    order = [2, 0, 1]

    R = view.L_R @ view.L_R.T
    permuted = dataclasses.replace(
        view,
        phi=view.phi[order],
        tau=view.tau[order],
        nu=view.nu[order],
        chisq=view.chisq[:, order],
        L_R=np.linalg.cholesky(R[np.ix_(order, order)]),
    )
    data = dataclasses.replace(target.data, ect=target.data.ect[:, order])

    before = posterior.log_density(view, target.data, target.cfg, parts=True)
    after = posterior.log_density(permuted, data, target.cfg, parts=True)
    for part in ("priors", "mixing", "observations", "outcome"):
        assert after[part] == pytest.approx(before[part])


def test_naive_posterior(small_panel):
    naive = posterior.NaiveClinicalPosterior(small_panel, "FSLong")
    assert naive.pipeline_name == "FSLong"
    assert naive.dim == 2 * small_panel.n_subjects + 12
    assert np.array_equal(naive.covariate, small_panel.ect_matrix[:, 1])
    assert naive.draw_names()[-1] == "sigma"

    u = _point(naive)
    value, grad = naive.value_and_grad(u)
    assert np.isfinite(value)
    assert grad.shape == (naive.dim,)

    assert posterior.NaiveClinicalPosterior(small_panel, 3).pipeline_name == "ANTsSST"
    with pytest.raises(SchemaError):
        posterior.NaiveClinicalPosterior(small_panel, "ANTsCross")


def test_model_config():
    with pytest.raises(ConfigError) as exc:
        posterior.ModelConfig(tau_sd=0.0)
    assert exc.value.key == "tau_sd"


def test_non_finite_target(small_panel):
    target = posterior.LogPosterior(small_panel)
    u = _point(target)
    u[target.spec.slices["nu"]] = 800.0
    value, _ = target.value_and_grad(u)
    assert value == -np.inf
    assert target(u) == -np.inf


def test_posterior_ct_profile(small_panel):
    names = [f"ct[{n + 1}]" for n in range(small_panel.n_rows)]
    values = np.tile(small_panel.ect_matrix.mean(axis=1), (8, 1))
    draws = DrawsMatrix.from_arrays(values, names)

    profile = posterior.posterior_ct_profile(draws, small_panel)
    assert len(profile) == small_panel.n_rows
    assert np.allclose(profile["ct_mean"], profile["empirical_mean"])
    assert list(profile.columns[-4:]) == ["FSCross", "FSLong", "ANTsSST", "empirical_mean"]

    with pytest.raises(SchemaError):
        posterior.posterior_ct_profile(draws.select(names[:3]), small_panel)


def test_gradient_benchmark(benchmark, small_panel):
    target = posterior.LogPosterior(small_panel)
    u = _point(target)
    value, grad = benchmark(target.value_and_grad, u)
    assert np.isfinite(value)
