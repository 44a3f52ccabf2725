import math

import numpy as np
import pytest

from pbrforge import inverse, lighting, renderer
from pbrforge.inverse import (InverseProblem, RecoveryConfig, RecoveryDivergence,
                              latents_from_texture, loss_grad, photometric_loss,
                              recover_materials, squash, squash_grad,
                              texture_from_latents, unsquash)
from pbrforge.scene import MaterialTexture, generate_orbit, primitive_sphere

from conftest import make_directional_rig, SIX_DIRECTIONS


def _render_views(scene, views, channels, seed=0):
    out = {c: [] for c in channels}
    for i, view in enumerate(views):
        frame = renderer.render_frame(scene, view, channels, seed=renderer._view_seed(seed, i))
        for c in channels:
            out[c].append(frame[renderer.RenderChannel(c)])
    return out


def _make_problem(texture_size=4, n_views=3, res=32, with_spec=False,
                  gt=(0.6, 0.4, 0.3, 0.2, 0.4), lights=None):
    from pbrforge.scene import Scene

    mesh = primitive_sphere(10)
    tex = MaterialTexture.constant(texture_size, gt[:3], gt[3], gt[4])
    lights = lights or make_directional_rig(SIX_DIRECTIONS[:4])
    views = generate_orbit(n_views, (20.0,), 3.0, math.radians(40.0), res)
    scene = Scene(mesh=mesh, textures=tex, lights=lights, cameras=views)
    channels = ["rgb"] + (["speclight"] if with_spec else [])
    rendered = _render_views(scene, views, channels)
    return InverseProblem(
        mesh=mesh, lights=lights, views=views,
        observations=rendered["rgb"],
        spec_observations=rendered.get("speclight"),
        texture_size=texture_size, gt_texture=tex,
    )


@pytest.fixture(scope="module")
def problem():
    return _make_problem()


def test_squash_round_trip():
    latents = np.linspace(-6.0, 6.0, 25).reshape(5, 5)
    assert np.allclose(unsquash(squash(latents)), latents, atol=1e-9)
    assert np.all(squash(latents) > 0) and np.all(squash(latents) < 1)


def test_squash_grad_matches_fd():
    x = np.linspace(-4.0, 4.0, 17)
    h = 1e-6
    fd = (squash(x + h) - squash(x - h)) / (2 * h)
    assert np.allclose(squash_grad(x), fd, atol=1e-8)


def test_zero_latents_give_half_texture():
    tex = texture_from_latents(np.zeros((5, 4, 4)))
    assert np.allclose(tex.albedo, 0.5)
    assert np.allclose(tex.metallic, 0.5)
    assert np.allclose(tex.roughness, 0.5)


def test_latent_texture_round_trip():
    tex = MaterialTexture.constant(4, (0.6, 0.4, 0.3), 0.2, 0.7)
    back = texture_from_latents(latents_from_texture(tex))
    assert np.allclose(back.albedo, tex.albedo, atol=1e-9)
    assert np.allclose(back.roughness, tex.roughness, atol=1e-9)


def test_loss_near_zero_at_ground_truth(problem):
    loss = photometric_loss(problem, problem.gt_texture)
    # observations are float32 renders of the same forward model
    assert loss < 1e-9


def test_loss_grad_matches_finite_differences(problem):
    rng = np.random.default_rng(7)
    latents = rng.normal(scale=0.8, size=(5, 4, 4))
    _, grad = loss_grad(problem, latents, lambda_spec=0.0)
    h = 1e-5
    for flat in rng.choice(latents.size, size=25, replace=False):
        c, i, j = np.unravel_index(flat, latents.shape)
        lp, lm = latents.copy(), latents.copy()
        lp[c, i, j] += h
        lm[c, i, j] -= h
        fp = photometric_loss(problem, texture_from_latents(lp))
        fm = photometric_loss(problem, texture_from_latents(lm))
        fd = (fp - fm) / (2 * h)
        assert abs(grad[c, i, j] - fd) <= 1e-3 * max(abs(fd), 1e-4)


def test_spec_term_grad_matches_finite_differences():
    prob = _make_problem(with_spec=True)
    rng = np.random.default_rng(11)
    latents = rng.normal(scale=0.8, size=(5, 4, 4))
    lam = 0.5
    _, grad = loss_grad(prob, latents, lambda_spec=lam)
    h = 1e-5
    for flat in rng.choice(latents.size, size=15, replace=False):
        c, i, j = np.unravel_index(flat, latents.shape)
        lp, lm = latents.copy(), latents.copy()
        lp[c, i, j] += h
        lm[c, i, j] -= h
        fp = photometric_loss(prob, texture_from_latents(lp), lam)
        fm = photometric_loss(prob, texture_from_latents(lm), lam)
        fd = (fp - fm) / (2 * h)
        assert abs(grad[c, i, j] - fd) <= 1e-3 * max(abs(fd), 1e-4)


def test_env_lighting_grad_matches_finite_differences():
    from conftest import random_env

    lights = lighting.LightSet(environment=random_env(3, height=6))
    prob = _make_problem(n_views=2, res=24, lights=lights)
    rng = np.random.default_rng(13)
    latents = rng.normal(scale=0.6, size=(5, 4, 4))
    _, grad = loss_grad(prob, latents)
    h = 1e-5
    for flat in rng.choice(latents.size, size=10, replace=False):
        c, i, j = np.unravel_index(flat, latents.shape)
        lp, lm = latents.copy(), latents.copy()
        lp[c, i, j] += h
        lm[c, i, j] -= h
        fd = (photometric_loss(prob, texture_from_latents(lp))
              - photometric_loss(prob, texture_from_latents(lm))) / (2 * h)
        assert abs(grad[c, i, j] - fd) <= 1e-3 * max(abs(fd), 1e-4)


def test_recovery_reduces_loss(problem):
    res = recover_materials(problem, RecoveryConfig(steps=40, step_size=0.2))
    assert res.report["best_loss"] < 0.5 * res.report["initial_loss"]
    assert len(res.report["trace"]) == 40
    assert "per_channel_error" in res.report


def test_recovery_is_deterministic(problem):
    cfg = RecoveryConfig(steps=15, step_size=0.2)
    a = recover_materials(problem, cfg)
    b = recover_materials(problem, cfg)
    assert np.array_equal(a.texture.albedo, b.texture.albedo)
    assert np.array_equal(a.texture.metallic, b.texture.metallic)
    assert np.array_equal(a.texture.roughness, b.texture.roughness)
    assert a.report["trace"] == b.report["trace"]


def test_uncovered_texels_stay_at_init():
    # one view sees only the front hemisphere, leaving texels unobserved
    prob = _make_problem(texture_size=8, n_views=1, res=32)
    cov = inverse.coverage_weights(prob)
    assert np.any(cov == 0)
    res = recover_materials(prob, RecoveryConfig(steps=10, step_size=0.2))
    assert res.report["uncovered_texels"] == int(np.sum(cov == 0))
    hole = cov == 0
    assert np.allclose(res.texture.albedo[:, hole], 0.5)
    assert np.allclose(res.texture.metallic[hole], 0.5)
    assert np.allclose(res.texture.roughness[hole], 0.5)


def test_divergent_loss_raises(problem):
    from pbrforge.core import ChannelImage

    blown = [ChannelImage(o.data * np.float32(1e6), o.mask)
             for o in problem.observations]
    prob = InverseProblem(mesh=problem.mesh, lights=problem.lights,
                          views=problem.views, observations=blown,
                          texture_size=problem.texture_size)
    with pytest.raises(RecoveryDivergence):
        recover_materials(prob, RecoveryConfig(steps=3))


def test_problem_validation(problem):
    with pytest.raises(ValueError):
        InverseProblem(mesh=problem.mesh, lights=problem.lights, views=[],
                       observations=[])
    with pytest.raises(ValueError):
        InverseProblem(mesh=problem.mesh, lights=problem.lights,
                       views=problem.views, observations=problem.observations[:1])
    with pytest.raises(ValueError):
        InverseProblem(mesh=problem.mesh, lights=problem.lights,
                       views=problem.views, observations=problem.observations,
                       spec_observations=problem.observations[:1])
    with pytest.raises(ValueError):
        InverseProblem(mesh=problem.mesh, lights=lighting.LightSet(),
                       views=problem.views, observations=problem.observations)


def test_ambiguity_probe_reports_both_runs():
    prob = _make_problem(with_spec=True, gt=(0.8, 0.5, 0.3, 0.9, 0.3), n_views=1)
    out = inverse.ambiguity_probe(prob, lambda_spec=0.1,
                                  config=RecoveryConfig(steps=25, step_size=0.2))
    assert set(out) >= {"with_spec", "without_spec", "metallic_improved"}
    assert "metallic" in out["with_spec"]["errors"]
