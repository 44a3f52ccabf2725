import json
import math
import os

import numpy as np
import pytest

from pbrforge import renderer
from pbrforge.core import ChannelImage
from pbrforge.renderer import RenderChannel as RC
from pbrforge.scene import MaterialTexture, Scene, generate_orbit, primitive_sphere
from conftest import SIX_DIRECTIONS, make_directional_rig, random_env

import pbrforge.lighting as lighting


def env_scene(seed=0):
    tex = MaterialTexture.constant(8, (0.6, 0.4, 0.3), 0.2, 0.4)
    lights = lighting.LightSet(
        directional=(lighting.DirectionalLight(
            direction=np.array([0.3, 0.2, 1.0]) / np.linalg.norm([0.3, 0.2, 1.0]),
            radiance=np.full(3, 1.2)),),
        environment=random_env(7))
    return Scene(mesh=primitive_sphere(10), textures=tex, lights=lights,
                 seed=seed, n_diffuse_samples=16, n_specular_samples=16)


def one_view(res=48):
    return generate_orbit(1, (15.0,), 3.0, math.radians(40.0), res)[0]


def test_unlit_channels_independent_of_lights(small_scene):
    view = small_scene.cameras[0]
    other = Scene(mesh=small_scene.mesh, textures=small_scene.textures,
                  lights=make_directional_rig(SIX_DIRECTIONS, radiance=9.0))
    for ch in (RC.ALBEDO, RC.METALLIC, RC.ROUGHNESS, RC.MASK, RC.DEPTH, RC.NORMAL):
        a = renderer.render_channel(small_scene, view, ch, seed=1)
        b = renderer.render_channel(other, view, ch, seed=1)
        assert np.array_equal(a.data, b.data), ch


def test_rgb_equals_diffuse_plus_specular_bitexact():
    scene = env_scene()
    view = one_view()
    rgb = renderer.render_channel(scene, view, RC.RGB, seed=3)
    diffuse, specular = renderer.render_rgb_passes(scene, view, seed=3)
    assert np.array_equal(rgb.data, diffuse.data + specular.data)


def test_masks_shared_across_channels():
    scene = env_scene()
    view = one_view()
    frame = renderer.render_frame(scene, view, [RC.RGB, RC.ALBEDO, RC.DEPTH], seed=2)
    masks = [img.mask for img in frame.values()]
    for m in masks[1:]:
        assert np.array_equal(masks[0], m)


def test_albedo_channel_reads_texture(small_scene):
    view = small_scene.cameras[0]
    img = renderer.render_channel(small_scene, view, RC.ALBEDO, seed=0)
    fg = img.data[:, img.mask]
    assert np.allclose(fg.T, [0.6, 0.4, 0.3], atol=1e-6)


def test_render_determinism_across_threads():
    scene = env_scene()
    view = one_view()
    old = os.environ.get("PBRFORGE_THREADS")
    try:
        os.environ["PBRFORGE_THREADS"] = "1"
        a = renderer.render_channel(scene, view, RC.RGB, seed=4)
        os.environ["PBRFORGE_THREADS"] = "4"
        b = renderer.render_channel(scene, view, RC.RGB, seed=4)
    finally:
        if old is None:
            os.environ.pop("PBRFORGE_THREADS", None)
        else:
            os.environ["PBRFORGE_THREADS"] = old
    assert np.array_equal(a.data, b.data)


def test_seed_changes_env_noise():
    scene = env_scene()
    view = one_view()
    a = renderer.render_channel(scene, view, RC.RGB, seed=1)
    b = renderer.render_channel(scene, view, RC.RGB, seed=2)
    assert not np.array_equal(a.data, b.data)


def test_mro_round_trip():
    rng = np.random.default_rng(5)
    mask = rng.random((6, 6)) > 0.3
    m = ChannelImage(rng.random((1, 6, 6)).astype(np.float32), mask)
    r = ChannelImage(rng.random((1, 6, 6)).astype(np.float32), mask)
    mro = renderer.pack_mro(m, r)
    assert np.array_equal(mro.data[2], np.zeros((6, 6), np.float32))
    m2, r2 = renderer.unpack_mro(mro)
    assert np.array_equal(m.data, m2.data)
    assert np.array_equal(r.data, r2.data)


def test_pack_mro_rejects_mismatched_sizes():
    m = ChannelImage.constant(4, 4, (0.5,))
    r = ChannelImage.constant(5, 4, (0.5,))
    with pytest.raises(ValueError):
        renderer.pack_mro(m, r)


def test_unpack_mro_warns_on_nonzero_third_channel():
    data = np.full((3, 4, 4), 0.5, np.float32)
    mro = ChannelImage(data, np.ones((4, 4), bool))
    with pytest.warns(UserWarning):
        renderer.unpack_mro(mro)


def test_render_dataset_manifest(tmp_path, small_scene):
    out = str(tmp_path / "ds")
    manifest = renderer.render_dataset(
        small_scene, small_scene.cameras, ["rgb", "albedo", "mro", "speclight", "mask"],
        out, seed=11)
    assert len(manifest["views"]) == len(small_scene.cameras)
    with open(os.path.join(out, "manifest.json")) as f:
        on_disk = json.load(f)
    assert on_disk["seed"] == 11
    for view in on_disk["views"]:
        assert set(view["files"]) == {"rgb", "albedo", "mro", "speclight", "mask"}
        for rel in view["files"].values():
            assert os.path.exists(os.path.join(out, rel))
            assert os.path.exists(os.path.join(out, rel.replace(".pbrf", ".png")))


def test_render_dataset_deterministic(tmp_path, small_scene):
    a = str(tmp_path / "a")
    b = str(tmp_path / "b")
    for out in (a, b):
        renderer.render_dataset(small_scene, small_scene.cameras[:1], ["rgb"], out, seed=2)
    fa = open(os.path.join(a, "view000_rgb.pbrf"), "rb").read()
    fb = open(os.path.join(b, "view000_rgb.pbrf"), "rb").read()
    assert fa == fb


def test_render_dataset_rejects_unknown_channel(tmp_path, small_scene):
    with pytest.raises(ValueError):
        renderer.render_dataset(small_scene, small_scene.cameras[:1], ["plasma"],
                                str(tmp_path / "x"), seed=0)
