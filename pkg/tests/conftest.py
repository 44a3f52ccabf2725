import math

import numpy as np
import pytest

from pbrforge import lighting
from pbrforge.core import ChannelImage
from pbrforge.scene import MaterialTexture, Scene, generate_orbit, primitive_sphere


def make_directional_rig(directions, radiance=1.2):
    return lighting.LightSet(directional=tuple(
        lighting.DirectionalLight(
            direction=np.asarray(d, dtype=np.float64) / np.linalg.norm(d),
            radiance=np.full(3, radiance),
        )
        for d in directions
    ))


SIX_DIRECTIONS = [
    (0.0, 0.0, 1.0), (0.0, 0.0, -1.0),
    (1.0, 0.0, 0.3), (-1.0, 0.0, 0.3),
    (0.0, 1.0, -0.3), (0.0, -1.0, -0.3),
]


def random_env(seed, height=8):
    rng = np.random.default_rng(seed)
    data = rng.uniform(0.1, 0.6, (3, height, 2 * height)).astype(np.float32)
    return lighting.EnvironmentMap(
        image=ChannelImage(data, np.ones((height, 2 * height), dtype=bool)))


@pytest.fixture(scope="session")
def sphere_mesh():
    return primitive_sphere(12)


@pytest.fixture(scope="session")
def small_scene(sphere_mesh):
    """Sphere under four directional lights, constant dielectric material."""
    tex = MaterialTexture.constant(8, (0.6, 0.4, 0.3), 0.0, 0.4)
    lights = make_directional_rig(SIX_DIRECTIONS[:4])
    cams = generate_orbit(3, (20.0,), 3.0, math.radians(40.0), 32)
    return Scene(mesh=sphere_mesh, textures=tex, lights=lights, cameras=cams)
