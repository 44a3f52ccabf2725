"""Light sources, lat-long environment maps, and the diffuse/specular
shading split. Environment integrals are Monte Carlo (cosine-hemisphere for
diffuse, GGX half-vector sampling for specular); punctual lights are exact.

Each pixel owns a counter-based Philox stream keyed by (seed, pixel, stream)
so renders are independent of scheduling order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import brdf
from .core import ChannelImage, dot, orthonormal_basis

DEFAULT_DIFFUSE_SAMPLES = 256
DEFAULT_SPECULAR_SAMPLES = 512

# substream ids: shade() composes the two passes from disjoint streams so a
# full render decomposes exactly into separate diffuse/specular renders
STREAM_DIFFUSE = 0
STREAM_SPECULAR = 1


def stream_rng(seed: int, pixel: int = 0, stream: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, pixel, stream) triple."""
    # Philox keys are 128-bit: 64 bits of seed, 32 of pixel, 8 of stream
    key = ((int(seed) & (2**64 - 1)) << 40) | ((int(pixel) & (2**32 - 1)) << 8) | (int(stream) & 0xFF)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class PixelSampler:
    """Factory of per-pixel substreams; shade() pulls stream 0 for diffuse
    and stream 1 for specular."""

    seed: int
    pixel: int = 0

    def stream(self, stream: int) -> np.random.Generator:
        return stream_rng(self.seed, self.pixel, stream)


@dataclass(frozen=True)
class DirectionalLight:
    direction: np.ndarray  # unit vector pointing toward the light
    radiance: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        object.__setattr__(self, "direction", d / np.linalg.norm(d))
        object.__setattr__(self, "radiance", np.asarray(self.radiance, dtype=np.float64))


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray
    intensity: np.ndarray  # radiant intensity; irradiance falls off as 1/d^2

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "intensity", np.asarray(self.intensity, dtype=np.float64))


@dataclass(frozen=True)
class EnvironmentMap:
    """Lat-long radiance map (width = 2*height), optional yaw rotation."""

    image: ChannelImage
    rotation: float = 0.0

    def __post_init__(self):
        if self.image.channels != 3:
            raise ValueError("environment map must have 3 channels")
        if self.image.width != 2 * self.image.height:
            raise ValueError("lat-long environment map requires width = 2*height")
        if not np.all(np.isfinite(self.image.data)) or np.any(self.image.data < 0):
            raise ValueError("environment texels must be finite and non-negative")


@dataclass(frozen=True)
class LightSet:
    environment: EnvironmentMap | None = None
    directional: tuple = field(default=())
    points: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "directional", tuple(self.directional))
        object.__setattr__(self, "points", tuple(self.points))

    def require_nonempty(self):
        if self.environment is None and not self.directional and not self.points:
            raise ValueError("light set is empty")


def env_lookup(env: EnvironmentMap, w: np.ndarray) -> np.ndarray:
    """Bilinear lat-long lookup of radiance along unit direction(s) w (..., 3)."""
    w = np.asarray(w, dtype=np.float64)
    c, s = np.cos(-env.rotation), np.sin(-env.rotation)
    x = c * w[..., 0] - s * w[..., 1]
    y = s * w[..., 0] + c * w[..., 1]
    z = w[..., 2]
    phi = np.arctan2(y, x)  # [-pi, pi]
    theta = np.arccos(np.clip(z, -1.0, 1.0))
    wd, ht = env.image.width, env.image.height
    u = (phi + np.pi) / (2.0 * np.pi) * wd - 0.5
    v = theta / np.pi * ht - 0.5
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    fu = u - x0
    fv = v - y0
    x1 = (x0 + 1) % wd
    x0 = x0 % wd
    y1 = np.clip(y0 + 1, 0, ht - 1)
    y0 = np.clip(y0, 0, ht - 1)
    img = env.image.data.astype(np.float64)  # (3, h, w)
    c00 = img[:, y0, x0]
    c10 = img[:, y0, x1]
    c01 = img[:, y1, x0]
    c11 = img[:, y1, x1]
    out = (
        c00 * ((1 - fu) * (1 - fv))
        + c10 * (fu * (1 - fv))
        + c01 * ((1 - fu) * fv)
        + c11 * (fu * fv)
    )
    return np.moveaxis(out, 0, -1)


# ---------------------------------------------------------------------------
# punctual terms (exact)


def _punctual_sum(position, normal, wo, m, lights, lobe):
    """Sum a BRDF lobe over directional and point lights. lobe(wi) -> (...,3)."""
    out = np.zeros(np.broadcast_shapes(np.shape(normal), (3,)), dtype=np.float64)
    for dl in lights.directional:
        wi = np.broadcast_to(dl.direction, np.shape(normal)).astype(np.float64)
        cos_i = np.maximum(dot(normal, wi), 0.0)
        out = out + lobe(wi, m) * cos_i[..., None] * dl.radiance
    for pl in lights.points:
        to_l = pl.position - np.asarray(position, dtype=np.float64)
        d2 = np.maximum(np.sum(to_l * to_l, axis=-1), 1e-12)
        wi = to_l / np.sqrt(d2)[..., None]
        cos_i = np.maximum(dot(normal, wi), 0.0)
        out = out + lobe(wi, m) * (cos_i / d2)[..., None] * pl.intensity
    return out


def _diffuse_lobe(wo):
    def lobe(wi, m):
        return brdf.diffuse_eval(m)

    return lobe


def _specular_lobe(normal, wo):
    def lobe(wi, m):
        geom = brdf.ShadingGeometry(n=normal, wi=wi, wo=wo)
        return brdf.specular_eval(geom, m)

    return lobe


def punctual_diffuse(position, normal, m: brdf.MaterialSample, lights: LightSet) -> np.ndarray:
    """Exact diffuse contribution of all punctual lights."""
    return _punctual_sum(position, normal, None, m, lights, _diffuse_lobe(None))


def punctual_specular(position, normal, wo, m: brdf.MaterialSample, lights: LightSet) -> np.ndarray:
    """Exact specular contribution of all punctual lights."""
    return _punctual_sum(position, normal, wo, m, lights, _specular_lobe(normal, wo))


# ---------------------------------------------------------------------------
# environment terms (Monte Carlo over (..., N, 2) uniform samples)


def env_diffuse_estimate(normal, m: brdf.MaterialSample, env: EnvironmentMap, u: np.ndarray):
    """Cosine-hemisphere estimate of the diffuse environment integral.

    With pdf = cos(theta)/pi the estimator collapses to
    albedo*(1-metallic) * mean(L over sampled directions).
    """
    u1, u2 = u[..., 0], u[..., 1]
    cos_t = np.sqrt(1.0 - u1)
    sin_t = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    t, b = orthonormal_basis(normal)
    wi = (
        (sin_t * np.cos(phi))[..., None] * t[..., None, :]
        + (sin_t * np.sin(phi))[..., None] * b[..., None, :]
        + cos_t[..., None] * np.asarray(normal)[..., None, :]
    )
    radiance = env_lookup(env, wi)  # (..., N, 3)
    return brdf.diffuse_eval(m) * np.pi * np.mean(radiance, axis=-2)


def env_specular_estimate(normal, wo, m: brdf.MaterialSample, env: EnvironmentMap, u: np.ndarray):
    """GGX-importance-sampled estimate of the specular environment integral."""
    u1, u2 = u[..., 0], u[..., 1]
    n = np.asarray(normal, dtype=np.float64)[..., None, :]
    wo_s = np.asarray(wo, dtype=np.float64)[..., None, :]
    rough = np.asarray(m.roughness)[..., None]
    wi, pdf = brdf.sample_ggx(n, wo_s, rough, u1, u2)
    cos_i = dot(n, wi)
    valid = (pdf > 0.0) & (cos_i > 0.0)
    m_s = brdf.MaterialSample(
        albedo=np.asarray(m.albedo)[..., None, :],
        metallic=np.asarray(m.metallic)[..., None],
        roughness=rough,
    )
    geom = brdf.ShadingGeometry(n=n, wi=wi, wo=wo_s)
    fs = brdf.specular_eval(geom, m_s)
    radiance = env_lookup(env, wi)
    weight = np.where(valid, cos_i / np.where(valid, pdf, 1.0), 0.0)
    return np.mean(fs * radiance * weight[..., None], axis=-2)


# ---------------------------------------------------------------------------
# public shading entry points


def shade_diffuse(x, m: brdf.MaterialSample, lights: LightSet, sampler: PixelSampler,
                  n_samples: int = DEFAULT_DIFFUSE_SAMPLES) -> np.ndarray:
    """Diffuse outgoing radiance at a surface point (view-independent)."""
    lights.require_nonempty()
    out = _punctual_sum(x.position, x.normal, None, m, lights, _diffuse_lobe(None))
    if lights.environment is not None:
        u = sampler.stream(STREAM_DIFFUSE).random(np.shape(x.normal)[:-1] + (n_samples, 2))
        out = out + env_diffuse_estimate(x.normal, m, lights.environment, u)
    return out


def shade_specular(x, wo, m: brdf.MaterialSample, lights: LightSet, sampler: PixelSampler,
                   n_samples: int = DEFAULT_SPECULAR_SAMPLES) -> np.ndarray:
    """Specular outgoing radiance toward wo; the specular-light channel value."""
    lights.require_nonempty()
    out = _punctual_sum(x.position, x.normal, wo, m, lights, _specular_lobe(x.normal, wo))
    if lights.environment is not None:
        u = sampler.stream(STREAM_SPECULAR).random(np.shape(x.normal)[:-1] + (n_samples, 2))
        out = out + env_specular_estimate(x.normal, wo, m, lights.environment, u)
    return out


def shade(x, wo, m: brdf.MaterialSample, lights: LightSet, sampler: PixelSampler,
          n_diffuse: int = DEFAULT_DIFFUSE_SAMPLES,
          n_specular: int = DEFAULT_SPECULAR_SAMPLES) -> np.ndarray:
    """Outgoing radiance: diffuse + specular, from disjoint sampler streams."""
    return shade_diffuse(x, m, lights, sampler, n_diffuse) + shade_specular(
        x, wo, m, lights, sampler, n_specular
    )


# ---------------------------------------------------------------------------
# Radiance HDR import (lat-long .hdr -> linear ChannelImage)


def load_radiance_hdr(path: str) -> ChannelImage:
    """Read a Radiance RGBE .hdr file (flat or new-style RLE scanlines)."""
    with open(path, "rb") as f:
        magic = f.readline()
        if not magic.startswith(b"#?"):
            raise ValueError(f"not a Radiance HDR file: {path}")
        while True:
            line = f.readline()
            if line in (b"\n", b"\r\n"):
                break
            if not line:
                raise ValueError(f"truncated HDR header in {path}")
        res = f.readline().split()
        if len(res) != 4 or res[0] != b"-Y" or res[2] != b"+X":
            raise ValueError(f"unsupported HDR resolution line in {path}")
        h, w = int(res[1]), int(res[3])
        data = f.read()
    rgbe = _decode_hdr_scanlines(data, w, h, path)
    e = rgbe[..., 3].astype(np.int32)
    scale = np.where(e == 0, 0.0, np.ldexp(1.0, e - 136))
    rgb = rgbe[..., :3].astype(np.float64) * scale[..., None]
    return ChannelImage(np.moveaxis(rgb, -1, 0).astype(np.float32))


def _decode_hdr_scanlines(data: bytes, w: int, h: int, path: str) -> np.ndarray:
    buf = np.frombuffer(data, dtype=np.uint8)
    out = np.empty((h, w, 4), dtype=np.uint8)
    pos = 0
    for y in range(h):
        if pos + 4 > buf.size:
            raise ValueError(f"truncated HDR scanline in {path}")
        head = buf[pos : pos + 4]
        if head[0] == 2 and head[1] == 2 and (int(head[2]) << 8 | int(head[3])) == w and w >= 8:
            pos += 4
            for c in range(4):
                x = 0
                while x < w:
                    if pos >= buf.size:
                        raise ValueError(f"truncated HDR RLE data in {path}")
                    count = int(buf[pos])
                    if count > 128:  # run
                        out[y, x : x + count - 128, c] = buf[pos + 1]
                        x += count - 128
                        pos += 2
                    else:  # literal
                        out[y, x : x + count, c] = buf[pos + 1 : pos + 1 + count]
                        x += count
                        pos += 1 + count
        else:
            if pos + w * 4 > buf.size:
                raise ValueError(f"truncated HDR flat scanline in {path}")
            out[y] = buf[pos : pos + w * 4].reshape(w, 4)
            pos += w * 4
    return out
