"""Multi-domain channel rendering (RGB / Albedo / Metallic / Roughness /
Specular light / Mask / Depth / Normal), MRO packing, and dataset emission.

RGB is always computed as diffuse pass + specular pass from disjoint
per-pixel sampler streams, so a full render decomposes exactly into the two
passes rendered separately with the same seed.
"""

from __future__ import annotations

import enum
import json
import os
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import lighting
from .brdf import MaterialSample
from .core import ChannelImage, atomic_write_bytes, image_write, write_png
from .scene import CameraView, Scene, interpolate_hits, intersect_rays, sample_texture


class RenderChannel(enum.Enum):
    RGB = "rgb"
    ALBEDO = "albedo"
    METALLIC = "metallic"
    ROUGHNESS = "roughness"
    SPECULAR_LIGHT = "speclight"
    MASK = "mask"
    DEPTH = "depth"
    NORMAL = "normal"


CHANNEL_ARITY = {
    RenderChannel.RGB: 3,
    RenderChannel.ALBEDO: 3,
    RenderChannel.SPECULAR_LIGHT: 3,
    RenderChannel.NORMAL: 3,
    RenderChannel.METALLIC: 1,
    RenderChannel.ROUGHNESS: 1,
    RenderChannel.MASK: 1,
    RenderChannel.DEPTH: 1,
}

# HDR channels get x/(1+x) tone mapping before the sRGB PNG preview
_TONEMAP_CHANNELS = {RenderChannel.RGB, RenderChannel.SPECULAR_LIGHT}


def n_threads() -> int:
    env = os.environ.get("PBRFORGE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _pixel_uniforms(seed: int, pixel_ids: np.ndarray, stream: int, n: int) -> np.ndarray:
    """(P, n, 2) uniforms from per-pixel Philox streams; order-independent."""
    out = np.empty((len(pixel_ids), n, 2), dtype=np.float64)
    for i, pid in enumerate(pixel_ids):
        out[i] = lighting.stream_rng(seed, int(pid), stream).random((n, 2))
    return out


def _chunked(fn, n_items: int, out: np.ndarray) -> None:
    """Apply fn(slice) over contiguous chunks, possibly in threads; the
    chunk layout is fixed so results do not depend on the thread count."""
    workers = n_threads()
    step = max(1, -(-n_items // max(workers, 1)))
    slices = [slice(s, min(s + step, n_items)) for s in range(0, n_items, step)]
    if workers == 1 or len(slices) == 1:
        for sl in slices:
            out[sl] = fn(sl)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for sl, res in zip(slices, pool.map(fn, slices)):
                out[sl] = res


def _shade_pass(scene: Scene, pos, nrm, wo, mat: MaterialSample, pixel_ids, seed, pass_name):
    """Vectorized diffuse or specular radiance over the hit pixels."""
    lights = scene.lights
    lights.require_nonempty()
    n = len(pixel_ids)
    out = np.zeros((n, 3), dtype=np.float64)

    def compute(sl):
        msub = MaterialSample(mat.albedo[sl], mat.metallic[sl], mat.roughness[sl])
        if pass_name == "diffuse":
            val = lighting.punctual_diffuse(pos[sl], nrm[sl], msub, lights)
            if lights.environment is not None:
                u = _pixel_uniforms(seed, pixel_ids[sl], lighting.STREAM_DIFFUSE,
                                    scene.n_diffuse_samples)
                val = val + lighting.env_diffuse_estimate(nrm[sl], msub, lights.environment, u)
        else:
            val = lighting.punctual_specular(pos[sl], nrm[sl], wo[sl], msub, lights)
            if lights.environment is not None:
                u = _pixel_uniforms(seed, pixel_ids[sl], lighting.STREAM_SPECULAR,
                                    scene.n_specular_samples)
                val = val + lighting.env_specular_estimate(
                    nrm[sl], wo[sl], msub, lights.environment, u
                )
        return val

    _chunked(compute, n, out)
    return out


def _frame_geometry(scene: Scene, view: CameraView):
    origins, dirs = view.rays()
    info = intersect_rays(scene.mesh, origins, dirs)
    pos, nrm, uv, _ = (None, None, None, None)
    if np.any(info.hit):
        pos, nrm, uv, _ = interpolate_hits(scene.mesh, info, dirs)
    return origins, dirs, info, pos, nrm, uv


def render_frame(scene: Scene, view: CameraView, channels, seed: int = 0) -> dict:
    """Render several channels of one view sharing a single ray cast.

    Returns {RenderChannel: ChannelImage}; all channels share the hit mask.
    """
    channels = [RenderChannel(c) if not isinstance(c, RenderChannel) else c for c in channels]
    w, h = view.width, view.height
    origins, dirs, info, pos, nrm, uv = _frame_geometry(scene, view)
    mask = info.hit.reshape(h, w)
    sel = info.hit
    pixel_ids = np.nonzero(sel)[0]
    mat = sample_texture(scene.textures, uv) if uv is not None else None
    wo = -dirs[sel] if pos is not None else None

    need_diffuse = RenderChannel.RGB in channels
    need_spec = need_diffuse or RenderChannel.SPECULAR_LIGHT in channels
    diffuse = spec = None
    if pos is not None and need_spec:
        spec = _shade_pass(scene, pos, nrm, wo, mat, pixel_ids, seed, "specular")
    if pos is not None and need_diffuse:
        diffuse = _shade_pass(scene, pos, nrm, wo, mat, pixel_ids, seed, "diffuse")

    out = {}
    for ch in channels:
        arity = CHANNEL_ARITY[ch]
        data = np.zeros((arity, h, w), dtype=np.float32)
        flat = data.reshape(arity, -1)
        if pos is None:
            out[ch] = ChannelImage(data, mask)
            continue
        if ch is RenderChannel.RGB:
            # sum in float32 so RGB decomposes bit-exactly into the two passes
            flat[:, sel] = (diffuse.astype(np.float32) + spec.astype(np.float32)).T
        elif ch is RenderChannel.SPECULAR_LIGHT:
            flat[:, sel] = spec.T
        elif ch is RenderChannel.ALBEDO:
            flat[:, sel] = mat.albedo.T
        elif ch is RenderChannel.METALLIC:
            flat[0, sel] = mat.metallic
        elif ch is RenderChannel.ROUGHNESS:
            flat[0, sel] = mat.roughness
        elif ch is RenderChannel.MASK:
            flat[0, sel] = 1.0
        elif ch is RenderChannel.DEPTH:
            flat[0, sel] = info.t[sel]
        elif ch is RenderChannel.NORMAL:
            fwd, right, upv = view.basis()
            cam_n = np.stack(
                [nrm @ right, nrm @ upv, nrm @ (-fwd)], axis=-1
            )
            flat[:, sel] = (cam_n * 0.5 + 0.5).T
        out[ch] = ChannelImage(data, mask)
    return out


def render_channel(scene: Scene, view: CameraView, channel, seed: int = 0) -> ChannelImage:
    """Render a single channel of one view."""
    ch = RenderChannel(channel) if not isinstance(channel, RenderChannel) else channel
    return render_frame(scene, view, [ch], seed)[ch]


def render_rgb_passes(scene: Scene, view: CameraView, seed: int = 0):
    """The exact (diffuse, specular) decomposition of the RGB channel."""
    w, h = view.width, view.height
    origins, dirs, info, pos, nrm, uv = _frame_geometry(scene, view)
    sel = info.hit
    imgs = []
    for name in ("diffuse", "specular"):
        data = np.zeros((3, h, w), dtype=np.float32)
        if pos is not None:
            mat = sample_texture(scene.textures, uv)
            vals = _shade_pass(scene, pos, nrm, -dirs[sel], mat, np.nonzero(sel)[0], seed, name)
            data.reshape(3, -1)[:, sel] = vals.T
        imgs.append(ChannelImage(data, sel.reshape(h, w)))
    return imgs[0], imgs[1]


# ---------------------------------------------------------------------------
# MRO packing


def pack_mro(metallic: ChannelImage, roughness: ChannelImage) -> ChannelImage:
    """Pack metallic and roughness into one 3-channel image (M, R, zero)."""
    if metallic.channels != 1 or roughness.channels != 1:
        raise ValueError("pack_mro expects single-channel inputs")
    if metallic.data.shape != roughness.data.shape:
        raise ValueError("pack_mro resolution mismatch")
    zero = np.zeros_like(metallic.data[0])
    return ChannelImage(
        np.stack([metallic.data[0], roughness.data[0], zero]), metallic.mask
    )


def unpack_mro(mro: ChannelImage) -> tuple[ChannelImage, ChannelImage]:
    """Split an MRO image back into (metallic, roughness)."""
    if mro.channels != 3:
        raise ValueError("unpack_mro expects a 3-channel image")
    if np.any(mro.data[2] != 0):
        warnings.warn("MRO third channel is not zero; ignoring it")
    return ChannelImage(mro.data[0], mro.mask), ChannelImage(mro.data[1], mro.mask)


# ---------------------------------------------------------------------------
# dataset emission

# dataset-level channel names; "mro" is a packed pair of primitive channels
DATASET_CHANNELS = [c.value for c in RenderChannel] + ["mro"]


def _view_seed(seed: int, index: int) -> int:
    return (int(seed) << 20) + index


def render_dataset(scene: Scene, views, channels, out_dir: str, seed: int = 0) -> dict:
    """Render every view/channel to .pbrf + PNG preview and write a manifest.

    Returns the manifest dict; also written to out_dir/manifest.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    channels = list(channels)
    for c in channels:
        if c not in DATASET_CHANNELS:
            raise ValueError(f"unknown channel {c!r}; expected one of {DATASET_CHANNELS}")
    primitive = []
    for c in channels:
        primitive += ["metallic", "roughness"] if c == "mro" else [c]
    primitive = list(dict.fromkeys(primitive))

    manifest = {"seed": seed, "channels": channels, "views": []}
    for i, view in enumerate(views):
        frame = render_frame(scene, view, primitive, _view_seed(seed, i))
        files = {}
        for c in channels:
            if c == "mro":
                img = pack_mro(
                    frame[RenderChannel.METALLIC], frame[RenderChannel.ROUGHNESS]
                )
            else:
                img = frame[RenderChannel(c)]
            stem = f"view{i:03d}_{c}"
            image_write(img, os.path.join(out_dir, stem + ".pbrf"))
            preview = img
            if c in ("rgb", "speclight"):
                preview = ChannelImage(img.data / (1.0 + img.data), img.mask)
            write_png(preview, os.path.join(out_dir, stem + ".png"))
            files[c] = stem + ".pbrf"
        manifest["views"].append({"index": i, "camera": view.to_dict(), "files": files})
    payload = json.dumps(manifest, indent=2).encode("utf-8")
    atomic_write_bytes(os.path.join(out_dir, "manifest.json"), payload)
    return manifest
