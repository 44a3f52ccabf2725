"""Command-line entry point: render / orbit / recover / eval-pbr /
eval-geom / extract / pack-mro.

Exit codes: 0 success, 1 input error (bad flags, missing or malformed
files), 2 internal error. All file outputs are written atomically and every
run embeds its resolved configuration in the JSON it produces, so a result
can always be traced back to the exact invocation.
"""

from __future__ import annotations

import json
import logging
import math
import os
import sys

import click
import numpy as np

from . import inverse, lighting, metrics, renderer
from .core import ChannelImage, ImageFormatError, atomic_write_bytes, image_read, image_write
from .meshing import GridFormatError, marching_cubes, sdf_load
from .scene import (CameraView, MeshFormatError, generate_orbit, mesh_load,
                    mesh_save, scene_from_json)

log = logging.getLogger("pbrforge")

INPUT_ERRORS = (
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
    ValueError,
    KeyError,
    json.JSONDecodeError,
    ImageFormatError,
    GridFormatError,
    MeshFormatError,
)


def _write_json(path: str, payload: dict) -> None:
    atomic_write_bytes(path, json.dumps(payload, indent=2).encode("utf-8"))


def _parse_floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _amend_manifest(out_dir: str, manifest: dict, config: dict) -> None:
    manifest["config"] = config
    _write_json(os.path.join(out_dir, "manifest.json"), manifest)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose: bool) -> None:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option("--scene", "scene_path", required=True, type=str)
@click.option("--channels", default="rgb,albedo,mro,speclight,mask", show_default=True)
@click.option("--out", "out_dir", required=True, type=str)
@click.option("--seed", default=None, type=int, help="Overrides the scene seed.")
def render(scene_path: str, channels: str, out_dir: str, seed: int | None) -> None:
    """Render the cameras listed in the scene to a multi-channel dataset."""
    scene = scene_from_json(scene_path)
    if not scene.cameras:
        raise ValueError("scene has no cameras; add a 'cameras' or 'orbit' entry "
                         "or use the orbit subcommand")
    use_seed = scene.seed if seed is None else seed
    chans = [c.strip() for c in channels.split(",") if c.strip()]
    log.info("rendering %d views x %d channels", len(scene.cameras), len(chans))
    manifest = renderer.render_dataset(scene, scene.cameras, chans, out_dir, use_seed)
    _amend_manifest(out_dir, manifest, {
        "command": "render", "scene": os.path.abspath(scene_path),
        "channels": chans, "seed": use_seed,
        "threads": renderer.n_threads(),
    })


@cli.command()
@click.option("--scene", "scene_path", required=True, type=str)
@click.option("--azimuths", default=7, show_default=True, type=int)
@click.option("--elevations", default="30,0,-30", show_default=True)
@click.option("--radius", default=2.7, show_default=True, type=float)
@click.option("--fov-deg", default=40.0, show_default=True, type=float)
@click.option("--resolution", default=256, show_default=True, type=int)
@click.option("--channels", default="rgb,albedo,mro,speclight,mask", show_default=True)
@click.option("--out", "out_dir", required=True, type=str)
@click.option("--seed", default=None, type=int)
def orbit(scene_path: str, azimuths: int, elevations: str, radius: float,
          fov_deg: float, resolution: int, channels: str, out_dir: str,
          seed: int | None) -> None:
    """Render an orbit of views around the scene (ignores scene cameras)."""
    scene = scene_from_json(scene_path)
    elevs = _parse_floats(elevations)
    views = generate_orbit(azimuths, elevs, radius, math.radians(fov_deg), resolution)
    use_seed = scene.seed if seed is None else seed
    chans = [c.strip() for c in channels.split(",") if c.strip()]
    log.info("orbit: %d views (%d azimuths x %d elevations)", len(views), azimuths, len(elevs))
    manifest = renderer.render_dataset(scene, views, chans, out_dir, use_seed)
    _amend_manifest(out_dir, manifest, {
        "command": "orbit", "scene": os.path.abspath(scene_path),
        "azimuths": azimuths, "elevations": elevs, "radius": radius,
        "fov_deg": fov_deg, "resolution": resolution, "channels": chans,
        "seed": use_seed, "threads": renderer.n_threads(),
    })


def _load_observations(obs_path: str):
    with open(obs_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)
    base = os.path.dirname(os.path.abspath(obs_path))
    views, obs, spec = [], [], []
    have_spec = all("speclight" in v["files"] for v in manifest["views"])
    for v in manifest["views"]:
        files = v["files"]
        if "rgb" not in files:
            raise ValueError(f"view {v['index']}: manifest has no rgb channel")
        views.append(CameraView.from_dict(v["camera"]))
        obs.append(image_read(os.path.join(base, files["rgb"])))
        if have_spec:
            spec.append(image_read(os.path.join(base, files["speclight"])))
    return views, obs, (spec if have_spec else None)


@cli.command()
@click.option("--scene", "scene_path", required=True, type=str,
              help="Scene with the known mesh and lights (textures, if any, "
                   "are treated as ground truth for error reporting).")
@click.option("--obs", "obs_path", required=True, type=str,
              help="Dataset manifest with the observed images.")
@click.option("--steps", default=inverse.DEFAULT_STEPS, show_default=True, type=int)
@click.option("--step-size", default=inverse.DEFAULT_STEP_SIZE, show_default=True, type=float)
@click.option("--lambda-spec", default=0.1, show_default=True, type=float)
@click.option("--texture-size", default=32, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=str)
def recover(scene_path: str, obs_path: str, steps: int, step_size: float,
            lambda_spec: float, texture_size: int, seed: int, out_dir: str) -> None:
    """Recover albedo/metallic/roughness textures from observed images."""
    scene = scene_from_json(scene_path)
    views, obs, spec_obs = _load_observations(obs_path)
    if lambda_spec > 0.0 and spec_obs is None:
        log.warning("no speclight channel in the manifest; disabling the specular term")
        lambda_spec = 0.0
    gt_tex = scene.textures
    if gt_tex is not None and gt_tex.metallic.shape != (texture_size, texture_size):
        log.info("scene texture resolution differs from --texture-size; "
                 "skipping the per-channel error report")
        gt_tex = None
    problem = inverse.InverseProblem(
        mesh=scene.mesh, lights=scene.lights, views=views, observations=obs,
        spec_observations=spec_obs, texture_size=texture_size,
        gt_texture=gt_tex, noise_seed=seed,
    )
    cfg = inverse.RecoveryConfig(steps=steps, step_size=step_size, seed=seed,
                                 lambda_spec=lambda_spec)
    log.info("recovering %dx%d texture from %d views, %d steps",
             texture_size, texture_size, len(views), steps)
    result = inverse.recover_materials(problem, cfg)
    tex = result.texture
    os.makedirs(out_dir, exist_ok=True)
    full = np.ones((texture_size, texture_size), dtype=bool)
    image_write(ChannelImage(tex.albedo.astype(np.float32), full),
                os.path.join(out_dir, "albedo.pbrf"))
    image_write(ChannelImage(tex.metallic[None].astype(np.float32), full),
                os.path.join(out_dir, "metallic.pbrf"))
    image_write(ChannelImage(tex.roughness[None].astype(np.float32), full),
                os.path.join(out_dir, "roughness.pbrf"))
    report = dict(result.report)
    report["config"] = {
        "command": "recover", "scene": os.path.abspath(scene_path),
        "obs": os.path.abspath(obs_path), "steps": steps, "step_size": step_size,
        "lambda_spec": lambda_spec, "texture_size": texture_size, "seed": seed,
    }
    _write_json(os.path.join(out_dir, "report.json"), report)


@cli.command("eval-pbr")
@click.option("--pred", "pred_path", required=True, type=str)
@click.option("--gt", "gt_path", required=True, type=str)
@click.option("--out", "out_path", required=True, type=str)
def eval_pbr(pred_path: str, gt_path: str, out_path: str) -> None:
    """Foreground PSNR/MSE per channel between two dataset manifests."""
    with open(pred_path, "r", encoding="utf-8") as f:
        pred = json.load(f)
    with open(gt_path, "r", encoding="utf-8") as f:
        gt = json.load(f)
    if len(pred["views"]) != len(gt["views"]):
        raise ValueError("manifests list different view counts")
    pred_base = os.path.dirname(os.path.abspath(pred_path))
    gt_base = os.path.dirname(os.path.abspath(gt_path))
    shared = [c for c in gt["channels"] if c in pred["channels"] and c != "mask"]
    if not shared:
        raise ValueError("manifests share no comparable channels")
    sums: dict[str, list[float]] = {c: [] for c in shared}
    for pv, gv in zip(pred["views"], gt["views"]):
        for c in shared:
            a = image_read(os.path.join(pred_base, pv["files"][c]))
            b = image_read(os.path.join(gt_base, gv["files"][c]))
            sums[c].append(metrics.mse_fg(a, b, b.mask))
    report = metrics.EvalReport(metadata={
        "pred": os.path.abspath(pred_path), "gt": os.path.abspath(gt_path),
        "views": len(gt["views"]),
    })
    for c, vals in sums.items():
        mse = float(np.mean(vals))
        psnr = float("inf") if mse == 0.0 else -10.0 * math.log10(mse)
        report.per_channel[c] = {"psnr": psnr, "mse": mse}
    _write_json(out_path, report.to_json_dict())


@cli.command("eval-geom")
@click.option("--pred", "pred_path", required=True, type=str)
@click.option("--gt", "gt_path", required=True, type=str)
@click.option("--samples", default=10000, show_default=True, type=int)
@click.option("--taus", default="0.1,0.2,0.5", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=str)
def eval_geom(pred_path: str, gt_path: str, samples: int, taus: str,
              seed: int, out_path: str) -> None:
    """Chamfer Distance and F-Score between two meshes after alignment."""
    pred = mesh_load(pred_path)
    gt = mesh_load(gt_path)
    taus_f = _parse_floats(taus)
    transform = metrics.align_meshes(pred, gt)
    # evaluate in the gt unit-cube frame so FS thresholds are scale-free
    t_gt = metrics.unit_cube_transform(gt)
    p = metrics.apply_transform(
        metrics.sample_surface(pred, samples, seed), t_gt @ transform)
    q = metrics.apply_transform(metrics.sample_surface(gt, samples, seed), t_gt)
    cd = metrics.chamfer_distance(p, q)
    fs = {str(t): metrics.f_score(p, q, t) for t in taus_f}
    report = metrics.EvalReport(
        geometry={"cd": cd, "fs": fs},
        metadata={
            "pred": os.path.abspath(pred_path), "gt": os.path.abspath(gt_path),
            "samples": samples, "seed": seed,
            "distance_convention": "mean Euclidean nearest-neighbor, symmetric halves averaged",
            "threshold_units": "normalized unit-cube units",
        },
    )
    _write_json(out_path, report.to_json_dict())


@cli.command()
@click.option("--sdf", "sdf_path", required=True, type=str)
@click.option("--iso", default=0.0, show_default=True, type=float)
@click.option("--out", "out_path", required=True, type=str)
def extract(sdf_path: str, iso: float, out_path: str) -> None:
    """Extract an isosurface mesh from a sampled signed-distance grid."""
    grid = sdf_load(sdf_path)
    mesh = marching_cubes(grid, iso)
    if len(mesh.faces) == 0:
        log.warning("iso value %g produced an empty mesh", iso)
    mesh_save(mesh, out_path)


@cli.command("pack-mro")
@click.option("--metallic", "metallic_path", required=True, type=str)
@click.option("--roughness", "roughness_path", required=True, type=str)
@click.option("--out", "out_path", required=True, type=str)
def pack_mro_cmd(metallic_path: str, roughness_path: str, out_path: str) -> None:
    """Pack single-channel metallic and roughness maps into one MRO image."""
    m = image_read(metallic_path)
    r = image_read(roughness_path)
    image_write(renderer.pack_mro(m, r), out_path)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        print("aborted", file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # internal failure; anything not diagnosed above
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
