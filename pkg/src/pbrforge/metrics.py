"""Evaluation protocol: foreground-masked PSNR/MSE, Chamfer Distance,
F-Score, mesh alignment, uniform surface sampling, and the multi-term
image reconstruction loss.

Chamfer Distance uses Euclidean (not squared) distances so CD and the
F-Score thresholds share one unit; nearest neighbors come from a k-d tree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import ChannelImage
from .scene import TriangleMesh

LAMBDA_LPIPS_DEFAULT = 2.0
LAMBDA_MASK_DEFAULT = 0.2


# ---------------------------------------------------------------------------
# image metrics


def _paired(a: ChannelImage, b: ChannelImage, mask):
    if a.data.shape != b.data.shape:
        raise ValueError(f"image shape mismatch: {a.data.shape} vs {b.data.shape}")
    if mask is None:
        mask = a.mask & b.mask
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape[1:]:
        raise ValueError("mask shape mismatch")
    if not mask.any():
        raise ValueError("empty foreground mask")
    return mask


def mse_fg(a: ChannelImage, b: ChannelImage, mask=None) -> float:
    """Mean squared difference over foreground pixels, all channels."""
    mask = _paired(a, b, mask)
    d = a.data[:, mask].astype(np.float64) - b.data[:, mask].astype(np.float64)
    return float(np.mean(d * d))


def psnr_fg(a: ChannelImage, b: ChannelImage, mask=None, peak: float = 1.0) -> float:
    """Foreground PSNR in dB; +inf for identical images."""
    m = mse_fg(a, b, mask)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / m))


# ---------------------------------------------------------------------------
# point clouds and geometry metrics


def sample_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> np.ndarray:
    """n points uniform over the surface: area-weighted triangle choice,
    uniform barycentric within each triangle. Deterministic given seed."""
    if n <= 0:
        raise ValueError("need n > 0 surface samples")
    areas = mesh.face_areas()
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero surface area")
    rng = np.random.default_rng(seed)
    tri = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.random(n)
    v = rng.random(n)
    su = np.sqrt(u)
    w0 = 1.0 - su
    w1 = su * (1.0 - v)
    w2 = su * v
    a, b, c = mesh.triangle_corners()
    return w0[:, None] * a[tri] + w1[:, None] * b[tri] + w2[:, None] * c[tri]


def _nn_dists(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return cKDTree(q).query(p, k=1)[0]


def chamfer_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Symmetric mean Euclidean nearest-neighbor distance."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("point clouds must be nonempty")
    return float(0.5 * _nn_dists(p, q).mean() + 0.5 * _nn_dists(q, p).mean())


def f_score(p: np.ndarray, q: np.ndarray, tau: float) -> float:
    """Harmonic mean of precision/recall of points within tau."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if len(p) == 0 or len(q) == 0:
        raise ValueError("point clouds must be nonempty")
    precision = float(np.mean(_nn_dists(p, q) <= tau))
    recall = float(np.mean(_nn_dists(q, p) <= tau))
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


# ---------------------------------------------------------------------------
# mesh alignment


def unit_cube_transform(mesh: TriangleMesh) -> np.ndarray:
    """4x4 similarity mapping the mesh bounding box into [-0.5, 0.5]^3
    (uniform scale, centered)."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent <= 0:
        raise ValueError("degenerate mesh: zero bounding-box extent")
    s = 1.0 / extent
    center = (lo + hi) / 2.0
    t = np.eye(4)
    t[:3, :3] *= s
    t[:3, 3] = -s * center
    return t


def apply_transform(points: np.ndarray, m: np.ndarray) -> np.ndarray:
    return points @ m[:3, :3].T + m[:3, 3]


def _umeyama(src: np.ndarray, dst: np.ndarray, with_scale: bool = True) -> np.ndarray:
    """Least-squares similarity transform aligning src onto dst."""
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    cov = xd.T @ xs / len(src)
    u_, sv, vt = np.linalg.svd(cov)
    d = np.sign(np.linalg.det(u_ @ vt))
    diag = np.diag([1.0, 1.0, d])
    rot = u_ @ diag @ vt
    if with_scale:
        var_s = np.mean(np.sum(xs * xs, axis=1))
        scale = np.trace(np.diag(sv) @ diag) / var_s
    else:
        scale = 1.0
    m = np.eye(4)
    m[:3, :3] = scale * rot
    m[:3, 3] = mu_d - scale * rot @ mu_s
    return m


def align_meshes(gen: TriangleMesh, gt: TriangleMesh, n_samples: int = 2000,
                 max_iters: int = 50, tol: float = 1e-6, seed: int = 0) -> np.ndarray:
    """Similarity transform (4x4) taking `gen` into the frame of `gt`.

    Both meshes are first normalized to the unit cube; the residual pose is
    refined by point-to-point ICP on uniform surface samples.
    """
    t_gen = unit_cube_transform(gen)
    t_gt = unit_cube_transform(gt)
    # same sampling seed on both sides so identical meshes align exactly
    src = apply_transform(sample_surface(gen, n_samples, seed), t_gen)
    dst = apply_transform(sample_surface(gt, n_samples, seed), t_gt)
    tree = cKDTree(dst)
    m = np.eye(4)
    prev = np.inf
    for _ in range(max_iters):
        moved = apply_transform(src, m)
        dist, idx = tree.query(moved, k=1)
        err = float(np.mean(dist))
        step = _umeyama(moved, dst[idx])
        m = step @ m
        if prev - err <= tol * max(prev, 1e-30):
            break
        prev = err
    return np.linalg.inv(t_gt) @ m @ t_gen


# ---------------------------------------------------------------------------
# reconstruction loss


@dataclass(frozen=True)
class ReconLossReport:
    total: float
    albedo_term: float
    mro_term: float
    mask_term: float
    perceptual_term: float
    perceptual_enabled: bool
    note: str = ""

    def __float__(self):
        return self.total


def reconstruction_loss(rendered, gt, lambda_lpips: float = LAMBDA_LPIPS_DEFAULT,
                        lambda_mask: float = LAMBDA_MASK_DEFAULT,
                        perceptual=None) -> ReconLossReport:
    """Sum over views of albedo + MRO image L2 terms plus a weighted mask
    term; perceptual terms use the pluggable `perceptual(a, b) -> float`
    callable and are omitted (0, flagged in the note) when it is None.

    `rendered` and `gt` are sequences of frame dicts with keys
    'albedo', 'mro', 'mask' mapping to ChannelImage.
    """
    if len(rendered) != len(gt):
        raise ValueError("view count mismatch")
    alb = mro = msk = perc = 0.0
    for fr, fg in zip(rendered, gt):
        alb += float(np.mean((fr["albedo"].data.astype(np.float64) - fg["albedo"].data) ** 2))
        mro += float(np.mean((fr["mro"].data.astype(np.float64) - fg["mro"].data) ** 2))
        msk += float(np.mean((fr["mask"].data.astype(np.float64) - fg["mask"].data) ** 2))
        if perceptual is not None:
            perc += float(perceptual(fr["albedo"], fg["albedo"]))
            perc += float(perceptual(fr["mro"], fg["mro"]))
    enabled = perceptual is not None
    total = alb + mro + lambda_mask * msk + (lambda_lpips * perc if enabled else 0.0)
    note = "" if enabled else "perceptual terms disabled (no perceptual functional plugged in)"
    return ReconLossReport(
        total=total, albedo_term=alb, mro_term=mro, mask_term=lambda_mask * msk,
        perceptual_term=lambda_lpips * perc if enabled else 0.0,
        perceptual_enabled=enabled, note=note,
    )


# ---------------------------------------------------------------------------
# report container


@dataclass
class EvalReport:
    per_channel: dict = field(default_factory=dict)  # channel -> {psnr, mse}
    geometry: dict = field(default_factory=dict)     # {cd, fs: {tau: value}}
    metadata: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        chans = {
            c: {"psnr": ("inf" if np.isinf(v["psnr"]) else v["psnr"]), "mse": v["mse"]}
            for c, v in self.per_channel.items()
        }
        return {"per_channel": chans, "geometry": self.geometry, "metadata": self.metadata}
