"""Triangle meshes with UV-mapped material textures, pinhole cameras,
ray casting, and orbit trajectory generation.

Intersection is brute-force (vectorized Moller-Trumbore) below
BVH_TRIANGLE_THRESHOLD triangles; a median-split BVH takes over above it.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import lighting
from .brdf import MaterialSample
from .core import ChannelImage, image_read, normalize

BVH_TRIANGLE_THRESHOLD = 50_000
_BVH_LEAF_SIZE = 8
_RAY_CHUNK_PAIRS = 4_000_000


class MeshFormatError(Exception):
    """Raised on malformed OBJ input."""


# ---------------------------------------------------------------------------
# mesh


@dataclass
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float64
    normals: np.ndarray   # (V, 3) unit
    uvs: np.ndarray       # (V, 2)
    faces: np.ndarray     # (F, 3) int64

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.normals = np.ascontiguousarray(self.normals, dtype=np.float64)
        self.uvs = np.ascontiguousarray(self.uvs, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.faces.size and (self.faces.min() < 0 or self.faces.max() >= len(self.vertices)):
            raise MeshFormatError("face index out of range")
        self._bvh = None

    @property
    def n_triangles(self) -> int:
        return len(self.faces)

    def triangle_corners(self):
        v = self.vertices
        f = self.faces
        return v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]

    def face_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)

    def bvh(self):
        if self._bvh is None:
            self._bvh = _Bvh(self)
        return self._bvh


def compute_vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals (cross products carry the area weight)."""
    n = np.zeros_like(vertices)
    a, b, c = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    fn = np.cross(b - a, c - a)
    for k in range(3):
        np.add.at(n, faces[:, k], fn)
    ln = np.linalg.norm(n, axis=-1, keepdims=True)
    ln[ln == 0] = 1.0
    return n / ln


# ---------------------------------------------------------------------------
# material texture


@dataclass(frozen=True)
class MaterialTexture:
    """Per-texel svBRDF maps sharing one resolution; texels in [0, 1]."""

    albedo: np.ndarray    # (3, H, W)
    metallic: np.ndarray  # (H, W)
    roughness: np.ndarray # (H, W)

    def __post_init__(self):
        a = np.clip(np.asarray(self.albedo, dtype=np.float64), 0.0, 1.0)
        m = np.clip(np.asarray(self.metallic, dtype=np.float64), 0.0, 1.0)
        r = np.clip(np.asarray(self.roughness, dtype=np.float64), 0.0, 1.0)
        if a.shape[1:] != m.shape or m.shape != r.shape:
            raise ValueError("material maps must share one resolution")
        object.__setattr__(self, "albedo", a)
        object.__setattr__(self, "metallic", m)
        object.__setattr__(self, "roughness", r)

    @property
    def height(self) -> int:
        return self.metallic.shape[0]

    @property
    def width(self) -> int:
        return self.metallic.shape[1]

    @staticmethod
    def constant(resolution: int, albedo, metallic: float, roughness: float) -> "MaterialTexture":
        h = w = resolution
        a = np.broadcast_to(np.asarray(albedo, dtype=np.float64)[:, None, None], (3, h, w))
        return MaterialTexture(
            a.copy(), np.full((h, w), metallic, dtype=np.float64), np.full((h, w), roughness)
        )


def bilinear_weights(uv: np.ndarray, width: int, height: int):
    """Texel indices and weights for bilinear sampling at uv (..., 2).

    Returns (idx, w): idx (..., 4) flat texel indices into H*W, w (..., 4)
    weights summing to 1. Clamp addressing; texel centers at (i+0.5)/size.
    """
    uv = np.asarray(uv, dtype=np.float64)
    x = np.clip(uv[..., 0], 0.0, 1.0) * width - 0.5
    y = np.clip(1.0 - np.clip(uv[..., 1], 0.0, 1.0), 0.0, 1.0) * height - 0.5
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    fx = x - x0
    fy = y - y0
    x1 = np.clip(x0 + 1, 0, width - 1)
    y1 = np.clip(y0 + 1, 0, height - 1)
    x0 = np.clip(x0, 0, width - 1)
    y0 = np.clip(y0, 0, height - 1)
    idx = np.stack([y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1], axis=-1)
    w = np.stack([(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy], axis=-1)
    return idx, w


def sample_texture(tex: MaterialTexture, uv: np.ndarray) -> MaterialSample:
    idx, w = bilinear_weights(uv, tex.width, tex.height)
    alb = tex.albedo.reshape(3, -1)
    albedo = np.einsum("c...k,...k->...c", alb[:, idx], w) if idx.ndim > 1 else alb[:, idx] @ w
    metallic = np.sum(tex.metallic.reshape(-1)[idx] * w, axis=-1)
    roughness = np.sum(tex.roughness.reshape(-1)[idx] * w, axis=-1)
    return MaterialSample(albedo=albedo, metallic=metallic, roughness=roughness)


# ---------------------------------------------------------------------------
# camera


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera; +z is world up, image rows scan top to bottom."""

    position: np.ndarray
    target: np.ndarray
    up: np.ndarray
    fov: float  # vertical, radians
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=np.float64))
        object.__setattr__(self, "up", np.asarray(self.up, dtype=np.float64))
        if np.allclose(self.position, self.target):
            raise ValueError("camera position equals target")
        if not (0.0 < self.fov < math.pi):
            raise ValueError("fov must be in (0, pi)")

    def basis(self):
        fwd = normalize(self.target - self.position)
        right = normalize(np.cross(fwd, self.up))
        upv = np.cross(right, fwd)
        return fwd, right, upv

    def rays(self):
        """Pixel-center primary rays, row-major. Returns (origins, dirs), (N, 3)."""
        fwd, right, upv = self.basis()
        tan_half = math.tan(self.fov / 2.0)
        aspect = self.width / self.height
        ix = (np.arange(self.width) + 0.5) / self.width * 2.0 - 1.0
        iy = 1.0 - (np.arange(self.height) + 0.5) / self.height * 2.0
        gx, gy = np.meshgrid(ix * tan_half * aspect, iy * tan_half)
        d = fwd + gx[..., None] * right + gy[..., None] * upv
        d = d / np.linalg.norm(d, axis=-1, keepdims=True)
        d = d.reshape(-1, 3)
        o = np.broadcast_to(self.position, d.shape).copy()
        return o, d

    def to_dict(self):
        return {
            "position": self.position.tolist(),
            "target": self.target.tolist(),
            "up": self.up.tolist(),
            "fov": self.fov,
            "width": self.width,
            "height": self.height,
        }

    @staticmethod
    def from_dict(d) -> "CameraView":
        return CameraView(
            position=d["position"], target=d["target"], up=d.get("up", [0, 0, 1]),
            fov=d["fov"], width=d["width"], height=d["height"],
        )


def generate_orbit(n_azimuths: int, elevations_deg, radius: float, fov: float,
                   resolution: int) -> list[CameraView]:
    """Orbit cameras: uniform azimuths starting at 0, one ring per elevation,
    all looking at the origin with +z up."""
    if n_azimuths < 1:
        raise ValueError("n_azimuths must be >= 1")
    if radius <= 0:
        raise ValueError("radius must be positive")
    views = []
    for elev in elevations_deg:
        el = math.radians(elev)
        for j in range(n_azimuths):
            az = 2.0 * math.pi * j / n_azimuths
            pos = radius * np.array(
                [math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)]
            )
            views.append(
                CameraView(pos, np.zeros(3), np.array([0.0, 0.0, 1.0]), fov, resolution, resolution)
            )
    return views


# ---------------------------------------------------------------------------
# intersection


@dataclass
class HitInfo:
    """Vectorized closest-hit record; arrays indexed per ray."""

    hit: np.ndarray   # (N,) bool
    t: np.ndarray     # (N,) distance, inf on miss
    tri: np.ndarray   # (N,) triangle index, -1 on miss
    bu: np.ndarray    # (N,) barycentric of corner 1
    bv: np.ndarray    # (N,) barycentric of corner 2


def _moller_trumbore(orig, d, a, e1, e2, eps=1e-12):
    """All-pairs ray/triangle test. orig,d: (N,3); a,e1,e2: (M,3)."""
    p = np.cross(d[:, None, :], e2[None])             # (N, M, 3)
    det = np.einsum("mk,nmk->nm", e1, p)
    s = orig[:, None, :] - a[None]
    q = np.cross(s, e1[None])
    inv = np.where(np.abs(det) > eps, 1.0 / np.where(det == 0, 1.0, det), 0.0)
    u = np.einsum("nmk,nmk->nm", s, p) * inv
    v = np.einsum("nk,nmk->nm", d, q) * inv
    t = np.einsum("mk,nmk->nm", e2, q) * inv
    ok = (np.abs(det) > eps) & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-9)
    return ok, t, u, v


def _brute_intersect(mesh, orig, d, tri_ids=None):
    a, b, c = mesh.triangle_corners()
    if tri_ids is not None:
        a, b, c = a[tri_ids], b[tri_ids], c[tri_ids]
    e1, e2 = b - a, c - a
    n = len(orig)
    out = HitInfo(
        hit=np.zeros(n, bool), t=np.full(n, np.inf), tri=np.full(n, -1, np.int64),
        bu=np.zeros(n), bv=np.zeros(n),
    )
    m = max(len(a), 1)
    step = max(1, _RAY_CHUNK_PAIRS // m)
    for s0 in range(0, n, step):
        sl = slice(s0, min(s0 + step, n))
        ok, t, u, v = _moller_trumbore(orig[sl], d[sl], a, e1, e2)
        t = np.where(ok, t, np.inf)
        best = np.argmin(t, axis=1)
        rows = np.arange(t.shape[0])
        tb = t[rows, best]
        hit = np.isfinite(tb)
        out.hit[sl] = hit
        out.t[sl] = tb
        ids = best if tri_ids is None else np.asarray(tri_ids)[best]
        out.tri[sl] = np.where(hit, ids, -1)
        out.bu[sl] = np.where(hit, u[rows, best], 0.0)
        out.bv[sl] = np.where(hit, v[rows, best], 0.0)
    return out


class _Bvh:
    """Median-split BVH over triangle centroids; subset-recursive traversal."""

    def __init__(self, mesh: TriangleMesh):
        a, b, c = mesh.triangle_corners()
        self.mesh = mesh
        lo = np.minimum(np.minimum(a, b), c)
        hi = np.maximum(np.maximum(a, b), c)
        cent = (a + b + c) / 3.0
        order = np.arange(mesh.n_triangles)
        self.nodes = []  # (bb_lo, bb_hi, left, right, start, end)
        self._build(order, lo, hi, cent)
        self.order = order  # permuted in place by _build

    def _build(self, order, lo, hi, cent, start=0, end=None):
        if end is None:
            end = len(order)
        idx = order[start:end]
        bb_lo = lo[idx].min(axis=0)
        bb_hi = hi[idx].max(axis=0)
        node = len(self.nodes)
        self.nodes.append([bb_lo, bb_hi, -1, -1, start, end])
        if end - start > _BVH_LEAF_SIZE:
            axis = int(np.argmax(bb_hi - bb_lo))
            key = cent[idx][:, axis]
            perm = np.argsort(key, kind="stable")
            order[start:end] = idx[perm]
            mid = (start + end) // 2
            self.nodes[node][2] = self._build(order, lo, hi, cent, start, mid)
            self.nodes[node][3] = self._build(order, lo, hi, cent, mid, end)
        return node

    def intersect(self, orig, d):
        n = len(orig)
        out = HitInfo(
            hit=np.zeros(n, bool), t=np.full(n, np.inf), tri=np.full(n, -1, np.int64),
            bu=np.zeros(n), bv=np.zeros(n),
        )
        inv_d = np.where(d != 0, 1.0 / np.where(d == 0, 1.0, d), np.inf)
        self._walk(0, np.arange(n), orig, d, inv_d, out)
        return out

    def _walk(self, node_id, rays, orig, d, inv_d, out):
        if rays.size == 0:
            return
        bb_lo, bb_hi, left, right, start, end = self.nodes[node_id]
        t0 = (bb_lo - orig[rays]) * inv_d[rays]
        t1 = (bb_hi - orig[rays]) * inv_d[rays]
        tmin = np.minimum(t0, t1).max(axis=1)
        tmax = np.maximum(t0, t1).min(axis=1)
        alive = rays[(tmax >= np.maximum(tmin, 0.0)) & (tmin < out.t[rays])]
        if alive.size == 0:
            return
        if left < 0:
            tri_ids = self.order[start:end]
            sub = _brute_intersect(self.mesh, orig[alive], d[alive], tri_ids)
            better = sub.hit & (sub.t < out.t[alive])
            upd = alive[better]
            out.hit[upd] = True
            out.t[upd] = sub.t[better]
            out.tri[upd] = sub.tri[better]
            out.bu[upd] = sub.bu[better]
            out.bv[upd] = sub.bv[better]
        else:
            self._walk(left, alive, orig, d, inv_d, out)
            self._walk(right, alive, orig, d, inv_d, out)


def intersect_rays(mesh: TriangleMesh, origins: np.ndarray, dirs: np.ndarray) -> HitInfo:
    """Nearest hit per ray; brute force or BVH depending on mesh size."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    if mesh.n_triangles > BVH_TRIANGLE_THRESHOLD:
        return mesh.bvh().intersect(origins, dirs)
    return _brute_intersect(mesh, origins, dirs)


@dataclass(frozen=True)
class SurfacePoint:
    position: np.ndarray
    normal: np.ndarray
    uv: tuple
    material: MaterialSample | None
    flipped: bool = False  # normal was turned toward the ray (back-face hit)


def interpolate_hits(mesh: TriangleMesh, info: HitInfo, dirs: np.ndarray):
    """Interpolated position/normal/uv arrays for the hit subset of rays.

    Normals are unitized and flipped toward the incoming ray on back-face
    hits; returns (position, normal, uv, flipped) over hit rays only.
    """
    sel = info.hit
    f = mesh.faces[info.tri[sel]]
    w0 = (1.0 - info.bu[sel] - info.bv[sel])[:, None]
    w1 = info.bu[sel][:, None]
    w2 = info.bv[sel][:, None]
    pos = w0 * mesh.vertices[f[:, 0]] + w1 * mesh.vertices[f[:, 1]] + w2 * mesh.vertices[f[:, 2]]
    nrm = w0 * mesh.normals[f[:, 0]] + w1 * mesh.normals[f[:, 1]] + w2 * mesh.normals[f[:, 2]]
    ln = np.linalg.norm(nrm, axis=-1, keepdims=True)
    ln[ln == 0] = 1.0
    nrm = nrm / ln
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)[sel]
    flipped = np.sum(nrm * d, axis=-1) > 0.0
    nrm = np.where(flipped[:, None], -nrm, nrm)
    uv = w0 * mesh.uvs[f[:, 0]] + w1 * mesh.uvs[f[:, 1]] + w2 * mesh.uvs[f[:, 2]]
    return pos, nrm, uv, flipped


def ray_cast(mesh: TriangleMesh, origin, direction, textures: MaterialTexture | None = None):
    """Nearest intersection of a single ray, or None on miss."""
    o = np.asarray(origin, dtype=np.float64).reshape(1, 3)
    d = np.asarray(direction, dtype=np.float64).reshape(1, 3)
    info = intersect_rays(mesh, o, d)
    if not info.hit[0]:
        return None
    pos, nrm, uv, flipped = interpolate_hits(mesh, info, d)
    material = None
    if textures is not None:
        material = sample_texture(textures, uv[0])
    return SurfacePoint(
        position=pos[0], normal=nrm[0], uv=(float(uv[0, 0]), float(uv[0, 1])),
        material=material, flipped=bool(flipped[0]),
    )


# ---------------------------------------------------------------------------
# OBJ I/O (v/vn/vt/f subset, polygons fan-triangulated)


def mesh_load(path: str) -> TriangleMesh:
    positions, texcoords, normals = [], [], []
    corner_map: dict[tuple, int] = {}
    verts, vert_uv, vert_n, faces = [], [], [], []

    def corner(token: str, lineno: int) -> int:
        parts = token.split("/")
        try:
            vi = int(parts[0])
            ti = int(parts[1]) if len(parts) > 1 and parts[1] else None
            ni = int(parts[2]) if len(parts) > 2 and parts[2] else None
        except ValueError as e:
            raise MeshFormatError(f"{path}:{lineno}: bad face corner {token!r}") from e
        if vi == 0 or ti == 0 or ni == 0:
            raise MeshFormatError(f"{path}:{lineno}: OBJ indices are 1-based")
        def resolve(i, n):
            if i is None:
                return -1
            j = i - 1 if i > 0 else n + i
            if not (0 <= j < n):
                raise MeshFormatError(f"{path}:{lineno}: index {i} out of range")
            return j
        key = (resolve(vi, len(positions)), resolve(ti, len(texcoords)), resolve(ni, len(normals)))
        if key not in corner_map:
            corner_map[key] = len(verts)
            verts.append(positions[key[0]])
            vert_uv.append(texcoords[key[1]] if key[1] >= 0 else (0.0, 0.0))
            vert_n.append(normals[key[2]] if key[2] >= 0 else None)
        return corner_map[key]

    with open(path, "r", encoding="utf-8", errors="replace") as fobj:
        for lineno, line in enumerate(fobj, 1):
            tok = line.split()
            if not tok or tok[0].startswith("#"):
                continue
            try:
                if tok[0] == "v":
                    positions.append(tuple(float(x) for x in tok[1:4]))
                elif tok[0] == "vt":
                    texcoords.append(tuple(float(x) for x in tok[1:3]))
                elif tok[0] == "vn":
                    normals.append(tuple(float(x) for x in tok[1:4]))
                elif tok[0] == "f":
                    cs = [corner(t, lineno) for t in tok[1:]]
                    if len(cs) < 3:
                        raise MeshFormatError(f"{path}:{lineno}: face with < 3 corners")
                    for k in range(1, len(cs) - 1):
                        faces.append((cs[0], cs[k], cs[k + 1]))
            except (ValueError, IndexError) as e:
                raise MeshFormatError(f"{path}:{lineno}: malformed line {line!r}") from e
    if not faces:
        raise MeshFormatError(f"{path}: no faces")
    v = np.asarray(verts, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if any(n is None for n in vert_n):
        nrm = compute_vertex_normals(v, f)
    else:
        nrm = np.asarray(vert_n, dtype=np.float64)
        ln = np.linalg.norm(nrm, axis=-1, keepdims=True)
        ln[ln == 0] = 1.0
        nrm = nrm / ln
    return TriangleMesh(v, nrm, np.asarray(vert_uv, dtype=np.float64), f)


def mesh_save(mesh: TriangleMesh, path: str) -> None:
    lines = []
    for p in mesh.vertices:
        lines.append(f"v {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
    for t in mesh.uvs:
        lines.append(f"vt {t[0]:.9g} {t[1]:.9g}")
    for n in mesh.normals:
        lines.append(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}")
    for f in mesh.faces:
        a, b, c = (int(i) + 1 for i in f)
        lines.append(f"f {a}/{a}/{a} {b}/{b}/{b} {c}/{c}/{c}")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="ascii") as fobj:
        fobj.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# primitives


def primitive_sphere(subdiv: int = 16) -> TriangleMesh:
    """Unit-radius UV sphere: (subdiv+1) rings x (2*subdiv+1) seam-duplicated
    columns; vertex count is exactly (subdiv+1)*(2*subdiv+1)."""
    rings, segs = subdiv, 2 * subdiv
    i = np.arange(rings + 1)
    j = np.arange(segs + 1)
    theta = np.pi * i / rings
    phi = 2.0 * np.pi * j / segs
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    sp, cp = np.sin(phi)[None, :], np.cos(phi)[None, :]
    x = (st * cp).ravel()
    y = (st * sp).ravel()
    z = np.broadcast_to(ct, (rings + 1, segs + 1)).ravel()
    v = np.stack([x, y, z], axis=-1)
    u = np.broadcast_to(j / segs, (rings + 1, segs + 1)).ravel()
    w = np.broadcast_to(1.0 - i[:, None] / rings, (rings + 1, segs + 1)).ravel()
    uv = np.stack([u, w], axis=-1)
    faces = []
    for ii in range(rings):
        for jj in range(segs):
            a = ii * (segs + 1) + jj
            b = a + 1
            c = a + segs + 1
            d = c + 1
            if ii > 0:
                faces.append((a, c, b))
            if ii < rings - 1:
                faces.append((b, c, d))
    return TriangleMesh(v, v.copy(), uv, np.asarray(faces, dtype=np.int64))


def primitive_cube() -> TriangleMesh:
    """Unit cube (side 1, centered at origin), 4 verts per face."""
    verts, normals, uvs, faces = [], [], [], []
    for axis in range(3):
        for sgn in (1.0, -1.0):
            n = np.zeros(3)
            n[axis] = sgn
            t = np.zeros(3)
            t[(axis + 1) % 3] = 1.0
            b = np.cross(n, t)
            base = len(verts)
            for (du, dv) in ((-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)):
                verts.append(0.5 * n + du * t + dv * b)
                normals.append(n)
                uvs.append((du + 0.5, dv + 0.5))
            faces.append((base, base + 1, base + 2))
            faces.append((base, base + 2, base + 3))
    return TriangleMesh(
        np.asarray(verts), np.asarray(normals), np.asarray(uvs), np.asarray(faces, dtype=np.int64)
    )


# ---------------------------------------------------------------------------
# scene description


@dataclass
class Scene:
    mesh: TriangleMesh
    textures: MaterialTexture
    lights: lighting.LightSet
    seed: int = 0
    n_diffuse_samples: int = lighting.DEFAULT_DIFFUSE_SAMPLES
    n_specular_samples: int = lighting.DEFAULT_SPECULAR_SAMPLES
    cameras: list = field(default_factory=list)


def _texture_from_spec(spec, base_dir: str) -> MaterialTexture:
    def load_map(entry, channels):
        if isinstance(entry, str):
            img = image_read(os.path.join(base_dir, entry))
            return img.data.astype(np.float64) if channels == 3 else img.data[0].astype(np.float64)
        return None

    res = int(spec.get("resolution", 64))
    albedo = load_map(spec.get("albedo"), 3)
    metallic = load_map(spec.get("metallic"), 1)
    roughness = load_map(spec.get("roughness"), 1)
    h, w = (albedo.shape[1:] if albedo is not None
            else metallic.shape if metallic is not None
            else roughness.shape if roughness is not None
            else (res, res))
    if albedo is None:
        a = np.asarray(spec.get("albedo", [0.5, 0.5, 0.5]), dtype=np.float64)
        albedo = np.broadcast_to(a[:, None, None], (3, h, w)).copy()
    if metallic is None:
        metallic = np.full((h, w), float(spec.get("metallic", 0.0)))
    if roughness is None:
        roughness = np.full((h, w), float(spec.get("roughness", 0.5)))
    return MaterialTexture(albedo, metallic, roughness)


def _lights_from_spec(spec, base_dir: str) -> lighting.LightSet:
    env = None
    if "environment" in spec:
        e = spec["environment"]
        path = os.path.join(base_dir, e["path"])
        if path.endswith(".hdr"):
            img = lighting.load_radiance_hdr(path)
        else:
            img = image_read(path)
        env = lighting.EnvironmentMap(img, rotation=float(e.get("rotation", 0.0)))
    dl = tuple(
        lighting.DirectionalLight(d["direction"], d["radiance"])
        for d in spec.get("directional", [])
    )
    pl = tuple(
        lighting.PointLight(p["position"], p["intensity"]) for p in spec.get("point", [])
    )
    return lighting.LightSet(environment=env, directional=dl, points=pl)


def scene_from_json(path: str) -> Scene:
    """Load a scene description document; relative paths resolve next to it."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    base = os.path.dirname(os.path.abspath(path))
    mesh = mesh_load(os.path.join(base, doc["mesh"]))
    textures = _texture_from_spec(doc.get("textures", {}), base)
    lights = _lights_from_spec(doc.get("lights", {}), base)
    samples = doc.get("samples", {})
    cameras = [CameraView.from_dict(c) for c in doc.get("cameras", [])]
    if "orbit" in doc:
        o = doc["orbit"]
        cameras += generate_orbit(
            int(o.get("azimuths", 7)), o.get("elevations", [30, 0, -30]),
            float(o.get("radius", 2.7)), math.radians(float(o.get("fov_deg", 40.0))),
            int(o.get("resolution", 256)),
        )
    return Scene(
        mesh=mesh, textures=textures, lights=lights, seed=int(doc.get("seed", 0)),
        n_diffuse_samples=int(samples.get("diffuse", lighting.DEFAULT_DIFFUSE_SAMPLES)),
        n_specular_samples=int(samples.get("specular", lighting.DEFAULT_SPECULAR_SAMPLES)),
        cameras=cameras,
    )
