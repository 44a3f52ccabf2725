"""Vector/color math and the planar float-image container shared by all modules.

All color math is linear radiometric; sRGB is applied only at PNG export.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

PBRF_MAGIC = "PBRF"


class ImageFormatError(Exception):
    """Raised on malformed .pbrf headers or truncated payloads."""


# ---------------------------------------------------------------------------
# vector helpers (operate on arrays of shape (..., 3), float64)


def vec3(x, y, z) -> np.ndarray:
    return np.array([x, y, z], dtype=np.float64)


def dot(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(a * b, axis=-1)


def length(v: np.ndarray) -> np.ndarray:
    return np.sqrt(dot(v, v))


def normalize(v: np.ndarray) -> np.ndarray:
    """Unit vector parallel to v. Raises ValueError on zero-length input."""
    n = length(v)
    if np.any(n == 0.0):
        raise ValueError("cannot normalize zero-length vector")
    return v / n[..., None]


def half_vector(wi: np.ndarray, wo: np.ndarray) -> np.ndarray:
    """Normalized vector halfway between two unit directions."""
    s = wi + wo
    n = length(s)
    if np.any(n < 1e-12):
        raise ValueError("half vector undefined for opposite directions")
    return s / n[..., None]


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.cross(a, b)


def reflect(w: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Mirror direction of w about normal n (both unit)."""
    return 2.0 * dot(w, n)[..., None] * n - w


def orthonormal_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two tangents completing n (..., 3) to a right-handed frame.

    Branchless Duff et al. construction; stable for all unit n.
    """
    n = np.asarray(n, dtype=np.float64)
    s = np.where(n[..., 2] >= 0.0, 1.0, -1.0)
    a = -1.0 / (s + n[..., 2])
    b = n[..., 0] * n[..., 1] * a
    t = np.stack(
        [1.0 + s * n[..., 0] ** 2 * a, s * b, -s * n[..., 0]], axis=-1
    )
    bt = np.stack([b, s + n[..., 1] ** 2 * a, -n[..., 1]], axis=-1)
    return t, bt


# ---------------------------------------------------------------------------
# sRGB transfer (encode only; decode provided for PNG-sourced textures)


def srgb_encode(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def srgb_decode(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


# ---------------------------------------------------------------------------
# image container


@dataclass(frozen=True)
class ChannelImage:
    """Planar float image with a foreground mask.

    data has shape (channels, height, width), float32, linear values.
    mask has shape (height, width), bool, True on foreground.
    """

    data: np.ndarray
    mask: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        data = np.ascontiguousarray(np.asarray(self.data, dtype=np.float32))
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] not in (1, 3):
            raise ValueError(f"expected (1|3, h, w) data, got shape {data.shape}")
        mask = self.mask
        if mask is None:
            mask = np.ones(data.shape[1:], dtype=bool)
        mask = np.ascontiguousarray(np.asarray(mask, dtype=bool))
        if mask.shape != data.shape[1:]:
            raise ValueError(f"mask shape {mask.shape} != image shape {data.shape[1:]}")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @staticmethod
    def constant(width: int, height: int, value, mask=None) -> "ChannelImage":
        value = np.atleast_1d(np.asarray(value, dtype=np.float32))
        data = np.broadcast_to(value[:, None, None], (value.size, height, width))
        return ChannelImage(data.copy(), mask)


# ---------------------------------------------------------------------------
# .pbrf I/O: ASCII header + little-endian float32 planes + mask bytes


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write via temp file + rename so partial outputs never land."""
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def image_write(img: ChannelImage, path: str) -> None:
    header = f"{PBRF_MAGIC} {img.width} {img.height} {img.channels}\n".encode("ascii")
    body = img.data.astype("<f4").tobytes()
    mask = img.mask.astype(np.uint8).tobytes()
    atomic_write_bytes(path, header + body + mask)


def image_read(path: str) -> ChannelImage:
    with open(path, "rb") as f:
        header = f.readline()
        parts = header.decode("ascii", errors="replace").split()
        if len(parts) != 4 or parts[0] != PBRF_MAGIC:
            raise ImageFormatError(f"bad pbrf header in {path}: {header!r}")
        try:
            w, h, c = int(parts[1]), int(parts[2]), int(parts[3])
        except ValueError as e:
            raise ImageFormatError(f"bad pbrf dimensions in {path}") from e
        if w <= 0 or h <= 0 or c not in (1, 3) or w * h > 2**28:
            raise ImageFormatError(f"bad pbrf dimensions {w}x{h}x{c} in {path}")
        n = w * h * c
        body = f.read(n * 4)
        if len(body) != n * 4:
            raise ImageFormatError(f"truncated pbrf data in {path}")
        raw_mask = f.read(w * h)
        if len(raw_mask) != w * h:
            raise ImageFormatError(f"truncated pbrf mask in {path}")
    data = np.frombuffer(body, dtype="<f4").reshape(c, h, w)
    mask = np.frombuffer(raw_mask, dtype=np.uint8).reshape(h, w) != 0
    return ChannelImage(data.copy(), mask.copy())


def write_png(img: ChannelImage, path: str, srgb: bool | None = None) -> None:
    """8-bit preview. RGB defaults to sRGB encode, scalar to linear scaling."""
    if srgb is None:
        srgb = img.channels == 3
    x = np.clip(img.data.astype(np.float64), 0.0, 1.0)
    if srgb:
        x = srgb_encode(x)
    px = np.round(x * 255.0).astype(np.uint8)
    if img.channels == 1:
        Image.fromarray(px[0], mode="L").save(path)
    else:
        Image.fromarray(np.moveaxis(px, 0, -1), mode="RGB").save(path)
