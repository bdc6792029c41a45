"""Top-down orthographic rasterizer for settled sphere scenes.

Each pixel is supersampled on a fixed k x k grid. Every sample casts a
vertical ray: the sphere surface with the greatest z at that (x, y) wins
the depth test, is shaded Lambertian (`max(0, n.l) * albedo + ambient`),
and samples that hit nothing get the value-noise background. All
randomness (per-particle albedo jitter, background noise) comes from
integer hashes of the scene seed, so repeated renders are byte-identical.

The mm-to-pixel scale is exactly `width / viewport`; the projected disk
of a sphere of radius r mm has pixel radius r * width / viewport.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PilImage

from .errors import ConfigError, IoFailure, ViewportTooSmall
from .physics import SimResult
from .psd import SceneMetadata
from .seeds import hash_unit, hash_unit_grid

_NOISE_CELL_PX = 16  # background value-noise lattice spacing


@dataclass(frozen=True)
class RenderConfig:
    width: int = 512
    height: int = 512
    viewport: float = 320.0               # mm covered by the image width
    light_direction: tuple[float, float, float] = (-1.0, -1.0, 2.5)
    ambient: float = 0.25
    background_base_albedo: float = 0.35
    background_noise_amplitude: float = 0.05
    # grain reflectance folded with key-light exposure; slightly over 1 so
    # grains overexpose against the table, as granule inspection rigs do
    particle_base_albedo: float = 1.05
    albedo_jitter: float = 0.15
    antialias_samples: int = 4             # perfect square; fixed grid

    def __post_init__(self):
        if self.width < 64 or self.height < 64:
            raise ConfigError("width and height must be >= 64")
        if self.antialias_samples < 1:
            raise ConfigError("antialias_samples must be >= 1")
        s = math.isqrt(self.antialias_samples)
        if s * s != self.antialias_samples:
            raise ConfigError("antialias_samples must be a perfect square (fixed grid)")
        if self.viewport <= 0:
            raise ConfigError("viewport must be > 0")

    @property
    def mm_per_pixel(self) -> float:
        return self.viewport / self.width


@dataclass(frozen=True)
class Image:
    """8-bit RGB image; `pixels` is a (height, width, 3) uint8 array."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.shape != (self.height, self.width, 3) or self.pixels.dtype != np.uint8:
            raise ConfigError("pixels must be a (height, width, 3) uint8 array")

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()


def _background(cfg: RenderConfig, scene_seed: int, sub: int) -> np.ndarray:
    """Seeded value noise over the pixel lattice, at subsample resolution."""
    hs, ws = cfg.height * sub, cfg.width * sub
    gy = (np.arange(hs, dtype=np.float64) + 0.5) / (sub * _NOISE_CELL_PX)
    gx = (np.arange(ws, dtype=np.float64) + 0.5) / (sub * _NOISE_CELL_PX)
    iy = np.floor(gy).astype(np.int64)
    ix = np.floor(gx).astype(np.int64)
    ty = gy - iy
    tx = gx - ix
    # smoothstep weights
    ty = ty * ty * (3.0 - 2.0 * ty)
    tx = tx * tx * (3.0 - 2.0 * tx)

    lat_x = np.arange(int(ix.max()) + 2, dtype=np.int64)
    lat_y = np.arange(int(iy.max()) + 2, dtype=np.int64)
    lattice = hash_unit_grid(
        scene_seed,
        np.broadcast_to(lat_x[None, :], (lat_y.size, lat_x.size)),
        np.broadcast_to(lat_y[:, None], (lat_y.size, lat_x.size)),
    )
    v00 = lattice[iy[:, None], ix[None, :]]
    v10 = lattice[iy[:, None], ix[None, :] + 1]
    v01 = lattice[iy[:, None] + 1, ix[None, :]]
    v11 = lattice[iy[:, None] + 1, ix[None, :] + 1]
    wx = tx[None, :]
    wy = ty[:, None]
    value = (v00 * (1 - wx) + v10 * wx) * (1 - wy) + (v01 * (1 - wx) + v11 * wx) * wy
    return np.clip(cfg.background_base_albedo + cfg.background_noise_amplitude * value, 0.0, 1.0)


def render(result: SimResult, meta: SceneMetadata, cfg: RenderConfig, scene_seed: int) -> Image:
    """Rasterize a settled scene to an 8-bit RGB image.

    Raises ViewportTooSmall when the viewport does not cover the table.
    """
    if cfg.viewport < meta.table_size:
        raise ViewportTooSmall(
            f"viewport {cfg.viewport} mm does not cover table {meta.table_size} mm"
        )
    sub = math.isqrt(cfg.antialias_samples)
    hs, ws = cfg.height * sub, cfg.width * sub
    half_vp = cfg.viewport / 2.0

    # world coordinates of subsample centers (x along columns, y down rows)
    xs = (np.arange(ws, dtype=np.float64) + 0.5) * (cfg.viewport / ws) - half_vp
    ys = half_vp - (np.arange(hs, dtype=np.float64) + 0.5) * (cfg.viewport / hs)

    zbuf = np.full((hs, ws), -np.inf, dtype=np.float64)
    winner = np.full((hs, ws), -1, dtype=np.int64)

    bodies = result.bodies
    n = len(bodies)
    centers = np.array([b.center for b in bodies], dtype=np.float64).reshape(n, 3)
    radii = np.array([b.radius for b in bodies], dtype=np.float64)

    for k in range(n):
        cx, cy, cz = centers[k]
        r = radii[k]
        j0, j1 = np.searchsorted(xs, [cx - r, cx + r])
        # ys is descending; flip to locate the row range
        i0, i1 = np.searchsorted(-ys, [-(cy + r), -(cy - r)])
        if j0 >= j1 or i0 >= i1:
            continue
        dx = xs[j0:j1] - cx
        dy = ys[i0:i1] - cy
        d2 = dy[:, None] ** 2 + dx[None, :] ** 2
        inside = d2 <= r * r
        if not inside.any():
            continue
        zs = np.where(inside, cz + np.sqrt(np.maximum(r * r - d2, 0.0)), -np.inf)
        patch_z = zbuf[i0:i1, j0:j1]
        patch_w = winner[i0:i1, j0:j1]
        better = zs > patch_z
        patch_z[better] = zs[better]
        patch_w[better] = k

    values = _background(cfg, scene_seed, sub)

    hit = winner >= 0
    if hit.any():
        lx, ly, lz = cfg.light_direction
        norm = math.sqrt(lx * lx + ly * ly + lz * lz)
        lx, ly, lz = lx / norm, ly / norm, lz / norm

        albedo = np.array(
            [
                cfg.particle_base_albedo * (1.0 + cfg.albedo_jitter * hash_unit(scene_seed, k))
                for k in range(n)
            ],
            dtype=np.float64,
        )
        iy, ix = np.nonzero(hit)
        idx = winner[iy, ix]
        nx = (xs[ix] - centers[idx, 0]) / radii[idx]
        ny = (ys[iy] - centers[idx, 1]) / radii[idx]
        nz = (zbuf[iy, ix] - centers[idx, 2]) / radii[idx]
        lam = np.maximum(0.0, nx * lx + ny * ly + nz * lz)
        values[iy, ix] = np.clip(lam * albedo[idx] + cfg.ambient, 0.0, 1.0)

    # box-filter the subsample grid down to pixels, quantize to bytes
    pix = values.reshape(cfg.height, sub, cfg.width, sub).mean(axis=(1, 3))
    bytes_gray = np.floor(pix * 255.0 + 0.5).astype(np.uint8)
    rgb = np.repeat(bytes_gray[:, :, None], 3, axis=2)
    return Image(width=cfg.width, height=cfg.height, pixels=np.ascontiguousarray(rgb))


def write_png(img: Image, path) -> None:
    """Write a standard non-interlaced 8-bit RGB PNG."""
    try:
        PilImage.fromarray(img.pixels, mode="RGB").save(path, format="PNG")
    except (OSError, ValueError) as e:
        raise IoFailure(f"cannot write PNG to {path}: {e}") from e


def read_png(path) -> Image:
    try:
        with PilImage.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as e:
        raise IoFailure(f"cannot read PNG from {path}: {e}") from e
    return Image(width=arr.shape[1], height=arr.shape[0], pixels=arr)
