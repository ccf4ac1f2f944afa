"""CPU reference renderer for tile-based alpha blending of 2D Gaussian splats.

This is the ground truth the rest of the package scores against. Splats carry
a conic (inverse covariance), an opacity, a color, and a depth. Rendering
walks each tile's depth-sorted splat list front to back and accumulates

    C = sum_i color_i * alpha_i * T_i,   T_{i+1} = T_i * (1 - alpha_i)

with alpha = min(0.99, opacity * exp(power)), power = -0.5*(a*dx^2 + c*dy^2)
- b*dx*dy. Splats with alpha < 1/255 are skipped, and a pixel stops (without
accumulating) as soon as its transmittance would drop below 1e-4. The final
image is C + T * background.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DegenerateWorkload, InvalidRange, SceneFormatError

ALPHA_MAX = 0.99
ALPHA_MIN = 1.0 / 255.0
T_STOP = 1e-4

# Gaussians are culled to tiles by the axis-aligned box of this many standard
# deviations along the covariance's major axis.
CULL_SIGMA = 3.0


@dataclass(frozen=True)
class Splat:
    id: int
    xy: tuple[float, float]
    conic: tuple[float, float, float]
    opacity: float
    color: tuple[float, ...]
    depth: float

    def __post_init__(self):
        a, b, c = self.conic
        if not (0.0 <= self.opacity <= 1.0):
            raise ValueError(f"splat {self.id}: opacity {self.opacity} outside [0, 1]")
        if self.depth <= 0.0:
            raise ValueError(f"splat {self.id}: depth must be positive")
        if a < 0.0 or c < 0.0 or a * c - b * b < 0.0:
            raise ValueError(f"splat {self.id}: conic is not positive semi-definite")


@dataclass(frozen=True)
class Scene:
    splats: tuple[Splat, ...]
    width: int
    height: int
    tile: tuple[int, int] = (16, 16)
    background: tuple[float, ...] = (0.0, 0.0, 0.0)
    channels: int = 3

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dimensions must be at least 1x1")
        if self.tile[0] < 1 or self.tile[1] < 1:
            raise ValueError("tile dimensions must be at least 1x1")
        if len(self.background) != self.channels:
            raise ValueError("background length must match channel count")
        for splat in self.splats:
            if len(splat.color) != self.channels:
                raise ValueError(f"splat {splat.id}: color length != channels")

    @property
    def tiles_x(self) -> int:
        return -(-self.width // self.tile[0])

    @property
    def tiles_y(self) -> int:
        return -(-self.height // self.tile[1])


@dataclass(frozen=True, eq=False)
class RenderOutput:
    image: np.ndarray            # (H, W, C) float64
    final_T: np.ndarray          # (H, W) float64
    n_contrib: np.ndarray        # (H, W) int64, count of alpha-accumulating splats
    per_tile_assigned: np.ndarray    # (tiles_y, tiles_x) int64
    per_pixel_computed: np.ndarray   # (H, W) int64, splats that reached the alpha step


@dataclass(frozen=True)
class WorkloadStats:
    mean_per_tile: float
    var_per_tile: float
    mean_computed_fraction: float
    var_computed_fraction: float


def splat_radius(splat: Splat) -> float:
    """Cull radius: CULL_SIGMA standard deviations along the major axis."""
    a, b, c = splat.conic
    det = a * c - b * b
    if det <= 0.0:
        return math.inf
    # Covariance is the conic's inverse: [[c, -b], [-b, a]] / det.
    cov_a = c / det
    cov_b = -b / det
    cov_c = a / det
    mid = 0.5 * (cov_a + cov_c)
    disc = math.sqrt(max(0.0, (0.5 * (cov_a - cov_c)) ** 2 + cov_b * cov_b))
    return CULL_SIGMA * math.sqrt(max(0.0, mid + disc))


def assign_splats(scene: Scene) -> list[list[int]]:
    """Per-tile splat index lists, sorted ascending by (depth, id).

    A splat lands on every tile whose pixel-center rectangle overlaps the
    axis-aligned box around the splat center with half-width splat_radius.
    """
    tx_size, ty_size = scene.tile
    tiles_x, tiles_y = scene.tiles_x, scene.tiles_y
    assigned: list[list[int]] = [[] for _ in range(tiles_x * tiles_y)]
    for i, splat in enumerate(scene.splats):
        r = splat_radius(splat)
        sx, sy = splat.xy
        if math.isinf(r):
            lo_tx, hi_tx, lo_ty, hi_ty = 0, tiles_x - 1, 0, tiles_y - 1
        else:
            lo_tx = max(0, int(math.floor((sx - r) / tx_size)))
            hi_tx = min(tiles_x - 1, int(math.floor((sx + r) / tx_size)))
            lo_ty = max(0, int(math.floor((sy - r) / ty_size)))
            hi_ty = min(tiles_y - 1, int(math.floor((sy + r) / ty_size)))
        for ty in range(lo_ty, hi_ty + 1):
            y0 = ty * ty_size
            y1 = min(scene.height, y0 + ty_size) - 1
            if sy - r > y1 or sy + r < y0:
                continue
            for tx in range(lo_tx, hi_tx + 1):
                x0 = tx * tx_size
                x1 = min(scene.width, x0 + tx_size) - 1
                if sx - r > x1 or sx + r < x0:
                    continue
                assigned[ty * tiles_x + tx].append(i)
    order = {i: (s.depth, s.id) for i, s in enumerate(scene.splats)}
    for bucket in assigned:
        bucket.sort(key=order.__getitem__)
    return assigned


def render(scene: Scene, assigned: list[list[int]] | None = None) -> RenderOutput:
    """Blend every tile front to back. Deterministic for a given scene."""
    if assigned is None:
        assigned = assign_splats(scene)
    h, w, ch = scene.height, scene.width, scene.channels
    tx_size, ty_size = scene.tile
    tiles_x, tiles_y = scene.tiles_x, scene.tiles_y
    background = np.asarray(scene.background, dtype=np.float64)

    image = np.zeros((h, w, ch))
    final_t = np.ones((h, w))
    n_contrib = np.zeros((h, w), dtype=np.int64)
    computed = np.zeros((h, w), dtype=np.int64)
    per_tile = np.zeros((tiles_y, tiles_x), dtype=np.int64)

    for ty in range(tiles_y):
        for tx in range(tiles_x):
            indices = assigned[ty * tiles_x + tx]
            per_tile[ty, tx] = len(indices)
            x0, x1 = tx * tx_size, min(w, (tx + 1) * tx_size)
            y0, y1 = ty * ty_size, min(h, (ty + 1) * ty_size)
            px, py = np.meshgrid(
                np.arange(x0, x1, dtype=np.float64),
                np.arange(y0, y1, dtype=np.float64),
            )
            px, py = px.ravel(), py.ravel()
            n = px.size
            trans = np.ones(n)
            color_acc = np.zeros((n, ch))
            contrib = np.zeros(n, dtype=np.int64)
            seen = np.zeros(n, dtype=np.int64)
            active = np.ones(n, dtype=bool)

            for i in indices:
                if not active.any():
                    break
                splat = scene.splats[i]
                a, b, c = splat.conic
                dx = splat.xy[0] - px
                dy = splat.xy[1] - py
                power = -0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy
                reach = active & (power <= 0.0)
                seen[reach] += 1
                alpha = np.minimum(
                    ALPHA_MAX, splat.opacity * np.exp(np.minimum(power, 0.0))
                )
                ok = reach & (alpha >= ALPHA_MIN)
                test_t = trans * (1.0 - alpha)
                stop = ok & (test_t < T_STOP)
                acc = ok & ~stop
                if acc.any():
                    weight = (alpha[acc] * trans[acc])[:, None]
                    color_acc[acc] += weight * np.asarray(splat.color)
                    trans[acc] = test_t[acc]
                    contrib[acc] += 1
                active &= ~stop

            tile_image = color_acc + trans[:, None] * background
            shape = (y1 - y0, x1 - x0)
            image[y0:y1, x0:x1] = tile_image.reshape(shape + (ch,))
            final_t[y0:y1, x0:x1] = trans.reshape(shape)
            n_contrib[y0:y1, x0:x1] = contrib.reshape(shape)
            computed[y0:y1, x0:x1] = seen.reshape(shape)

    return RenderOutput(
        image=image,
        final_T=final_t,
        n_contrib=n_contrib,
        per_tile_assigned=per_tile,
        per_pixel_computed=computed,
    )


def workload_stats(scene: Scene, out: RenderOutput) -> WorkloadStats:
    """Population statistics over tiles and pixels.

    The computed fraction is per pixel against its tile's assigned count;
    pixels in empty tiles are excluded from the fraction statistics.
    """
    assigned = out.per_tile_assigned
    if not assigned.any():
        raise DegenerateWorkload("no splats assigned to any tile")
    tx_size, ty_size = scene.tile
    tile_of_pixel = assigned[
        np.arange(scene.height)[:, None] // ty_size,
        np.arange(scene.width)[None, :] // tx_size,
    ]
    mask = tile_of_pixel > 0
    fraction = out.per_pixel_computed[mask] / tile_of_pixel[mask]
    return WorkloadStats(
        mean_per_tile=float(assigned.mean()),
        var_per_tile=float(assigned.var()),
        mean_computed_fraction=float(fraction.mean()),
        var_computed_fraction=float(fraction.var()),
    )


def generate_scene(
    seed: int,
    n: int,
    width: int,
    height: int,
    opacity_range: tuple[float, float] = (0.2, 0.95),
    radius_range: tuple[float, float] = (1.0, 6.0),
    tile: tuple[int, int] = (16, 16),
    channels: int = 3,
    background: Sequence[float] | None = None,
) -> Scene:
    """Reproducible random scene: same seed, same scene, byte for byte."""
    if n < 0:
        raise InvalidRange("splat count must be non-negative")
    if not 0.0 <= opacity_range[0] <= opacity_range[1] <= 1.0:
        raise InvalidRange(f"opacity range {opacity_range} must be inside [0, 1]")
    if not 0.0 < radius_range[0] <= radius_range[1]:
        raise InvalidRange(f"radius range {radius_range} must be positive")
    rng = np.random.default_rng(seed)
    splats = []
    for i in range(n):
        x = rng.uniform(0.0, width)
        y = rng.uniform(0.0, height)
        sx = rng.uniform(*radius_range)
        sy = rng.uniform(*radius_range)
        theta = rng.uniform(0.0, math.pi)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        # Covariance R diag(sx^2, sy^2) R^T, inverted in closed form.
        cov_a = cos_t * cos_t * sx * sx + sin_t * sin_t * sy * sy
        cov_b = cos_t * sin_t * (sx * sx - sy * sy)
        cov_c = sin_t * sin_t * sx * sx + cos_t * cos_t * sy * sy
        det = cov_a * cov_c - cov_b * cov_b
        conic = (cov_c / det, -cov_b / det, cov_a / det)
        splats.append(
            Splat(
                id=i,
                xy=(float(x), float(y)),
                conic=tuple(float(v) for v in conic),
                opacity=float(rng.uniform(*opacity_range)),
                color=tuple(float(v) for v in rng.uniform(0.0, 1.0, channels)),
                depth=float(rng.uniform(0.5, 10.0)),
            )
        )
    return Scene(
        splats=tuple(splats),
        width=width,
        height=height,
        tile=tile,
        background=tuple(background) if background is not None else (0.0,) * channels,
        channels=channels,
    )


# --- scene file format ------------------------------------------------------

def scene_to_dict(scene: Scene) -> dict:
    return {
        "width": scene.width,
        "height": scene.height,
        "tile": list(scene.tile),
        "channels": scene.channels,
        "background": list(scene.background),
        "splats": [
            {
                "id": s.id,
                "xy": list(s.xy),
                "conic": list(s.conic),
                "opacity": s.opacity,
                "color": list(s.color),
                "depth": s.depth,
            }
            for s in scene.splats
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    try:
        splats = tuple(
            Splat(
                id=int(s["id"]),
                xy=(float(s["xy"][0]), float(s["xy"][1])),
                conic=tuple(float(v) for v in s["conic"]),
                opacity=float(s["opacity"]),
                color=tuple(float(v) for v in s["color"]),
                depth=float(s["depth"]),
            )
            for s in data["splats"]
        )
        return Scene(
            splats=splats,
            width=int(data["width"]),
            height=int(data["height"]),
            tile=(int(data["tile"][0]), int(data["tile"][1])),
            background=tuple(float(v) for v in data["background"]),
            channels=int(data["channels"]),
        )
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise SceneFormatError(f"bad scene payload: {exc}") from exc


def save_scene(path: Path | str, scene: Scene) -> None:
    Path(path).write_text(
        json.dumps(scene_to_dict(scene), sort_keys=True, indent=2) + "\n",
        encoding="utf-8",
    )


def load_scene(path: Path | str) -> Scene:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise SceneFormatError(f"cannot read scene {path}: {exc}") from exc
    return scene_from_dict(data)
