"""Ground-truth dynamic scenes evaluated on the hr-pixel grid.

A scene is a background field plus scripted sprites moving along
piecewise-linear trajectories.  Sprite placement snaps to the nearest
hr-pixel, so the field is piecewise constant in time and evaluation results
can be cached per sprite-position state.  All intensities live in [0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SCENE_SCHEMA = 1
_CACHE_CAP = 256


@dataclass(frozen=True)
class Sprite:
    """An image blitted over the background, anchored at its center."""

    image: np.ndarray                      # (h, w) float in [0, 1]
    path: tuple[tuple[float, float, float], ...]  # knots (t, x, y), linearly interpolated
    start: float = -np.inf                 # visible window; clamped interpolation inside
    stop: float = np.inf

    def __post_init__(self):
        self.image.flags.writeable = False
        if len(self.path) == 0:
            raise ValueError("sprite path needs at least one knot")
        ts = [k[0] for k in self.path]
        if sorted(ts) != ts:
            raise ValueError("sprite path knots must be time-ordered")

    def position(self, t: float) -> tuple[int, int]:
        """Center (x, y) at time t, snapped to the nearest hr-pixel."""
        ts = np.array([k[0] for k in self.path])
        xs = np.array([k[1] for k in self.path])
        ys = np.array([k[2] for k in self.path])
        x = float(np.interp(t, ts, xs))
        y = float(np.interp(t, ts, ys))
        return (int(round(x)), int(round(y)))

    def visible(self, t: float) -> bool:
        return self.start <= t <= self.stop


class DynamicScene:
    """Background plus sprites; evaluate(t) is pure and deterministic."""

    def __init__(self, background: np.ndarray, sprites=()):
        bg = np.asarray(background, dtype=np.float64)
        if bg.ndim != 2:
            raise ValueError("background must be a 2D intensity field")
        self.background = np.clip(bg, 0.0, 1.0)
        self.background.flags.writeable = False
        self.height, self.width = self.background.shape
        self.sprites = tuple(sprites)
        self._cache: dict[tuple, np.ndarray] = {}

    def state_key(self, t: float) -> tuple:
        """Hashable snapshot of everything evaluate(t) depends on."""
        return tuple(
            (s.position(t) if s.visible(t) else None) for s in self.sprites
        )

    def evaluate(self, t: float) -> np.ndarray:
        """Scene field at time t as an (H, W) array in [0, 1]."""
        if t < 0:
            raise ValueError("scene time must be non-negative")
        key = self.state_key(t)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        out = self.background.copy()
        for sprite, pos in zip(self.sprites, key):
            if pos is None:
                continue
            img = sprite.image
            h, w = img.shape
            x0 = pos[0] - w // 2
            y0 = pos[1] - h // 2
            sx0, sy0 = max(0, -x0), max(0, -y0)
            dx0, dy0 = max(0, x0), max(0, y0)
            dx1 = min(self.width, x0 + w)
            dy1 = min(self.height, y0 + h)
            if dx1 <= dx0 or dy1 <= dy0:
                continue
            out[dy0:dy1, dx0:dx1] = img[sy0:sy0 + (dy1 - dy0), sx0:sx0 + (dx1 - dx0)]
        np.clip(out, 0.0, 1.0, out=out)
        out.flags.writeable = False
        if len(self._cache) >= _CACHE_CAP:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = out
        return out

    def evaluate_flat(self, t: float) -> np.ndarray:
        return self.evaluate(t).reshape(-1)

    def state_ids(self, ts: np.ndarray) -> np.ndarray:
        """Integer state id per sample time; equal ids mean identical fields.

        Vectorized equivalent of calling state_key at every time: used by the
        detector to batch pattern ticks between sprite movements.
        """
        ts = np.asarray(ts, dtype=np.float64)
        if not self.sprites:
            return np.zeros(ts.size, dtype=np.int64)
        cols = []
        for s in self.sprites:
            kt = np.array([k[0] for k in s.path])
            kx = np.array([k[1] for k in s.path])
            ky = np.array([k[2] for k in s.path])
            x = np.rint(np.interp(ts, kt, kx)).astype(np.int64)
            y = np.rint(np.interp(ts, kt, ky)).astype(np.int64)
            vis = (ts >= s.start) & (ts <= s.stop)
            sentinel = np.iinfo(np.int64).min
            cols.append(np.where(vis, x, sentinel))
            cols.append(np.where(vis, y, sentinel))
        state = np.stack(cols, axis=1)
        _, ids = np.unique(state, axis=0, return_inverse=True)
        return ids.reshape(ts.size)

    @property
    def static(self) -> bool:
        return len(self.sprites) == 0


# ---------------------------------------------------------------------------
# image ingestion

def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary (P5) PGM file")
    # header: magic, width, height, maxval; '#' comments allowed
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval < 256:
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    else:
        raw = np.frombuffer(data, dtype=">u2", count=width * height, offset=pos)
    return raw.reshape(height, width).astype(np.float64) / maxval


def _read_png(path: Path) -> np.ndarray:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover
        raise ValueError(f"{path}: PNG input needs pillow installed") from exc
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    # ITU-R 601 luma
    return arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114


def _area_average(img: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Exact area-weighted resample of a 2D field to (th, tw)."""

    def weights(src: int, dst: int) -> np.ndarray:
        w = np.zeros((dst, src))
        scale = src / dst
        for i in range(dst):
            lo, hi = i * scale, (i + 1) * scale
            j0, j1 = int(np.floor(lo)), int(np.ceil(hi))
            for j in range(j0, min(j1, src)):
                w[i, j] = min(hi, j + 1) - max(lo, j)
        return w / scale

    return weights(img.shape[0], th) @ img @ weights(img.shape[1], tw).T


def load_image(path, target_width: int, target_height: int) -> np.ndarray:
    """Load a grayscale image, area-resample to target size, normalize to [0,1].

    PGM (binary P5) always works; PNG requires pillow.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"image not found: {p}")
    try:
        if p.suffix.lower() == ".pgm":
            img = _read_pgm(p)
        elif p.suffix.lower() == ".png":
            img = _read_png(p)
        else:
            raise ValueError(f"unsupported image format: {p.suffix}")
    except (ValueError, OSError) as exc:
        raise ValueError(f"cannot ingest {p}: {exc}") from exc
    out = _area_average(img, target_height, target_width)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# scene scripts

def load_scene(path) -> DynamicScene:
    """Build a scene from a JSON script.

    Schema: {"width", "height", "background": <path or constant>,
             "sprites": [{"image": <path>, "path": [{"t","x","y"}...],
                          "z": <paint order>, "start"?, "stop"?}]}
    """
    p = Path(path)
    doc = json.loads(p.read_text())
    width = int(doc["width"])
    height = int(doc["height"])
    bg = doc.get("background", 0.0)
    if isinstance(bg, (int, float)):
        background = np.full((height, width), float(bg))
    else:
        background = load_image(p.parent / bg, width, height)
    sprites = []
    for spec in sorted(doc.get("sprites", []), key=lambda s: s.get("z", 0)):
        img_doc = spec["image"]
        if isinstance(img_doc, str):
            img = load_image(p.parent / img_doc, *_sprite_size(spec))
        else:
            img = np.asarray(img_doc, dtype=np.float64)
        knots = tuple((float(k["t"]), float(k["x"]), float(k["y"])) for k in spec["path"])
        sprites.append(
            Sprite(
                image=np.clip(img, 0.0, 1.0),
                path=knots,
                start=float(spec.get("start", -np.inf)),
                stop=float(spec.get("stop", np.inf)),
            )
        )
    return DynamicScene(background, sprites)


def _sprite_size(spec) -> tuple[int, int]:
    size = spec.get("size")
    if not size:
        raise ValueError("sprite with an image file needs an explicit [w, h] size")
    return int(size[0]), int(size[1])


# ---------------------------------------------------------------------------
# procedural scenes used by the CLI demos and the test suite

def make_static_scene(width=128, height=128, seed=0, smooth=3) -> DynamicScene:
    """Smooth random static scene (box-blurred uniform noise)."""
    rng = np.random.default_rng(seed)
    img = rng.uniform(0.0, 1.0, size=(height, width))
    for _ in range(smooth):
        img = (
            img
            + np.roll(img, 1, 0) + np.roll(img, -1, 0)
            + np.roll(img, 1, 1) + np.roll(img, -1, 1)
        ) / 5.0
    img = (img - img.min()) / max(np.ptp(img), 1e-12)
    return DynamicScene(img)


def make_moving_square_scene(
    width=128, height=128, square=16, knots=((0.0, 16, 57), (12.0, 112, 57), (20.0, 48, 57)),
    background=0.08,
) -> DynamicScene:
    """Bright square sweeping over a dark background at ~8 hr-pixels/s."""
    img = np.full((square, square), 0.95)
    bg = np.full((height, width), background)
    return DynamicScene(bg, [Sprite(image=img, path=tuple(knots))])


def make_moving_sign_scene(width=128, height=128) -> DynamicScene:
    """Bright sign with bar 'lettering' swept across a detailed static backdrop."""
    rng = np.random.default_rng(11)
    bg = np.full((height, width), 0.15)
    # static calibration-style grid in one corner
    bg[8:40:4, 8:40] = 0.7
    bg[8:40, 8:40:4] = 0.7
    bg[88:120, 88:120] = 0.25 + 0.5 * ((np.indices((32, 32)).sum(axis=0) // 2) % 2)
    sign = np.full((20, 34), 0.9)
    for k, x in enumerate(range(4, 30, 5)):  # vertical bars as letter strokes
        sign[3 + (k % 2) * 2:17 - (k % 2) * 2, x:x + 2] = 0.05
    return DynamicScene(bg, [Sprite(image=sign, path=((0.0, 20, 72), (16.0, 108, 72)))])


def make_detail_corner_scene(width=128, height=128) -> DynamicScene:
    """Static scene whose fine detail is concentrated in two corners."""
    bg = np.full((height, width), 0.4)
    ii = np.indices((40, 40)).sum(axis=0)
    bg[4:44, 4:44] = np.where(ii % 2 == 0, 0.95, 0.05)[: 40, : 40]
    bg[-44:-4, -44:-4] = np.where((ii // 3) % 2 == 0, 0.9, 0.1)
    return DynamicScene(bg)


BUILTIN_SCENES = {
    "static": make_static_scene,
    "moving-square": make_moving_square_scene,
    "moving-sign": make_moving_sign_scene,
    "detail-corners": make_detail_corner_scene,
}


def resolve_scene(spec: str) -> DynamicScene:
    """Scene from 'builtin:<name>' or a JSON script path."""
    if spec.startswith("builtin:"):
        name = spec.split(":", 1)[1]
        if name not in BUILTIN_SCENES:
            raise ValueError(f"unknown builtin scene '{name}' (have {sorted(BUILTIN_SCENES)})")
        return BUILTIN_SCENES[name]()
    return load_scene(spec)
