"""Synthetic two-domain video datasets: eroded digit volumes and moving colored digits.

Two families are generated as unpaired domain pairs:

* ``volumetric`` -- a digit is rendered on a square canvas and eroded frame by
  frame under a symmetric radius schedule. The ``spherical`` domain erodes
  most at the clip ends (intensity rises to the middle, then decays); the
  ``sandglass`` domain is the complement (decays, then rises).
* ``moving_color`` -- a white digit bounces around a black canvas; the second
  domain shows different digit instances tinted with one palette color per
  clip.

All generation is deterministic: each clip's RNG stream is derived from
(seed, domain index, clip index), so serial and parallel generation produce
identical bytes.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ConfigError, DataError
from .video_core import (
    STORAGE,
    ClipEntry,
    DatasetManifest,
    VideoTensor,
    save_clip,
)

# Shared non-background mask threshold (storage units); the metrics module
# uses the same constant so masks agree across generation and scoring.
BG_THRESHOLD = 10

SPHERICAL = "spherical"
SANDGLASS = "sandglass"

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801

DIGIT_SIZE = 28


@dataclass(frozen=True)
class DigitSource:
    """A collection of 28x28 grayscale digit images with labels."""

    images: np.ndarray  # (n, 28, 28) uint8
    labels: np.ndarray  # (n,) int

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.uint8)
        labels = np.asarray(self.labels)
        if images.ndim != 3 or images.shape[1:] != (DIGIT_SIZE, DIGIT_SIZE):
            raise DataError(f"digit images must be (n, 28, 28), got {images.shape}")
        if images.shape[0] == 0:
            raise DataError("digit collection is empty")
        if labels.shape != (images.shape[0],):
            raise DataError(
                f"{images.shape[0]} images but {labels.shape[0] if labels.ndim else 0} labels"
            )
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.images.shape[0]


def _open_maybe_gzip(path: Path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path: Path, expected_magic: int, expected_dims: int) -> np.ndarray:
    with _open_maybe_gzip(path) as fh:
        header = fh.read(4 * (1 + expected_dims))
        if len(header) < 4 * (1 + expected_dims):
            raise DataError(f"{path}: truncated IDX header")
        magic = struct.unpack(">I", header[:4])[0]
        if magic != expected_magic:
            raise DataError(
                f"{path}: bad IDX magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
            )
        dims = struct.unpack(f">{expected_dims}I", header[4:])
        count = int(np.prod(dims))
        payload = fh.read(count)
        if len(payload) != count:
            raise DataError(
                f"{path}: truncated IDX payload ({len(payload)} of {count} bytes)"
            )
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_digit_archive(images_path: str | Path, labels_path: str | Path) -> DigitSource:
    """Load a big-endian IDX digit archive pair (plain or gzipped)."""
    images = _read_idx(Path(images_path), _IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(Path(labels_path), _IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise DataError(
            f"image count {images.shape[0]} != label count {labels.shape[0]}"
        )
    return DigitSource(images=images, labels=labels.astype(np.int64))


# ---------------------------------------------------------------------------
# Built-in digit glyphs (seven-segment style), so datasets and tests do not
# depend on external archives.

# segment -> (row span, col span) in an upright glyph box
_SEG_GEOM = {
    "a": ((4, 7), (8, 21)),
    "g": ((13, 16), (8, 21)),
    "d": ((22, 25), (8, 21)),
    "f": ((4, 16), (8, 11)),
    "b": ((4, 16), (18, 21)),
    "e": ((13, 25), (8, 11)),
    "c": ((13, 25), (18, 21)),
}

_DIGIT_SEGMENTS = {
    0: "abcdef",
    1: "bc",
    2: "abged",
    3: "abgcd",
    4: "fgbc",
    5: "afgcd",
    6: "afgedc",
    7: "abc",
    8: "abcdefg",
    9: "abcdfg",
}


def _render_glyph(digit: int, shift: tuple[int, int], intensity: int) -> np.ndarray:
    img = np.zeros((DIGIT_SIZE, DIGIT_SIZE), dtype=np.uint8)
    dr, dc = shift
    for seg in _DIGIT_SEGMENTS[digit]:
        (r0, r1), (c0, c1) = _SEG_GEOM[seg]
        img[r0 + dr : r1 + dr, c0 + dc : c1 + dc] = intensity
    return img


def builtin_digits(n: int, seed: int = 0) -> DigitSource:
    """Procedural seven-segment digit instances: digit, jitter, and intensity vary."""
    if n < 1:
        raise ConfigError(f"need at least one digit, got {n}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x51F]))
    images = np.empty((n, DIGIT_SIZE, DIGIT_SIZE), dtype=np.uint8)
    labels = np.empty(n, dtype=np.int64)
    for i in range(n):
        digit = int(rng.integers(0, 10))
        shift = (int(rng.integers(-2, 3)), int(rng.integers(-2, 3)))
        intensity = int(rng.integers(200, 256))
        images[i] = _render_glyph(digit, shift, intensity)
        labels[i] = digit
    return DigitSource(images=images, labels=labels)


# ---------------------------------------------------------------------------
# Grayscale erosion with a disk structuring element


def _disk(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return (yy * yy + xx * xx) <= radius * radius


def erode(img: np.ndarray, radius: int) -> np.ndarray:
    """Grayscale erosion by a disk: each pixel becomes the minimum over its
    disk neighborhood, with out-of-image neighbors counting as 0.
    """
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected a 2D grayscale image, got shape {img.shape}")
    if radius < 0:
        raise ConfigError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return img.copy()
    if radius > min(img.shape) / 2:
        raise ConfigError(
            f"radius {radius} exceeds half the smaller image side {min(img.shape)}"
        )
    return ndimage.grey_erosion(
        img, footprint=_disk(radius), mode="constant", cval=0
    ).astype(img.dtype)


# ---------------------------------------------------------------------------
# Erosion schedules


def _round_half_up(x: np.ndarray | float) -> np.ndarray:
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5).astype(np.int64)


@dataclass(frozen=True)
class ErosionSchedule:
    """Per-frame erosion radius, symmetric in time.

    ``spherical``: radius peaks at the clip ends and vanishes mid-clip, so
    frame intensity rises to the middle and decays again. ``sandglass`` is
    the complementary pattern.
    """

    mode: str
    depth: int
    max_radius: int

    def __post_init__(self):
        if self.mode not in (SPHERICAL, SANDGLASS):
            raise ConfigError(f"unknown erosion mode {self.mode!r}")
        if self.depth < 2:
            raise ConfigError(f"schedule needs depth >= 2, got {self.depth}")
        if self.max_radius < 1:
            raise ConfigError(f"max_radius must be >= 1, got {self.max_radius}")

    def radii(self) -> np.ndarray:
        t = np.arange(self.depth, dtype=np.float64)
        ramp = np.abs(2.0 * t - (self.depth - 1)) / (self.depth - 1)  # 1 at ends, 0 mid
        if self.mode == SPHERICAL:
            return _round_half_up(self.max_radius * ramp)
        return _round_half_up(self.max_radius * (1.0 - ramp))

    def radius_at(self, t: int) -> int:
        if not 0 <= t < self.depth:
            raise ValueError(f"frame {t} outside schedule depth {self.depth}")
        return int(self.radii()[t])

    def intensity_profile(self) -> np.ndarray:
        """Canonical per-frame ink proxy: larger where less is eroded."""
        return (self.max_radius - self.radii()).astype(np.float64)


def default_max_radius(canvas: int) -> int:
    """Radius that scales like 6 pixels on an 84-pixel canvas."""
    return max(1, int(_round_half_up(6.0 * canvas / 84.0)))


def gen_volumetric(
    digit: np.ndarray, schedule: ErosionSchedule, canvas: int = 84
) -> VideoTensor:
    """Erode an upscaled, centered digit frame by frame under the schedule."""
    digit = np.asarray(digit, dtype=np.uint8)
    if digit.ndim != 2 or digit.shape[0] != digit.shape[1]:
        raise DataError(f"digit must be square, got shape {digit.shape}")
    side = digit.shape[0]
    factor = max(1, canvas // side)
    if factor * side > canvas:
        raise ConfigError(f"canvas {canvas} smaller than digit side {side}")
    upscaled = np.repeat(np.repeat(digit, factor, axis=0), factor, axis=1)
    offset = (canvas - upscaled.shape[0]) // 2
    base = np.zeros((canvas, canvas), dtype=np.uint8)
    base[offset : offset + upscaled.shape[0], offset : offset + upscaled.shape[1]] = upscaled

    radii = schedule.radii()
    eroded_by_radius = {int(r): erode(base, int(r)) for r in np.unique(radii)}
    frames = np.stack([eroded_by_radius[int(r)] for r in radii], axis=0)
    return VideoTensor(frames[:, :, :, None], STORAGE)


# ---------------------------------------------------------------------------
# Moving digits


@dataclass(frozen=True)
class MotionSpec:
    """Bouncing-digit dynamics on an h x w canvas.

    Positions are the digit's top-left corner; walls reflect elastically so
    the digit's bounding box never leaves the canvas.
    """

    height: int
    width: int
    row: int
    col: int
    d_row: int
    d_col: int
    depth: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigError("canvas sides must be >= 1")
        if self.depth < 1:
            raise ConfigError(f"frame count must be >= 1, got {self.depth}")
        if self.d_row == 0 or self.d_col == 0:
            raise ConfigError("velocity components must be nonzero integers")
        if self.row < 0 or self.col < 0:
            raise ConfigError("initial position must be non-negative")


def _bounce(pos: int, limit: int, vel: int) -> tuple[int, int]:
    if limit == 0:
        return 0, -vel
    while pos < 0 or pos > limit:
        if pos < 0:
            pos = -pos
        else:
            pos = 2 * limit - pos
        vel = -vel
    return pos, vel


def gen_moving_digit(digit: np.ndarray, motion: MotionSpec) -> VideoTensor:
    """Composite a white digit bouncing on a black canvas; fully deterministic."""
    digit = np.asarray(digit, dtype=np.uint8)
    gh, gw = digit.shape
    if gh > motion.height or gw > motion.width:
        raise DataError(
            f"digit {digit.shape} larger than canvas ({motion.height}, {motion.width})"
        )
    max_r = motion.height - gh
    max_c = motion.width - gw
    if motion.row > max_r or motion.col > max_c:
        raise ConfigError("initial position places the digit outside the canvas")

    frames = np.zeros((motion.depth, motion.height, motion.width), dtype=np.uint8)
    r, c = motion.row, motion.col
    vr, vc = motion.d_row, motion.d_col
    for t in range(motion.depth):
        frames[t, r : r + gh, c : c + gw] = digit
        r, vr = _bounce(r + vr, max_r, vr)
        c, vc = _bounce(c + vc, max_c, vc)
    return VideoTensor(frames[:, :, :, None], STORAGE)


def sample_motion(
    rng: np.random.Generator,
    height: int,
    width: int,
    depth: int,
    digit_side: int = DIGIT_SIZE,
    max_speed: int = 3,
) -> MotionSpec:
    """Uniform initial position, integer velocities from {-max_speed..max_speed} \\ {0}."""
    max_r = max(0, height - digit_side)
    max_c = max(0, width - digit_side)
    speeds = np.concatenate([np.arange(-max_speed, 0), np.arange(1, max_speed + 1)])
    return MotionSpec(
        height=height,
        width=width,
        row=int(rng.integers(0, max_r + 1)),
        col=int(rng.integers(0, max_c + 1)),
        d_row=int(rng.choice(speeds)),
        d_col=int(rng.choice(speeds)),
        depth=depth,
    )


# ---------------------------------------------------------------------------
# Color


@dataclass(frozen=True)
class Palette:
    """Ordered, pairwise-distinct RGB colors (storage-space triplets)."""

    colors: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if len(self.colors) < 1:
            raise ConfigError("palette needs at least one color")
        for color in self.colors:
            if len(color) != 3 or any(not 0 <= v <= 255 for v in color):
                raise ConfigError(f"bad RGB triplet {color!r}")
        if len(set(self.colors)) != len(self.colors):
            raise ConfigError("palette colors must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.colors)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.colors, dtype=np.uint8)


def make_palette(n: int) -> Palette:
    """n fully saturated colors with hues evenly spaced on the HSV circle."""
    if not 1 <= n <= 256:
        raise ConfigError(f"palette size must be in [1, 256], got {n}")
    colors = []
    for i in range(n):
        h6 = 6.0 * i / n
        sector = int(h6) % 6
        f = h6 - int(h6)
        t = int(_round_half_up(255.0 * f))
        q = 255 - t
        rgb = [
            (255, t, 0),
            (q, 255, 0),
            (0, 255, t),
            (0, q, 255),
            (t, 0, 255),
            (255, 0, q),
        ][sector]
        colors.append(rgb)
    return Palette(colors=tuple(colors))


def colorize_clip(white_clip: VideoTensor, color: tuple[int, int, int]) -> VideoTensor:
    """Intensity-scaled tint: pixel p becomes (p / 255) * color per channel."""
    if white_clip.channels != 1:
        raise DataError(f"colorize needs a single-channel clip, got c={white_clip.channels}")
    if white_clip.space != STORAGE:
        raise DataError("colorize operates on storage-space clips")
    intensity = white_clip.data.astype(np.float64) / 255.0  # (d, h, w, 1)
    rgb = np.asarray(color, dtype=np.float64).reshape(1, 1, 1, 3)
    out = np.floor(intensity * rgb + 0.5).astype(np.uint8)
    return VideoTensor(out, STORAGE)


# ---------------------------------------------------------------------------
# Dataset builders

VOLUMETRIC = "volumetric"
MOVING_COLOR = "moving_color"


@dataclass(frozen=True)
class VolumetricConfig:
    depth: int = 30
    canvas: int = 84
    clips_per_domain: int = 20
    max_radius: int | None = None  # default scales with canvas (6 at 84)
    train_fraction: float = 0.70

    def resolved_radius(self) -> int:
        return self.max_radius if self.max_radius is not None else default_max_radius(self.canvas)


@dataclass(frozen=True)
class MovingColorConfig:
    depth: int = 8
    height: int = 64
    width: int = 64
    clips_per_domain: int = 20
    n_colors: int = 20
    max_speed: int = 3
    digit_size: int = DIGIT_SIZE  # subsampled when smaller, so digits can move on small canvases
    train_fraction: float = 0.70

    def __post_init__(self):
        if self.digit_size < 1 or DIGIT_SIZE % self.digit_size:
            raise ConfigError(
                f"digit_size must divide {DIGIT_SIZE} evenly, got {self.digit_size}"
            )


def _split_assignment(n: int, train_fraction: float, rng: np.random.Generator) -> list[str]:
    if not 0.0 <= train_fraction <= 1.0:
        raise ConfigError(f"train fraction must be in [0, 1], got {train_fraction}")
    n_train = int(_round_half_up(train_fraction * n))
    order = rng.permutation(n)
    splits = ["test"] * n
    for idx in order[:n_train]:
        splits[int(idx)] = "train"
    return splits


def _clip_rng(seed: int, domain_index: int, clip_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, domain_index, clip_index]))


def build_dataset(
    kind: str,
    config: VolumetricConfig | MovingColorConfig,
    out_dir: str | Path,
    seed: int,
    digits: DigitSource | None = None,
) -> tuple[DatasetManifest, DatasetManifest]:
    """Generate both domains of a synthetic dataset under ``out_dir``.

    The two domains draw from disjoint digit subsets, so no training pair is
    aligned. Splits are assigned independently per domain. Returns the two
    saved manifests (domain A, domain B).
    """
    out_dir = Path(out_dir)
    if kind == VOLUMETRIC:
        if not isinstance(config, VolumetricConfig):
            raise ConfigError("volumetric datasets need a VolumetricConfig")
        return _build_volumetric(config, out_dir, seed, digits)
    if kind == MOVING_COLOR:
        if not isinstance(config, MovingColorConfig):
            raise ConfigError("moving_color datasets need a MovingColorConfig")
        return _build_moving_color(config, out_dir, seed, digits)
    raise ConfigError(f"unknown dataset kind {kind!r}")


def _take_digits(digits: DigitSource | None, needed: int, seed: int) -> np.ndarray:
    if digits is None:
        digits = builtin_digits(needed, seed=seed)
    if len(digits) < needed:
        raise DataError(
            f"need {needed} digit instances for the requested clip counts, "
            f"source has {len(digits)}"
        )
    order = np.random.default_rng(np.random.SeedSequence([seed, 0xD161])).permutation(
        len(digits)
    )
    return digits.images[order[:needed]]


def _build_volumetric(
    config: VolumetricConfig, out_dir: Path, seed: int, digits: DigitSource | None
) -> tuple[DatasetManifest, DatasetManifest]:
    n = config.clips_per_domain
    radius = config.resolved_radius()
    pool = _take_digits(digits, 2 * n, seed)
    schedules = {
        SPHERICAL: ErosionSchedule(SPHERICAL, config.depth, radius),
        SANDGLASS: ErosionSchedule(SANDGLASS, config.depth, radius),
    }
    manifests = []
    for domain_index, mode in enumerate((SPHERICAL, SANDGLASS)):
        other = SANDGLASS if mode == SPHERICAL else SPHERICAL
        domain_dir = out_dir / ("domain_a" if domain_index == 0 else "domain_b")
        split_rng = _clip_rng(seed, domain_index, 0)
        splits = _split_assignment(n, config.train_fraction, split_rng)
        entries = []
        for i in range(n):
            digit = pool[domain_index * n + i]
            clip_id = f"{mode}_{i:05d}"
            clip = gen_volumetric(digit, schedules[mode], config.canvas)
            rel = f"clips/{clip_id}.vvt"
            save_clip(clip, domain_dir / rel)
            gt_rel = None
            if splits[i] == "test":
                # paired counterpart in the other mode, for evaluation only
                gt_rel = f"gt/{clip_id}.vvt"
                save_clip(gen_volumetric(digit, schedules[other], config.canvas), domain_dir / gt_rel)
            entries.append(
                ClipEntry(
                    clip_id=clip_id,
                    path=rel,
                    depth=config.depth,
                    height=config.canvas,
                    width=config.canvas,
                    channels=1,
                    split=splits[i],
                    gt_path=gt_rel,
                )
            )
        manifest = DatasetManifest(
            domain_name=mode,
            shape=(config.depth, config.canvas, config.canvas, 1),
            rng_seed=seed,
            clips=entries,
            metadata={
                "kind": VOLUMETRIC,
                "mode": mode,
                "max_radius": radius,
                "canvas": config.canvas,
                "schedule_radii": [int(r) for r in schedules[mode].radii()],
            },
        )
        manifest.save(domain_dir / "manifest.json")
        manifests.append(manifest)
    return manifests[0], manifests[1]


def _build_moving_color(
    config: MovingColorConfig, out_dir: Path, seed: int, digits: DigitSource | None
) -> tuple[DatasetManifest, DatasetManifest]:
    n = config.clips_per_domain
    pool = _take_digits(digits, 2 * n, seed)
    palette = make_palette(config.n_colors)
    manifests = []
    for domain_index, role in enumerate(("white", "colored")):
        domain_dir = out_dir / ("domain_a" if domain_index == 0 else "domain_b")
        split_rng = _clip_rng(seed, domain_index, 0)
        splits = _split_assignment(n, config.train_fraction, split_rng)
        channels = 1 if role == "white" else 3
        step = DIGIT_SIZE // config.digit_size
        entries = []
        for i in range(n):
            rng = _clip_rng(seed, domain_index, i + 1)
            digit = pool[domain_index * n + i][::step, ::step]
            motion = sample_motion(
                rng,
                config.height,
                config.width,
                config.depth,
                digit_side=config.digit_size,
                max_speed=config.max_speed,
            )
            clip = gen_moving_digit(digit, motion)
            if role == "colored":
                color = palette.colors[int(rng.integers(0, len(palette)))]
                clip = colorize_clip(clip, color)
            clip_id = f"{role}_{i:05d}"
            rel = f"clips/{clip_id}.vvt"
            save_clip(clip, domain_dir / rel)
            entries.append(
                ClipEntry(
                    clip_id=clip_id,
                    path=rel,
                    depth=config.depth,
                    height=config.height,
                    width=config.width,
                    channels=channels,
                    split=splits[i],
                )
            )
        manifest = DatasetManifest(
            domain_name=role,
            shape=(config.depth, config.height, config.width, channels),
            rng_seed=seed,
            clips=entries,
            metadata={
                "kind": MOVING_COLOR,
                "role": role,
                "palette": [list(c) for c in palette.colors],
            },
        )
        manifest.save(domain_dir / "manifest.json")
        manifests.append(manifest)
    return manifests[0], manifests[1]
