"""Dense video volumes: validation, pixel-space maps, and bit-exact clip I/O.

The in-memory unit is :class:`VideoTensor`, a (depth, height, width, channels)
array in one of two pixel spaces:

* ``storage`` -- uint8 values in [0, 255], the on-disk representation.
* ``model``   -- float32 values in [-1, 1], what networks consume and emit.

Clips live on disk in the "VVT1" container: a fixed little-endian header
(magic ``VVT1``, then depth, height, width, channels and a space flag as
32-bit unsigned integers) followed by the raw C-order payload -- one uint8
per element for storage clips, one float32 per element for model clips.
PNG frame directories and GIFs are import/preview side doors only; the
container is the canonical format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ClipFormatError, CorruptClipError, DataError, ManifestError

MAGIC = b"VVT1"
_HEADER = struct.Struct("<4sIIIII")  # magic, d, h, w, c, space flag
HEADER_SIZE = _HEADER.size

STORAGE = "storage"
MODEL = "model"
_SPACE_TO_FLAG = {STORAGE: 0, MODEL: 1}
_FLAG_TO_SPACE = {0: STORAGE, 1: MODEL}

MANIFEST_FORMAT_VERSION = 1


@dataclass(frozen=True, eq=False)
class VideoTensor:
    """Immutable (d, h, w, c) pixel volume tagged with its value space."""

    data: np.ndarray
    space: str = STORAGE

    def __post_init__(self):
        if self.space not in (_SPACE_TO_FLAG):
            raise ValueError(f"unknown space tag {self.space!r}")
        arr = np.asarray(self.data)
        if arr.ndim != 4:
            raise ValueError(f"expected (d, h, w, c) array, got shape {arr.shape}")
        d, h, w, c = arr.shape
        if d < 1 or h < 1 or w < 1:
            raise ValueError(f"all of d, h, w must be >= 1, got {arr.shape}")
        if c not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {c}")
        if self.space == STORAGE:
            if not np.issubdtype(arr.dtype, np.integer):
                raise ValueError("storage-space values must be integers")
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("storage-space values must lie in [0, 255]")
            arr = arr.astype(np.uint8, copy=True)
        else:
            arr = arr.astype(np.float32, copy=True)
            if arr.size and (arr.min() < -1.0 or arr.max() > 1.0):
                raise ValueError("model-space values must lie in [-1, 1]")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def depth(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def __eq__(self, other) -> bool:
        if not isinstance(other, VideoTensor):
            return NotImplemented
        return self.space == other.space and np.array_equal(self.data, other.data)

    def __repr__(self) -> str:
        d, h, w, c = self.shape
        return f"VideoTensor(d={d}, h={h}, w={w}, c={c}, space={self.space!r})"


@dataclass(frozen=True)
class ClipWindow:
    """A contiguous temporal slice [t0, t0 + depth) of a named source clip."""

    clip_id: str
    t0: int
    depth: int

    def __post_init__(self):
        if self.t0 < 0:
            raise ValueError(f"window start must be >= 0, got {self.t0}")
        if self.depth < 1:
            raise ValueError(f"window depth must be >= 1, got {self.depth}")


def slice_window(v: VideoTensor, window: ClipWindow) -> VideoTensor:
    """Return frames [t0, t0+depth) of ``v`` in original order."""
    end = window.t0 + window.depth
    if end > v.depth:
        raise ValueError(
            f"window [{window.t0}, {end}) exceeds clip depth {v.depth}"
        )
    return VideoTensor(v.data[window.t0 : end], v.space)


def to_model_space(v: VideoTensor) -> VideoTensor:
    """Affine map storage [0, 255] -> model [-1, 1]: m = s / 127.5 - 1."""
    if v.space != STORAGE:
        raise ValueError(f"expected a storage-space clip, got {v.space!r}")
    m = v.data.astype(np.float32) / np.float32(127.5) - np.float32(1.0)
    return VideoTensor(m, MODEL)


def to_storage_space(v: VideoTensor) -> VideoTensor:
    """Inverse map: s = round(clamp(m, -1, 1) * 127.5 + 127.5), round half up."""
    if v.space != MODEL:
        raise ValueError(f"expected a model-space clip, got {v.space!r}")
    scaled = np.clip(v.data.astype(np.float64), -1.0, 1.0) * 127.5 + 127.5
    s = np.floor(scaled + 0.5).astype(np.uint8)
    return VideoTensor(s, STORAGE)


def quantize_model_array(arr: np.ndarray) -> np.ndarray:
    """Quantize a raw model-space array to uint8 with the shared rounding rule."""
    scaled = np.clip(np.asarray(arr, dtype=np.float64), -1.0, 1.0) * 127.5 + 127.5
    return np.floor(scaled + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# VVT1 container


def save_clip(v: VideoTensor, path: str | Path) -> None:
    """Write ``v`` to the VVT1 container. Round-trips bit-exactly."""
    path = Path(path)
    d, h, w, c = v.shape
    header = _HEADER.pack(MAGIC, d, h, w, c, _SPACE_TO_FLAG[v.space])
    if v.space == STORAGE:
        payload = v.data.astype(np.uint8).tobytes(order="C")
    else:
        payload = v.data.astype("<f4").tobytes(order="C")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def load_clip(path: str | Path) -> VideoTensor:
    """Read a VVT1 clip, validating magic, header, and payload size."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < HEADER_SIZE or raw[:4] != MAGIC:
        raise ClipFormatError(f"{path}: not a VVT1 clip (bad magic)")
    _, d, h, w, c, flag = _HEADER.unpack_from(raw)
    if flag not in _FLAG_TO_SPACE:
        raise CorruptClipError(f"{path}: unknown space flag {flag}")
    space = _FLAG_TO_SPACE[flag]
    if d < 1 or h < 1 or w < 1 or c not in (1, 3):
        raise CorruptClipError(f"{path}: invalid header shape ({d}, {h}, {w}, {c})")
    n = d * h * w * c
    expected = n * (1 if space == STORAGE else 4)
    payload = raw[HEADER_SIZE:]
    if len(payload) != expected:
        raise CorruptClipError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    if space == STORAGE:
        arr = np.frombuffer(payload, dtype=np.uint8).reshape(d, h, w, c)
    else:
        arr = np.frombuffer(payload, dtype="<f4").reshape(d, h, w, c)
    return VideoTensor(arr, space)


def peek_clip_header(path: str | Path) -> tuple[int, int, int, int, str]:
    """Read only the header: (d, h, w, c, space). Used for manifest checks."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(HEADER_SIZE)
    if len(raw) < HEADER_SIZE or raw[:4] != MAGIC:
        raise ClipFormatError(f"{path}: not a VVT1 clip (bad magic)")
    _, d, h, w, c, flag = _HEADER.unpack(raw)
    if flag not in _FLAG_TO_SPACE:
        raise CorruptClipError(f"{path}: unknown space flag {flag}")
    return d, h, w, c, _FLAG_TO_SPACE[flag]


# ---------------------------------------------------------------------------
# PNG frame directories and GIF previews


def import_frame_dir(
    dir_path: str | Path,
    expected_channels: int | None = None,
    stride: int = 1,
) -> VideoTensor:
    """Stack the PNG frames of a directory along depth, in sorted-name order.

    All frames must share one size. Zero-padded numeric names are the
    expected convention so lexicographic order equals temporal order.
    ``stride`` keeps every stride-th frame, for sources whose native frame
    rate is denser than the model needs.
    """
    dir_path = Path(dir_path)
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    frames = sorted(p for p in dir_path.iterdir() if p.suffix.lower() == ".png")
    frames = frames[::stride]
    if not frames:
        raise DataError(f"{dir_path}: no PNG frames found")
    stacked = []
    size = None
    for p in frames:
        with Image.open(p) as im:
            if expected_channels == 1:
                im = im.convert("L")
            elif expected_channels == 3:
                im = im.convert("RGB")
            elif im.mode not in ("L", "RGB"):
                im = im.convert("RGB" if im.mode in ("RGBA", "P", "CMYK") else "L")
            arr = np.asarray(im, dtype=np.uint8)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if size is None:
            size = arr.shape
        elif arr.shape != size:
            raise DataError(
                f"frame {p.name} has shape {arr.shape[:2]}, expected {size[:2]}"
            )
        stacked.append(arr)
    return VideoTensor(np.stack(stacked, axis=0), STORAGE)


def export_frames(v: VideoTensor, dir_path: str | Path) -> list[Path]:
    """Write one lossless PNG per frame with zero-padded numeric names."""
    if v.space != STORAGE:
        raise ValueError("frame export requires a storage-space clip")
    dir_path = Path(dir_path)
    dir_path.mkdir(parents=True, exist_ok=True)
    written = []
    for t in range(v.depth):
        frame = v.data[t]
        if v.channels == 1:
            im = Image.fromarray(frame[:, :, 0], mode="L")
        else:
            im = Image.fromarray(frame, mode="RGB")
        out = dir_path / f"{t:06d}.png"
        im.save(out)
        written.append(out)
    return written


def export_gif(v: VideoTensor, path: str | Path, fps: int = 8) -> None:
    """Write a looping GIF preview. Lossy; never read back."""
    if v.space != STORAGE:
        v = to_storage_space(v)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frames = []
    for t in range(v.depth):
        frame = v.data[t]
        if v.channels == 1:
            frames.append(Image.fromarray(frame[:, :, 0], mode="L"))
        else:
            frames.append(Image.fromarray(frame, mode="RGB"))
    frames[0].save(
        path,
        save_all=True,
        append_images=frames[1:],
        duration=max(1, round(1000 / fps)),
        loop=0,
    )


# ---------------------------------------------------------------------------
# Dataset manifests

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"
DEFAULT_TRAIN_FRACTION = 0.70


@dataclass
class ClipEntry:
    clip_id: str
    path: str  # relative to the manifest's directory
    depth: int
    height: int
    width: int
    channels: int
    split: str
    gt_path: str | None = None  # optional paired ground-truth clip (eval only)

    def __post_init__(self):
        if self.split not in (SPLIT_TRAIN, SPLIT_TEST):
            raise ManifestError(f"clip {self.clip_id}: bad split {self.split!r}")


@dataclass
class DatasetManifest:
    """Versioned index of one domain's clips with their split assignment."""

    domain_name: str
    shape: tuple[int, int, int, int]  # shared (d, h, w, c) contract
    rng_seed: int
    clips: list[ClipEntry] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    format_version: int = MANIFEST_FORMAT_VERSION
    root: Path | None = None  # directory the relative paths resolve against

    def train_clips(self) -> list[ClipEntry]:
        return [c for c in self.clips if c.split == SPLIT_TRAIN]

    def test_clips(self) -> list[ClipEntry]:
        return [c for c in self.clips if c.split == SPLIT_TEST]

    def clip_path(self, entry: ClipEntry) -> Path:
        if self.root is None:
            raise ManifestError("manifest has no root directory; load or save it first")
        return self.root / entry.path

    def gt_clip_path(self, entry: ClipEntry) -> Path | None:
        if entry.gt_path is None:
            return None
        if self.root is None:
            raise ManifestError("manifest has no root directory; load or save it first")
        return self.root / entry.gt_path

    def validate(self) -> None:
        ids = [c.clip_id for c in self.clips]
        if len(set(ids)) != len(ids):
            raise ManifestError(f"{self.domain_name}: duplicate clip ids")
        d, h, w, c = self.shape
        for entry in self.clips:
            if (entry.depth, entry.height, entry.width, entry.channels) != (d, h, w, c):
                raise ManifestError(
                    f"clip {entry.clip_id} shape differs from the manifest contract"
                )
            path = self.clip_path(entry)
            if not path.exists():
                raise ManifestError(f"clip {entry.clip_id}: missing file {path}")
            pd, ph, pw, pc, _ = peek_clip_header(path)
            if (pd, ph, pw, pc) != (d, h, w, c):
                raise ManifestError(
                    f"clip {entry.clip_id}: file {path} is {(pd, ph, pw, pc)}, "
                    f"declared {(d, h, w, c)}"
                )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = {
            "format_version": self.format_version,
            "domain_name": self.domain_name,
            "shape": {
                "depth": self.shape[0],
                "height": self.shape[1],
                "width": self.shape[2],
                "channels": self.shape[3],
            },
            "rng_seed": self.rng_seed,
            "metadata": self.metadata,
            "clips": [
                {
                    "id": c.clip_id,
                    "path": c.path,
                    "depth": c.depth,
                    "height": c.height,
                    "width": c.width,
                    "channels": c.channels,
                    "split": c.split,
                    "gt_path": c.gt_path,
                }
                for c in self.clips
            ],
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        self.root = path.parent
        return path

    @classmethod
    def load(cls, path: str | Path, check_files: bool = True) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
        if doc.get("format_version") != MANIFEST_FORMAT_VERSION:
            raise ManifestError(
                f"{path}: unsupported manifest format_version {doc.get('format_version')!r}"
            )
        shape_doc = doc["shape"]
        manifest = cls(
            domain_name=doc["domain_name"],
            shape=(
                shape_doc["depth"],
                shape_doc["height"],
                shape_doc["width"],
                shape_doc["channels"],
            ),
            rng_seed=doc["rng_seed"],
            clips=[
                ClipEntry(
                    clip_id=c["id"],
                    path=c["path"],
                    depth=c["depth"],
                    height=c["height"],
                    width=c["width"],
                    channels=c["channels"],
                    split=c["split"],
                    gt_path=c.get("gt_path"),
                )
                for c in doc["clips"]
            ],
            metadata=doc.get("metadata", {}),
            root=path.parent,
        )
        if check_files:
            manifest.validate()
        return manifest
