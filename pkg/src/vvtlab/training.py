"""Losses, batch-formation regimes, and the alternating adversarial loop.

Four training regimes share one loop:

* ``random_frames``     -- 2D models, each batch samples frames uniformly
                           across all training clips of a domain;
* ``sequential_frames`` -- 2D models, each batch is a run of consecutive
                           frames from one clip;
* ``sequential_const``  -- as sequential, plus a squared penalty on
                           consecutive generated frames (anti-flicker);
* ``volumetric_3d``     -- 3D models, each batch is one fixed-depth window
                           per domain.

Batch streams are a pure function of (seed, epoch), so runs are resumable
and bit-reproducible at the batch-id level. Generated samples for
discriminator updates pass through a FIFO pool. Checkpoints are written
atomically as a parameter blob plus a backend-independent ``*.meta.json``
sidecar.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import time
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import yaml
from torch.nn import functional as F

from .errors import ConfigError, DataError, NonFiniteError, NumericAbort
from .translators import (
    RANK_2D,
    RANK_3D,
    DiscriminatorConfig,
    GeneratorConfig,
    _ResnetGenerator,
    build_discriminator,
    build_generator,
)
from .video_core import (
    MODEL,
    STORAGE,
    DatasetManifest,
    VideoTensor,
    load_clip,
    to_model_space,
    to_storage_space,
)

ADV_LOG = "log"
ADV_LEAST_SQUARES = "least_squares"

RANDOM_FRAMES = "random_frames"
SEQUENTIAL_FRAMES = "sequential_frames"
SEQUENTIAL_CONST = "sequential_const"
VOLUMETRIC_3D = "volumetric_3d"

STRATEGY_ALIASES = {
    "random": RANDOM_FRAMES,
    "sequence": SEQUENTIAL_FRAMES,
    "seq-const": SEQUENTIAL_CONST,
    "3d": VOLUMETRIC_3D,
}

TRAINING_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Losses


def _as_tensor(x) -> torch.Tensor:
    t = torch.as_tensor(x)
    if not torch.isfinite(t).all():
        raise NonFiniteError("loss inputs must be finite")
    return t


def adversarial_loss(scores_real, scores_fake, form: str = ADV_LOG) -> torch.Tensor:
    """The patch-averaged quantity the discriminator maximizes.

    ``log``: mean log D(real) + mean log(1 - D(fake)), with the logistic
    squashing applied here -- discriminators emit raw scores.
    ``least_squares``: -[mean (D(real) - 1)^2 + mean D(fake)^2], negated so
    larger is still better for the discriminator.
    """
    real = _as_tensor(scores_real)
    fake = _as_tensor(scores_fake)
    if form == ADV_LOG:
        return F.logsigmoid(real).mean() + F.logsigmoid(-fake).mean()
    if form == ADV_LEAST_SQUARES:
        return -(((real - 1.0) ** 2).mean() + (fake**2).mean())
    raise ConfigError(f"unknown adversarial form {form!r}")


def cycle_loss(x, x_cycled, y, y_cycled) -> torch.Tensor:
    """Mean absolute reconstruction error, summed over both directions."""
    x, x_cycled = _as_tensor(x), _as_tensor(x_cycled)
    y, y_cycled = _as_tensor(y), _as_tensor(y_cycled)
    if x.shape != x_cycled.shape or y.shape != y_cycled.shape:
        raise ValueError("cycle loss needs pairwise matching shapes")
    return (x_cycled - x).abs().mean() + (y_cycled - y).abs().mean()


def const_loss(frames, normalize: bool = True) -> torch.Tensor:
    """Squared change between consecutive generated frames.

    ``frames`` is a sequence along dim 0 (at least 2 frames). Normalized
    form averages over pairs, pixels, and channels so the weight is
    resolution-independent; ``normalize=False`` is the raw summed penalty.
    """
    frames = _as_tensor(frames)
    if frames.shape[0] < 2:
        raise ValueError(f"const loss needs >= 2 frames, got {frames.shape[0]}")
    diff = frames[1:] - frames[:-1]
    return (diff**2).mean() if normalize else (diff**2).sum()


def total_objective(
    adv_ab, adv_ba, cyc, gamma: float, const=0.0, lambda_const: float = 0.0
):
    """Weighted sum of the adversarial terms, the cycle term, and the
    optional consecutive-frame penalty."""
    parts = [float(adv_ab), float(adv_ba), float(cyc), float(const)]
    if not all(np.isfinite(parts)):
        raise ValueError("objective parts must be finite")
    return parts[0] + parts[1] + gamma * parts[2] + lambda_const * parts[3]


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class BatchStrategy:
    variant: str
    frames_per_batch: int = 8  # 2D variants
    window_depth: int = 8  # 3D variant

    def __post_init__(self):
        if self.variant not in (
            RANDOM_FRAMES,
            SEQUENTIAL_FRAMES,
            SEQUENTIAL_CONST,
            VOLUMETRIC_3D,
        ):
            raise ConfigError(f"unknown batch strategy {self.variant!r}")
        if self.frames_per_batch < 1 or self.window_depth < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.variant == SEQUENTIAL_CONST and self.frames_per_batch < 2:
            raise ConfigError("the const regime needs >= 2 consecutive frames per batch")

    @property
    def rank(self) -> str:
        return RANK_3D if self.variant == VOLUMETRIC_3D else RANK_2D

    @classmethod
    def from_name(cls, name: str, frames_per_batch: int = 8, window_depth: int = 8):
        variant = STRATEGY_ALIASES.get(name, name)
        return cls(variant, frames_per_batch, window_depth)


@dataclass
class TrainConfig:
    gamma: float = 10.0
    lambda_const: float = 1.0
    adversarial_form: str = ADV_LEAST_SQUARES
    learning_rate: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    steps: int = 1
    pool_size: int = 50
    seed: int = 0
    checkpoint_every: int = 1000
    device: str = "cpu"
    normalize_const_loss: bool = True

    def __post_init__(self):
        if self.gamma <= 0:
            raise ConfigError(f"gamma must be > 0, got {self.gamma}")
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.pool_size < 0:
            raise ConfigError(f"pool size must be >= 0, got {self.pool_size}")
        if self.adversarial_form not in (ADV_LOG, ADV_LEAST_SQUARES):
            raise ConfigError(f"unknown adversarial form {self.adversarial_form!r}")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix in (".yaml", ".yml"):
            doc = yaml.safe_load(text)
        else:
            doc = json.loads(text)
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name: f.type for f in dataclasses.fields(cls)}
        unknown = set(doc) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def with_overrides(self, overrides: dict[str, str]) -> "TrainConfig":
        """Apply ``key=value`` string overrides with field-typed parsing."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        updates = {}
        for key, raw in overrides.items():
            if key not in fields:
                raise ConfigError(f"unknown config key {key!r}")
            current = getattr(self, key)
            if isinstance(current, bool):
                updates[key] = raw.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                updates[key] = int(raw)
            elif isinstance(current, float):
                updates[key] = float(raw)
            else:
                updates[key] = raw
        return dataclasses.replace(self, **updates)


@dataclass
class LossReport:
    step: int
    l_gan_ab: float
    l_gan_ba: float
    l_cyc: float
    d_a_loss: float
    d_b_loss: float
    wall_clock: float
    l_const: float | None = None
    batch_id: str | None = None  # lets resumed runs prove stream equality

    def __post_init__(self):
        values = [self.l_gan_ab, self.l_gan_ba, self.l_cyc, self.d_a_loss, self.d_b_loss]
        if self.l_const is not None:
            values.append(self.l_const)
        if not all(np.isfinite(v) for v in values):
            raise NumericAbort(self.step)

    def to_json_line(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json_line(cls, line: str) -> "LossReport":
        return cls(**json.loads(line))


# ---------------------------------------------------------------------------
# Batch formation


class ClipStore:
    """Loads manifest clips lazily, caching model-space arrays by id."""

    def __init__(self, manifest: DatasetManifest):
        self.manifest = manifest
        self._cache: dict[str, np.ndarray] = {}
        self._by_id = {c.clip_id: c for c in manifest.clips}

    def get(self, clip_id: str) -> np.ndarray:
        if clip_id not in self._cache:
            entry = self._by_id[clip_id]
            clip = load_clip(self.manifest.clip_path(entry))
            if clip.space == STORAGE:
                clip = to_model_space(clip)
            self._cache[clip_id] = clip.data
        return self._cache[clip_id]


@dataclass
class Batch:
    """One optimizer step's worth of data from both domains."""

    a: torch.Tensor
    b: torch.Tensor
    meta_a: tuple
    meta_b: tuple

    def batch_id(self) -> str:
        return json.dumps([self.meta_a, self.meta_b])


def _frames_to_torch(frames: np.ndarray) -> torch.Tensor:
    # (m, h, w, c) -> (m, c, h, w); copy detaches from read-only clip caches
    return torch.from_numpy(frames.transpose(0, 3, 1, 2).copy())


def _clip_to_torch(clip: np.ndarray) -> torch.Tensor:
    # (d, h, w, c) -> (1, c, d, h, w)
    return torch.from_numpy(clip.transpose(3, 0, 1, 2).copy())[None]


def batches_per_epoch(
    manifest_a: DatasetManifest, manifest_b: DatasetManifest, strategy: BatchStrategy
) -> int:
    n_a, n_b = len(manifest_a.train_clips()), len(manifest_b.train_clips())
    if n_a == 0 or n_b == 0:
        raise DataError("both domains need at least one training clip")
    depth_a, depth_b = manifest_a.shape[0], manifest_b.shape[0]
    if strategy.variant == RANDOM_FRAMES:
        pool = min(n_a * depth_a, n_b * depth_b)
        if pool < strategy.frames_per_batch:
            raise DataError(
                f"training pool has {pool} frames, need {strategy.frames_per_batch} per batch"
            )
        return max(1, pool // strategy.frames_per_batch)
    if strategy.variant in (SEQUENTIAL_FRAMES, SEQUENTIAL_CONST):
        if min(depth_a, depth_b) < strategy.frames_per_batch:
            raise DataError(
                f"clips are {min(depth_a, depth_b)} frames deep, need "
                f"{strategy.frames_per_batch} consecutive frames"
            )
        return min(n_a, n_b)
    if min(depth_a, depth_b) < strategy.window_depth:
        raise DataError(
            f"clips are {min(depth_a, depth_b)} frames deep, need windows of "
            f"{strategy.window_depth}"
        )
    return min(n_a, n_b)


def make_batches(
    manifest_a: DatasetManifest,
    manifest_b: DatasetManifest,
    strategy: BatchStrategy,
    seed: int,
    epoch: int,
    store_a: ClipStore | None = None,
    store_b: ClipStore | None = None,
) -> list[Batch]:
    """The deterministic batch list for one epoch of (seed, epoch)."""
    store_a = store_a or ClipStore(manifest_a)
    store_b = store_b or ClipStore(manifest_b)
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    n_batches = batches_per_epoch(manifest_a, manifest_b, strategy)

    def domain_frames(manifest, store):
        clips = sorted(manifest.train_clips(), key=lambda e: e.clip_id)
        population = [(c.clip_id, t) for c in clips for t in range(c.depth)]
        return clips, population

    clips_a, pop_a = domain_frames(manifest_a, store_a)
    clips_b, pop_b = domain_frames(manifest_b, store_b)

    batches = []
    for _ in range(n_batches):
        if strategy.variant == RANDOM_FRAMES:
            m = strategy.frames_per_batch

            def draw(pop, store):
                picks = rng.choice(len(pop), size=m, replace=False)
                refs = tuple(pop[int(i)] for i in picks)
                frames = np.stack([store.get(cid)[t] for cid, t in refs])
                return _frames_to_torch(frames), refs

            a, meta_a = draw(pop_a, store_a)
            b, meta_b = draw(pop_b, store_b)
        elif strategy.variant in (SEQUENTIAL_FRAMES, SEQUENTIAL_CONST):
            m = strategy.frames_per_batch

            def draw(clips, store):
                entry = clips[int(rng.integers(0, len(clips)))]
                t0 = int(rng.integers(0, entry.depth - m + 1))
                refs = tuple((entry.clip_id, t0 + k) for k in range(m))
                frames = store.get(entry.clip_id)[t0 : t0 + m]
                return _frames_to_torch(frames), refs

            a, meta_a = draw(clips_a, store_a)
            b, meta_b = draw(clips_b, store_b)
        else:
            dw = strategy.window_depth

            def draw(clips, store):
                entry = clips[int(rng.integers(0, len(clips)))]
                t0 = int(rng.integers(0, entry.depth - dw + 1))
                window = store.get(entry.clip_id)[t0 : t0 + dw]
                return _clip_to_torch(window), ((entry.clip_id, t0, dw),)

            a, meta_a = draw(clips_a, store_a)
            b, meta_b = draw(clips_b, store_b)
        batches.append(Batch(a=a, b=b, meta_a=meta_a, meta_b=meta_b))
    return batches


# ---------------------------------------------------------------------------
# Image pool


class ImagePool:
    """FIFO history of generated samples fed to the discriminators.

    Size 0 passes the current sample straight through. Otherwise samples
    queue up; once the pool is full the discriminator always sees the
    oldest surviving sample, which stabilizes updates without randomness.
    """

    def __init__(self, size: int):
        if size < 0:
            raise ConfigError("pool size must be >= 0")
        self.size = size
        self.items: deque[torch.Tensor] = deque()

    def query(self, fake: torch.Tensor) -> torch.Tensor:
        if self.size == 0:
            return fake
        self.items.append(fake.detach().clone())
        if len(self.items) > self.size:
            return self.items.popleft()
        return self.items[-1]

    def state(self) -> list[torch.Tensor]:
        return list(self.items)

    def load_state(self, tensors: list[torch.Tensor]) -> None:
        self.items = deque(tensors)


# ---------------------------------------------------------------------------
# Trainer


def _combined_digest(modules: dict[str, torch.nn.Module]) -> str:
    digest = hashlib.sha256()
    for name in sorted(modules):
        state = modules[name].state_dict()
        for key in sorted(state):
            digest.update(f"{name}.{key}".encode())
            digest.update(state[key].numpy().tobytes())
    return digest.hexdigest()


def _atomic_write_bytes(path: Path, writer) -> None:
    tmp = path.with_name(path.name + ".tmp")
    writer(tmp)
    os.replace(tmp, path)


class Trainer:
    """Owns the two generators, two discriminators, and the training state."""

    def __init__(
        self,
        config: TrainConfig,
        strategy: BatchStrategy,
        manifest_a: DatasetManifest,
        manifest_b: DatasetManifest,
        generator_config: GeneratorConfig,
        discriminator_config: DiscriminatorConfig | None = None,
        out_dir: str | Path = "runs/train",
    ):
        if generator_config.rank != strategy.rank:
            raise ConfigError(
                f"strategy {strategy.variant!r} needs a {strategy.rank} generator, "
                f"got {generator_config.rank}"
            )
        self.config = config
        self.strategy = strategy
        self.manifest_a = manifest_a
        self.manifest_b = manifest_b
        self.out_dir = Path(out_dir)
        self.device = torch.device(config.device)

        c_a, c_b = manifest_a.shape[3], manifest_b.shape[3]
        self.generator_config = generator_config
        self.discriminator_config = discriminator_config or DiscriminatorConfig(
            rank=generator_config.rank, base_width=generator_config.base_width
        )
        self.channels = {"a": c_a, "b": c_b}

        torch.manual_seed(config.seed)
        self.g_ab = build_generator(
            dataclasses.replace(generator_config, in_channels=c_a, out_channels=c_b)
        )
        self.g_ba = build_generator(
            dataclasses.replace(generator_config, in_channels=c_b, out_channels=c_a)
        )
        self.d_a = build_discriminator(
            dataclasses.replace(self.discriminator_config, in_channels=c_a)
        )
        self.d_b = build_discriminator(
            dataclasses.replace(self.discriminator_config, in_channels=c_b)
        )
        for handle in (self.g_ab, self.g_ba, self.d_a, self.d_b):
            handle.module.to(self.device)

        betas = (config.beta1, config.beta2)
        gen_params = list(self.g_ab.module.parameters()) + list(
            self.g_ba.module.parameters()
        )
        self.opt_g = torch.optim.Adam(gen_params, lr=config.learning_rate, betas=betas)
        self.opt_da = torch.optim.Adam(
            self.d_a.module.parameters(), lr=config.learning_rate, betas=betas
        )
        self.opt_db = torch.optim.Adam(
            self.d_b.module.parameters(), lr=config.learning_rate, betas=betas
        )

        self.pool_a = ImagePool(config.pool_size)
        self.pool_b = ImagePool(config.pool_size)
        self.step = 0
        self.store_a = ClipStore(manifest_a)
        self.store_b = ClipStore(manifest_b)
        self.batches_per_epoch = batches_per_epoch(manifest_a, manifest_b, strategy)
        self.init_digest = _combined_digest(self._modules())

    def _modules(self) -> dict[str, torch.nn.Module]:
        return {
            "g_ab": self.g_ab.module,
            "g_ba": self.g_ba.module,
            "d_a": self.d_a.module,
            "d_b": self.d_b.module,
        }

    # -- one optimizer step ------------------------------------------------

    def _generator_adv(self, scores_fake: torch.Tensor) -> torch.Tensor:
        # What the generator minimizes. The log form is the literal
        # min-max term; least squares drives fake scores toward the real
        # target instead (the single-objective form has no generator
        # minimum).
        if self.config.adversarial_form == ADV_LOG:
            return F.logsigmoid(-scores_fake).mean()
        return ((scores_fake - 1.0) ** 2).mean()

    def train_step(self, batch: Batch) -> LossReport:
        try:
            return self._train_step(batch)
        except NonFiniteError as exc:
            raise NumericAbort(self.step, str(exc)) from exc

    def _train_step(self, batch: Batch) -> LossReport:
        start = time.perf_counter()
        cfg = self.config
        x = batch.a.to(self.device)
        y = batch.b.to(self.device)
        for handle in (self.g_ab, self.g_ba, self.d_a, self.d_b):
            handle.module.train()

        fake_b = self.g_ab.module(x)
        rec_a = self.g_ba.module(fake_b)
        fake_a = self.g_ba.module(y)
        rec_b = self.g_ab.module(fake_a)

        g_adv_ab = self._generator_adv(self.d_b.module(fake_b))
        g_adv_ba = self._generator_adv(self.d_a.module(fake_a))
        l_cyc = cycle_loss(x, rec_a, y, rec_b)
        g_loss = g_adv_ab + g_adv_ba + cfg.gamma * l_cyc
        l_const_value = None
        if self.strategy.variant == SEQUENTIAL_CONST:
            l_const = const_loss(fake_b, cfg.normalize_const_loss) + const_loss(
                fake_a, cfg.normalize_const_loss
            )
            g_loss = g_loss + cfg.lambda_const * l_const
            l_const_value = float(l_const.detach())

        self.opt_g.zero_grad()
        g_loss.backward()
        self.opt_g.step()

        pooled_b = self.pool_b.query(fake_b.detach())
        adv_b = adversarial_loss(
            self.d_b.module(y), self.d_b.module(pooled_b), cfg.adversarial_form
        )
        d_b_loss = -adv_b
        self.opt_db.zero_grad()
        d_b_loss.backward()
        self.opt_db.step()

        pooled_a = self.pool_a.query(fake_a.detach())
        adv_a = adversarial_loss(
            self.d_a.module(x), self.d_a.module(pooled_a), cfg.adversarial_form
        )
        d_a_loss = -adv_a
        self.opt_da.zero_grad()
        d_a_loss.backward()
        self.opt_da.step()

        if not np.isfinite(float(g_loss.detach())):
            raise NumericAbort(self.step, "non-finite generator loss")

        return LossReport(
            step=self.step,
            l_gan_ab=float(adv_b.detach()),
            l_gan_ba=float(adv_a.detach()),
            l_cyc=float(l_cyc.detach()),
            d_a_loss=float(d_a_loss.detach()),
            d_b_loss=float(d_b_loss.detach()),
            wall_clock=time.perf_counter() - start,
            l_const=l_const_value,
            batch_id=batch.batch_id(),
        )

    # -- run / checkpoint / resume -----------------------------------------

    def run(self) -> Path:
        """Train to ``config.steps``, appending one log line per step.

        Returns the final checkpoint path.
        """
        self.out_dir.mkdir(parents=True, exist_ok=True)
        log_path = self.out_dir / "train_log.jsonl"
        final = None
        epoch = self.step // self.batches_per_epoch
        position = self.step % self.batches_per_epoch
        batches = make_batches(
            self.manifest_a,
            self.manifest_b,
            self.strategy,
            self.config.seed,
            epoch,
            self.store_a,
            self.store_b,
        )
        with open(log_path, "a") as log:
            while self.step < self.config.steps:
                if position >= len(batches):
                    epoch += 1
                    position = 0
                    batches = make_batches(
                        self.manifest_a,
                        self.manifest_b,
                        self.strategy,
                        self.config.seed,
                        epoch,
                        self.store_a,
                        self.store_b,
                    )
                report = self.train_step(batches[position])
                log.write(report.to_json_line() + "\n")
                log.flush()
                self.step += 1
                position += 1
                if self.step % self.config.checkpoint_every == 0 or self.step == self.config.steps:
                    final = self.save_checkpoint()
        return final if final is not None else self.save_checkpoint()

    def _rng_state(self) -> dict:
        return {
            "seed": self.config.seed,
            "step": self.step,
            "epoch": self.step // self.batches_per_epoch,
            "epoch_position": self.step % self.batches_per_epoch,
            "batches_per_epoch": self.batches_per_epoch,
        }

    def save_checkpoint(self, path: str | Path | None = None) -> Path:
        path = Path(path) if path else self.out_dir / f"ckpt_step{self.step:06d}.pt"
        path.parent.mkdir(parents=True, exist_ok=True)
        blob = {
            "g_ab": self.g_ab.module.state_dict(),
            "g_ba": self.g_ba.module.state_dict(),
            "d_a": self.d_a.module.state_dict(),
            "d_b": self.d_b.module.state_dict(),
            "opt_g": self.opt_g.state_dict(),
            "opt_da": self.opt_da.state_dict(),
            "opt_db": self.opt_db.state_dict(),
            "pool_a": self.pool_a.state(),
            "pool_b": self.pool_b.state(),
            "step": self.step,
        }
        _atomic_write_bytes(path, lambda tmp: torch.save(blob, tmp))
        meta = {
            "schema_version": TRAINING_SCHEMA_VERSION,
            "step": self.step,
            "train_config": dataclasses.asdict(self.config),
            "strategy": dataclasses.asdict(self.strategy),
            "generator_config": dataclasses.asdict(self.generator_config),
            "discriminator_config": dataclasses.asdict(self.discriminator_config),
            "channels": self.channels,
            "parameter_counts": {
                name: sum(p.numel() for p in module.parameters())
                for name, module in self._modules().items()
            },
            "init_digest": self.init_digest,
            "rng_state": self._rng_state(),
        }
        sidecar = path.with_suffix(".meta.json")
        _atomic_write_bytes(
            sidecar,
            lambda tmp: tmp.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n"),
        )
        return path

    @classmethod
    def resume(
        cls,
        checkpoint_path: str | Path,
        manifest_a: DatasetManifest,
        manifest_b: DatasetManifest,
        out_dir: str | Path,
        steps: int | None = None,
    ) -> "Trainer":
        """Rebuild a trainer from a checkpoint; batch streams continue exactly."""
        checkpoint_path = Path(checkpoint_path)
        meta = json.loads(checkpoint_path.with_suffix(".meta.json").read_text())
        if meta.get("schema_version") != TRAINING_SCHEMA_VERSION:
            raise ConfigError(f"unsupported checkpoint schema in {checkpoint_path}")
        config = TrainConfig(**meta["train_config"])
        if steps is not None:
            config = dataclasses.replace(config, steps=steps)
        trainer = cls(
            config=config,
            strategy=BatchStrategy(**meta["strategy"]),
            manifest_a=manifest_a,
            manifest_b=manifest_b,
            generator_config=GeneratorConfig(**meta["generator_config"]),
            discriminator_config=DiscriminatorConfig(**meta["discriminator_config"]),
            out_dir=out_dir,
        )
        blob = torch.load(checkpoint_path, weights_only=False)
        trainer.g_ab.module.load_state_dict(blob["g_ab"])
        trainer.g_ba.module.load_state_dict(blob["g_ba"])
        trainer.d_a.module.load_state_dict(blob["d_a"])
        trainer.d_b.module.load_state_dict(blob["d_b"])
        trainer.opt_g.load_state_dict(blob["opt_g"])
        trainer.opt_da.load_state_dict(blob["opt_da"])
        trainer.opt_db.load_state_dict(blob["opt_db"])
        trainer.pool_a.load_state(blob["pool_a"])
        trainer.pool_b.load_state(blob["pool_b"])
        trainer.step = blob["step"]
        trainer.init_digest = meta["init_digest"]
        return trainer


# ---------------------------------------------------------------------------
# Inference


def _model_array(clip: VideoTensor) -> np.ndarray:
    if clip.space == STORAGE:
        clip = to_model_space(clip)
    return clip.data


def load_translator(checkpoint_path: str | Path, direction: str):
    """Build the requested generator from a training checkpoint.

    Returns (callable VideoTensor -> VideoTensor, metadata dict).
    """
    checkpoint_path = Path(checkpoint_path)
    sidecar = checkpoint_path.with_suffix(".meta.json")
    if not checkpoint_path.exists() or not sidecar.exists():
        raise DataError(f"checkpoint {checkpoint_path} (or its sidecar) is missing")
    meta = json.loads(sidecar.read_text())
    if direction not in ("a2b", "b2a"):
        raise ConfigError(f"direction must be 'a2b' or 'b2a', got {direction!r}")
    gen_cfg = GeneratorConfig(**meta["generator_config"])
    c_a, c_b = meta["channels"]["a"], meta["channels"]["b"]
    if direction == "a2b":
        cfg = dataclasses.replace(gen_cfg, in_channels=c_a, out_channels=c_b)
        key = "g_ab"
    else:
        cfg = dataclasses.replace(gen_cfg, in_channels=c_b, out_channels=c_a)
        key = "g_ba"
    module = _ResnetGenerator(cfg)
    blob = torch.load(checkpoint_path, weights_only=False)
    module.load_state_dict(blob[key])
    module.eval()
    window_depth = meta["strategy"]["window_depth"]

    def translate_clip(clip: VideoTensor) -> VideoTensor:
        return _apply_generator(module, cfg, clip, window_depth)

    return translate_clip, meta


def _apply_generator(
    module: torch.nn.Module,
    cfg: GeneratorConfig,
    clip: VideoTensor,
    window_depth: int,
    frame_chunk: int = 32,
) -> VideoTensor:
    if clip.channels != cfg.in_channels:
        raise DataError(
            f"clip has {clip.channels} channels, generator expects {cfg.in_channels}"
        )
    arr = _model_array(clip)
    module.eval()
    with torch.no_grad():
        if cfg.rank == RANK_2D:
            # framewise: the time axis is just a batch axis
            outs = []
            frames = torch.from_numpy(arr.transpose(0, 3, 1, 2).copy())
            for i in range(0, frames.shape[0], frame_chunk):
                outs.append(module(frames[i : i + frame_chunk]))
            out = torch.cat(outs, dim=0).numpy().transpose(0, 2, 3, 1)
        else:
            depth = arr.shape[0]
            out = np.empty(
                (depth, arr.shape[1], arr.shape[2], cfg.out_channels), dtype=np.float32
            )
            # later windows own any overlap with the end-aligned remainder
            for t0 in window_starts(depth, window_depth):
                window = torch.from_numpy(
                    arr[t0 : t0 + window_depth].transpose(3, 0, 1, 2).copy()
                )[None]
                result = module(window)[0].numpy().transpose(1, 2, 3, 0)
                out[t0 : t0 + window_depth] = result
    out = np.clip(out, -1.0, 1.0)
    return to_storage_space(VideoTensor(out, MODEL))


def translate(
    checkpoint_path: str | Path, clip: VideoTensor, direction: str
) -> VideoTensor:
    """Translate one clip with a trained checkpoint; output is storage space."""
    translate_clip, _ = load_translator(checkpoint_path, direction)
    return translate_clip(clip)


def window_starts(depth: int, window_depth: int) -> list[int]:
    """Start offsets used by 3D inference on a clip of ``depth`` frames."""
    if depth < window_depth:
        raise DataError(f"clip depth {depth} is shorter than window {window_depth}")
    starts = list(range(0, depth - window_depth + 1, window_depth))
    if starts[-1] + window_depth < depth:
        starts.append(depth - window_depth)
    return starts
