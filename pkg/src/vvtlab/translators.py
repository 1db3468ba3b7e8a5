"""2D and 3D translator networks with a shared recipe and parameter parity.

Both ranks use the same residual encoder-decoder generator (wide front
convolution, two stride-2 downsampling stages, a stack of residual blocks,
two fractionally-strided upsampling stages, wide output convolution into
tanh) and the same patch-scoring discriminator (stride-2 stack, kernel 4,
leaky ReLU). The 3D rank keeps temporal stride 1 by default so shallow
clips survive the two spatial halvings; ``depth_downsample`` opts into
temporal striding for deep clips.

Parameter parity between ranks is a first-class contract: a closed-form
layer count drives :func:`calibrate_parity`, which finds the 2D width whose
parameter count best matches a given 3D configuration.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .errors import ConfigError

RANK_2D = "2d"
RANK_3D = "3d"

UPSAMPLE_TRANSPOSED = "transposed"
UPSAMPLE_RESIZE = "resize"

CHECKPOINT_SCHEMA_VERSION = 1

# Enough spatial room for the pad-3 front convolution and two halvings.
MIN_SPATIAL = 8
MIN_DEPTH_3D = 4


@dataclass(frozen=True)
class GeneratorConfig:
    rank: str = RANK_2D
    in_channels: int = 1
    out_channels: int = 1
    base_width: int = 64
    n_res_blocks: int = 9
    depth_downsample: bool = False  # 3D only: stride the time axis too
    upsample_mode: str = UPSAMPLE_TRANSPOSED

    def __post_init__(self):
        if self.rank not in (RANK_2D, RANK_3D):
            raise ConfigError(f"rank must be '2d' or '3d', got {self.rank!r}")
        if self.base_width < 1 or self.n_res_blocks < 1:
            raise ConfigError("base_width and n_res_blocks must be >= 1")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigError("channel counts must be >= 1")
        if self.depth_downsample and self.rank != RANK_3D:
            raise ConfigError("depth_downsample only applies to the 3D rank")
        if self.upsample_mode not in (UPSAMPLE_TRANSPOSED, UPSAMPLE_RESIZE):
            raise ConfigError(f"unknown upsample_mode {self.upsample_mode!r}")


@dataclass(frozen=True)
class DiscriminatorConfig:
    rank: str = RANK_2D
    in_channels: int = 1
    n_layers: int = 3
    base_width: int = 64
    depth_downsample: bool = False

    def __post_init__(self):
        if self.rank not in (RANK_2D, RANK_3D):
            raise ConfigError(f"rank must be '2d' or '3d', got {self.rank!r}")
        if self.n_layers < 1:
            raise ConfigError("n_layers must be >= 1")
        if self.base_width < 1 or self.in_channels < 1:
            raise ConfigError("base_width and in_channels must be >= 1")
        if self.depth_downsample and self.rank != RANK_3D:
            raise ConfigError("depth_downsample only applies to the 3D rank")


def _layers_for_rank(rank: str):
    if rank == RANK_2D:
        return nn.Conv2d, nn.ConvTranspose2d, nn.InstanceNorm2d, nn.ReflectionPad2d
    return nn.Conv3d, nn.ConvTranspose3d, nn.InstanceNorm3d, nn.ReflectionPad3d


def _triple(rank: str, time_val: int, space_val: int):
    if rank == RANK_2D:
        return (space_val, space_val)
    return (time_val, space_val, space_val)


class _ResidualBlock(nn.Module):
    def __init__(self, rank: str, width: int):
        super().__init__()
        conv, _, norm, pad = _layers_for_rank(rank)
        self.body = nn.Sequential(
            pad(1),
            conv(width, width, kernel_size=3),
            norm(width),
            nn.ReLU(inplace=True),
            pad(1),
            conv(width, width, kernel_size=3),
            norm(width),
        )

    def forward(self, x):
        # no activation after the additive join
        return x + self.body(x)


class _ResnetGenerator(nn.Module):
    def __init__(self, cfg: GeneratorConfig):
        super().__init__()
        self.cfg = cfg
        conv, deconv, norm, pad = _layers_for_rank(cfg.rank)
        nf = cfg.base_width
        t_stride = 2 if cfg.depth_downsample else 1

        layers: list[nn.Module] = [
            pad(3),
            conv(cfg.in_channels, nf, kernel_size=7),
            norm(nf),
            nn.ReLU(inplace=True),
        ]
        width = nf
        for _ in range(2):
            layers += [
                pad(1),
                conv(width, width * 2, kernel_size=3, stride=_triple(cfg.rank, t_stride, 2)),
                norm(width * 2),
                nn.ReLU(inplace=True),
            ]
            width *= 2
        layers += [_ResidualBlock(cfg.rank, width) for _ in range(cfg.n_res_blocks)]
        for _ in range(2):
            if cfg.upsample_mode == UPSAMPLE_TRANSPOSED:
                layers += [
                    deconv(
                        width,
                        width // 2,
                        kernel_size=3,
                        stride=_triple(cfg.rank, t_stride, 2),
                        padding=1,
                        output_padding=_triple(cfg.rank, t_stride - 1, 1),
                    ),
                ]
            else:
                scale = _triple(cfg.rank, t_stride, 2)
                layers += [
                    nn.Upsample(scale_factor=tuple(float(s) for s in scale), mode="nearest"),
                    pad(1),
                    conv(width, width // 2, kernel_size=3),
                ]
            layers += [norm(width // 2), nn.ReLU(inplace=True)]
            width //= 2
        layers += [pad(3), conv(width, cfg.out_channels, kernel_size=7), nn.Tanh()]
        self.net = nn.Sequential(*layers)

    def _check_input(self, x: torch.Tensor):
        expected_ndim = 4 if self.cfg.rank == RANK_2D else 5
        if x.ndim != expected_ndim:
            raise ValueError(
                f"{self.cfg.rank} generator expects {expected_ndim}D input, got {x.ndim}D"
            )
        if x.shape[1] != self.cfg.in_channels:
            raise ValueError(
                f"expected {self.cfg.in_channels} input channels, got {x.shape[1]}"
            )
        h, w = x.shape[-2], x.shape[-1]
        if h % 4 or w % 4:
            raise ValueError(f"spatial dims must be divisible by 4, got {h}x{w}")
        if h < MIN_SPATIAL or w < MIN_SPATIAL:
            raise ValueError(f"spatial dims must be >= {MIN_SPATIAL}, got {h}x{w}")
        if self.cfg.rank == RANK_3D:
            d = x.shape[2]
            if d < MIN_DEPTH_3D:
                raise ValueError(f"3D generator needs depth >= {MIN_DEPTH_3D}, got {d}")
            if self.cfg.depth_downsample and d % 4:
                raise ValueError(f"depth must be divisible by 4 with depth_downsample, got {d}")

    def forward(self, x):
        self._check_input(x)
        return self.net(x)


class _PatchDiscriminator(nn.Module):
    def __init__(self, cfg: DiscriminatorConfig):
        super().__init__()
        self.cfg = cfg
        conv, _, norm, _ = _layers_for_rank(cfg.rank)
        nf = cfg.base_width
        t_stride = 2 if cfg.depth_downsample else 1
        stride2 = _triple(cfg.rank, t_stride, 2)
        stride1 = _triple(cfg.rank, 1, 1)

        layers: list[nn.Module] = [
            conv(cfg.in_channels, nf, kernel_size=4, stride=stride2, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
        ]
        width = nf
        for i in range(1, cfg.n_layers):
            out = nf * min(2**i, 8)
            layers += [
                conv(width, out, kernel_size=4, stride=stride2, padding=1),
                norm(out),
                nn.LeakyReLU(0.2, inplace=True),
            ]
            width = out
        out = nf * min(2**cfg.n_layers, 8)
        layers += [
            conv(width, out, kernel_size=4, stride=stride1, padding=1),
            norm(out),
            nn.LeakyReLU(0.2, inplace=True),
            conv(out, 1, kernel_size=4, stride=stride1, padding=1),
        ]
        self.net = nn.Sequential(*layers)

    def _strides(self) -> list[tuple]:
        t = 2 if self.cfg.depth_downsample else 1
        return [_triple(self.cfg.rank, t, 2)] * self.cfg.n_layers + [
            _triple(self.cfg.rank, 1, 1)
        ] * 2

    def output_map_shape(self, input_shape: tuple[int, ...]) -> tuple[int, ...]:
        """Patch-map shape for a given input; raises if the input is too small."""
        dims = list(input_shape)
        for stride in self._strides():
            for axis, s in enumerate(stride):
                dims[axis] = (dims[axis] + 2 - 4) // s + 1
            if any(d < 1 for d in dims):
                raise ValueError(
                    f"input {input_shape} is smaller than the discriminator receptive field"
                )
        return tuple(dims)

    def forward(self, x):
        expected_ndim = 4 if self.cfg.rank == RANK_2D else 5
        if x.ndim != expected_ndim:
            raise ValueError(
                f"{self.cfg.rank} discriminator expects {expected_ndim}D input, got {x.ndim}D"
            )
        if x.shape[1] != self.cfg.in_channels:
            raise ValueError(
                f"expected {self.cfg.in_channels} input channels, got {x.shape[1]}"
            )
        self.output_map_shape(tuple(x.shape[2:]))
        return self.net(x)


def _init_weights(module: nn.Module) -> None:
    for m in module.modules():
        if isinstance(
            m,
            (nn.Conv2d, nn.Conv3d, nn.ConvTranspose2d, nn.ConvTranspose3d),
        ):
            nn.init.normal_(m.weight, mean=0.0, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


class ModelHandle:
    """A built network plus its config: forward, count, save and restore."""

    def __init__(self, module: nn.Module, config, kind: str):
        self.module = module
        self.config = config
        self.kind = kind

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.module.eval()
        with torch.no_grad():
            return self.module(x)

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.module.parameters())

    def parameter_digest(self) -> str:
        """SHA-256 over all parameter bytes, in state-dict order."""
        digest = hashlib.sha256()
        state = self.module.state_dict()
        for key in sorted(state):
            digest.update(key.encode())
            digest.update(state[key].numpy().tobytes())
        return digest.hexdigest()

    def save(self, path: str | Path, step: int | None = None, rng_state: dict | None = None) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.module.state_dict(), path)
        meta = {
            "schema_version": CHECKPOINT_SCHEMA_VERSION,
            "kind": self.kind,
            "config": dataclasses.asdict(self.config),
            "parameter_count": self.parameter_count(),
            "training_step": step,
            "rng_state": rng_state,
        }
        sidecar = path.with_suffix(".meta.json")
        sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return sidecar

    @classmethod
    def restore(cls, path: str | Path) -> "ModelHandle":
        path = Path(path)
        sidecar = path.with_suffix(".meta.json")
        meta = json.loads(sidecar.read_text())
        if meta.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
            raise ConfigError(f"unsupported checkpoint schema in {sidecar}")
        if meta["kind"] == "generator":
            handle = build_generator(GeneratorConfig(**meta["config"]))
        elif meta["kind"] == "discriminator":
            handle = build_discriminator(DiscriminatorConfig(**meta["config"]))
        else:
            raise ConfigError(f"unknown model kind {meta['kind']!r} in {sidecar}")
        handle.module.load_state_dict(torch.load(path, weights_only=True))
        if handle.parameter_count() != meta["parameter_count"]:
            raise ConfigError(
                f"{path}: restored parameter count {handle.parameter_count()} "
                f"!= recorded {meta['parameter_count']}"
            )
        return handle


def build_generator(cfg: GeneratorConfig, seed: int | None = None) -> ModelHandle:
    if seed is not None:
        torch.manual_seed(seed)
    module = _ResnetGenerator(cfg)
    _init_weights(module)
    return ModelHandle(module, cfg, "generator")


def build_discriminator(cfg: DiscriminatorConfig, seed: int | None = None) -> ModelHandle:
    if seed is not None:
        torch.manual_seed(seed)
    module = _PatchDiscriminator(cfg)
    _init_weights(module)
    return ModelHandle(module, cfg, "discriminator")


def count_params(m: ModelHandle) -> int:
    """Exact count of scalar learnable parameters, from the backend."""
    return m.parameter_count()


# ---------------------------------------------------------------------------
# Closed-form parameter counts and 2D/3D parity calibration


def _conv_params(c_in: int, c_out: int, kernel: int, ndim: int) -> int:
    return c_out * (c_in * kernel**ndim + 1)


def generator_param_count(cfg: GeneratorConfig) -> int:
    """Closed-form parameter count of the generator (instance norm holds none)."""
    nd = 2 if cfg.rank == RANK_2D else 3
    nf = cfg.base_width
    total = _conv_params(cfg.in_channels, nf, 7, nd)
    total += _conv_params(nf, 2 * nf, 3, nd)
    total += _conv_params(2 * nf, 4 * nf, 3, nd)
    total += cfg.n_res_blocks * 2 * _conv_params(4 * nf, 4 * nf, 3, nd)
    total += _conv_params(4 * nf, 2 * nf, 3, nd)
    total += _conv_params(2 * nf, nf, 3, nd)
    total += _conv_params(nf, cfg.out_channels, 7, nd)
    return total


def discriminator_param_count(cfg: DiscriminatorConfig) -> int:
    nd = 2 if cfg.rank == RANK_2D else 3
    nf = cfg.base_width
    widths = [nf] + [nf * min(2**i, 8) for i in range(1, cfg.n_layers + 1)]
    total = _conv_params(cfg.in_channels, widths[0], 4, nd)
    for prev, cur in zip(widths, widths[1:]):
        total += _conv_params(prev, cur, 4, nd)
    total += _conv_params(widths[-1], 1, 4, nd)
    return total


@dataclass(frozen=True)
class CalibrationResult:
    config: GeneratorConfig
    ratio: float  # count_2d / count_3d
    count_2d: int
    count_3d: int


PARITY_TOLERANCE = 0.25
PARITY_WIDTH_RANGE = (1, 1024)


def calibrate_parity(cfg3d: GeneratorConfig) -> CalibrationResult:
    """Find the 2D width whose parameter count best matches ``cfg3d``.

    Ties break toward the smaller width. Raises if no width in [1, 1024]
    comes within 25% of the 3D count (a silently unfair comparison).
    """
    target = generator_param_count(cfg3d)
    if cfg3d.rank == RANK_2D:
        return CalibrationResult(cfg3d, 1.0, target, target)

    best_nf, best_count = None, None
    lo, hi = PARITY_WIDTH_RANGE
    for nf in range(lo, hi + 1):
        candidate = dataclasses.replace(
            cfg3d, rank=RANK_2D, base_width=nf, depth_downsample=False
        )
        count = generator_param_count(candidate)
        if best_count is None or abs(count - target) < abs(best_count - target):
            best_nf, best_count = nf, count
    ratio = best_count / target
    if abs(ratio - 1.0) > PARITY_TOLERANCE:
        raise ConfigError(
            f"no 2D width in [{lo}, {hi}] matches the 3D parameter count "
            f"{target} within {PARITY_TOLERANCE:.0%} (best ratio {ratio:.3f})"
        )
    config = dataclasses.replace(
        cfg3d, rank=RANK_2D, base_width=best_nf, depth_downsample=False
    )
    return CalibrationResult(config, ratio, best_count, target)


def desk_generator_configs(
    in_channels: int = 1, out_channels: int = 1
) -> tuple[GeneratorConfig, GeneratorConfig]:
    """The shipped desk-scale pair: a 3D config and its parity-matched 2D twin."""
    cfg3d = GeneratorConfig(
        rank=RANK_3D,
        in_channels=in_channels,
        out_channels=out_channels,
        base_width=16,
        n_res_blocks=9,
    )
    return calibrate_parity(cfg3d).config, cfg3d
