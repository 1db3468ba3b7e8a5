import gzip
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vvtlab.errors import ConfigError, DataError
from vvtlab.synth_data import (
    BG_THRESHOLD,
    SANDGLASS,
    SPHERICAL,
    ErosionSchedule,
    MotionSpec,
    MovingColorConfig,
    Palette,
    VolumetricConfig,
    build_dataset,
    builtin_digits,
    colorize_clip,
    erode,
    gen_moving_digit,
    gen_volumetric,
    load_digit_archive,
    make_palette,
    sample_motion,
)
from vvtlab.video_core import DatasetManifest, load_clip


def write_idx_images(path: Path, images: np.ndarray, magic=0x00000803, gz=False):
    n, rows, cols = images.shape
    payload = struct.pack(">IIII", magic, n, rows, cols) + images.tobytes()
    if gz:
        path.write_bytes(gzip.compress(payload))
    else:
        path.write_bytes(payload)


def write_idx_labels(path: Path, labels: np.ndarray, magic=0x00000801):
    payload = struct.pack(">II", magic, labels.shape[0]) + labels.astype(np.uint8).tobytes()
    path.write_bytes(payload)


class TestDigitArchive:
    def test_crafted_fixture_preserves_pixels(self, tmp_path, rng):
        images = rng.integers(0, 256, size=(2, 28, 28), dtype=np.uint8)
        labels = np.array([3, 7], dtype=np.uint8)
        write_idx_images(tmp_path / "imgs", images)
        write_idx_labels(tmp_path / "lbls", labels)
        source = load_digit_archive(tmp_path / "imgs", tmp_path / "lbls")
        assert np.array_equal(source.images, images)
        assert list(source.labels) == [3, 7]

    def test_gzipped_archives_accepted(self, tmp_path, rng):
        images = rng.integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
        write_idx_images(tmp_path / "imgs.gz", images, gz=True)
        write_idx_labels(tmp_path / "lbls", np.zeros(3, dtype=np.uint8))
        source = load_digit_archive(tmp_path / "imgs.gz", tmp_path / "lbls")
        assert np.array_equal(source.images, images)

    def test_count_mismatch_rejected(self, tmp_path):
        write_idx_images(tmp_path / "imgs", np.zeros((1, 28, 28), np.uint8))
        write_idx_labels(tmp_path / "lbls", np.zeros(2, dtype=np.uint8))
        with pytest.raises(DataError, match="count"):
            load_digit_archive(tmp_path / "imgs", tmp_path / "lbls")

    def test_bad_magic_rejected(self, tmp_path):
        write_idx_images(tmp_path / "imgs", np.zeros((1, 28, 28), np.uint8), magic=0xDEAD)
        write_idx_labels(tmp_path / "lbls", np.zeros(1, dtype=np.uint8))
        with pytest.raises(DataError, match="magic"):
            load_digit_archive(tmp_path / "imgs", tmp_path / "lbls")

    def test_truncated_payload_rejected(self, tmp_path):
        write_idx_images(tmp_path / "imgs", np.zeros((2, 28, 28), np.uint8))
        raw = (tmp_path / "imgs").read_bytes()
        (tmp_path / "imgs").write_bytes(raw[:-10])
        write_idx_labels(tmp_path / "lbls", np.zeros(2, dtype=np.uint8))
        with pytest.raises(DataError, match="truncated"):
            load_digit_archive(tmp_path / "imgs", tmp_path / "lbls")

    def test_standard_archive_convention(self, tmp_path):
        # a full-size archive of the usual training shape parses to 60000 images
        images = np.zeros((60000, 28, 28), dtype=np.uint8)
        write_idx_images(tmp_path / "imgs", images)
        write_idx_labels(tmp_path / "lbls", np.zeros(60000, dtype=np.uint8))
        source = load_digit_archive(tmp_path / "imgs", tmp_path / "lbls")
        assert len(source) == 60000
        assert source.images.shape[1:] == (28, 28)

    def test_builtin_digits_have_ink(self):
        source = builtin_digits(32, seed=5)
        assert len(source) == 32
        assert all(img.max() >= 200 for img in source.images)


def erode_oracle(img: np.ndarray, radius: int) -> np.ndarray:
    """Brute-force min filter over the disk, zero-padded borders."""
    h, w = img.shape
    offsets = [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= radius * radius
    ]
    out = np.zeros_like(img)
    for y in range(h):
        for x in range(w):
            vals = []
            for dy, dx in offsets:
                yy, xx = y + dy, x + dx
                vals.append(int(img[yy, xx]) if 0 <= yy < h and 0 <= xx < w else 0)
            out[y, x] = min(vals)
    return out


class TestErode:
    def test_radius_zero_is_identity(self, rng):
        img = rng.integers(0, 256, size=(9, 9), dtype=np.uint8)
        assert np.array_equal(erode(img, 0), img)

    def test_zeros_stay_zeros(self):
        img = np.zeros((7, 7), dtype=np.uint8)
        assert np.array_equal(erode(img, 2), img)

    def test_single_bright_center_vanishes(self):
        img = np.zeros((5, 5), dtype=np.uint8)
        img[2, 2] = 255
        assert np.array_equal(erode(img, 1), erode_oracle(img, 1))
        assert (erode(img, 1) == 0).all()

    def test_oversized_radius_rejected(self):
        with pytest.raises(ConfigError):
            erode(np.zeros((6, 6), dtype=np.uint8), 4)

    @given(
        hnp.arrays(np.uint8, (7, 8), elements=st.integers(0, 255)),
        st.integers(0, 3),
    )
    @settings(max_examples=20)
    def test_matches_brute_force(self, img, radius):
        assert np.array_equal(erode(img, radius), erode_oracle(img, radius))

    @given(hnp.arrays(np.uint8, (8, 8), elements=st.integers(0, 255)))
    @settings(max_examples=15)
    def test_monotone_in_radius(self, img):
        means = [erode(img, r).mean() for r in range(4)]
        assert all(a >= b for a, b in zip(means, means[1:]))


class TestErosionSchedule:
    def test_spherical_shape(self):
        radii = ErosionSchedule(SPHERICAL, 30, 6).radii()
        assert radii[0] == radii[29] == 6
        assert radii[14] == radii[15] == 0
        assert np.array_equal(radii, radii[::-1])

    def test_sandglass_shape(self):
        radii = ErosionSchedule(SANDGLASS, 30, 6).radii()
        assert radii[0] == radii[29] == 0
        assert radii[14] == radii[15] == 6
        assert np.array_equal(radii, radii[::-1])

    def test_radii_in_range(self):
        for mode in (SPHERICAL, SANDGLASS):
            for d in (2, 5, 8, 30):
                radii = ErosionSchedule(mode, d, 6).radii()
                assert radii.min() >= 0 and radii.max() <= 6

    def test_depth_one_rejected(self):
        with pytest.raises(ConfigError):
            ErosionSchedule(SPHERICAL, 1, 6)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ConfigError):
            ErosionSchedule("cubic", 30, 6)


class TestGenVolumetric:
    digit = builtin_digits(1, seed=2).images[0]

    def test_middle_frame_is_uneroded(self):
        clip = gen_volumetric(self.digit, ErosionSchedule(SPHERICAL, 30, 6), canvas=84)
        upscaled = np.repeat(np.repeat(self.digit, 3, 0), 3, 1)
        assert np.array_equal(clip.data[14, :, :, 0], upscaled)
        assert np.array_equal(clip.data[15, :, :, 0], upscaled)

    def test_ends_dimmer_than_middle(self):
        clip = gen_volumetric(self.digit, ErosionSchedule(SPHERICAL, 30, 6), canvas=84)
        assert clip.data[0].mean() < clip.data[15].mean()

    def test_empty_digit_gives_zero_frames(self):
        clip = gen_volumetric(
            np.zeros((28, 28), np.uint8), ErosionSchedule(SANDGLASS, 8, 2), canvas=28
        )
        assert (clip.data == 0).all()

    def test_shape_contract(self):
        clip = gen_volumetric(self.digit, ErosionSchedule(SPHERICAL, 30, 6), canvas=84)
        assert clip.shape == (30, 84, 84, 1)
        assert clip.space == "storage"

    def test_temporal_symmetry_is_bit_exact(self):
        clip = gen_volumetric(self.digit, ErosionSchedule(SANDGLASS, 9, 3), canvas=28)
        for t in range(9):
            assert np.array_equal(clip.data[t], clip.data[8 - t])


class TestMovingDigit:
    digit = builtin_digits(1, seed=3).images[0]

    def test_single_frame_at_initial_position(self):
        motion = MotionSpec(height=40, width=40, row=5, col=6, d_row=1, d_col=1, depth=1)
        clip = gen_moving_digit(self.digit, motion)
        assert clip.shape == (1, 40, 40, 1)
        assert np.array_equal(clip.data[0, 5:33, 6:34, 0], self.digit)

    def test_constant_velocity_shifts_frames(self):
        motion = MotionSpec(height=64, width=64, row=0, col=10, d_row=1, d_col=1, depth=3)
        clip = gen_moving_digit(self.digit, motion)
        for t in range(3):  # shift-and-compare oracle
            expected = np.zeros((64, 64), dtype=np.uint8)
            expected[t : t + 28, 10 + t : 38 + t] = self.digit
            assert np.array_equal(clip.data[t, :, :, 0], expected)

    def test_deterministic(self):
        motion = MotionSpec(height=40, width=40, row=3, col=3, d_row=2, d_col=-1, depth=6)
        a = gen_moving_digit(self.digit, motion)
        b = gen_moving_digit(self.digit, motion)
        assert a == b

    def test_zero_velocity_rejected(self):
        with pytest.raises(ConfigError):
            MotionSpec(height=40, width=40, row=0, col=0, d_row=0, d_col=1, depth=3)

    def test_digit_larger_than_canvas_rejected(self):
        motion = MotionSpec(height=20, width=20, row=0, col=0, d_row=1, d_col=1, depth=2)
        with pytest.raises(DataError):
            gen_moving_digit(self.digit, motion)

    def test_bounce_preserves_pixel_multiset(self, rng):
        motion = sample_motion(rng, 40, 40, depth=20)
        clip = gen_moving_digit(self.digit, motion)
        reference = np.sort(self.digit.ravel())
        for t in range(clip.depth):
            frame = clip.data[t, :, :, 0]
            assert np.array_equal(
                np.sort(frame[frame > 0]), reference[reference > 0]
            )

    def test_tight_canvas_keeps_digit_inside(self):
        motion = MotionSpec(height=28, width=28, row=0, col=0, d_row=1, d_col=1, depth=5)
        clip = gen_moving_digit(self.digit, motion)
        for t in range(5):
            assert np.array_equal(clip.data[t, :, :, 0], self.digit)


class TestColorize:
    digit = builtin_digits(1, seed=4).images[0]

    def _white_clip(self):
        motion = MotionSpec(height=40, width=40, row=2, col=2, d_row=1, d_col=1, depth=4)
        return gen_moving_digit(self.digit, motion)

    def test_white_tint_is_identity(self):
        clip = self._white_clip()
        out = colorize_clip(clip, (255, 255, 255))
        for k in range(3):
            assert np.array_equal(out.data[..., k], clip.data[..., 0])

    def test_full_intensity_takes_pure_color(self):
        clip_data = np.full((1, 1, 1, 1), 255, dtype=np.uint8)
        from vvtlab.video_core import VideoTensor

        out = colorize_clip(VideoTensor(clip_data), (0, 128, 255))
        assert tuple(out.data[0, 0, 0]) == (0, 128, 255)

    def test_mask_preserved_with_palette_colors(self, rng):
        clip = self._white_clip()
        for color in make_palette(6).colors:
            out = colorize_clip(clip, color)
            mask_in = clip.data.max(axis=3) > BG_THRESHOLD
            mask_out = out.data.max(axis=3) > BG_THRESHOLD
            assert np.array_equal(mask_in, mask_out)

    def test_rgb_input_rejected(self):
        clip = colorize_clip(self._white_clip(), (255, 0, 0))
        with pytest.raises(DataError):
            colorize_clip(clip, (255, 0, 0))


class TestPalette:
    def test_single_color_is_red(self):
        assert make_palette(1).colors == ((255, 0, 0),)

    def test_three_colors_are_primaries(self):
        assert make_palette(3).colors == ((255, 0, 0), (0, 255, 0), (0, 0, 255))

    def test_twenty_distinct(self):
        palette = make_palette(20)
        assert len(set(palette.colors)) == 20

    def test_out_of_range_rejected(self):
        with pytest.raises(ConfigError):
            make_palette(0)
        with pytest.raises(ConfigError):
            make_palette(257)

    def test_duplicate_colors_rejected(self):
        with pytest.raises(ConfigError):
            Palette(colors=((1, 2, 3), (1, 2, 3)))


class TestBuildDataset:
    def test_volumetric_shapes_and_split(self, tmp_path):
        config = VolumetricConfig(depth=30, canvas=84, clips_per_domain=10)
        man_a, man_b = build_dataset("volumetric", config, tmp_path, seed=7)
        assert man_a.domain_name == SPHERICAL and man_b.domain_name == SANDGLASS
        for manifest in (man_a, man_b):
            assert manifest.shape == (30, 84, 84, 1)
            train = {c.clip_id for c in manifest.train_clips()}
            test = {c.clip_id for c in manifest.test_clips()}
            assert not train & test
            assert len(train) == 7  # 70% of 10
            clip = load_clip(manifest.clip_path(manifest.clips[0]))
            assert clip.shape == (30, 84, 84, 1)

    def test_same_seed_is_byte_identical(self, tmp_path):
        config = VolumetricConfig(depth=8, canvas=28, clips_per_domain=4, max_radius=2)
        build_dataset("volumetric", config, tmp_path / "one", seed=5)
        build_dataset("volumetric", config, tmp_path / "two", seed=5)
        files_one = sorted(p for p in (tmp_path / "one").rglob("*") if p.is_file())
        files_two = sorted(p for p in (tmp_path / "two").rglob("*") if p.is_file())
        assert [p.relative_to(tmp_path / "one") for p in files_one] == [
            p.relative_to(tmp_path / "two") for p in files_two
        ]
        for a, b in zip(files_one, files_two):
            assert a.read_bytes() == b.read_bytes(), a.name

    def test_different_seed_differs(self, tmp_path):
        config = MovingColorConfig(depth=4, height=32, width=32, clips_per_domain=3, n_colors=4)
        build_dataset("moving_color", config, tmp_path / "one", seed=1)
        build_dataset("moving_color", config, tmp_path / "two", seed=2)
        a = (tmp_path / "one/domain_a/clips/white_00000.vvt").read_bytes()
        b = (tmp_path / "two/domain_a/clips/white_00000.vvt").read_bytes()
        assert a != b

    def test_insufficient_digits_rejected(self, tmp_path):
        config = VolumetricConfig(depth=8, canvas=28, clips_per_domain=4, max_radius=2)
        digits = builtin_digits(5, seed=1)  # need 8
        with pytest.raises(DataError, match="digit"):
            build_dataset("volumetric", config, tmp_path, seed=0, digits=digits)

    def test_volumetric_test_clips_have_gt(self, tmp_path):
        config = VolumetricConfig(depth=8, canvas=28, clips_per_domain=6, max_radius=2)
        man_a, _ = build_dataset("volumetric", config, tmp_path, seed=3)
        for entry in man_a.test_clips():
            gt = man_a.gt_clip_path(entry)
            assert gt is not None and gt.exists()
            gt_clip = load_clip(gt)
            assert gt_clip.shape == (8, 28, 28, 1)
        for entry in man_a.train_clips():
            assert entry.gt_path is None

    def test_small_digits_actually_move(self, tmp_path):
        config = MovingColorConfig(
            depth=6, height=28, width=28, clips_per_domain=4, n_colors=4, digit_size=14
        )
        man_a, _ = build_dataset("moving_color", config, tmp_path, seed=2)
        moved = 0
        for entry in man_a.clips:
            clip = load_clip(man_a.clip_path(entry))
            if any(
                not np.array_equal(clip.data[t], clip.data[0])
                for t in range(1, clip.depth)
            ):
                moved += 1
        assert moved == len(man_a.clips)

    def test_bad_digit_size_rejected(self):
        with pytest.raises(ConfigError):
            MovingColorConfig(digit_size=13)

    def test_moving_color_palette_recorded(self, tmp_path):
        config = MovingColorConfig(depth=4, height=32, width=32, clips_per_domain=4, n_colors=20)
        _, man_b = build_dataset("moving_color", config, tmp_path, seed=9)
        assert len(man_b.metadata["palette"]) == 20
        assert man_b.shape[3] == 3
        loaded = DatasetManifest.load(tmp_path / "domain_b/manifest.json")
        assert loaded.metadata["palette"] == man_b.metadata["palette"]

    def test_unknown_kind_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            build_dataset("nope", VolumetricConfig(), tmp_path, seed=0)
