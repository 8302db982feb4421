"""Sampling contract tests: segment windows, dense snippet enumeration,
augmentation identities and determinism."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from motionscore.errors import ConfigError, InputError
from motionscore.sampling import (AugmentConfig, SamplerConfig, TransformSpec,
                                  apply_transform, augment, center_crop,
                                  choose_transform, dense_snippets, dense_starts,
                                  hflip_frames, segment_bounds, segment_sample,
                                  segment_starts, window_indices)


def _clip(n, c=2, h=8, w=8, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((c, n, h, w)).astype(np.float32)


class TestSegmentSample:
    def test_128_frames_unique_windows(self):
        cfg = SamplerConfig()
        snips = segment_sample(_clip(128), cfg, np.random.default_rng(0), modality="mb")
        assert len(snips) == 4
        for i, s in enumerate(snips):
            assert s.start == 32 * i          # only one valid window per segment
            assert s.frames.shape[1] == 32
            assert s.source_segment == i

    def test_123_frames_all_snippets_valid(self):
        # dataset-minimum length for the hand task; segments of 30/30/30/33
        cfg = SamplerConfig()
        arr = _clip(123)
        for seed in range(20):
            snips = segment_sample(arr, cfg, np.random.default_rng(seed), modality="mb")
            assert len(snips) == 4
            bounds = segment_bounds(123, 4)
            for s, (lo, hi) in zip(snips, bounds):
                assert lo <= s.start < hi     # window begins inside its segment
                assert s.frames.shape[1] == 32

    def test_chronological_across_segments(self):
        cfg = SamplerConfig()
        for seed in range(10):
            snips = segment_sample(_clip(140), cfg, np.random.default_rng(seed), modality="rgb", clip_id="c")
            starts = [s.start for s in snips]
            assert starts == sorted(starts)

    def test_deterministic_under_seed(self):
        cfg = SamplerConfig()
        a = segment_sample(_clip(123), cfg, np.random.default_rng(7), modality="mb")
        b = segment_sample(_clip(123), cfg, np.random.default_rng(7), modality="mb")
        assert [s.start for s in a] == [s.start for s in b]
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.frames.data, y.frames.data)

    def test_window_contents_chronological(self):
        # frame t encoded in pixel value; window must be t, t+1, ...
        arr = np.zeros((1, 50, 3, 3), dtype=np.float32)
        arr[0, :, 0, 0] = np.arange(50)
        cfg = SamplerConfig(k_segments=2, train_len=8)
        snips = segment_sample(arr, cfg, np.random.default_rng(1), modality="rgb")
        for s in snips:
            got = s.frames.data[0, :, 0, 0]
            expect = (s.start + np.arange(8)) % 50
            np.testing.assert_array_equal(got, expect)

    def test_wraps_only_past_clip_end(self):
        idx = window_indices(start=47, length=8, n_frames=50)
        np.testing.assert_array_equal(idx, [47, 48, 49, 0, 1, 2, 3, 4])

    def test_too_short_clip_rejected(self):
        with pytest.raises(InputError):
            segment_sample(_clip(3), SamplerConfig(), np.random.default_rng(0), modality="mb")

    def test_empty_clip_rejected(self):
        with pytest.raises(InputError):
            segment_sample(np.zeros((2, 0, 4, 4), np.float32), SamplerConfig(),
                           np.random.default_rng(0), modality="mb")


class TestDenseSnippets:
    def test_long_clip_uniform_starts(self):
        starts = dense_starts(1024, 64, 16)
        assert starts == [16 * i for i in range(64)]

    def test_minimal_clip_all_identical(self):
        starts = dense_starts(16, 64, 16)
        assert starts == [0] * 64

    def test_79_frames_all_in_bounds(self):
        starts = dense_starts(79, 64, 16)
        assert len(starts) == 64
        assert starts[0] == 0 and starts[-1] == 63
        assert all(0 <= s <= 63 for s in starts)
        assert starts == sorted(starts)

    def test_returns_exactly_64(self):
        cfg = SamplerConfig()
        snips = dense_snippets(_clip(100), cfg, modality="flow")
        assert len(snips) == 64
        assert all(s.frames.shape[1] == 16 for s in snips)

    def test_short_clip_loops(self):
        cfg = SamplerConfig()
        snips = dense_snippets(_clip(10), cfg, modality="flow")
        assert len(snips) == 64
        assert all(s.frames.shape[1] == 16 for s in snips)

    @settings(max_examples=25, deadline=None)
    @given(n=st.integers(16, 2000))
    def test_all_starts_in_bounds(self, n):
        starts = dense_starts(n, 64, 16)
        assert len(starts) == 64
        assert all(0 <= s <= n - 16 for s in starts)


class TestAugment:
    def _snippet(self, modality="flow", h=10, w=10):
        cfg = SamplerConfig(k_segments=1, train_len=4)
        return segment_sample(_clip(12, 2, h, w), cfg, np.random.default_rng(0),
                              modality=modality)[0]

    def test_disabled_is_identity(self):
        s = self._snippet()
        out = augment(s, np.random.default_rng(0), AugmentConfig(enabled=False))
        np.testing.assert_array_equal(out.frames.data, s.frames.data)
        assert out.transform == "none"

    def test_double_flip_restores_original(self):
        s = self._snippet(modality="flow")
        once = hflip_frames(s.frames.data, "flow")
        twice = hflip_frames(once, "flow")
        np.testing.assert_array_equal(twice, s.frames.data)
        # single flip must differ in sign of the u channel
        assert np.array_equal(once[0], -s.frames.data[0][:, :, ::-1])

    def test_flip_negates_u_only_for_flow_like(self):
        s = self._snippet(modality="rgb")
        flipped = hflip_frames(s.frames.data, "rgb")
        np.testing.assert_array_equal(flipped, s.frames.data[:, :, :, ::-1])

    def test_deterministic_under_seed(self):
        s = self._snippet()
        aug = AugmentConfig(out_size=(8, 8))
        a = augment(s, np.random.default_rng(3), aug)
        b = augment(s, np.random.default_rng(3), aug)
        assert a.transform == b.transform
        np.testing.assert_array_equal(a.frames.data, b.frames.data)

    def test_same_transform_for_all_frames(self):
        # constant-in-time input stays constant in time after augmentation
        arr = np.tile(np.random.default_rng(0).random((1, 1, 12, 12)).astype(np.float32),
                      (2, 5, 1, 1))
        spec = TransformSpec(0.75, 0.66, "tr", True)
        out = apply_transform(arr, spec, AugmentConfig(out_size=(8, 8)), "flow")
        for t in range(1, 5):
            np.testing.assert_array_equal(out[:, t], out[:, 0])

    def test_output_size(self):
        s = self._snippet(h=12, w=12)
        aug = AugmentConfig(out_size=(8, 8))
        out = augment(s, np.random.default_rng(5), aug)
        assert out.frames.shape == (2, 4, 8, 8)

    def test_crop_larger_than_frame_rejected(self):
        s = self._snippet(h=6, w=6)
        aug = AugmentConfig(out_size=(8, 8), scales=(1.0,))
        with pytest.raises(ConfigError, match="larger than frame"):
            apply_transform(s.frames.data, TransformSpec(1.0, 1.0, "tl", False), aug, "flow")

    def test_identity_transform_bit_exact(self):
        s = self._snippet(h=8, w=8)
        aug = AugmentConfig(out_size=(8, 8))
        out = apply_transform(s.frames.data, TransformSpec(1.0, 1.0, "center", False),
                              aug, "flow")
        np.testing.assert_array_equal(out, s.frames.data)

    def test_center_crop(self):
        arr = np.zeros((1, 1, 6, 6), np.float32)
        arr[0, 0, 2:4, 2:4] = 1.0
        out = center_crop(arr, 2, 2)
        np.testing.assert_array_equal(out, np.ones((1, 1, 2, 2), np.float32))

    def test_choose_transform_draw_order(self):
        aug = AugmentConfig()
        a = choose_transform(np.random.default_rng(11), aug)
        b = choose_transform(np.random.default_rng(11), aug)
        assert a == b
        assert a.position in ("tl", "tr", "bl", "br", "center")
        assert a.scale_h in aug.scales and a.scale_w in aug.scales


class TestConfig:
    def test_counts_validated(self):
        with pytest.raises(ConfigError):
            SamplerConfig(k_segments=0)
        with pytest.raises(ConfigError):
            SamplerConfig(test_len=0)

    def test_defaults(self):
        cfg = SamplerConfig()
        assert (cfg.k_segments, cfg.train_len, cfg.test_snippets, cfg.test_len) == (4, 32, 64, 16)
