import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attncite.trace import (
    Trace,
    TraceError,
    TraceMeta,
    load_trace,
    pool_raw,
    save_trace,
    validate_matrix,
)

FIXTURES = Path(__file__).parent / "fixtures"


def tiny_meta(**overrides):
    kwargs = dict(
        source_text="Ab cd.",
        source_tokens=[(0, 2), (3, 5)],
        gen_text="Xy.",
        gen_tokens=[(0, 2)],
        source_region=(0, 2),
        mode="TEXT",
    )
    kwargs.update(overrides)
    return TraceMeta(**kwargs)


def write_trace_dir(tmp_path, meta, attn_bytes):
    d = tmp_path / "trace"
    d.mkdir()
    from attncite.trace import _meta_to_dict

    (d / "meta.json").write_text(json.dumps(_meta_to_dict(meta, None)), encoding="utf-8")
    (d / "attn.bin").write_bytes(attn_bytes)
    return d


class TestLoadTrace:
    def test_minimal_well_formed(self, tmp_path):
        meta = tiny_meta()
        attn = np.array([[0.6, 0.4]], dtype="<f4")
        d = write_trace_dir(tmp_path, meta, attn.tobytes())
        trace = load_trace(d)
        assert trace.attn.shape == (1, 2)
        assert trace.attn[0, 0] == pytest.approx(0.6)

    def test_binary_length_mismatch(self, tmp_path):
        meta = tiny_meta()
        bad = np.array([0.1, 0.2, 0.3], dtype="<f4").tobytes()
        d = write_trace_dir(tmp_path, meta, bad)
        with pytest.raises(TraceError, match="binary length mismatch"):
            load_trace(d)

    def test_missing_files(self, tmp_path):
        with pytest.raises(TraceError, match="meta.json"):
            load_trace(tmp_path)
        (tmp_path / "meta.json").write_text("{}")
        with pytest.raises(TraceError, match="attn.bin"):
            load_trace(tmp_path)

    def test_nan_rejected(self, tmp_path):
        attn = np.array([[np.nan, 0.4]], dtype="<f4")
        d = write_trace_dir(tmp_path, tiny_meta(), attn.tobytes())
        with pytest.raises(TraceError, match="non-finite"):
            load_trace(d)

    def test_negative_rejected(self, tmp_path):
        attn = np.array([[-0.1, 0.4]], dtype="<f4")
        d = write_trace_dir(tmp_path, tiny_meta(), attn.tobytes())
        with pytest.raises(TraceError, match="negative"):
            load_trace(d)

    def test_overlapping_spans_rejected(self):
        with pytest.raises(TraceError, match="source_tokens"):
            tiny_meta(source_tokens=[(0, 3), (2, 5)]).validate()

    def test_unordered_spans_rejected(self):
        with pytest.raises(TraceError, match="source_tokens"):
            tiny_meta(source_tokens=[(3, 5), (0, 2)]).validate()

    def test_empty_source_region_rejected(self):
        with pytest.raises(TraceError, match="source_region"):
            tiny_meta(source_region=(1, 1)).validate()

    def test_caption_iff_img_cap(self):
        with pytest.raises(TraceError, match="caption_span"):
            tiny_meta(caption_span=(0, 5)).validate()
        with pytest.raises(TraceError, match="caption_span"):
            tiny_meta(mode="IMG_CAP").validate()
        tiny_meta(mode="IMG_CAP", caption_span=(0, 5)).validate()

    def test_image_block_needs_zero_width_spans(self):
        meta = tiny_meta(
            mode="IMG_RAW",
            source_tokens=[(0, 2), (3, 5), (6, 6)],
            image_block=(1, 2),
        )
        with pytest.raises(TraceError, match="zero-width"):
            meta.validate()
        meta = tiny_meta(
            mode="IMG_RAW",
            source_tokens=[(0, 2), (3, 5), (6, 6)],
            image_block=(2, 3),
        )
        meta.validate()

    def test_img_raw_requires_block(self):
        with pytest.raises(TraceError, match="image_block"):
            tiny_meta(mode="IMG_RAW").validate()


class TestRoundTrip:
    def test_mini_text_fixture_round_trips_byte_identically(self, tmp_path):
        src = FIXTURES / "mini_text"
        trace = load_trace(src, load_raw=True)
        assert len([s for s in trace.meta.gen_text.split(".") if s.strip()]) == 3
        dst = save_trace(trace, tmp_path / "copy")
        for name in ("meta.json", "attn.bin", "raw.bin"):
            assert (dst / name).read_bytes() == (src / name).read_bytes(), name

    def test_fixture_raw_pools_to_attn(self):
        trace = load_trace(FIXTURES / "mini_text", load_raw=True)
        assert trace.raw is not None
        np.testing.assert_allclose(pool_raw(trace.raw), trace.attn, atol=1e-6)

    def test_random_traces_round_trip_all_modes(self, tmp_path):
        from attncite.synth import random_trace

        for seed in range(20):
            meta, matrix = random_trace(seed)
            d1 = save_trace(Trace(meta=meta, attn=matrix), tmp_path / f"a{seed}")
            d2 = save_trace(load_trace(d1), tmp_path / f"b{seed}")
            for name in ("meta.json", "attn.bin"):
                assert (d1 / name).read_bytes() == (d2 / name).read_bytes()

    def test_save_validates(self, tmp_path):
        meta = tiny_meta()
        bad = np.array([[0.6, 0.4], [0.1, 0.2]], dtype="<f4")  # rows != gen tokens
        with pytest.raises(TraceError):
            save_trace(Trace(meta=meta, attn=bad), tmp_path / "x")


class TestPoolRaw:
    def test_identity_for_single_slice(self):
        raw = np.array([[[[1.0, 0.0, 2.0]]]], dtype=np.float32)  # (1,1,1,3)
        np.testing.assert_array_equal(pool_raw(raw), raw[:, 0, 0, :])

    def test_hand_mean(self):
        raw = np.zeros((1, 2, 1, 2), dtype=np.float32)
        raw[0, 0, 0] = [1.0, 0.0]
        raw[0, 1, 0] = [0.0, 1.0]
        np.testing.assert_array_equal(pool_raw(raw), [[0.5, 0.5]])

    def test_rejects_negative(self):
        raw = np.full((1, 1, 1, 2), -1.0, dtype=np.float32)
        with pytest.raises(TraceError):
            pool_raw(raw)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_permutation_invariant(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        t, l, h, k = (int(x) for x in rng.integers(1, 4, size=4))
        raw = rng.uniform(0, 1, (t, l, h, k)).astype(np.float32)
        base = pool_raw(raw)
        perm_l = rng.permutation(l)
        perm_h = rng.permutation(h)
        shuffled = raw[:, perm_l][:, :, perm_h]
        np.testing.assert_allclose(pool_raw(shuffled), base, rtol=0, atol=1e-7)

    @given(st.integers(0, 2**32 - 1), st.sampled_from([0.25, 0.5, 2.0, 4.0]))
    @settings(max_examples=30, deadline=None)
    def test_positive_scaling_exact_for_powers_of_two(self, seed, c):
        rng = np.random.Generator(np.random.PCG64(seed))
        raw = rng.uniform(0, 1, (2, 2, 2, 3)).astype(np.float32)
        np.testing.assert_array_equal(
            pool_raw((c * raw).astype(np.float32)), np.float32(c) * pool_raw(raw)
        )

    def test_positive_scaling_general(self):
        rng = np.random.Generator(np.random.PCG64(1))
        raw = rng.uniform(0, 1, (2, 3, 2, 4)).astype(np.float32)
        c = 3.7
        np.testing.assert_allclose(
            pool_raw((c * raw).astype(np.float32)), c * pool_raw(raw), rtol=1e-6
        )


def test_validate_matrix_shape_mismatch():
    meta = tiny_meta()
    with pytest.raises(TraceError, match="rows"):
        validate_matrix(np.zeros((2, 2), dtype=np.float32), meta)
    with pytest.raises(TraceError, match="cols"):
        validate_matrix(np.zeros((1, 3), dtype=np.float32), meta)
