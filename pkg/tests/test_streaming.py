"""Streamed emission timing and equivalence with the offline forward."""

import numpy as np
import pytest

from chunkstream import encoder as E
from chunkstream import streaming as S
from chunkstream.masks import FULL, MaskSpec
from chunkstream.schedule import SplitMix64

SMALL_CFG = E.EncoderConfig(dims=(8, 12), factors=(1, 2), seed=7)
SMALL_PARAMS = E.init_encoder_params(SMALL_CFG)
FULL_CFG = E.EncoderConfig()
FULL_PARAMS = E.init_encoder_params(FULL_CFG)


def seeded_features(n_frames, seed=42, dim=80):
    rng = SplitMix64(seed)
    return rng.uniform_array(n_frames * dim, -1.0, 1.0).reshape(n_frames, dim)


def push_encoder_frames(state, features, n):
    """Push n encoder frames' worth of features (2 per encoder frame)."""
    taken = features[: 2 * n]
    return state.push(taken), features[2 * n:]


class TestEmissionDeadline:
    def test_first_frame_waits_out_its_chunk(self):
        assert S.emission_deadline(0, MaskSpec(32, FULL, 0)) == 32
        assert abs(S.added_latency_s(0, MaskSpec(32, FULL, 0)) - 0.62) < 1e-12

    def test_chunk_final_frame_waits_rc(self):
        spec = MaskSpec(32, FULL, 64)
        assert S.emission_deadline(31, spec) == 96
        assert abs(S.added_latency_s(31, spec) - 1.28) < 1e-12

    def test_chunk_boundary_no_wait(self):
        assert S.emission_deadline(63, MaskSpec(32, FULL, 0)) == 64

    def test_rc128_chunk_final_lookahead(self):
        assert abs(S.added_latency_s(31, MaskSpec(32, FULL, 128)) - 2.56) < 1e-12

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            S.emission_deadline(-1, MaskSpec(32, FULL, 0))


class TestOpenStream:
    def test_empty_stream_emits_nothing(self):
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        out = st.finalize()
        assert out.shape == (0, SMALL_CFG.out_dim)

    def test_same_seed_identical_outputs(self):
        feats = seeded_features(40)
        a = S.open_stream(E.init_encoder_params(SMALL_CFG), MaskSpec(2, FULL, 0))
        b = S.open_stream(E.init_encoder_params(SMALL_CFG), MaskSpec(2, FULL, 0))
        out_a = np.concatenate([a.push(feats), a.finalize()])
        out_b = np.concatenate([b.push(feats), b.finalize()])
        assert out_a.tobytes() == out_b.tobytes()

    def test_invalid_spec_rejected(self):
        with pytest.raises(ValueError):
            MaskSpec(0, FULL, 0)
        with pytest.raises(ValueError):
            S.open_stream(FULL_PARAMS, MaskSpec(12, FULL, 0))  # not a multiple of 8


class TestPushEmission:
    def test_chunk2_rc0_emission_pattern(self):
        feats = seeded_features(8)
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        out, feats = push_encoder_frames(st, feats, 2)
        assert out.shape[0] == 2
        out, feats = push_encoder_frames(st, feats, 1)
        assert out.shape[0] == 0
        out, feats = push_encoder_frames(st, feats, 1)
        assert out.shape[0] == 2

    def test_chunk2_rc2_pending(self):
        feats = seeded_features(8)
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 2))
        out, _ = push_encoder_frames(st, feats, 4)
        assert out.shape[0] == 2
        assert st.next_emit == 2

    def test_empty_push_is_noop(self):
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        st.push(seeded_features(3))
        before = (st.frames_received, st.next_emit)
        out = st.push(np.empty((0, 80)))
        assert out.shape[0] == 0
        assert (st.frames_received, st.next_emit) == before

    def test_push_after_finalize_rejected(self):
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        st.finalize()
        with pytest.raises(RuntimeError):
            st.push(seeded_features(2))

    def test_bad_features_rejected(self):
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        with pytest.raises(ValueError):
            st.push(np.zeros((2, 79)))
        bad = np.zeros((2, 80))
        bad[0, 0] = np.nan
        with pytest.raises(ValueError):
            st.push(bad)


class TestFinalize:
    def test_flushes_single_pending_frame(self):
        feats = seeded_features(2)
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        out = st.push(feats)
        assert out.shape[0] == 0  # frame 0 deadline is 2
        assert st.finalize().shape[0] == 1

    def test_partition_property(self):
        """push emissions + finalize cover 0..T'-1 exactly once."""
        feats = seeded_features(61)
        st = S.open_stream(SMALL_PARAMS, MaskSpec(4, 8, 2))
        total = 0
        for i in range(0, 61, 7):
            total += st.push(feats[i:i + 7]).shape[0]
        total += st.finalize().shape[0]
        assert total == 61 // 2

    def test_everything_pends_when_rc_exceeds_length(self):
        feats = seeded_features(32)  # 16 encoder frames
        st = S.open_stream(FULL_PARAMS, MaskSpec(32, FULL, 64))
        assert st.push(feats).shape[0] == 0
        assert st.finalize().shape[0] == 16

    def test_double_finalize_rejected(self):
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        st.finalize()
        with pytest.raises(RuntimeError):
            st.finalize()

    def test_odd_trailing_feature_dropped(self):
        st = S.open_stream(SMALL_PARAMS, MaskSpec(2, FULL, 0))
        pushed = st.push(seeded_features(5)).shape[0]
        assert pushed + st.finalize().shape[0] == 5 // 2


class TestEmissionTimeLaw:
    @pytest.mark.parametrize("chunk,rc", [(2, 0), (2, 2), (4, 0), (4, 6), (8, 3)])
    def test_exhaustive_to_128(self, chunk, rc):
        """Frame t emits in the push that reaches its deadline, else finalize."""
        spec = MaskSpec(chunk, 8, rc)
        feats = seeded_features(256)
        st = S.open_stream(SMALL_PARAMS, spec)
        emitted_at = {}
        for arrival in range(1, 129):  # one encoder frame per push
            out = st.push(feats[2 * (arrival - 1): 2 * arrival])
            for _ in range(out.shape[0]):
                emitted_at[len(emitted_at)] = arrival
        final_out = st.finalize()
        for _ in range(final_out.shape[0]):
            emitted_at[len(emitted_at)] = "finalize"
        assert len(emitted_at) == 128
        for t in range(128):
            deadline = S.emission_deadline(t, spec)
            want = deadline if deadline <= 128 else "finalize"
            assert emitted_at[t] == want, (t, deadline)


class TestStreamingOfflineEquivalence:
    """Concatenated stream output equals encoder_forward, any partition."""

    PARTITIONS = {
        "frame_by_frame": 1,
        "half_second": 50,
        "whole": 10_000,
    }

    @pytest.mark.parametrize("t_prime", [17, 64, 257])
    @pytest.mark.parametrize("partition", sorted(PARTITIONS))
    def test_partitions_match_offline(self, t_prime, partition):
        feats = seeded_features(2 * t_prime + 1, seed=t_prime)
        spec = MaskSpec(16, 64, 32)
        offline = E.encoder_forward(feats, spec, FULL_PARAMS, final_pool=False)
        block = self.PARTITIONS[partition]
        st = S.open_stream(FULL_PARAMS, spec)
        parts = [st.push(feats[i:i + block]) for i in range(0, feats.shape[0], block)]
        parts.append(st.finalize())
        streamed = np.concatenate(parts)
        assert streamed.shape == offline.shape
        assert np.abs(streamed - offline).max() <= 1e-12

    @pytest.mark.parametrize("chunk", [16, 32, 64])
    @pytest.mark.parametrize("rc", [0, 32, 64])
    @pytest.mark.parametrize("left", [64, 128, FULL])
    def test_spec_grid_matches_offline(self, chunk, rc, left):
        feats = seeded_features(129, seed=chunk * 1000 + rc + (left or 0))
        spec = MaskSpec(chunk, left, rc)
        offline = E.encoder_forward(feats, spec, FULL_PARAMS, final_pool=False)
        streamed = S.simulate_stream(feats, spec, FULL_PARAMS, final_pool=False)
        assert np.abs(streamed - offline).max() <= 1e-12

    def test_float32_tolerance(self):
        p32 = E.init_encoder_params(FULL_CFG, np.float32)
        feats = seeded_features(201).astype(np.float32)
        spec = MaskSpec(16, 64, 32)
        offline = E.encoder_forward(feats, spec, p32, final_pool=False)
        streamed = S.simulate_stream(feats, spec, p32, final_pool=False)
        assert np.abs(streamed.astype(np.float64) - offline.astype(np.float64)).max() <= 1e-4

    def test_pooled_output_matches_offline_25hz(self):
        feats = seeded_features(200)
        spec = MaskSpec(8, 16, 8)
        offline = E.encoder_forward(feats, spec, FULL_PARAMS)
        streamed = S.simulate_stream(feats, spec, FULL_PARAMS)
        assert streamed.shape == offline.shape
        assert np.abs(streamed - offline).max() <= 1e-12


class TestCacheSoundness:
    def test_retained_state_constant_bound(self):
        """left=128: retention never grows with stream length."""
        spec = MaskSpec(16, 128, 32)
        st = S.open_stream(FULL_PARAMS, spec)
        bound = 128 + 16 + 32 + FULL_CFG.factor_lcm
        feats = seeded_features(4000, seed=9)
        worst = 0
        for i in range(0, 4000, 40):
            st.push(feats[i:i + 40])
            worst = max(worst, st.retained_frames)
        st.finalize()
        assert worst <= bound

    def test_full_left_context_keeps_everything(self):
        spec = MaskSpec(16, FULL, 0)
        st = S.open_stream(FULL_PARAMS, spec)
        st.push(seeded_features(400))
        assert st.retained_frames == 200
