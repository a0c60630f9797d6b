import math

import numpy as np
import pytest

from magspy.simulate import (DeviceProfile, MotionScript, RotationEvent,
                             estimate_snr, load_device_profile,
                             make_class_signature, pattern_correlation,
                             perturb_pattern, profile_for_snr, profile_from_dict,
                             random_motion_script, render_recording,
                             synth_square_pattern)
from magspy.traces import CpuPattern, SensorRecording


class TestMakeClassSignature:
    def test_deterministic(self):
        a = make_class_signature("news-site", 12.0, 100.0, 7)
        b = make_class_signature("news-site", 12.0, 100.0, 7)
        assert np.array_equal(a.values, b.values)

    def test_distinct_classes_differ(self):
        a = make_class_signature("a", 12.0, 100.0, 3)
        b = make_class_signature("b", 12.0, 100.0, 3)
        assert float(np.linalg.norm(a.values - b.values)) > 0

    def test_distinct_seeds_differ(self):
        a = make_class_signature("a", 12.0, 100.0, 0)
        b = make_class_signature("a", 12.0, 100.0, 1)
        assert float(np.linalg.norm(a.values - b.values)) > 0

    def test_length_and_bounds(self):
        sig = make_class_signature("a", 12.0, 100.0, 0)
        assert len(sig) == 1200
        assert sig.values.min() >= 0.0
        assert sig.values.max() <= 1.0

    def test_rejects_non_positive_duration(self):
        with pytest.raises(ValueError):
            make_class_signature("a", 0.0, 100.0, 0)


class TestSquarePattern:
    def test_two_second_cycles_at_1hz(self):
        pattern = synth_square_pattern(2.0, 2.0, 3, 1.0)
        assert pattern.values.tolist() == [1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0, 0]

    def test_single_cycle_at_2hz(self):
        pattern = synth_square_pattern(1.0, 1.0, 1, 2.0)
        assert pattern.values.tolist() == [1, 1, 0, 0]

    def test_length_identity(self):
        pattern = synth_square_pattern(2.0, 3.0, 4, 10.0)
        assert len(pattern) == 4 * (2.0 + 3.0) * 10.0

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            synth_square_pattern(0.0, 1.0, 1, 1.0)
        with pytest.raises(ValueError):
            synth_square_pattern(1.0, 1.0, 0, 1.0)


class TestRenderRecording:
    def test_zero_coupling_zero_noise_is_baseline(self):
        profile = DeviceProfile((20.0, 5.0, 43.0), (0.0, 0.0, 1.0), 0.0, 0.0, 10.0)
        rec = render_recording(synth_square_pattern(1, 1, 2, 10.0), profile, seed=0)
        assert np.array_equal(rec.mag, np.tile([20.0, 5.0, 43.0], (40, 1)))
        assert not rec.gyro.any()

    def test_analytic_two_sample_case(self):
        profile = DeviceProfile((50.0, 0.0, 0.0), (0.0, 0.0, 1.0), 3.0, 0.0, 1.0)
        rec = render_recording(CpuPattern([0.0, 1.0], 1.0), profile, seed=0)
        assert np.array_equal(rec.mag, [[50.0, 0.0, 0.0], [50.0, 0.0, 3.0]])

    def test_deterministic_given_seed(self):
        profile = profile_for_snr(10.0)
        pattern = make_class_signature("a", 2.0, 100.0, 0)
        a = render_recording(pattern, profile, seed=42)
        b = render_recording(pattern, profile, seed=42)
        assert np.array_equal(a.mag, b.mag)
        assert np.array_equal(a.gyro, b.gyro)

    def test_linearity_in_cpu_load(self):
        profile = DeviceProfile((20.0, 5.0, 43.0), (0.36, 0.48, 0.8), 4.0, 0.0, 100.0)
        base = make_class_signature("a", 1.0, 100.0, 0)
        full = render_recording(base, profile, seed=0).mag - profile.baseline_field
        for alpha in (0.5, 0.25):
            scaled = CpuPattern(alpha * base.values, 100.0)
            got = render_recording(scaled, profile, seed=0).mag - profile.baseline_field
            assert np.allclose(got, alpha * full, atol=1e-12)

    def test_cpu_resampled_to_device_rate(self):
        profile = DeviceProfile((50.0, 0.0, 0.0), (1.0, 0.0, 0.0), 1.0, 0.0, 10.0)
        rec = render_recording(CpuPattern([0.0, 1.0], 1.0), profile, seed=0)
        assert len(rec) == 20

    def test_motion_rotates_baseline_and_reports_gyro(self):
        profile = DeviceProfile((50.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.0, 0.0, 100.0)
        script = MotionScript((RotationEvent(10, 50, 2.0, (0.0, 0.0, 1.0)),))
        pattern = CpuPattern(np.zeros(100), 100.0)
        rec = render_recording(pattern, profile, motion=script, seed=0)
        assert rec.gyro.max() == pytest.approx(2.0)
        assert np.abs(np.linalg.norm(rec.mag, axis=1) - 50.0).max() < 1e-9
        assert np.abs(rec.mag[-1] - [50.0, 0.0, 0.0]).max() > 1.0

    def test_motion_event_out_of_bounds(self):
        profile = profile_for_snr(10.0, rate_hz=10.0)
        script = MotionScript((RotationEvent(5, 100, 1.0, (1.0, 0.0, 0.0)),))
        with pytest.raises(ValueError, match="extends past"):
            render_recording(CpuPattern(np.zeros(20), 10.0), profile,
                             motion=script, seed=0)


class TestEstimateSnr:
    def test_convention_20db_hand_case(self):
        # PCA trace on x only; idle samples {1,-1} (std 1), high {11,9}
        # (mean separation 10): 20*log10(10/1) = 20 dB exactly.
        mag = [(1.0, 0, 0), (-1.0, 0, 0), (1.0, 0, 0), (-1.0, 0, 0),
               (11.0, 0, 0), (9.0, 0, 0), (11.0, 0, 0), (9.0, 0, 0)]
        rec = SensorRecording("d", 1.0, mag)
        ref = CpuPattern([0, 0, 0, 0, 1, 1, 1, 1], 1.0)
        assert estimate_snr(rec, ref) == pytest.approx(20.0, abs=1e-9)

    def test_profile_for_snr_hits_target(self):
        ref = synth_square_pattern(2.0, 2.0, 25, 100.0)
        for target in (4.0, 12.0):
            rec = render_recording(ref, profile_for_snr(target), seed=3)
            assert estimate_snr(rec, ref) == pytest.approx(target, abs=1.0)

    def test_zero_gain_strongly_negative(self):
        profile = DeviceProfile((20.0, 5.0, 43.0), (0.36, 0.48, 0.8), 0.0, 1.0, 100.0)
        ref = synth_square_pattern(2.0, 2.0, 25, 100.0)
        rec = render_recording(ref, profile, seed=1)
        assert estimate_snr(rec, ref) < -10.0

    def test_doubling_gain_adds_6db(self):
        ref = synth_square_pattern(2.0, 2.0, 25, 100.0)
        deltas = []
        for seed in range(10):
            lo = render_recording(ref, profile_for_snr(12.0), seed=seed)
            hi = render_recording(
                ref, DeviceProfile((20.0, 5.0, 43.0), (0.36, 0.48, 0.8),
                                   2.0 * 10 ** (12.0 / 20.0), 1.0, 100.0),
                seed=seed)
            deltas.append(estimate_snr(hi, ref) - estimate_snr(lo, ref))
        assert float(np.mean(deltas)) == pytest.approx(6.02, abs=0.5)

    def test_noiseless_idle_is_infinite(self):
        profile = DeviceProfile((50.0, 0.0, 0.0), (0.0, 0.0, 1.0), 3.0, 0.0, 1.0)
        ref = CpuPattern([0.0, 0.0, 1.0, 1.0], 1.0)
        rec = render_recording(ref, profile, seed=0)
        assert estimate_snr(rec, ref) == math.inf

    def test_strictly_increasing_in_gain(self):
        ref = synth_square_pattern(2.0, 2.0, 15, 100.0)
        means = []
        for gain in (1.0, 2.0, 4.0):
            profile = DeviceProfile((20.0, 5.0, 43.0), (0.36, 0.48, 0.8),
                                    gain, 1.0, 100.0)
            values = [estimate_snr(render_recording(ref, profile, seed=s), ref)
                      for s in range(10)]
            means.append(float(np.mean(values)))
        assert means[0] < means[1] < means[2]

    def test_requires_both_regimes(self):
        rec = SensorRecording("d", 1.0, np.random.default_rng(0).normal(0, 1, (4, 3)))
        with pytest.raises(ValueError):
            estimate_snr(rec, CpuPattern([1.0, 1.0, 1.0, 1.0], 1.0))


class TestPatternCorrelation:
    def test_noise_free_self_correlation(self):
        profile = DeviceProfile((20.0, 5.0, 43.0), (0.36, 0.48, 0.8), 3.0, 0.0, 100.0)
        ref = synth_square_pattern(2.0, 2.0, 5, 100.0)
        rec = render_recording(ref, profile, seed=0)
        assert pattern_correlation(rec, ref) == pytest.approx(1.0, abs=1e-9)

    def test_constant_reference_rejected(self):
        profile = profile_for_snr(12.0)
        ref = synth_square_pattern(2.0, 2.0, 5, 100.0)
        rec = render_recording(ref, profile, seed=0)
        with pytest.raises(ValueError, match="zero variance"):
            pattern_correlation(rec, CpuPattern(np.ones(100), 100.0))

    def test_12db_exceeds_point8(self):
        ref = synth_square_pattern(2.0, 2.0, 25, 100.0)
        rec = render_recording(ref, profile_for_snr(12.0), seed=9)
        assert pattern_correlation(rec, ref) > 0.8


class TestPerturbPattern:
    def test_deterministic(self):
        base = make_class_signature("a", 12.0, 100.0, 0)
        a = perturb_pattern(base, 5, start_jitter_s=0.3, time_warp=0.05,
                            level_jitter=0.05, background_drift=0.1)
        b = perturb_pattern(base, 5, start_jitter_s=0.3, time_warp=0.05,
                            level_jitter=0.05, background_drift=0.1)
        assert np.array_equal(a.values, b.values)

    def test_noop_without_knobs(self):
        base = make_class_signature("a", 12.0, 100.0, 0)
        out = perturb_pattern(base, 5)
        assert np.array_equal(out.values, base.values)

    def test_stays_in_unit_range(self):
        base = make_class_signature("a", 12.0, 100.0, 0)
        out = perturb_pattern(base, 5, start_jitter_s=1.0, time_warp=0.2,
                              level_jitter=0.3, background_drift=0.5)
        assert out.values.min() >= 0.0
        assert out.values.max() <= 1.0


class TestMotionScriptGeneration:
    def test_peak_rate_attained_exactly(self):
        script = random_motion_script(1000, 100.0, seed=3,
                                      peak_rate_rad_s=(2.0, 3.0))
        profile = DeviceProfile((20.0, 5.0, 43.0), (0.36, 0.48, 0.8), 0.0, 0.0, 100.0)
        rec = render_recording(CpuPattern(np.zeros(1000), 100.0), profile,
                               motion=script, seed=0)
        rates = np.linalg.norm(rec.gyro, axis=1)
        peaks = [ev.peak_rate_rad_s for ev in script.rotation_events]
        assert rates.max() >= max(peaks) - 1e-9

    def test_events_within_bounds(self):
        script = random_motion_script(500, 100.0, seed=1)
        for ev in script.rotation_events:
            assert ev.start_index + ev.duration_samples <= 500


class TestProfileConfig:
    def test_unit_coupling_enforced(self):
        with pytest.raises(ValueError, match="unit vector"):
            DeviceProfile((0.0, 0.0, 50.0), (1.0, 1.0, 0.0), 1.0, 1.0, 100.0)

    def test_from_dict_with_snr(self):
        profile = profile_from_dict({"snr_db": 12.0, "noise_std": 2.0})
        assert profile.gain == pytest.approx(2.0 * 10 ** 0.6)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "profile.json"
        path.write_text('{"gain": 3.0, "noise_std": 0.5, "rate_hz": 50.0}')
        profile = load_device_profile(path)
        assert profile.gain == 3.0
        assert profile.rate_hz == 50.0

    def test_unknown_field_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            profile_from_dict({"gain": 1.0, "bogus": 2})
