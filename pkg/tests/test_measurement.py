import numpy as np
import pytest

from singlepixel.errors import ConsistencyError, FormatError, ParameterError
from singlepixel.field import ComplexField, IntensityImage, intensity
from singlepixel.measurement import (
    Measurement,
    forward_predict,
    measure,
    pattern_total_intensity,
    read_measurement_csv,
    write_measurement_csv,
)
from singlepixel.patterns import positive_negative_split, walsh_hadamard_patterns
from singlepixel.propagation import PropagationSpec, propagate


def image(values, pitch=1e-4):
    return IntensityImage(values=np.asarray(values, float), pitch=pitch)


def brute_force_reading(img, pset, i):
    """Literal two-mask differential readout: I+ (pump the -1 cells) minus
    I- (pump the +1 cells), each with attenuation 1 - m on pumped cells."""
    m = pset.modulation_depth
    plus, minus = positive_negative_split(pset, i)
    i_plus = float((img.values * (1.0 - m * minus)).sum())
    i_minus = float((img.values * (1.0 - m * plus)).sum())
    return i_plus - i_minus


class TestMeasure:
    def test_zero_image_reads_zero(self):
        pset = walsh_hadamard_patterns(4, 16)
        meas = measure(image(np.zeros((4, 4))), pset)
        assert np.all(meas.readings == 0)

    def test_uniform_image_balanced_rows_read_zero(self):
        pset = walsh_hadamard_patterns(4, 16, ordering="natural")
        meas = measure(image(np.ones((4, 4))), pset)
        assert meas.readings[0] == pytest.approx(16 * pset.modulation_depth)
        assert np.abs(meas.readings[1:]).max() < 1e-12

    def test_delta_image_reads_pattern_values(self):
        pset = walsh_hadamard_patterns(4, 16, modulation_depth=1.0)
        values = np.zeros((4, 4))
        values[1, 2] = 2.5
        meas = measure(image(values), pset)
        for i in range(16):
            assert meas.readings[i] == pytest.approx(2.5 * pset.logical_masks[i][1, 2], abs=1e-12)

    def test_matches_two_mask_brute_force(self, rng):
        pset = walsh_hadamard_patterns(4, 16, modulation_depth=0.7)
        img = image(rng.random((4, 4)))
        meas = measure(img, pset)
        for i in range(16):
            assert meas.readings[i] == pytest.approx(brute_force_reading(img, pset, i), abs=1e-10)

    def test_pooled_measurement_matches_brute_force(self, rng):
        # image finer than the pattern grid: cells replicate over 2x2 blocks
        pset = walsh_hadamard_patterns(4, 16, modulation_depth=0.6)
        img = image(rng.random((8, 8)))
        meas = measure(img, pset)
        m = pset.modulation_depth
        for i in range(0, 16, 5):
            plus, minus = positive_negative_split(pset, i)
            up_p = np.repeat(np.repeat(plus, 2, 0), 2, 1)
            up_m = np.repeat(np.repeat(minus, 2, 0), 2, 1)
            expected = float((img.values * (1 - m * up_m)).sum() - (img.values * (1 - m * up_p)).sum())
            assert meas.readings[i] == pytest.approx(expected, abs=1e-10)

    def test_linearity_without_noise(self, rng):
        pset = walsh_hadamard_patterns(4, 16)
        a = image(rng.random((4, 4)))
        b = image(rng.random((4, 4)))
        combo = image(2.0 * a.values + 3.0 * b.values)
        lhs = measure(combo, pset).readings
        rhs = 2.0 * measure(a, pset).readings + 3.0 * measure(b, pset).readings
        assert np.allclose(lhs, rhs, atol=1e-10)

    def test_differential_noise_variance_doubles(self):
        # >= 10^4 independent readings of a zero image are pure differential
        # noise with variance 2 sigma^2
        pset = walsh_hadamard_patterns(16, 256)
        sigma = 1.7
        draws = []
        for seed in range(40):
            meas = measure(image(np.zeros((16, 16))), pset, noise_sigma=sigma, seed=seed)
            draws.append(meas.readings)
        draws = np.concatenate(draws)
        assert draws.size >= 10_000
        assert draws.var() == pytest.approx(2 * sigma**2, rel=0.05)

    def test_reproducible_bit_for_bit(self, rng):
        pset = walsh_hadamard_patterns(4, 16)
        img = image(rng.random((4, 4)))
        a = measure(img, pset, noise_sigma=0.5, seed=99)
        b = measure(img, pset, noise_sigma=0.5, seed=99)
        assert np.array_equal(a.readings, b.readings)

    def test_negative_sigma_rejected(self):
        pset = walsh_hadamard_patterns(4, 4)
        with pytest.raises(ParameterError):
            measure(image(np.zeros((4, 4))), pset, noise_sigma=-1.0)


class TestForwardPredict:
    def test_zero_distance_equals_direct_measurement(self, rng):
        pset = walsh_hadamard_patterns(8, 64)
        obj = image(rng.random((8, 8)))
        prop = PropagationSpec(wavelength=833.3e-6, distance=0.0)
        predicted = forward_predict(obj, prop, pset)
        assert np.allclose(predicted, measure(obj, pset).readings, atol=1e-12)

    def test_zero_object_predicts_zero(self):
        pset = walsh_hadamard_patterns(4, 16)
        prop = PropagationSpec(wavelength=833.3e-6, distance=1e-3)
        assert np.all(forward_predict(image(np.zeros((4, 4))), prop, pset) == 0)

    def test_matches_measuring_the_diffracted_image(self, rng):
        # run both code paths on a random 32x32 object
        pset = walsh_hadamard_patterns(32, 256)
        obj = image(rng.random((32, 32)), pitch=2e-4)
        prop = PropagationSpec(wavelength=833.3e-6, distance=0.8e-3)
        fld = ComplexField(values=np.sqrt(obj.values).astype(complex), pitch=obj.pitch)
        diffracted = intensity(propagate(fld, prop))
        expected = measure(diffracted, pset).readings
        assert np.abs(forward_predict(obj, prop, pset) - expected).max() < 1e-9


class TestPatternTotalIntensity:
    def test_dc_row_of_order_64(self):
        pset = walsh_hadamard_patterns(64, 2)
        assert pattern_total_intensity(pset, 0) == 4096

    def test_non_dc_rows_sum_to_zero(self):
        pset = walsh_hadamard_patterns(8, 64)
        for i in range(1, pset.count):
            assert pattern_total_intensity(pset, i) == 0

    def test_split_sum_identity(self):
        pset = walsh_hadamard_patterns(4, 16)
        for i in range(16):
            plus, minus = positive_negative_split(pset, i)
            assert int(plus.sum()) - int(minus.sum()) == pattern_total_intensity(pset, i)

    def test_out_of_range(self):
        pset = walsh_hadamard_patterns(4, 4)
        with pytest.raises(IndexError):
            pattern_total_intensity(pset, 4)


class TestMeasurementCsv:
    def test_round_trip(self, tmp_path, rng):
        pset = walsh_hadamard_patterns(4, 16)
        meas = measure(image(rng.random((4, 4))), pset, noise_sigma=0.25, seed=3)
        path = tmp_path / "m.csv"
        write_measurement_csv(path, meas)
        loaded = read_measurement_csv(path)
        assert np.array_equal(loaded.readings, meas.readings)
        assert loaded.noise_sigma == meas.noise_sigma
        assert loaded.seed == meas.seed
        assert loaded.pattern_ref == meas.pattern_ref

    def test_write_is_deterministic(self, tmp_path, rng):
        pset = walsh_hadamard_patterns(4, 16)
        meas = measure(image(rng.random((4, 4))), pset, noise_sigma=0.25, seed=3)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_measurement_csv(a, meas)
        write_measurement_csv(b, meas)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,1.5\n")
        with pytest.raises(FormatError):
            read_measurement_csv(path)

    def test_mismatched_length_detected(self, rng):
        pset = walsh_hadamard_patterns(4, 16)
        meas = measure(image(rng.random((4, 4))), pset)
        from singlepixel.classical import hspi_reconstruct

        with pytest.raises(ConsistencyError):
            hspi_reconstruct(meas, pset.subset(8))
