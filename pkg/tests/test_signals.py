"""Signal synthesis, the analytic transform, noise calibration, persistence."""

import numpy as np
import pytest

from cvnn.errors import ConfigError, IntegrityError
from cvnn.rng import rng_for
from cvnn.signals import (
    CLASS_NAMES,
    DatasetSpec,
    SignalClass,
    add_noise,
    build_dataset,
    generate_raw,
    hilbert_analytic,
    hilbert_transform,
    linear_chirp,
    load_dataset,
)


def random_bandlimited(rng, n=256, keep=40):
    """Real vector with no DC/Nyquist energy and a limited band."""
    spec = np.zeros(n, dtype=np.complex128)
    bins = rng.integers(1, keep, size=8)
    spec[bins] = rng.standard_normal(8) + 1j * rng.standard_normal(8)
    spec[-bins] = np.conj(spec[bins])
    return np.fft.ifft(spec).real


class TestGenerateRaw:
    @pytest.mark.parametrize("name", [c for c in CLASS_NAMES if c != "Null"])
    def test_peak_to_peak_one(self, name):
        for seed in range(5):
            x = generate_raw(name, 256, rng_for(seed, 4, 0))
            assert abs((x.max() - x.min()) - 1.0) < 1e-9

    def test_null_is_silent(self):
        x = generate_raw("Null", 256, rng_for(0, 4, 0))
        assert np.all(x == 0)

    def test_linear_chirp_instantaneous_frequency_monotone(self):
        # phase-difference estimator, smoothed to kill boundary ripple
        x = linear_chirp(256, 0.05, 0.45)
        h = hilbert_analytic(x)
        inst = np.diff(np.unwrap(np.angle(h))) / (2 * np.pi)
        smooth = np.convolve(inst, np.ones(9) / 9, mode="valid")
        interior = smooth[12:-12]
        assert np.all(np.diff(interior) > -1e-3)
        assert interior[0] < 0.12 and interior[-1] > 0.38

    def test_bpsk_two_phase_states(self):
        # symbol values over many draws take exactly two antipodal phases
        seen = set()
        from cvnn.signals import _CONSTELLATIONS

        c = _CONSTELLATIONS[SignalClass.BPSK]
        assert len(c) == 2
        np.testing.assert_allclose(c[0], -c[1])
        for seed in range(20):
            rng = rng_for(seed, 4, 1)
            n_sym = int(rng.integers(8, 65))
            seen.update(np.round(np.angle(c[rng.integers(0, 2, n_sym)]), 6))
        assert len(seen) == 2

    def test_constellation_sizes(self):
        from cvnn.signals import _CONSTELLATIONS

        assert len(_CONSTELLATIONS[SignalClass.QPSK]) == 4
        assert len(_CONSTELLATIONS[SignalClass.QAM16]) == 16
        assert len(_CONSTELLATIONS[SignalClass.QAM64]) == 64

    def test_seven_classes(self):
        assert len(CLASS_NAMES) == 7


class TestHilbert:
    def test_cos_maps_to_sin(self):
        n = 256
        t = np.arange(n)
        for k in range(1, 21):
            x = np.cos(2 * np.pi * k * t / n)
            h = hilbert_analytic(x)
            np.testing.assert_allclose(h.real, x, atol=1e-9)
            np.testing.assert_allclose(h.imag, np.sin(2 * np.pi * k * t / n), atol=1e-9)

    def test_zero_maps_to_zero(self):
        h = hilbert_analytic(np.zeros(64))
        assert np.all(h == 0)

    def test_double_application_negates(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            x = random_bandlimited(rng)
            hh = hilbert_transform(hilbert_transform(x))
            assert np.max(np.abs(hh + x)) < 1e-8

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal(128), rng.standard_normal(128)
        a, b = 1.7, -0.3
        lhs = hilbert_analytic(a * x + b * y)
        rhs = a * hilbert_analytic(x) + b * hilbert_analytic(y)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_odd_length_rejected(self):
        with pytest.raises(ConfigError):
            hilbert_analytic(np.zeros(63))

    def test_analytic_spectrum_one_sided(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(256)
        h = hilbert_analytic(x)
        spec = np.fft.fft(h)
        neg = np.sum(np.abs(spec[129:]) ** 2)
        total = np.sum(np.abs(spec) ** 2)
        assert neg / total < 1e-20


class TestNoise:
    def test_infinite_snr_is_identity(self):
        x = np.ones(64) + 1j
        out = add_noise(x, np.inf, rng_for(0, 6, 0))
        assert np.array_equal(out, x)

    def test_measured_snr(self):
        rng = rng_for(1, 6, 0)
        x = np.exp(1j * 2 * np.pi * 0.1 * np.arange(10_000))
        for snr in (0.0, 10.0, 20.0):
            noisy = add_noise(x, snr, rng)
            measured = 10 * np.log10(np.mean(np.abs(x) ** 2) / np.mean(np.abs(noisy - x) ** 2))
            assert abs(measured - snr) < 0.2

    def test_null_gets_unit_noise_power(self):
        rng = rng_for(2, 6, 0)
        out = add_noise(np.zeros(20_000, dtype=complex), 10.0, rng)
        assert abs(np.mean(np.abs(out) ** 2) - 1.0) < 0.05


class TestDataset:
    def _spec(self, **kw):
        base = dict(n_per_class=30, length=256, snr_db=10.0, seed=3,
                    classes=("LinearChirp", "SChirp"), split=(0.8, 0.1, 0.1))
        base.update(kw)
        return DatasetSpec(**base)

    def test_sizes_and_split(self):
        spec = DatasetSpec(n_per_class=8000, classes=("LinearChirp", "SChirp"))
        assert spec.n_samples == 16000
        ds_sizes = (12800, 1600, 1600)
        from cvnn.signals import _split_sizes

        assert tuple(sum(x) for x in zip(_split_sizes(8000, spec.split),
                                         _split_sizes(8000, spec.split))) == ds_sizes

    def test_analyticity_before_noise(self):
        spec = self._spec(snr_db=np.inf, n_per_class=5)
        ds = build_dataset(spec)
        arr = ds.signals.array.astype(np.complex128)
        spec_f = np.fft.fft(arr, axis=1)
        neg = np.sum(np.abs(spec_f[:, 129:]) ** 2, axis=1)
        total = np.sum(np.abs(spec_f) ** 2, axis=1)
        keep = total > 0  # the Null class stays silent without noise
        assert np.all(neg[keep] / total[keep] < 1e-9)

    def test_deterministic_files(self, tmp_path):
        spec = self._spec()
        p1, p2 = tmp_path / "a.cvds", tmp_path / "b.cvds"
        build_dataset(spec, path=p1)
        build_dataset(spec, path=p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_exact(self, tmp_path):
        spec = self._spec()
        path = tmp_path / "ds.cvds"
        ds = build_dataset(spec, path=path)
        loaded = load_dataset(path, split=spec.split)
        assert np.array_equal(loaded.signals.array, ds.signals.array)
        assert np.array_equal(loaded.labels, ds.labels)
        assert loaded.split_sizes == ds.split_sizes

    def test_stratified_proportions(self):
        spec = self._spec(n_per_class=50, classes=tuple(CLASS_NAMES))
        ds = build_dataset(spec)
        arrays = ds.as_arrays()
        for name, frac in (("train", 0.8), ("val", 0.1), ("test", 0.1)):
            _, labels = arrays[name]
            for c in range(7):
                assert abs(int((labels == c).sum()) - frac * 50) <= 1

    def test_labels_permutation_stable(self):
        a = build_dataset(self._spec())
        b = build_dataset(self._spec())
        assert np.array_equal(a.labels, b.labels)

    def test_real_view_concatenates_parts(self):
        ds = build_dataset(self._spec(n_per_class=10))
        cx, _ = ds.as_arrays("complex")["train"]
        rx, _ = ds.as_arrays("real")["train"]
        assert rx.shape == (cx.shape[0], 2 * cx.shape[1])
        np.testing.assert_allclose(rx[:, :256], cx.real)
        np.testing.assert_allclose(rx[:, 256:], cx.imag)

    def test_container_header(self, tmp_path):
        path = tmp_path / "ds.cvds"
        build_dataset(self._spec(n_per_class=10), path=path)
        raw = path.read_bytes()
        assert raw[:4] == b"CVDS"
        import struct

        version, n, length, n_classes, tag = struct.unpack_from("<HIIBB", raw, 4)
        assert (version, n, length, n_classes, tag) == (1, 20, 256, 2, 0)
        assert len(raw) == 16 + n * length * 8 + n

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.cvds"
        path.write_bytes(b"NOPE" + b"\x00" * 32)
        with pytest.raises(IntegrityError):
            load_dataset(path)

    def test_csv_export(self, tmp_path):
        ds = build_dataset(self._spec(n_per_class=2, length=8))
        path = tmp_path / "ds.csv"
        ds.export_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0].startswith("label,re_0,im_0")
        assert len(lines) == 1 + 4

    def test_odd_length_rejected(self):
        with pytest.raises(ConfigError):
            DatasetSpec(n_per_class=1, length=255)

    def test_bad_split_rejected(self):
        with pytest.raises(ConfigError):
            DatasetSpec(n_per_class=1, split=(0.5, 0.2, 0.2))
