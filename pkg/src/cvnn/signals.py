"""Synthetic radar-style signal classes and analytic-signal datasets.

Seven waveform families are generated at a fixed length (default 256
samples): linear and S-shaped frequency sweeps, BPSK/QPSK phase modulations,
16/64-QAM, and a noise-only null class.  Real waveforms are normalized to a
peak-to-peak amplitude of 1, cast to one-sided analytic signals through the
FFT, and perturbed with circular complex Gaussian noise at a requested SNR.

Every sample draws from its own counter-based stream keyed by the dataset
seed and the sample index, so generation is reproducible sample by sample.

Datasets persist in a little-endian binary container (magic ``CVDS``):
``u16`` version, ``u32`` sample count, ``u32`` length, ``u8`` class count,
``u8`` dtype tag (0 = float32), the per-sample interleaved re/im float32
waveforms, then one ``u8`` label per sample.  A CSV export with columns
``label, re_0, im_0, ...`` is available for external tools.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng as rngmod
from .ctensor import CTensor
from .errors import ConfigError, IntegrityError
from .rng import rng_for


class SignalClass(enum.IntEnum):
    LinearChirp = 0
    SChirp = 1
    BPSK = 2
    QPSK = 3
    QAM16 = 4
    QAM64 = 5
    Null = 6


CLASS_NAMES = [c.name for c in SignalClass]

FREQ_LO, FREQ_HI = 0.05, 0.45
SYMBOLS_LO, SYMBOLS_HI = 8, 64
S_CHIRP_STEEPNESS = 6.0

_QPSK = np.exp(1j * (np.pi / 4 + np.pi / 2 * np.arange(4)))
_BPSK = np.array([1.0 + 0j, -1.0 + 0j])


def _qam_grid(side: int) -> np.ndarray:
    levels = np.arange(-(side - 1), side, 2, dtype=np.float64)
    grid = levels[:, None] + 1j * levels[None, :]
    return grid.reshape(-1) / np.abs(grid).max()


_CONSTELLATIONS = {
    SignalClass.BPSK: _BPSK,
    SignalClass.QPSK: _QPSK,
    SignalClass.QAM16: _qam_grid(4),
    SignalClass.QAM64: _qam_grid(8),
}


@dataclass(frozen=True)
class DatasetSpec:
    n_per_class: int
    length: int = 256
    snr_db: float = 10.0
    seed: int = 0
    classes: tuple = tuple(CLASS_NAMES)
    split: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        if self.n_per_class < 1:
            raise ConfigError(f"n_per_class must be >= 1, got {self.n_per_class}")
        if self.length < 8 or self.length % 2 != 0:
            raise ConfigError(f"length must be even and >= 8, got {self.length}")
        if abs(sum(self.split) - 1.0) > 1e-9 or len(self.split) != 3:
            raise ConfigError(f"split fractions must sum to 1, got {self.split}")
        unknown = [c for c in self.classes if c not in CLASS_NAMES]
        if unknown:
            raise ConfigError(f"unknown signal classes {unknown}")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def n_samples(self) -> int:
        return self.n_per_class * self.n_classes


def _peak_to_peak_one(x: np.ndarray) -> np.ndarray:
    span = x.max() - x.min()
    return x / span if span > 0 else x


def linear_chirp(length: int, f0: float, f1: float, phase0: float = 0.0) -> np.ndarray:
    """Cosine sweep whose instantaneous frequency moves linearly f0 -> f1."""
    t = np.arange(length)
    f_inst = f0 + (f1 - f0) * t / (length - 1)
    phase = 2 * np.pi * np.cumsum(f_inst) + phase0
    return _peak_to_peak_one(np.cos(phase))


def s_chirp(length: int, f0: float, f1: float, phase0: float = 0.0) -> np.ndarray:
    """Sweep with a logistic frequency profile: slow ends, fast middle."""
    t = np.arange(length) / (length - 1)
    prof = 1.0 / (1.0 + np.exp(-S_CHIRP_STEEPNESS * (2 * t - 1)))
    f_inst = f0 + (f1 - f0) * prof
    phase = 2 * np.pi * np.cumsum(f_inst) + phase0
    return _peak_to_peak_one(np.cos(phase))


def keyed_waveform(length: int, constellation: np.ndarray, n_symbols: int,
                   carrier: float, phase0: float, rng) -> np.ndarray:
    """Rectangular-pulse symbol train on a cosine carrier."""
    symbols = constellation[rng.integers(0, len(constellation), n_symbols)]
    idx = np.minimum((np.arange(length) * n_symbols) // length, n_symbols - 1)
    baseband = symbols[idx]
    n = np.arange(length)
    return _peak_to_peak_one(np.real(baseband * np.exp(1j * (2 * np.pi * carrier * n + phase0))))


def generate_raw(signal_class, length: int, rng) -> np.ndarray:
    """One real waveform of the class, peak-to-peak 1 (Null stays silent)."""
    if length < 8:
        raise ConfigError(f"length must be >= 8, got {length}")
    cls = SignalClass[signal_class] if isinstance(signal_class, str) else SignalClass(signal_class)
    if cls == SignalClass.Null:
        return np.zeros(length)
    if cls in (SignalClass.LinearChirp, SignalClass.SChirp):
        f0 = rng.uniform(FREQ_LO, FREQ_HI)
        f1 = rng.uniform(FREQ_LO, FREQ_HI)
        phase0 = rng.uniform(0.0, 2 * np.pi)
        maker = linear_chirp if cls == SignalClass.LinearChirp else s_chirp
        return maker(length, f0, f1, phase0)
    constellation = _CONSTELLATIONS[cls]
    n_symbols = int(rng.integers(SYMBOLS_LO, SYMBOLS_HI + 1))
    carrier = rng.uniform(FREQ_LO, FREQ_HI)
    phase0 = rng.uniform(0.0, 2 * np.pi)
    return keyed_waveform(length, constellation, n_symbols, carrier, phase0, rng)


def hilbert_analytic(x: np.ndarray) -> np.ndarray:
    """Analytic signal via the one-sided spectrum.

    DC and Nyquist bins are kept, positive bins doubled, negative bins
    zeroed; the real part of the result reproduces the input and the
    imaginary part is its discrete Hilbert transform.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if n % 2 != 0:
        raise ConfigError(f"analytic transform needs an even length, got {n}")
    spec = np.fft.fft(x, axis=-1)
    mult = np.zeros(n)
    mult[0] = 1.0
    mult[n // 2] = 1.0
    mult[1 : n // 2] = 2.0
    return np.fft.ifft(spec * mult, axis=-1)


def hilbert_transform(x: np.ndarray) -> np.ndarray:
    """Imaginary part of the analytic signal (the discrete Hilbert transform)."""
    return hilbert_analytic(x).imag


def add_noise(x: np.ndarray, snr_db: float, rng) -> np.ndarray:
    """Circular complex white Gaussian noise at the requested SNR.

    A silent input (the Null class) receives unit-power noise instead.
    """
    if snr_db == math.inf:
        return x
    power = float(np.mean(np.abs(x) ** 2))
    noise_power = 1.0 if power == 0.0 else power / (10.0 ** (snr_db / 10.0))
    sigma = math.sqrt(noise_power / 2.0)
    noise = sigma * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    return x + noise


@dataclass
class SignalDataset:
    """Labeled analytic signals, ordered train block / val block / test block."""

    signals: CTensor
    labels: np.ndarray
    spec: DatasetSpec = None
    split_sizes: tuple = field(default=None)

    def __post_init__(self):
        if self.split_sizes is None and self.spec is not None:
            self.split_sizes = _split_sizes(self.labels.shape[0], self.spec.split)

    def split_indices(self, name: str) -> slice:
        n_train, n_val, _ = self.split_sizes
        if name == "train":
            return slice(0, n_train)
        if name == "val":
            return slice(n_train, n_train + n_val)
        if name == "test":
            return slice(n_train + n_val, None)
        raise ConfigError(f"unknown split {name!r}")

    def as_arrays(self, mode: str = "complex") -> dict:
        """Split dict ``name -> (x, labels)``; real mode concatenates re/im."""
        arr = self.signals.array.astype(np.complex128)
        out = {}
        for name in ("train", "val", "test"):
            sl = self.split_indices(name)
            x = arr[sl]
            if mode == "real":
                x = np.concatenate([x.real, x.imag], axis=1)
            out[name] = (x, self.labels[sl])
        return out

    def save(self, path) -> None:
        arr = self.signals.array.astype(np.complex64)
        n, length = arr.shape
        n_classes = self.spec.n_classes if self.spec is not None else int(self.labels.max()) + 1
        with open(path, "wb") as fh:
            fh.write(b"CVDS")
            fh.write(struct.pack("<HIIBB", 1, n, length, n_classes, 0))
            inter = np.empty(n * length * 2, dtype="<f4")
            inter[0::2] = arr.real.reshape(-1)
            inter[1::2] = arr.imag.reshape(-1)
            fh.write(inter.tobytes())
            fh.write(self.labels.astype(np.uint8).tobytes())

    def export_csv(self, path) -> None:
        arr = self.signals.array
        with open(path, "w") as fh:
            cols = ",".join(f"re_{i},im_{i}" for i in range(arr.shape[1]))
            fh.write(f"label,{cols}\n")
            for row, label in zip(arr, self.labels):
                parts = ",".join(f"{v.real!r},{v.imag!r}" for v in row)
                fh.write(f"{int(label)},{parts}\n")


def load_dataset(path, spec: DatasetSpec | None = None,
                 split=(0.8, 0.1, 0.1)) -> SignalDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != b"CVDS":
        raise IntegrityError(f"{path} is not a dataset container")
    version, n, length, n_classes, dtype_tag = struct.unpack_from("<HIIBB", raw, 4)
    if version != 1 or dtype_tag != 0:
        raise IntegrityError(f"unsupported dataset container (version {version}, dtype {dtype_tag})")
    off = 4 + struct.calcsize("<HIIBB")
    inter = np.frombuffer(raw, dtype="<f4", count=n * length * 2, offset=off)
    off += inter.nbytes
    labels = np.frombuffer(raw, dtype=np.uint8, count=n, offset=off).astype(np.int64)
    signals = (inter[0::2] + 1j * inter[1::2]).reshape(n, length).astype(np.complex64)
    if spec is not None:
        split = spec.split
    return SignalDataset(CTensor(signals, dtype=np.complex64), labels, spec,
                         _split_sizes(n, split))


def _split_sizes(n: int, fractions) -> tuple:
    n_train = round(n * fractions[0])
    n_val = round(n * (fractions[0] + fractions[1])) - n_train
    return (n_train, n_val, n - n_train - n_val)


def build_dataset(spec: DatasetSpec, path=None) -> SignalDataset:
    """Synthesize, make analytic, add noise, shuffle, and stratify-split.

    Samples are laid out as one train block, then val, then test; each block
    is stratified per class (counts within one of proportionality) and
    shuffled.  Signals are quantized to complex64 so in-memory data equals a
    container round-trip exactly.  ``path`` additionally persists the
    container.
    """
    per_class_members = []
    label_of = {name: i for i, name in enumerate(spec.classes)}
    signals = np.empty((spec.n_samples, spec.length), dtype=np.complex128)
    labels = np.empty(spec.n_samples, dtype=np.int64)
    g = 0
    for name in spec.classes:
        members = []
        for _ in range(spec.n_per_class):
            rng = rng_for(spec.seed, rngmod.SIGNAL, g)
            raw = generate_raw(name, spec.length, rng)
            analytic = hilbert_analytic(raw)
            signals[g] = add_noise(analytic, spec.snr_db, rng)
            labels[g] = label_of[name]
            members.append(g)
            g += 1
        per_class_members.append(members)

    # stratified assignment: split each class by the fractions, then shuffle
    # inside each block so classes interleave
    block_members = ([], [], [])
    shuffle_rng = rng_for(spec.seed, rngmod.SHUFFLE)
    for members in per_class_members:
        members = list(shuffle_rng.permutation(members))
        n_train, n_val, _ = _split_sizes(len(members), spec.split)
        block_members[0].extend(members[:n_train])
        block_members[1].extend(members[n_train : n_train + n_val])
        block_members[2].extend(members[n_train + n_val :])
    order = np.concatenate([shuffle_rng.permutation(b) if b else np.empty(0, dtype=np.int64)
                            for b in block_members]).astype(np.int64)
    signals = signals[order].astype(np.complex64)
    labels = labels[order]
    split_sizes = tuple(len(b) for b in block_members)
    ds = SignalDataset(CTensor(signals, dtype=np.complex64), labels, spec, split_sizes)
    if path is not None:
        ds.save(path)
    return ds
