"""Acoustic front-end: log-Mel feature matrices, per-speaker normalization,
and the bit-exact binary feature file format.

Front-end defaults (16 kHz, 25 ms Hann window, 10 ms hop, 80 Mel bands over
0-8000 Hz, natural log floored at 1e-10) live in `FeatureConfig`. Mel scale
is the HTK convention, energies are power-spectrum based, and normalization
uses population variance with the std floored at 1e-8 so constant channels
map to zero.
"""

from __future__ import annotations

import struct
import wave
from dataclasses import dataclass, replace

import numpy as np

from speechalign.errors import ConfigError, ContractError, DataError, IntegrityError

FILE_MAGIC = b"ALNF"
FILE_VERSION = 1
STD_FLOOR = 1e-8


@dataclass
class FeatureConfig:
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 80
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10

    @property
    def window(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def n_fft(self) -> int:
        n = 1
        while n < self.window:
            n *= 2
        return n


@dataclass
class FeatureMatrix:
    """One utterance: frames x channels of (log-Mel) values."""

    values: np.ndarray
    utterance_id: str
    speaker_id: str
    normalized: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2 or v.shape[0] < 1:
            raise DataError(f"feature matrix must be 2-D with >= 1 frame, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise DataError(f"non-finite feature values in {self.utterance_id!r}")
        self.values = v

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


@dataclass
class SpeakerStats:
    speaker_id: str
    mean: np.ndarray
    std: np.ndarray  # floored at STD_FLOOR
    frame_count: int = 0


def hann_window(n: int) -> np.ndarray:
    # periodic Hann, the usual STFT analysis window
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_centers(cfg: FeatureConfig) -> np.ndarray:
    """Center frequency (Hz) of each triangular band."""
    pts = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2)
    return mel_to_hz(pts)[1:-1]


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """(n_mels, n_fft//2 + 1) triangular weights on the rfft bin grid."""
    n_bins = cfg.n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (cfg.sample_rate / cfg.n_fft)
    pts = mel_to_hz(np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    bank = np.zeros((cfg.n_mels, n_bins))
    for k in range(cfg.n_mels):
        lo, mid, hi = pts[k], pts[k + 1], pts[k + 2]
        up = (bin_hz - lo) / max(mid - lo, 1e-12)
        down = (hi - bin_hz) / max(hi - mid, 1e-12)
        bank[k] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def log_mel(
    audio: np.ndarray,
    sample_rate: int,
    cfg: FeatureConfig,
    utterance_id: str = "",
    speaker_id: str = "",
) -> FeatureMatrix:
    """Unnormalized log-Mel features; n = 1 + floor((len - window) / hop)."""
    if sample_rate != cfg.sample_rate:
        raise ConfigError(
            f"sample rate {sample_rate} does not match configured {cfg.sample_rate}"
        )
    audio = np.asarray(audio, dtype=np.float64)
    if audio.ndim != 1 or audio.size < cfg.window:
        raise DataError(
            f"audio must be mono with at least one window ({cfg.window} samples), "
            f"got {audio.shape}"
        )
    frames = np.lib.stride_tricks.sliding_window_view(audio, cfg.window)[:: cfg.hop]
    windowed = frames * hann_window(cfg.window)
    spec = np.fft.rfft(windowed, n=cfg.n_fft, axis=1)
    power = spec.real**2 + spec.imag**2
    mel_energy = power @ mel_filterbank(cfg).T
    values = np.log(np.maximum(mel_energy, cfg.log_floor))
    return FeatureMatrix(values, utterance_id=utterance_id, speaker_id=speaker_id)


def read_wav(path) -> tuple[np.ndarray, int]:
    """16-bit PCM mono RIFF/WAVE -> (float samples in [-1, 1), sample rate)."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise DataError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2:
                raise DataError(f"{path}: expected 16-bit PCM, got {8 * w.getsampwidth()}-bit")
            raw = w.readframes(w.getnframes())
            rate = w.getframerate()
    except wave.Error as exc:
        raise DataError(f"{path}: not a readable RIFF/WAVE file ({exc})") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return samples, rate


def fit_speaker_stats(feats: list[FeatureMatrix]) -> dict[str, SpeakerStats]:
    """Per-speaker, per-channel mean and population std over all frames."""
    by_speaker: dict[str, list[FeatureMatrix]] = {}
    for f in feats:
        by_speaker.setdefault(f.speaker_id, []).append(f)
    stats = {}
    for spk, group in by_speaker.items():
        stacked = np.concatenate([f.values.astype(np.float64) for f in group], axis=0)
        mean = stacked.mean(axis=0)
        std = np.maximum(stacked.std(axis=0), STD_FLOOR)  # population variance
        stats[spk] = SpeakerStats(spk, mean, std, frame_count=stacked.shape[0])
    return stats


def apply_speaker_stats(
    feats: list[FeatureMatrix], stats: dict[str, SpeakerStats]
) -> list[FeatureMatrix]:
    out = []
    for f in feats:
        if f.normalized:
            raise ContractError(f"{f.utterance_id!r} is already normalized")
        if f.speaker_id not in stats:
            raise DataError(f"no normalization stats for speaker {f.speaker_id!r}")
        s = stats[f.speaker_id]
        values = (f.values.astype(np.float64) - s.mean) / s.std
        out.append(replace(f, values=values.astype(np.float32), normalized=True))
    return out


def speaker_normalize(
    feats: list[FeatureMatrix],
) -> tuple[list[FeatureMatrix], dict[str, SpeakerStats]]:
    """Fit stats on `feats` and apply them; order is preserved."""
    stats = fit_speaker_stats(feats)
    return apply_speaker_stats(feats, stats), stats


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise DataError(f"id too long to serialize ({len(raw)} bytes)")
    return struct.pack("<H", len(raw)) + raw


def write_features(f: FeatureMatrix, path) -> None:
    blob = bytearray()
    blob += FILE_MAGIC
    blob += struct.pack("<H", FILE_VERSION)
    blob += struct.pack("<II", f.frames, f.channels)
    blob += _pack_str(f.utterance_id)
    blob += _pack_str(f.speaker_id)
    blob += struct.pack("<B", 1 if f.normalized else 0)
    blob += np.ascontiguousarray(f.values, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(blob)


def read_features(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        blob = fh.read()
    view = memoryview(blob)
    try:
        if view[:4] != FILE_MAGIC:
            raise IntegrityError(f"{path}: bad magic {bytes(view[:4])!r}")
        (version,) = struct.unpack_from("<H", view, 4)
        if version != FILE_VERSION:
            raise IntegrityError(f"{path}: unsupported feature-file version {version}")
        rows, cols = struct.unpack_from("<II", view, 6)
        off = 14
        (ulen,) = struct.unpack_from("<H", view, off)
        off += 2
        utterance_id = bytes(view[off : off + ulen]).decode("utf-8")
        off += ulen
        (slen,) = struct.unpack_from("<H", view, off)
        off += 2
        speaker_id = bytes(view[off : off + slen]).decode("utf-8")
        off += slen
        (normalized,) = struct.unpack_from("<B", view, off)
        off += 1
        expected = rows * cols * 4
        if len(view) - off != expected:
            raise IntegrityError(
                f"{path}: truncated data section ({len(view) - off} of {expected} bytes)"
            )
        values = np.frombuffer(blob, dtype="<f4", offset=off).reshape(rows, cols).copy()
    except struct.error as exc:
        raise IntegrityError(f"{path}: truncated header ({exc})") from exc
    return FeatureMatrix(
        values, utterance_id=utterance_id, speaker_id=speaker_id, normalized=bool(normalized)
    )
