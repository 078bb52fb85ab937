"""WAV decoding, channel/rate normalization, and encoding.

Only uncompressed 16-bit PCM little-endian RIFF/WAVE files are accepted;
anything else is rejected loudly. Raw int16 samples are normalized by
dividing by 32768 on read and encoded as round(a * 32767) on write (the
standard asymmetric int16 convention: -32768 maps to -1.0 but 1.0 maps
to 32767). The exact chunk layout is documented in docs/formats.md.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import IoFailure, MalformedHeader, TruncatedData, UnsupportedEncoding

TARGET_SAMPLE_RATE = 16000


@dataclass
class AudioClip:
    """Audio samples in [-1.0, 1.0] at a known sample rate.

    ``samples`` is 1-D for mono audio or (n, channels) straight off a
    multi-channel file; everything downstream of ``to_mono`` is 1-D.
    """

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self) -> None:
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def num_channels(self) -> int:
        return 1 if self.samples.ndim == 1 else self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.num_samples / self.sample_rate


def read_wav(path) -> AudioClip:
    """Decode a RIFF/WAVE PCM16 LE file.

    Raises MalformedHeader for non-RIFF/WAVE containers, UnsupportedEncoding
    for anything that is not uncompressed 16-bit PCM, and TruncatedData when
    the data chunk is shorter than its declared size.
    """
    with open(path, "rb") as fh:
        raw = fh.read()

    if len(raw) < 12 or raw[0:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise MalformedHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body_start = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16 or body_start + 16 > len(raw):
                raise MalformedHeader(f"{path}: fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", raw, body_start)
        elif chunk_id == b"data":
            avail = len(raw) - body_start
            if avail < chunk_size:
                raise TruncatedData(
                    f"{path}: data chunk declares {chunk_size} bytes, only {avail} present"
                )
            data = raw[body_start : body_start + chunk_size]
        # chunks are word-aligned: odd sizes carry a pad byte
        pos = body_start + chunk_size + (chunk_size & 1)

    if fmt is None or data is None:
        raise MalformedHeader(f"{path}: missing fmt or data chunk")

    audio_format, channels, sample_rate, _byte_rate, _block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncoding(f"{path}: audio format {audio_format} is not PCM")
    if bits != 16:
        raise UnsupportedEncoding(f"{path}: {bits}-bit samples, only 16-bit supported")
    if channels < 1:
        raise MalformedHeader(f"{path}: channel count {channels}")

    frame_bytes = 2 * channels
    usable = len(data) - (len(data) % frame_bytes)
    ints = np.frombuffer(data[:usable], dtype="<i2")
    samples = ints.astype(np.float64) / 32768.0
    if channels > 1:
        samples = samples.reshape(-1, channels)
    return AudioClip(samples=samples, sample_rate=sample_rate, source_id=str(path))


def to_mono(clip: AudioClip) -> AudioClip:
    """Average all channels into one; mono input is returned unchanged."""
    if clip.samples.ndim == 1:
        return clip
    mono = clip.samples.mean(axis=1)
    return AudioClip(samples=mono, sample_rate=clip.sample_rate, source_id=clip.source_id)


def resample_linear(clip: AudioClip, target_rate: int) -> AudioClip:
    """Resample onto a uniform grid by linear interpolation.

    This is a guard path for stray inputs, not a quality path: no band
    limiting is applied, so content above target_rate/2 will alias.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    n_in = clip.num_samples
    n_out = int(round(n_in * target_rate / clip.sample_rate))
    t_out = np.arange(n_out) / target_rate
    t_in = np.arange(n_in) / clip.sample_rate
    resampled = np.interp(t_out, t_in, clip.samples)
    return AudioClip(samples=resampled, sample_rate=target_rate, source_id=clip.source_id)


def ingest(path, target_rate: int = TARGET_SAMPLE_RATE) -> AudioClip:
    """read_wav + to_mono + resample onto the pipeline's 16 kHz grid."""
    return resample_linear(to_mono(read_wav(path)), target_rate)


def encode_pcm16(samples: np.ndarray) -> np.ndarray:
    """Quantize amplitudes to int16: round(a * 32767) clamped to the int16 range."""
    return np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")


def write_wav(clip: AudioClip, path) -> None:
    """Encode a mono clip as a PCM16 LE WAV file."""
    if clip.samples.ndim != 1:
        raise ValueError("write_wav expects a mono clip")
    pcm = encode_pcm16(clip.samples).tobytes()
    header = (
        b"RIFF"
        + struct.pack("<I", 36 + len(pcm))
        + b"WAVE"
        + b"fmt "
        + struct.pack(
            "<IHHIIHH",
            16,  # PCM fmt block size
            1,  # PCM
            1,  # mono
            clip.sample_rate,
            clip.sample_rate * 2,
            2,  # block align
            16,  # bits per sample
        )
        + b"data"
        + struct.pack("<I", len(pcm))
    )
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(pcm)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
