"""Shared fixtures and independent oracle helpers."""

import struct

import numpy as np
import pytest

from divrec.audio_io import AudioClip


def build_wav_bytes(
    raw: np.ndarray,
    sample_rate: int = 16000,
    channels: int = 1,
    audio_format: int = 1,
    bits: int = 16,
    declared_data_size: int | None = None,
) -> bytes:
    """Hand-built RIFF/WAVE writer, independent of the package encoder.

    ``declared_data_size`` larger than the actual payload fakes truncation.
    """
    data = np.asarray(raw, dtype="<i2").tobytes()
    size = len(data) if declared_data_size is None else declared_data_size
    block_align = channels * bits // 8
    return (
        b"RIFF"
        + struct.pack("<I", 36 + len(data))
        + b"WAVE"
        + b"fmt "
        + struct.pack(
            "<IHHIIHH",
            16,
            audio_format,
            channels,
            sample_rate,
            sample_rate * block_align,
            block_align,
            bits,
        )
        + b"data"
        + struct.pack("<I", size)
        + data
    )


def sine_clip(
    freq: float = 440.0,
    amplitude: float = 0.5,
    seconds: float = 1.0,
    sample_rate: int = 16000,
    source_id: str = "sine",
) -> AudioClip:
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return AudioClip(amplitude * np.sin(2 * np.pi * freq * t), sample_rate, source_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
