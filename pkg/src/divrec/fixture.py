"""Synthetic fixture corpus: eight parameterized multi-tone "pseudo-dialects".

Each division gets a fixed trio of formant-like tone frequencies; speakers
jitter those frequencies slightly and every file adds random phases, small
amplitude wobble, speech-like pauses, and a white noise floor. The classes
are well separated in mel-spectral shape, so the full pipeline can be
exercised end to end without any real recordings.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .audio_io import AudioClip, write_wav
from .evaluation import DIVISION_NAMES

# one (f1, f2, f3) tone set per division, pairwise distinct in mel space
CLASS_TONES = (
    (300.0, 1100.0, 2600.0),
    (360.0, 1350.0, 2950.0),
    (430.0, 950.0, 3300.0),
    (520.0, 1600.0, 2400.0),
    (620.0, 1250.0, 3650.0),
    (740.0, 1800.0, 2750.0),
    (880.0, 1450.0, 3100.0),
    (1050.0, 2050.0, 3480.0),
)

TONE_AMPLITUDES = (0.30, 0.20, 0.12)


def synthesize_utterance(
    class_index: int,
    rng: np.random.Generator,
    seconds: float,
    sample_rate: int = 16000,
    speaker_jitter: np.ndarray | None = None,
    noise_level: float = 0.01,
) -> np.ndarray:
    """One pseudo-utterance: jittered class tones + pauses + noise floor."""
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    jitter = speaker_jitter if speaker_jitter is not None else np.ones(3)

    voiced = np.zeros(n)
    for (freq, amp, j) in zip(CLASS_TONES[class_index], TONE_AMPLITUDES, jitter):
        f = freq * j * (1.0 + rng.uniform(-0.005, 0.005))
        a = amp * (1.0 + rng.uniform(-0.1, 0.1))
        voiced += a * np.sin(2.0 * np.pi * f * t + rng.uniform(0, 2 * np.pi))

    # gate with speech-like pauses: ~0.3 s of silence roughly every 4 s
    envelope = np.ones(n)
    pause_len = int(0.3 * sample_rate)
    pos = int(rng.uniform(1.0, 4.0) * sample_rate)
    while pos + pause_len < n:
        envelope[pos : pos + pause_len] = 0.0
        pos += int(rng.uniform(3.0, 5.0) * sample_rate)

    signal = voiced * envelope + rng.normal(0.0, noise_level, n)
    return np.clip(signal, -1.0, 1.0)


def make_fixture(
    root,
    seed: int = 0,
    speakers_per_class: int = 5,
    files_per_speaker: int = 5,
    file_seconds: float = 100.0,
    sample_rate: int = 16000,
    noise_level: float = 0.01,
) -> list[Path]:
    """Write the corpus tree root/<Division>/<speaker>/<speaker>_NNN.wav."""
    root = Path(root)
    rng = np.random.default_rng(seed)
    written: list[Path] = []
    for c, division in enumerate(DIVISION_NAMES):
        for s in range(speakers_per_class):
            speaker_id = f"{division.lower()}_spk{s:03d}"
            speaker_dir = root / division / speaker_id
            speaker_dir.mkdir(parents=True, exist_ok=True)
            speaker_jitter = 1.0 + rng.uniform(-0.015, 0.015, size=3)
            for k in range(files_per_speaker):
                samples = synthesize_utterance(
                    c, rng, file_seconds, sample_rate, speaker_jitter, noise_level
                )
                path = speaker_dir / f"{speaker_id}_{k:03d}.wav"
                write_wav(AudioClip(samples, sample_rate, str(path)), path)
                written.append(path)
    return written
