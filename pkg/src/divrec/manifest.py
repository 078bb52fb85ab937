"""Dataset manifest: CSV rows of (audio_path, division, speaker_id, gender).

A corpus on disk is laid out as ``root/<DivisionName>/<speaker_id>/*.wav``;
scanning walks that tree, skips directories that are not one of the eight
canonical division names, and emits rows sorted by path so repeated scans of
an unchanged tree are byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError, NoAudioFound
from .evaluation import DIVISION_NAMES

MANIFEST_FIELDS = ("audio_path", "division", "speaker_id", "gender")


@dataclass
class ManifestRow:
    audio_path: str
    division: str
    speaker_id: str
    gender: str = ""

    def __post_init__(self) -> None:
        if self.division not in DIVISION_NAMES:
            raise DataError(f"unknown division {self.division!r}")
        if not self.speaker_id:
            raise DataError(f"{self.audio_path}: empty speaker_id")
        if self.gender not in ("", "M", "F"):
            raise DataError(f"{self.audio_path}: gender must be M, F, or empty")


def scan_corpus(root) -> tuple[list[ManifestRow], list[str]]:
    """Walk root/<Division>/<speaker>/*.wav; returns (rows, skipped dirs)."""
    root = Path(root)
    rows: list[ManifestRow] = []
    skipped: list[str] = []
    if root.is_dir():
        for division_dir in sorted(p for p in root.iterdir() if p.is_dir()):
            if division_dir.name not in DIVISION_NAMES:
                skipped.append(division_dir.name)
                continue
            for speaker_dir in sorted(p for p in division_dir.iterdir() if p.is_dir()):
                for wav in sorted(speaker_dir.glob("*.wav")):
                    rows.append(
                        ManifestRow(
                            audio_path=str(wav),
                            division=division_dir.name,
                            speaker_id=speaker_dir.name,
                        )
                    )
    if not rows:
        raise NoAudioFound(f"no WAV files found under {root}")
    rows.sort(key=lambda r: r.audio_path)
    return rows, skipped


def write_manifest(rows: list[ManifestRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for row in rows:
            writer.writerow([row.audio_path, row.division, row.speaker_id, row.gender])


def read_manifest(path) -> list[ManifestRow]:
    rows = []
    seen = set()
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_FIELDS:
            raise DataError(f"{path}: not a manifest (expected header {','.join(MANIFEST_FIELDS)})")
        for raw in reader:
            if len(raw) != len(MANIFEST_FIELDS):
                raise DataError(f"{path}: bad row {raw!r}")
            row = ManifestRow(*raw)
            if row.audio_path in seen:
                raise DataError(f"{path}: duplicate path {row.audio_path}")
            seen.add(row.audio_path)
            rows.append(row)
    return rows
