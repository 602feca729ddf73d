"""Deterministic synthetic series: sums of sinusoids, linear trend, noise."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .errors import ArgumentError
from .rng import SplitMix64, derive

_EPOCH = datetime(2016, 7, 1, 0, 0, 0)


@dataclass
class ToneSpec:
    amplitude: float
    period: float
    phase: float = 0.0


def generate(tones_per_channel: list[list[ToneSpec]], trend: float, noise_sd: float,
             timesteps: int, seed: int) -> np.ndarray:
    """[T, C] matrix: per channel, sum of tones + trend*t + gaussian noise."""
    if timesteps < 8:
        raise ArgumentError(f"synth: need at least 8 timesteps, got {timesteps}")
    if not tones_per_channel:
        raise ArgumentError("synth: need at least one channel")
    for tones in tones_per_channel:
        for tone in tones:
            if tone.period <= 0:
                raise ArgumentError(f"synth: tone period must be positive, got {tone.period}")
    if noise_sd < 0:
        raise ArgumentError(f"synth: noise sd must be >= 0, got {noise_sd}")
    t = np.arange(timesteps, dtype=np.float64)
    c = len(tones_per_channel)
    out = np.zeros((timesteps, c))
    for j, tones in enumerate(tones_per_channel):
        for tone in tones:
            out[:, j] += tone.amplitude * np.sin(2.0 * np.pi * t / tone.period + tone.phase)
        out[:, j] += trend * t
    if noise_sd > 0:
        rng = SplitMix64(derive(seed, "synth-noise"))
        out += rng.normal((timesteps, c), sd=noise_sd)
    return out


def write_csv(path, values: np.ndarray, names: list[str] | None = None) -> None:
    """Standard benchmark layout with hourly timestamps; byte-deterministic."""
    timesteps, c = values.shape
    if names is None:
        names = [f"v{i}" for i in range(c)]
    elif len(names) != c:
        raise ArgumentError(f"synth: {len(names)} names for {c} channels")
    lines = ["date," + ",".join(names)]
    for i in range(timesteps):
        stamp = (_EPOCH + timedelta(hours=i)).strftime("%Y-%m-%d %H:%M:%S")
        lines.append(stamp + "," + ",".join(repr(float(v)) for v in values[i]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def parse_tone_spec(raw) -> list[list[ToneSpec]]:
    """Per-channel tone lists from the JSON shape
    ``[[{"amplitude":..,"period":..,"phase":..}, ...], ...]``."""
    if not isinstance(raw, list) or not raw:
        raise ArgumentError("synth: spec must be a non-empty list of channel tone lists")
    channels = []
    for entry in raw:
        if not isinstance(entry, list):
            raise ArgumentError("synth: each channel spec must be a list of tones")
        tones = []
        for tone in entry:
            try:
                tones.append(ToneSpec(float(tone["amplitude"]), float(tone["period"]),
                                      float(tone.get("phase", 0.0))))
            except (KeyError, TypeError) as exc:
                raise ArgumentError(f"synth: bad tone entry {tone!r}") from exc
        channels.append(tones)
    return channels
