"""Synthetic ECG-like cohort standing in for the clinical waveform data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..array.haar import is_power_of_two

STABLE = "stable"
DETERIORATING = "deteriorating"
MODES = ("array-only", "relational-only", "hybrid")


@dataclass(frozen=True)
class WorkloadConfig:
    n_patients: int = 64
    length: int = 1024
    n_bins: int = 16
    k: int = 5
    seed: int = 0
    mode: str = "hybrid"
    n_test: int = 1
    anomaly_rate: float = 0.5

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError("n_bins must be at least 2")
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("k must be odd and positive")
        if self.length < 8 or not is_power_of_two(self.length):
            raise ValueError("length must be a power of two and at least 8")
        if not 1 <= self.n_test < self.n_patients:
            raise ValueError("n_test must leave at least one training patient")
        if self.k > self.n_patients - self.n_test:
            raise ValueError("k exceeds the number of training patients")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise ValueError("anomaly_rate must lie in [0, 1]")

    @property
    def n_train(self):
        return self.n_patients - self.n_test


@dataclass
class PatientSeries:
    patient_id: int
    signal: np.ndarray
    label: str


def gen_cohort(config: WorkloadConfig) -> list[PatientSeries]:
    """Deterministic cohort: a few low-frequency sinusoids plus noise per patient.

    Deteriorating patients get noise whose standard deviation ramps up over
    the second half of the recording.
    """
    rng = np.random.default_rng(config.seed)
    n = config.length
    t = np.arange(n, dtype=np.float64)
    out = []
    for pid in range(config.n_patients):
        freqs = rng.uniform(1.0, 24.0, size=3) / n
        amps = rng.uniform(0.5, 2.0, size=3)
        phases = rng.uniform(0, 2 * np.pi, size=3)
        base = (amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t + phases[:, None])).sum(axis=0)
        noise = rng.normal(0.0, 0.1, size=n)
        bad = rng.random() < config.anomaly_rate
        if bad:
            ramp = np.ones(n)
            ramp[n // 2:] = np.linspace(1.0, 8.0, n - n // 2)
            noise = noise * ramp
        out.append(PatientSeries(pid, base + noise, DETERIORATING if bad else STABLE))
    return out
