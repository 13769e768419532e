"""Labelled dataset container shared by training, evaluation, and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ATOMIC_NUMBERS, EnergyCalibration


@dataclass(frozen=True)
class SynthLatents:
    """Hidden generator state kept for white-box assertions on synthetic data."""

    theta: np.ndarray   # (N, E) simulator multipliers
    alpha: np.ndarray   # (N,) background amounts
    gains: np.ndarray   # (E,) hidden concentration -> theta gains


@dataclass(frozen=True)
class LabelledDataset:
    sample_ids: tuple[str, ...]
    spectra: np.ndarray        # (N, m) photon counts
    targets: np.ndarray        # (N, E) weight fractions
    elements: tuple[str, ...]
    calibration: EnergyCalibration
    latents: SynthLatents | None = None

    def __post_init__(self):
        spectra = np.asarray(self.spectra, dtype=np.float64)
        targets = np.asarray(self.targets, dtype=np.float64)
        if spectra.ndim != 2 or targets.ndim != 2:
            raise ValueError("spectra and targets must be matrices")
        n = len(self.sample_ids)
        if spectra.shape[0] != n or targets.shape[0] != n:
            raise ValueError("sample_ids, spectra, and targets disagree on length")
        if spectra.shape[1] != self.calibration.n_channels:
            raise ValueError(
                f"spectra have {spectra.shape[1]} channels, calibration expects "
                f"{self.calibration.n_channels}"
            )
        if targets.shape[1] != len(self.elements):
            raise ValueError("target columns must match the element list")
        if not np.all(np.isfinite(spectra)) or np.any(spectra < 0):
            raise ValueError("spectra must be finite and non-negative")
        if not np.all(np.isfinite(targets)):
            raise ValueError("targets must be finite")
        unknown = [e for e in self.elements if e not in ATOMIC_NUMBERS]
        if unknown:
            raise ValueError(f"unknown element symbols: {unknown}")
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))
        object.__setattr__(self, "spectra", spectra)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "elements", tuple(self.elements))

    @property
    def n_samples(self) -> int:
        return len(self.sample_ids)

    def subset(self, idx) -> "LabelledDataset":
        idx = np.asarray(idx)
        latents = None
        if self.latents is not None:
            latents = SynthLatents(self.latents.theta[idx], self.latents.alpha[idx],
                                   self.latents.gains)
        return LabelledDataset(
            tuple(self.sample_ids[i] for i in idx),
            self.spectra[idx], self.targets[idx],
            self.elements, self.calibration, latents,
        )
