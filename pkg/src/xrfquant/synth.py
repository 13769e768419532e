"""Synthetic-data oracle: labelled corpora generated by the forward model.

Every learning claim in the test suite is checked against data produced
here, where the ground truth (composition, latents, globals, noise level)
is known exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import EnergyCalibration
from .datasets import LabelledDataset, SynthLatents
from .simulator import ForwardModel, SimulatorGlobals
from .transitions import TransitionTable, load_bundled_table


@dataclass(frozen=True)
class SynthConfig:
    """Recipe for one synthetic corpus.

    Concentrations are drawn log-uniformly per element (``conc_range``, or a
    per-element list ``conc_ranges``); theta is the concentration times a
    hidden per-element gain drawn log-uniformly from ``gain_range``, so the
    output head has a nontrivial but learnable map back to concentrations.
    Noise is optional Poisson counting statistics followed by additive
    Gaussian sigma per channel, clipped at zero.
    """

    n_samples: int
    elements: tuple[str, ...]
    conc_range: tuple[float, float] = (1e-3, 0.3)
    conc_ranges: tuple[tuple[float, float], ...] | None = None
    alpha_range: tuple[float, float] = (0.2, 1.0)
    gain_range: tuple[float, float] = (0.5, 2.0)
    globals_: SimulatorGlobals = field(default_factory=SimulatorGlobals)
    gaussian_sigma: float = 0.0
    poisson: bool = False
    seed: int = 0
    calibration: EnergyCalibration = field(default_factory=EnergyCalibration)

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.elements:
            raise ValueError("element list must not be empty")
        if self.gaussian_sigma < 0:
            raise ValueError("gaussian_sigma must be >= 0")
        ranges = self.conc_ranges or (self.conc_range,) * len(self.elements)
        if len(ranges) != len(self.elements):
            raise ValueError("conc_ranges must align with elements")
        for lo, hi in ranges:
            if not (0 < lo <= hi <= 1):
                raise ValueError(f"concentration range ({lo}, {hi}) must lie in (0, 1]")
        if not (0 <= self.alpha_range[0] <= self.alpha_range[1]):
            raise ValueError("alpha_range must satisfy 0 <= lo <= hi")
        if not (0 < self.gain_range[0] <= self.gain_range[1]):
            raise ValueError("gain_range must satisfy 0 < lo <= hi")
        object.__setattr__(self, "elements", tuple(self.elements))
        if self.conc_ranges is not None:
            object.__setattr__(
                self, "conc_ranges", tuple(tuple(r) for r in self.conc_ranges))

    def resolved_ranges(self) -> np.ndarray:
        ranges = self.conc_ranges or (self.conc_range,) * len(self.elements)
        return np.asarray(ranges, dtype=np.float64)


def _log_uniform(rng, lo, hi, size):
    if np.any(lo <= 0):
        raise ValueError("log-uniform bounds must be positive")
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def add_noise(counts: np.ndarray, gaussian_sigma: float = 0.0,
              poisson: bool = False, rng=None) -> np.ndarray:
    """Poisson counting noise then additive Gaussian, clipped at zero."""
    if gaussian_sigma < 0:
        raise ValueError("gaussian_sigma must be >= 0")
    counts = np.asarray(counts, dtype=np.float64)
    if not poisson and gaussian_sigma == 0:
        return counts.copy()
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    out = counts.copy()
    if poisson:
        out = rng.poisson(out).astype(np.float64)
    if gaussian_sigma > 0:
        out = out + rng.normal(0.0, gaussian_sigma, size=out.shape)
    return np.maximum(out, 0.0)


def generate_dataset(config: SynthConfig, table: TransitionTable | None = None) -> LabelledDataset:
    """Draw compositions and latents, run the forward model, add noise."""
    table = table if table is not None else load_bundled_table()
    model = ForwardModel(table, config.calibration, config.elements)
    rng = np.random.default_rng(config.seed)
    n, n_el = config.n_samples, len(config.elements)
    gains = _log_uniform(rng, config.gain_range[0], config.gain_range[1], size=n_el)
    ranges = config.resolved_ranges()
    conc = _log_uniform(rng, ranges[:, 0], ranges[:, 1], size=(n, n_el))
    alpha = rng.uniform(*config.alpha_range, size=n)
    theta = conc * gains
    clean = model.simulate_batch(theta, alpha, config.globals_)
    spectra = add_noise(clean, config.gaussian_sigma, config.poisson, rng)
    ids = tuple(f"synth{i:04d}" for i in range(n))
    return LabelledDataset(
        ids, spectra, conc, config.elements, config.calibration,
        SynthLatents(theta, alpha, gains),
    )
