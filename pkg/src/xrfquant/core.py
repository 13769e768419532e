"""Shared spectral domain types: energy calibration, spectra, element registry.

All types are immutable after construction and validate their invariants
loudly; nothing is silently clamped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Atomic numbers for every element a transition table or registry may name.
ATOMIC_NUMBERS: dict[str, int] = {
    "H": 1, "He": 2, "Li": 3, "Be": 4, "B": 5, "C": 6, "N": 7, "O": 8,
    "F": 9, "Ne": 10, "Na": 11, "Mg": 12, "Al": 13, "Si": 14, "P": 15,
    "S": 16, "Cl": 17, "Ar": 18, "K": 19, "Ca": 20, "Sc": 21, "Ti": 22,
    "V": 23, "Cr": 24, "Mn": 25, "Fe": 26, "Co": 27, "Ni": 28, "Cu": 29,
    "Zn": 30, "Ga": 31, "Ge": 32, "As": 33, "Se": 34, "Br": 35, "Kr": 36,
    "Rb": 37, "Sr": 38, "Y": 39, "Zr": 40, "Nb": 41, "Mo": 42, "Tc": 43,
    "Ru": 44, "Rh": 45, "Pd": 46, "Ag": 47, "Cd": 48, "In": 49, "Sn": 50,
    "Sb": 51, "Te": 52, "I": 53, "Xe": 54, "Cs": 55, "Ba": 56, "La": 57,
    "Ce": 58, "Pr": 59, "Nd": 60, "Pm": 61, "Sm": 62, "Eu": 63, "Gd": 64,
    "Tb": 65, "Dy": 66, "Ho": 67, "Er": 68, "Tm": 69, "Yb": 70, "Lu": 71,
    "Hf": 72, "Ta": 73, "W": 74, "Re": 75, "Os": 76, "Ir": 77, "Pt": 78,
    "Au": 79, "Hg": 80, "Tl": 81, "Pb": 82, "Bi": 83, "Po": 84, "At": 85,
    "Rn": 86, "Fr": 87, "Ra": 88, "Ac": 89, "Th": 90, "Pa": 91, "U": 92,
}

# The 48 assay target elements, in their canonical (alphabetical) order.
TARGET_ELEMENTS: tuple[str, ...] = (
    "Ag", "Al", "As", "Ba", "Be", "Bi", "Ca", "Cd", "Ce", "Co", "Cr", "Cs",
    "Cu", "Fe", "Ga", "Ge", "Hf", "In", "K", "La", "Li", "Mg", "Mn", "Mo",
    "Na", "Nb", "Ni", "P", "Pb", "Rb", "Re", "S", "Sb", "Sc", "Se", "Sn",
    "Sr", "Ta", "Te", "Th", "Ti", "Tl", "U", "V", "W", "Y", "Zn", "Zr",
)


@dataclass(frozen=True)
class EnergyCalibration:
    """Affine channel <-> energy mapping over a fixed number of channels.

    Channel 0 maps to ``e_min`` and channel ``n_channels - 1`` to ``e_max``;
    the mapping is strictly increasing and bijective between the two axes.
    The default is a 1024-channel spectrum spanning 0-50 keV.
    """

    e_min: float = 0.0
    e_max: float = 50.0
    n_channels: int = 1024

    def __post_init__(self):
        if not (np.isfinite(self.e_min) and np.isfinite(self.e_max)):
            raise ValueError("calibration endpoints must be finite")
        if not self.e_min < self.e_max:
            raise ValueError(f"e_min must be < e_max, got [{self.e_min}, {self.e_max}]")
        if self.n_channels < 2:
            raise ValueError(f"n_channels must be >= 2, got {self.n_channels}")

    @property
    def channel_width(self) -> float:
        return (self.e_max - self.e_min) / (self.n_channels - 1)

    def _check_channel(self, ch):
        # values within ~1e-12 of the ends are rounding dust from the inverse
        # mapping and are snapped back; anything further out is an error
        tol = (self.n_channels - 1) * 1e-12
        if np.any(ch < -tol) or np.any(ch > self.n_channels - 1 + tol):
            raise ValueError(f"channel out of range [0, {self.n_channels - 1}]")
        return np.clip(ch, 0.0, self.n_channels - 1)

    def energy_of_channel(self, ch):
        """Energy in keV at channel index ``ch`` (scalar or array)."""
        ch = self._check_channel(np.asarray(ch, dtype=np.float64))
        e = self.e_min + ch * self.channel_width
        return float(e) if e.ndim == 0 else e

    def channel_of_energy(self, e):
        """Fractional channel index of energy ``e`` in keV; inverse of energy_of_channel."""
        e = np.asarray(e, dtype=np.float64)
        tol = (self.e_max - self.e_min) * 1e-12
        if np.any(e < self.e_min - tol) or np.any(e > self.e_max + tol):
            raise ValueError(f"energy out of range [{self.e_min}, {self.e_max}] keV")
        ch = (np.clip(e, self.e_min, self.e_max) - self.e_min) / self.channel_width
        ch = np.minimum(ch, self.n_channels - 1)
        return float(ch) if ch.ndim == 0 else ch

    def nearest_channel(self, e: float) -> int:
        return int(round(self.channel_of_energy(e)))

    def unit_position(self, ch):
        """Channel position rescaled to [0, 1]; the background curve argument."""
        ch = self._check_channel(np.asarray(ch, dtype=np.float64))
        u = ch / (self.n_channels - 1)
        return float(u) if u.ndim == 0 else u

    def energies(self) -> np.ndarray:
        """Energy grid (keV) for all channels."""
        return self.e_min + np.arange(self.n_channels) * self.channel_width

    def unit_grid(self) -> np.ndarray:
        """Unit-position grid for all channels."""
        return np.arange(self.n_channels) / (self.n_channels - 1)


@dataclass(frozen=True)
class ElementRegistry:
    """Ordered element set that fixes the indexing of composition vectors."""

    symbols: tuple[str, ...] = TARGET_ELEMENTS

    def __post_init__(self):
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("registry symbols must be unique")
        unknown = [s for s in self.symbols if s not in ATOMIC_NUMBERS]
        if unknown:
            raise ValueError(f"unknown element symbols: {unknown}")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self.symbols

    def index_of(self, symbol: str) -> int:
        try:
            return self.symbols.index(symbol)
        except ValueError:
            raise LookupError(f"element {symbol!r} not in registry") from None

    def atomic_number(self, symbol: str) -> int:
        if symbol not in ATOMIC_NUMBERS:
            raise LookupError(f"unknown element symbol {symbol!r}")
        return ATOMIC_NUMBERS[symbol]

    @property
    def atomic_numbers(self) -> tuple[int, ...]:
        return tuple(ATOMIC_NUMBERS[s] for s in self.symbols)


#: Canonical registry of the 48 assay target elements.
DEFAULT_REGISTRY = ElementRegistry()


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).copy()
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Spectrum:
    """A photon-count histogram with its energy calibration."""

    counts: np.ndarray
    calibration: EnergyCalibration = field(default_factory=EnergyCalibration)

    def __post_init__(self):
        counts = _frozen_array(self.counts, "counts")
        if len(counts) != self.calibration.n_channels:
            raise ValueError(
                f"counts length {len(counts)} != n_channels {self.calibration.n_channels}"
            )
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class Composition:
    """Per-element concentrations as weight fractions, in registry order."""

    values: np.ndarray
    registry: ElementRegistry = DEFAULT_REGISTRY

    def __post_init__(self):
        values = _frozen_array(self.values, "values")
        if len(values) != len(self.registry):
            raise ValueError(
                f"values length {len(values)} != registry size {len(self.registry)}"
            )
        if np.any(values < 0) or np.any(values > 1):
            raise ValueError("concentrations must lie in [0, 1]")
        object.__setattr__(self, "values", values)

    def __getitem__(self, symbol: str) -> float:
        return float(self.values[self.registry.index_of(symbol)])
