"""Differentiable forward model for EDXRF spectra.

A spectrum is composed channel-wise from three parts: Lorentzian peaks at
the tabulated transition energies scaled per element, a multiplicative
instrument-response curve built from two sigmoids, and an additive Bezier
background. Peaks and the response are functions of energy in keV; the
background argument is the channel position rescaled to [0, 1], which pins
its endpoints to the spectrum edges.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .core import TARGET_ELEMENTS, EnergyCalibration, Spectrum
from .transitions import TransitionTable

GLOBAL_PARAM_NAMES = ("gamma", "a1", "c1", "a2", "c2", "p1", "p2")

#: Extra emitters simulated alongside the 48 targets (rock matrix silicon
#: plus ambient chlorine and argon), giving the default 51-element set.
DEFAULT_EXTRA_ELEMENTS = ("Si", "Cl", "Ar")


def default_simulated_elements(extras=DEFAULT_EXTRA_ELEMENTS) -> tuple[str, ...]:
    return TARGET_ELEMENTS + tuple(extras)


@dataclass(frozen=True)
class SimulatorGlobals:
    """The seven learned instrument/environment parameters.

    Defaults describe a plausible starting point for optimization: a peak
    width of 0.3 keV, a rising low-energy cutoff near 3 keV, a gentle
    high-energy roll-off near 40 keV, and a symmetric background hump.
    """

    gamma: float = 0.3
    a1: float = 2.0
    c1: float = 3.0
    a2: float = -0.2
    c2: float = 40.0
    p1: float = 0.5
    p2: float = 0.5

    def __post_init__(self):
        values = [getattr(self, f.name) for f in fields(self)]
        if not all(np.isfinite(v) for v in values):
            raise ValueError("simulator globals must be finite")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    def to_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in GLOBAL_PARAM_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "SimulatorGlobals":
        keys = set(d)
        expected = set(GLOBAL_PARAM_NAMES)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise ValueError(
                f"simulator globals document must have exactly the fields "
                f"{sorted(expected)}; missing={missing} unexpected={extra}"
            )
        return cls(**{k: float(v) for k, v in d.items()})


@dataclass(frozen=True)
class SampleLatent:
    """Per-sample simulator inputs: element peak multipliers and background amount."""

    theta: np.ndarray
    alpha: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=np.float64)
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if not np.all(np.isfinite(theta)) or np.any(theta < 0):
            raise ValueError("theta entries must be finite and >= 0")
        if not (np.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha}")
        object.__setattr__(self, "theta", theta)


def lorentzian(t_energy, t_prob, gamma, e):
    """Peak profile with center ``t_energy``, height ``t_prob``, FWHM ``gamma``."""
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    e = np.asarray(e, dtype=np.float64)
    q = (gamma / 2.0) ** 2
    out = t_prob * q / ((e - t_energy) ** 2 + q)
    return float(out) if out.ndim == 0 else out


def _sigmoid_exponents(globals_: SimulatorGlobals, energies: np.ndarray):
    z1 = globals_.a1 * (globals_.c1 - energies)
    z2 = globals_.a2 * (globals_.c2 - energies)
    return z1, z2


def instrument_response(globals_: SimulatorGlobals, cal: EnergyCalibration) -> np.ndarray:
    """Channel-wise multiplier 1 / (1 + e^{a2(c2-E)} + e^{a1(c1-E)}).

    Lies in the open interval (0, 1) for all finite parameters; in float64
    the value rounds to exactly 1.0 on plateaus where both exponentials
    drop below machine epsilon.
    """
    z1, z2 = _sigmoid_exponents(globals_, cal.energies())
    u1 = np.exp(np.minimum(z1, ad.EXP_ARG_MAX))
    u2 = np.exp(np.minimum(z2, ad.EXP_ARG_MAX))
    return 1.0 / (1.0 + u2 + u1)


def bezier_basis(cal: EnergyCalibration) -> tuple[np.ndarray, np.ndarray]:
    """The two quadratic-endpoint Bezier basis curves on the unit grid."""
    u = cal.unit_grid()
    return 3.0 * u * (1.0 - u) ** 2, 3.0 * u * u * (1.0 - u)


def background(globals_: SimulatorGlobals, alpha: float, cal: EnergyCalibration) -> np.ndarray:
    """Continuum alpha * (3 p1 u (1-u)^2 + 3 p2 u^2 (1-u)) per channel."""
    b1, b2 = bezier_basis(cal)
    return alpha * (globals_.p1 * b1 + globals_.p2 * b2)


class ForwardModel:
    """Spectrum synthesis for a fixed element list, table, and calibration.

    Precomputes the transition arrays so that repeated evaluations (and the
    training-time tape attachment) stay cheap. Instances are immutable and
    safe to share.
    """

    def __init__(self, table: TransitionTable, cal: EnergyCalibration,
                 elements=None):
        if elements is None:
            elements = default_simulated_elements()
        self.elements = tuple(elements)
        self.cal = cal
        self.energies = cal.energies()
        trans_energy, trans_prob, member_rows = [], [], []
        for row, element in enumerate(self.elements):
            for t in table.get(element):
                trans_energy.append(t.energy_kev)
                trans_prob.append(t.probability)
                member_rows.append(row)
        self._trans_energy = np.array(trans_energy, dtype=np.float64)
        self._trans_prob = np.array(trans_prob, dtype=np.float64)
        n_e, n_t = len(self.elements), len(trans_energy)
        member = np.zeros((n_e, n_t))
        member[member_rows, np.arange(n_t)] = 1.0
        self._member = member
        # (T, m) squared distances from each transition to each channel energy
        self._dist_sq = (self.energies[None, :] - self._trans_energy[:, None]) ** 2
        self._basis1, self._basis2 = bezier_basis(cal)

    @property
    def n_channels(self) -> int:
        return self.cal.n_channels

    def element_index(self, symbol: str) -> int:
        return self.elements.index(symbol)

    def peak_profiles(self, gamma: float) -> np.ndarray:
        """Per-element summed Lorentzians on the channel grid, shape (E, m)."""
        if not gamma > 0:
            raise ValueError(f"gamma must be > 0, got {gamma}")
        q = (gamma / 2.0) ** 2
        lor = self._trans_prob[:, None] * q / (self._dist_sq + q)
        return self._member @ lor

    def theoretical(self, theta: np.ndarray, gamma: float) -> np.ndarray:
        """Peak-only spectrum g(theta); theta (E,) or (N, E)."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape[-1] != len(self.elements):
            raise ValueError(
                f"theta has {theta.shape[-1]} entries for {len(self.elements)} "
                f"simulated elements"
            )
        return theta @ self.peak_profiles(gamma)

    def response(self, globals_: SimulatorGlobals) -> np.ndarray:
        return instrument_response(globals_, self.cal)

    def background(self, alpha, globals_: SimulatorGlobals) -> np.ndarray:
        alpha = np.asarray(alpha, dtype=np.float64)
        pb = globals_.p1 * self._basis1 + globals_.p2 * self._basis2
        if alpha.ndim == 0:
            return alpha * pb
        return alpha[:, None] * pb

    def simulate(self, latent: SampleLatent, globals_: SimulatorGlobals) -> np.ndarray:
        """Counts of the full composite g(theta) * S + b for one sample."""
        g = self.theoretical(latent.theta, globals_.gamma)
        return g * self.response(globals_) + self.background(latent.alpha, globals_)

    def simulate_batch(self, theta: np.ndarray, alpha: np.ndarray,
                       globals_: SimulatorGlobals) -> np.ndarray:
        g = self.theoretical(theta, globals_.gamma)
        return g * self.response(globals_) + self.background(alpha, globals_)

    def jacobian(self, latent: SampleLatent, globals_: SimulatorGlobals) -> dict:
        """Closed-form derivative of every channel with respect to every input.

        Keys: ``theta`` (E, m), and ``alpha``/``gamma``/``a1``/``c1``/``a2``/
        ``c2``/``p1``/``p2`` each (m,).
        """
        gamma = globals_.gamma
        q = (gamma / 2.0) ** 2
        denom = self._dist_sq + q
        lor = self._trans_prob[:, None] * q / denom
        profiles = self._member @ lor
        g = latent.theta @ profiles

        z1, z2 = _sigmoid_exponents(globals_, self.energies)
        m1, m2 = z1 < ad.EXP_ARG_MAX, z2 < ad.EXP_ARG_MAX
        u1 = np.exp(np.minimum(z1, ad.EXP_ARG_MAX))
        u2 = np.exp(np.minimum(z2, ad.EXP_ARG_MAX))
        d = 1.0 + u2 + u1
        s = 1.0 / d
        s2 = s * s

        dlor_dgamma = (self._trans_prob[:, None] * self._dist_sq / (denom * denom)
                       * (gamma / 2.0))
        dg_dgamma = latent.theta @ (self._member @ dlor_dgamma)

        b1, b2 = self._basis1, self._basis2
        return {
            "theta": profiles * s,
            "alpha": globals_.p1 * b1 + globals_.p2 * b2,
            "gamma": dg_dgamma * s,
            "a1": -g * s2 * u1 * (globals_.c1 - self.energies) * m1,
            "c1": -g * s2 * u1 * globals_.a1 * m1,
            "a2": -g * s2 * u2 * (globals_.c2 - self.energies) * m2,
            "c2": -g * s2 * u2 * globals_.a2 * m2,
            "p1": latent.alpha * b1,
            "p2": latent.alpha * b2,
        }

    def attach(self, tape: ad.Tape, theta: ad.Node, alpha: ad.Node,
               params: dict[str, ad.Node]) -> ad.Node:
        """Record the forward model on a tape.

        ``theta`` is (N, E), ``alpha`` is (N, 1), and ``params`` maps each
        name in GLOBAL_PARAM_NAMES to a scalar node (typically a Parameter).
        Returns the (N, m) simulated-spectrum node.
        """
        missing = [k for k in GLOBAL_PARAM_NAMES if k not in params]
        if missing:
            raise ValueError(f"missing simulator parameters: {missing}")
        gamma = params["gamma"]
        q = gamma * gamma * 0.25
        denom = tape.constant(self._dist_sq, "dist_sq") + q
        lor = ad.reciprocal(denom) * q * tape.constant(
            self._trans_prob[:, None], "trans_prob")
        profiles = ad.matmul(tape.constant(self._member, "member"), lor)
        g = ad.matmul(theta, profiles)

        e = tape.constant(self.energies, "energies")
        u1 = ad.exp((params["c1"] - e) * params["a1"])
        u2 = ad.exp((params["c2"] - e) * params["a2"])
        s = ad.reciprocal(u1 + u2 + tape.constant(1.0))

        pb = (params["p1"] * tape.constant(self._basis1, "basis1")
              + params["p2"] * tape.constant(self._basis2, "basis2"))
        return g * s + alpha * pb


def theoretical_spectrum(theta, table: TransitionTable, globals_: SimulatorGlobals,
                         cal: EnergyCalibration, elements=None) -> Spectrum:
    """Peak-only spectrum for one theta vector, as a Spectrum."""
    model = ForwardModel(table, cal, elements)
    return Spectrum(model.theoretical(np.asarray(theta), globals_.gamma), cal)


def simulate(latent: SampleLatent, table: TransitionTable,
             globals_: SimulatorGlobals, cal: EnergyCalibration,
             elements=None) -> Spectrum:
    """Full composite spectrum for one sample, as a Spectrum."""
    model = ForwardModel(table, cal, elements)
    return Spectrum(model.simulate(latent, globals_), cal)


def simulate_with_gradients(latent: SampleLatent, table: TransitionTable,
                            globals_: SimulatorGlobals, cal: EnergyCalibration,
                            elements=None):
    """Spectrum plus the per-channel Jacobian with respect to every input."""
    model = ForwardModel(table, cal, elements)
    counts = model.simulate(latent, globals_)
    return Spectrum(counts, cal), model.jacobian(latent, globals_)
