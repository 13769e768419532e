"""Analysis-by-synthesis quantification of energy-dispersive XRF spectra."""

from .core import (
    DEFAULT_REGISTRY,
    TARGET_ELEMENTS,
    Composition,
    ElementRegistry,
    EnergyCalibration,
    Spectrum,
)
from .simulator import (
    ForwardModel,
    SampleLatent,
    SimulatorGlobals,
    default_simulated_elements,
    simulate,
)
from .transitions import (
    Transition,
    TransitionTable,
    load_bundled_table,
    load_transition_table,
    transitions_for,
)

__version__ = "0.1.0"

__all__ = [
    "Composition",
    "DEFAULT_REGISTRY",
    "ElementRegistry",
    "EnergyCalibration",
    "ForwardModel",
    "SampleLatent",
    "SimulatorGlobals",
    "Spectrum",
    "TARGET_ELEMENTS",
    "Transition",
    "TransitionTable",
    "default_simulated_elements",
    "load_bundled_table",
    "load_transition_table",
    "simulate",
    "transitions_for",
]
