"""Transition-line database: per-element emission energies and probabilities.

The bundled CSV covers the principal K and L series of the target elements
(see ``data/transitions.csv`` for provenance and regeneration notes). Loading
keeps rows for elements outside the target registry so the simulator can
model non-target emitters such as tube-scatter lines.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import ATOMIC_NUMBERS, DEFAULT_REGISTRY

VALID_KINDS = ("K", "L1", "L2", "L3")

CSV_HEADER = ["element", "kind", "energy_kev", "probability"]


class TransitionParseError(ValueError):
    """Malformed transition file; message carries the offending line number."""


@dataclass(frozen=True)
class Transition:
    element: str
    kind: str
    energy_kev: float
    probability: float

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"kind must be one of {VALID_KINDS}, got {self.kind!r}")
        if not (self.energy_kev > 0):
            raise ValueError(f"energy must be > 0, got {self.energy_kev}")
        if not (self.probability > 0):
            raise ValueError(f"probability must be > 0, got {self.probability}")


class TransitionTable:
    """Immutable map from element symbol to its transitions, sorted by energy."""

    def __init__(self, transitions, extra_elements=()):
        by_element: dict[str, list[Transition]] = {
            sym: [] for sym in DEFAULT_REGISTRY.symbols
        }
        for sym in extra_elements:
            by_element.setdefault(sym, [])
        for t in transitions:
            by_element.setdefault(t.element, []).append(t)
        self._by_element = {
            sym: tuple(sorted(ts, key=lambda t: t.energy_kev))
            for sym, ts in by_element.items()
        }

    def elements(self) -> list[str]:
        return sorted(self._by_element)

    def __contains__(self, element: str) -> bool:
        return element in self._by_element

    def get(self, element: str) -> tuple[Transition, ...]:
        if element not in self._by_element:
            raise LookupError(f"no transition entry for element {element!r}")
        return self._by_element[element]

    def __len__(self) -> int:
        return sum(len(ts) for ts in self._by_element.values())


def load_transition_table(path) -> TransitionTable:
    """Parse a ``element,kind,energy_kev,probability`` CSV into a table.

    ``#`` comment lines and blank lines are permitted. Any malformed row
    raises :class:`TransitionParseError` naming its line number.
    """
    path = Path(path)
    transitions: list[Transition] = []
    with open(path, encoding="utf-8") as fh:
        header_seen = False
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = next(csv.reader([line]))
            if not header_seen:
                if [f.strip() for f in fields] != CSV_HEADER:
                    raise TransitionParseError(
                        f"line {lineno}: expected header {','.join(CSV_HEADER)!r}"
                    )
                header_seen = True
                continue
            if len(fields) != 4:
                raise TransitionParseError(
                    f"line {lineno}: expected 4 fields, got {len(fields)}"
                )
            element, kind = fields[0].strip(), fields[1].strip()
            try:
                energy = float(fields[2])
                probability = float(fields[3])
            except ValueError as exc:
                raise TransitionParseError(f"line {lineno}: {exc}") from None
            if element not in ATOMIC_NUMBERS:
                raise TransitionParseError(
                    f"line {lineno}: unknown element symbol {element!r}"
                )
            try:
                transitions.append(
                    Transition(element, kind, energy, probability)
                )
            except ValueError as exc:
                raise TransitionParseError(f"line {lineno}: {exc}") from None
        if not header_seen:
            raise TransitionParseError("empty file: missing header")
    if not transitions:
        raise TransitionParseError("no transitions in file")
    return TransitionTable(transitions)


def transitions_for(
    table: TransitionTable,
    element: str,
    energy_window: tuple[float, float] = (0.0, float("inf")),
) -> list[Transition]:
    """Transitions of ``element`` with energy inside the window, ascending."""
    lo, hi = energy_window
    if lo > hi:
        raise ValueError(f"window lo {lo} > hi {hi}")
    return [t for t in table.get(element) if lo <= t.energy_kev <= hi]


def bundled_table_path() -> Path:
    """Path of the transition CSV shipped with the package."""
    return Path(resources.files("xrfquant").joinpath("data/transitions.csv"))


def load_bundled_table() -> TransitionTable:
    return load_transition_table(bundled_table_path())
