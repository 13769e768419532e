"""CSV/JSON file formats for spectra, assays, simulator globals, checkpoints.

Formats are fixed and diff-friendly:

* spectra CSV:  header ``sample_id,ch0,...,ch{m-1}``
* assay CSV:    header ``sample_id,<element>:<unit>,...`` with units in
  {wt_frac, pct, ppm}; values are converted to weight fractions on load
* transitions CSV: see :mod:`xrfquant.transitions`
* simulator globals: a JSON object with exactly the seven parameter fields
* checkpoints: a self-describing JSON document with a format tag

Floats are written with ``repr`` so every file round-trips bit-exactly and
two runs with the same seed produce byte-identical outputs.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .core import ATOMIC_NUMBERS, EnergyCalibration
from .datasets import LabelledDataset, SynthLatents
from .simulator import SimulatorGlobals

UNIT_FACTORS = {"wt_frac": 1.0, "pct": 1e-2, "ppm": 1e-6}


class DataFileError(ValueError):
    """Malformed data file; message carries the path and line/column."""


def _fmt(x: float) -> str:
    return repr(float(x))


# -- spectra -----------------------------------------------------------------

def write_spectra_csv(path, sample_ids, counts: np.ndarray):
    counts = np.asarray(counts, dtype=np.float64)
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id," + ",".join(f"ch{i}" for i in range(counts.shape[1])) + "\n")
        for sid, row in zip(sample_ids, counts):
            fh.write(str(sid) + "," + ",".join(_fmt(v) for v in row) + "\n")


def read_spectra_csv(path):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFileError(f"{path}: empty spectra file") from None
        if header[0] != "sample_id" or len(header) < 2:
            raise DataFileError(f"{path}: expected header sample_id,ch0,...")
        expected = ["sample_id"] + [f"ch{i}" for i in range(len(header) - 1)]
        if header != expected:
            raise DataFileError(f"{path}: malformed channel columns in header")
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFileError(
                    f"{path}: line {lineno}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFileError(f"{path}: line {lineno}: {exc}") from None
            ids.append(row[0])
    if not ids:
        raise DataFileError(f"{path}: no spectra rows")
    return tuple(ids), np.asarray(rows, dtype=np.float64)


# -- assay ---------------------------------------------------------------------

def write_assay_csv(path, sample_ids, targets: np.ndarray, elements, unit="wt_frac"):
    if unit not in UNIT_FACTORS:
        raise ValueError(f"unknown unit {unit!r}")
    targets = np.asarray(targets, dtype=np.float64) / UNIT_FACTORS[unit]
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("sample_id," + ",".join(f"{el}:{unit}" for el in elements) + "\n")
        for sid, row in zip(sample_ids, targets):
            fh.write(str(sid) + "," + ",".join(_fmt(v) for v in row) + "\n")


def read_assay_csv(path):
    """Returns (sample_ids, weight-fraction matrix, element tuple)."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFileError(f"{path}: empty assay file") from None
        if header[0] != "sample_id" or len(header) < 2:
            raise DataFileError(f"{path}: expected header sample_id,<element>:<unit>,...")
        elements, factors = [], []
        for col in header[1:]:
            if ":" not in col:
                raise DataFileError(f"{path}: column {col!r} must be <element>:<unit>")
            el, unit = col.split(":", 1)
            if el not in ATOMIC_NUMBERS:
                raise DataFileError(f"{path}: unknown element {el!r} in header")
            if unit not in UNIT_FACTORS:
                raise DataFileError(f"{path}: unknown unit {unit!r} in column {col!r}")
            elements.append(el)
            factors.append(UNIT_FACTORS[unit])
        factors_arr = np.asarray(factors)
        ids, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFileError(
                    f"{path}: line {lineno}: expected {len(header)} fields, "
                    f"got {len(row)}"
                )
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise DataFileError(f"{path}: line {lineno}: {exc}") from None
            ids.append(row[0])
    if not ids:
        raise DataFileError(f"{path}: no assay rows")
    targets = np.asarray(rows, dtype=np.float64) * factors_arr
    return tuple(ids), targets, tuple(elements)


# -- dataset assembly ------------------------------------------------------------

def _group_key(sample_id: str) -> str:
    return sample_id.rsplit("_", 1)[0] if "_" in sample_id else sample_id


def load_dataset(spectra_path, assay_path, calibration: EnergyCalibration | None = None,
                 average_groups: bool = False) -> LabelledDataset:
    """Join a spectra file and an assay file on sample id.

    With ``average_groups`` the spectra ids are grouped by the prefix before
    their last underscore (one spectrum per orientation) and averaged; the
    group key must then match an assay id.
    """
    ids, counts = read_spectra_csv(spectra_path)
    if average_groups:
        groups: dict[str, list[int]] = {}
        for i, sid in enumerate(ids):
            groups.setdefault(_group_key(sid), []).append(i)
        ids = tuple(groups)
        counts = np.stack([counts[rows].mean(axis=0) for rows in groups.values()])
    assay_ids, targets, elements = read_assay_csv(assay_path)
    lookup = {sid: i for i, sid in enumerate(assay_ids)}
    missing = [sid for sid in ids if sid not in lookup]
    if missing:
        raise DataFileError(f"assay file has no rows for sample ids {missing[:5]}")
    aligned = targets[[lookup[sid] for sid in ids]]
    if calibration is None:
        calibration = EnergyCalibration(n_channels=counts.shape[1])
    return LabelledDataset(ids, counts, aligned, elements, calibration)


def write_dataset(dataset: LabelledDataset, spectra_path, assay_path,
                  latents_path=None, unit="wt_frac"):
    write_spectra_csv(spectra_path, dataset.sample_ids, dataset.spectra)
    write_assay_csv(assay_path, dataset.sample_ids, dataset.targets,
                    dataset.elements, unit=unit)
    if latents_path is not None and dataset.latents is not None:
        write_latents_csv(latents_path, dataset)


def write_latents_csv(path, dataset: LabelledDataset):
    lat = dataset.latents
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        cols = (["sample_id", "alpha"]
                + [f"theta_{el}" for el in dataset.elements]
                + [f"gain_{el}" for el in dataset.elements])
        fh.write(",".join(cols) + "\n")
        for i, sid in enumerate(dataset.sample_ids):
            row = ([sid, _fmt(lat.alpha[i])]
                   + [_fmt(v) for v in lat.theta[i]]
                   + [_fmt(v) for v in lat.gains])
            fh.write(",".join(row) + "\n")


# -- JSON documents ----------------------------------------------------------------

def write_globals_json(path, globals_: SimulatorGlobals):
    Path(path).write_text(json.dumps(globals_.to_dict(), sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def read_globals_json(path) -> SimulatorGlobals:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: {exc}") from None
    if not isinstance(doc, dict):
        raise DataFileError(f"{path}: expected a JSON object")
    try:
        return SimulatorGlobals.from_dict(doc)
    except ValueError as exc:
        raise DataFileError(f"{path}: {exc}") from None


def write_json(path, doc: dict):
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFileError(f"{path}: {exc}") from None
