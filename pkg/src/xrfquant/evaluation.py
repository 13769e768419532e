"""10-fold cross-validation, MSE +/- standard error, element filtering, and
Table-style reporting."""

from __future__ import annotations

import csv
import hashlib
import io as _io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import KalphaLinear, MeanRegressor, SpectralLasso
from .datasets import LabelledDataset
from .neural import AxsRegressor, CnnRegressor, FcnnRegressor, TrainConfig, loss_reconstruction
from .transitions import load_bundled_table

#: Tie-break/report order of the competing models; "mean" is the retention
#: baseline and never competes for the best flag.
MODEL_ORDER = ("lr", "lasso", "fcnn", "cnn", "axs")
MODEL_DISPLAY = {"lr": "LR", "lasso": "LASSO", "fcnn": "FCNN", "cnn": "CNN",
                 "axs": "AXS", "mean": "Mean"}


@dataclass(frozen=True)
class FoldAssignment:
    seed: int
    k: int
    fold_of: np.ndarray

    def indices(self, fold: int):
        test = np.flatnonzero(self.fold_of == fold)
        train = np.flatnonzero(self.fold_of != fold)
        return train, test


def kfold_split(n_samples: int, k: int = 10, seed: int = 0) -> FoldAssignment:
    """Shuffle once, then deal samples into k folds of near-equal size."""
    if n_samples < k:
        raise ValueError(f"cannot split {n_samples} samples into {k} folds")
    if k < 2:
        raise ValueError("k must be >= 2")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_samples)
    fold_of = np.empty(n_samples, dtype=int)
    fold_of[order] = np.arange(n_samples) % k
    return FoldAssignment(seed, k, fold_of)


def standard_error(fold_mses) -> float:
    """Sample standard deviation of the fold MSEs divided by sqrt(k)."""
    fold_mses = np.asarray(fold_mses, dtype=np.float64)
    k = len(fold_mses)
    if k < 2:
        raise ValueError("standard error needs at least 2 folds")
    return float(np.std(fold_mses, ddof=1) / np.sqrt(k))


def build_model(name: str, dataset: LabelledDataset, seed: int, *,
                table=None, train_config: TrainConfig | None = None,
                sim_extras=(), lasso_params: dict | None = None):
    """Instantiate one competitor for a dataset; the harness' default wiring."""
    if name == "mean":
        return MeanRegressor()
    table = table if table is not None else load_bundled_table()
    if name == "lr":
        return KalphaLinear(table=table, calibration=dataset.calibration,
                            elements=dataset.elements)
    if name == "lasso":
        params = dict(lasso_params or {})
        params.setdefault("lam", "cv")
        return SpectralLasso(seed=seed, **params)
    cfg = train_config if train_config is not None else TrainConfig()
    stratify = dataset.elements.index("Li") if "Li" in dataset.elements else 0
    cfg = replace(cfg, seed=seed, stratify_column=stratify)
    if name == "fcnn":
        return FcnnRegressor(cfg)
    if name == "cnn":
        return CnnRegressor(cfg)
    if name == "axs":
        sim_elements = dataset.elements + tuple(sim_extras)
        return AxsRegressor(cfg, table=table, calibration=dataset.calibration,
                            sim_elements=sim_elements)
    raise ValueError(f"unknown model name {name!r}")


@dataclass
class CvResult:
    elements: tuple[str, ...]
    models: tuple[str, ...]                 # includes "mean"
    n_folds: int
    fold_mse: dict[str, np.ndarray]         # model -> (k, E), NaN where N/A
    reconstruction_rmse: np.ndarray | None = None  # out-of-fold, per sample


def _canary(X, Y) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X).tobytes())
    h.update(np.ascontiguousarray(Y).tobytes())
    return h.hexdigest()


def cross_validate(dataset: LabelledDataset, models, folds: FoldAssignment, *,
                   table=None, train_config: TrainConfig | None = None,
                   sim_extras=(), lasso_params: dict | None = None,
                   model_builder=build_model, base_seed: int | None = None) -> CvResult:
    """Per-fold, per-element test MSE for every requested model plus the
    training-mean baseline. Training never sees test-fold samples; that and
    the immutability of the training arrays are asserted per fold."""
    models = list(models)
    for name in models:
        if name not in MODEL_ORDER:
            raise ValueError(f"unknown model name {name!r}")
    all_models = models + ["mean"]
    n, n_el = dataset.n_samples, len(dataset.elements)
    k = folds.k
    if len(folds.fold_of) != n:
        raise ValueError("fold assignment does not match the dataset size")
    counts = np.bincount(folds.fold_of, minlength=k)
    if counts.sum() != n or counts.max() - counts.min() > 1:
        raise ValueError("fold assignment is not a balanced partition")
    base_seed = folds.seed if base_seed is None else base_seed

    fold_mse = {name: np.full((k, n_el), np.nan) for name in all_models}
    recon: list[tuple[int, float]] = []
    for fold in range(k):
        train_idx, test_idx = folds.indices(fold)
        assert len(np.intersect1d(train_idx, test_idx)) == 0
        X_tr, Y_tr = dataset.spectra[train_idx], dataset.targets[train_idx]
        X_te, Y_te = dataset.spectra[test_idx], dataset.targets[test_idx]
        canary = _canary(X_tr, Y_tr)
        for name in all_models:
            est = model_builder(name, dataset, base_seed + fold, table=table,
                                train_config=train_config, sim_extras=sim_extras,
                                lasso_params=lasso_params)
            try:
                est.fit(X_tr, Y_tr)
            except Exception as exc:
                raise RuntimeError(f"training {name} failed on fold {fold}") from exc
            pred = est.predict(X_te)
            err = (pred - Y_te) ** 2
            fold_mse[name][fold] = np.mean(err, axis=0)
            if name == "axs":
                rebuilt = est.reconstruct(X_te)
                for local, global_i in enumerate(test_idx):
                    recon.append((int(global_i),
                                  math.sqrt(loss_reconstruction(X_te[local],
                                                                rebuilt[local]))))
        assert _canary(X_tr, Y_tr) == canary, "training inputs were mutated"

    recon_arr = None
    if recon:
        recon_arr = np.array([r for _, r in sorted(recon)], dtype=np.float64)
    return CvResult(dataset.elements, tuple(all_models), k, fold_mse, recon_arr)


@dataclass
class EvalReport:
    """Per (element, model) MSE and SE plus best/retained flags."""

    elements: tuple[str, ...]
    models: tuple[str, ...]
    n_folds: int
    mse: dict = field(default_factory=dict)       # (element, model) -> float
    se: dict = field(default_factory=dict)
    best: dict = field(default_factory=dict)      # element -> model
    retained: dict = field(default_factory=dict)  # element -> bool

    def has(self, element: str, model: str) -> bool:
        return (element, model) in self.mse


def summarize(cv: CvResult) -> EvalReport:
    """Fold means, standard errors, the best flag, and retention flags."""
    report = EvalReport(cv.elements, cv.models, cv.n_folds)
    for model in cv.models:
        for j, el in enumerate(cv.elements):
            vals = cv.fold_mse[model][:, j]
            if np.any(np.isnan(vals)):
                continue
            report.mse[(el, model)] = float(vals.mean())
            report.se[(el, model)] = standard_error(vals)
    competitors = [m for m in MODEL_ORDER if m in cv.models]
    for el in cv.elements:
        scored = [(report.mse[(el, m)], m) for m in competitors if report.has(el, m)]
        if not scored:
            report.retained[el] = False
            continue
        best_mse = min(s for s, _ in scored)
        # exact ties resolve in MODEL_ORDER, which `scored` preserves
        report.best[el] = next(m for s, m in scored if s == best_mse)
        if report.has(el, "mean"):
            report.retained[el] = best_mse < report.mse[(el, "mean")]
        else:
            report.retained[el] = True
    return report


def filter_elements(report: EvalReport) -> list[str]:
    """Elements where some model beat the training-mean baseline."""
    if "mean" not in report.models:
        raise ValueError("report lacks the mean-predictor baseline")
    return [el for el in report.elements if report.retained.get(el, False)]


def format_scientific(x: float, sig: int) -> str:
    """Compact scientific notation with an unpadded exponent, e.g. 1.03e-2."""
    if not np.isfinite(x):
        raise ValueError(f"cannot format {x}")
    if x == 0:
        return f"{0:.{sig - 1}f}e+0"
    exp = int(math.floor(math.log10(abs(x))))
    mant = round(x / 10.0 ** exp, sig - 1)
    if abs(mant) >= 10:
        mant /= 10.0
        exp += 1
    sign = "+" if exp >= 0 else "-"
    return f"{mant:.{sig - 1}f}e{sign}{abs(exp)}"


def format_cell(mse: float, se: float) -> str:
    """One table cell: MSE to 3 significant digits, SE to 2, joined by +/-."""
    return f"{format_scientific(mse, 3)}±{format_scientific(se, 2)}"


def render_report(report: EvalReport, fmt: str = "text") -> str:
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "text":
        return _render_text(report)
    raise ValueError(f"unknown report format {fmt!r}")


def _render_csv(report: EvalReport) -> str:
    out = _io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["element", "model", "mse", "se", "n_folds", "best", "retained"])
    for el in report.elements:
        for model in report.models:
            if not report.has(el, model):
                continue
            writer.writerow([
                el, model,
                repr(report.mse[(el, model)]), repr(report.se[(el, model)]),
                report.n_folds,
                int(report.best.get(el) == model),
                int(report.retained.get(el, False)),
            ])
    return out.getvalue()


def parse_report_csv(text: str) -> EvalReport:
    reader = csv.reader(_io.StringIO(text))
    header = next(reader)
    if header != ["element", "model", "mse", "se", "n_folds", "best", "retained"]:
        raise ValueError("malformed report CSV header")
    elements: list[str] = []
    models: list[str] = []
    mse, se, best, retained = {}, {}, {}, {}
    n_folds = 0
    for row in reader:
        if not row:
            continue
        el, model = row[0], row[1]
        if el not in elements:
            elements.append(el)
        if model not in models:
            models.append(model)
        mse[(el, model)] = float(row[2])
        se[(el, model)] = float(row[3])
        n_folds = int(row[4])
        if row[5] == "1":
            best[el] = model
        retained[el] = retained.get(el, False) or row[6] == "1"
    return EvalReport(tuple(elements), tuple(models), n_folds, mse, se, best, retained)


def _render_text(report: EvalReport) -> str:
    """Aligned per-element table of MSE+/-SE cells; best cell marked with *."""
    shown = [el for el in report.elements if report.retained.get(el, False)]
    columns = [m for m in MODEL_ORDER if m in report.models]
    columns += [m for m in report.models if m not in columns]
    header = ["Element"] + [MODEL_DISPLAY[m] for m in columns]
    rows = [header]
    for el in shown:
        row = [el]
        for model in columns:
            if report.has(el, model):
                cell = format_cell(report.mse[(el, model)], report.se[(el, model)])
                if report.best.get(el) == model:
                    cell = f"*{cell}*"
            else:
                cell = ""
            row.append(cell)
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def errorbars_csv(report: EvalReport) -> str:
    """Plot-ready long-form MSE/SE rows for the retained elements."""
    out = _io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["element", "model", "mse", "se"])
    for el in filter_elements(report):
        for model in report.models:
            if report.has(el, model):
                writer.writerow([el, model, repr(report.mse[(el, model)]),
                                 repr(report.se[(el, model)])])
    return out.getvalue()


def reconstruction_summary(rmse: np.ndarray) -> dict[str, float]:
    """Corpus-level reconstruction quality: min / median / mean / max RMSE."""
    rmse = np.asarray(rmse, dtype=np.float64)
    if rmse.size == 0:
        raise ValueError("no reconstruction RMSE values")
    return {
        "min": float(rmse.min()),
        "median": float(np.median(rmse)),
        "mean": float(rmse.mean()),
        "max": float(rmse.max()),
        "n": int(rmse.size),
    }
