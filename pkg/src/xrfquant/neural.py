"""Neural regressors: single-layer FCNN, convolutional CNN, and the AXS
auto-encoder whose decoder is the differentiable XRF simulator.

All three share one encoder/output construction path and one training loop
built on the tape engine, so the CNN is literally the AXS architecture
without the simulator branch. Training is full-batch, float64, and
deterministic given the config seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from . import autodiff as ad
from .core import EnergyCalibration
from .simulator import (
    GLOBAL_PARAM_NAMES,
    ForwardModel,
    SimulatorGlobals,
    default_simulated_elements,
)
from .transitions import load_bundled_table
from .validation import check_matrix, check_paired

CHECKPOINT_FORMAT = "xrfquant-checkpoint-v1"


@dataclass(frozen=True)
class TrainConfig:
    """Shared neural-training hyperparameters.

    The defaults are the grid-search values used throughout: learning rate
    1e-3, early-stopping patience 1000 epochs, L1 factor 1e-3, and dropout
    starting at 0.5 and backing off linearly until it is disabled at epoch
    10000.
    """

    learning_rate: float = 1e-3
    l1_factor: float = 1e-3
    early_stop_patience: int = 1000
    dropout_start: float = 0.5
    dropout_end_epoch: int = 10000
    max_epochs: int = 60000
    beta: float = 1.0
    seed: int = 0
    val_fraction: float = 0.1
    stratify_column: int = 0
    optimizer: str = "adam"
    conv_filters: tuple[int, int] = (16, 16)
    conv_kernel: int = 9
    conv_stride: int = 2
    hidden_units: int = 256

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.l1_factor < 0 or self.beta < 0:
            raise ValueError("l1_factor and beta must be >= 0")
        if not (0 <= self.dropout_start < 1):
            raise ValueError("dropout_start must lie in [0, 1)")
        if self.early_stop_patience < 1 or self.dropout_end_epoch < 1:
            raise ValueError("patience and dropout_end_epoch must be >= 1")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")
        if not (0 < self.val_fraction < 1):
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def dropout_probability(config: TrainConfig, epoch: int) -> float:
    """Linear backoff from dropout_start to zero at dropout_end_epoch."""
    return max(0.0, config.dropout_start * (1.0 - epoch / config.dropout_end_epoch))


# -- loss functions (numpy reference forms) ---------------------------------

def loss_reconstruction(x, x_prime) -> float:
    """Mean squared channel error between an observed and rebuilt spectrum."""
    x = np.asarray(x, dtype=np.float64)
    x_prime = np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ValueError(f"spectrum shapes differ: {x.shape} vs {x_prime.shape}")
    return float(np.mean((x - x_prime) ** 2))


def loss_prediction(y, y_prime) -> float:
    """Mean squared concentration error across elements."""
    y = np.asarray(y, dtype=np.float64)
    y_prime = np.asarray(y_prime, dtype=np.float64)
    if y.shape != y_prime.shape:
        raise ValueError(f"target shapes differ: {y.shape} vs {y_prime.shape}")
    return float(np.mean((y - y_prime) ** 2))


def loss_total(Y, Y_pred, beta=0.0, X=None, X_recon=None,
               l1_weights=(), l1_factor=0.0) -> float:
    """Sum over samples of J_p + beta * J_r, plus the L1 weight penalty."""
    total = sum(loss_prediction(y, yp) for y, yp in zip(Y, Y_pred))
    if beta != 0.0 and X is not None:
        total += beta * sum(loss_reconstruction(x, xr) for x, xr in zip(X, X_recon))
    total += l1_factor * sum(float(np.abs(w).sum()) for w in l1_weights)
    return float(total)


# -- validation split ---------------------------------------------------------

def stratified_validation_split(Y, val_fraction, seed, column=0):
    """Deterministic train/val index split, stratified by quartile of one target."""
    n = Y.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples to split")
    col = Y[:, column]
    edges = np.quantile(col, [0.25, 0.5, 0.75])
    bins = np.digitize(col, edges)
    rng = np.random.default_rng(seed)
    val: list[int] = []
    for b in range(4):
        idx = np.flatnonzero(bins == b)
        rng.shuffle(idx)
        take = int(round(val_fraction * len(idx)))
        val.extend(idx[:take])
    if not val:
        val = [int(rng.integers(n))]
    val_idx = np.array(sorted(val), dtype=int)
    train_idx = np.setdiff1d(np.arange(n), val_idx)
    if len(train_idx) == 0:
        raise ValueError("validation split left no training samples")
    return train_idx, val_idx


# -- graph construction -------------------------------------------------------

def _glorot(rng, fan_in, fan_out, shape):
    return rng.normal(0.0, np.sqrt(2.0 / (fan_in + fan_out)), size=shape)


class _Graph:
    """A built model graph plus the node handles training needs."""

    def __init__(self, tape):
        self.tape = tape
        self.x = None          # raw spectra placeholder (N, m)
        self.y = None          # targets placeholder (N, E)
        self.mask = None       # dropout mask placeholder
        self.mask_dim = 0
        self.latent = None
        self.theta = None
        self.alpha = None
        self.y_pred = None
        self.x_recon = None
        self.jp_sum = None
        self.jr_sum = None
        self.loss = None
        self.params = {}       # name -> Parameter
        self.l1_names = []     # parameter names under the L1 penalty
        self.trainable = []    # parameter names updated by the optimizer

    def feeds(self, X, Y=None, mask=None):
        out = {self.x: X}
        if Y is not None and self.y is not None:
            out[self.y] = Y
        if self.mask is not None:
            if mask is None:
                mask = np.ones((X.shape[0], self.mask_dim))
            out[self.mask] = mask
        return out

    def weight_values(self):
        return {name: p.value.copy() for name, p in self.params.items()}

    def set_weights(self, values):
        for name, v in values.items():
            self.params[name].set_value(v)


def conv_output_length(length, kernel, stride):
    if length < kernel:
        raise ValueError(f"input length {length} shorter than kernel {kernel}")
    return (length - kernel) // stride + 1


def _add_prediction_loss(g: _Graph, n_targets: int):
    diff = ad.sub(g.y, g.y_pred)
    g.jp_sum = ad.reduce_sum(ad.square(diff), axis=1).sum() * (1.0 / n_targets)


def _add_l1(g: _Graph, cfg: TrainConfig):
    penalty = g.tape.constant(0.0, "l1_zero")
    for name in g.l1_names:
        penalty = penalty + ad.absolute(g.params[name]).sum()
    return penalty * cfg.l1_factor


def build_fcnn_graph(n_channels, n_targets, cfg: TrainConfig, rng,
                     norm_scale: float) -> _Graph:
    """Input dropout, one dense layer, ReLU output."""
    tape = ad.Tape()
    g = _Graph(tape)
    g.x = tape.placeholder(np.zeros((1, n_channels)), "x")
    g.y = tape.placeholder(np.zeros((1, n_targets)), "y")
    g.mask = tape.placeholder(np.ones((1, n_channels)), "mask")
    g.mask_dim = n_channels
    w = tape.parameter(_glorot(rng, n_channels, n_targets, (n_channels, n_targets)), "w")
    # small positive bias keeps the ReLU outputs alive at initialization
    b = tape.parameter(np.full(n_targets, 0.01), "b")
    g.params = {"w": w, "b": b}
    g.l1_names = ["w"]
    g.trainable = ["w", "b"]
    x_norm = g.x * (1.0 / norm_scale)
    g.y_pred = ad.relu(ad.matmul(x_norm * g.mask, w) + b)
    _add_prediction_loss(g, n_targets)
    g.loss = g.jp_sum + _add_l1(g, cfg)
    return g


def _build_encoder(g: _Graph, n_channels, latent_dim, cfg: TrainConfig, rng,
                   norm_scale: float):
    """Two strided sigmoid convolutions, a sigmoid dense layer, softplus latent."""
    tape = g.tape
    f1, f2 = cfg.conv_filters
    k, s = cfg.conv_kernel, cfg.conv_stride
    l1 = conv_output_length(n_channels, k, s)
    l2 = conv_output_length(l1, k, s)
    flat = f2 * l2
    w1 = tape.parameter(_glorot(rng, k, f1, (f1, 1, k)), "conv1_w")
    b1 = tape.parameter(np.zeros(f1), "conv1_b")
    w2 = tape.parameter(_glorot(rng, f1 * k, f2, (f2, f1, k)), "conv2_w")
    b2 = tape.parameter(np.zeros(f2), "conv2_b")
    w3 = tape.parameter(_glorot(rng, flat, cfg.hidden_units, (flat, cfg.hidden_units)), "dense_w")
    b3 = tape.parameter(np.zeros(cfg.hidden_units), "dense_b")
    w4 = tape.parameter(_glorot(rng, cfg.hidden_units, latent_dim,
                                (cfg.hidden_units, latent_dim)), "latent_w")
    b4 = tape.parameter(np.zeros(latent_dim), "latent_b")
    g.params.update({"conv1_w": w1, "conv1_b": b1, "conv2_w": w2, "conv2_b": b2,
                     "dense_w": w3, "dense_b": b3, "latent_w": w4, "latent_b": b4})
    g.l1_names += ["conv1_w", "conv2_w", "dense_w", "latent_w"]
    g.trainable += ["conv1_w", "conv1_b", "conv2_w", "conv2_b",
                    "dense_w", "dense_b", "latent_w", "latent_b"]
    x_norm = g.x * (1.0 / norm_scale)
    h = ad.reshape(x_norm, (-1, 1, n_channels))
    h = ad.sigmoid(ad.conv1d(h, w1, b1, stride=s))
    h = ad.sigmoid(ad.conv1d(h, w2, b2, stride=s))
    h = ad.reshape(h, (-1, flat))
    h = ad.sigmoid(ad.matmul(h, w3) + b3)
    g.latent = ad.softplus(ad.matmul(h, w4) + b4)


def _build_output_head(g: _Graph, latent_dim, n_targets, rng):
    """Dropout on the latent, one dense sigmoid layer to the concentrations."""
    tape = g.tape
    g.mask = tape.placeholder(np.ones((1, latent_dim)), "mask")
    g.mask_dim = latent_dim
    w = tape.parameter(_glorot(rng, latent_dim, n_targets, (latent_dim, n_targets)), "out_w")
    b = tape.parameter(np.zeros(n_targets), "out_b")
    g.params.update({"out_w": w, "out_b": b})
    g.l1_names += ["out_w"]
    g.trainable += ["out_w", "out_b"]
    g.y_pred = ad.sigmoid(ad.matmul(g.latent * g.mask, w) + b)


def build_cnn_graph(n_channels, n_targets, latent_dim, cfg: TrainConfig, rng,
                    norm_scale: float) -> _Graph:
    tape = ad.Tape()
    g = _Graph(tape)
    g.x = tape.placeholder(np.zeros((1, n_channels)), "x")
    g.y = tape.placeholder(np.zeros((1, n_targets)), "y")
    _build_encoder(g, n_channels, latent_dim, cfg, rng, norm_scale)
    _build_output_head(g, latent_dim, n_targets, rng)
    _add_prediction_loss(g, n_targets)
    g.jr_sum = None
    g.loss = g.jp_sum + _add_l1(g, cfg)
    return g


def build_axs_graph(forward_model: ForwardModel, n_targets, cfg: TrainConfig,
                    rng, norm_scale: float,
                    init_globals: SimulatorGlobals,
                    freeze_globals: bool = False) -> _Graph:
    """Encoder -> (theta, alpha) -> simulator for reconstruction, plus the
    output head for prediction; the joint loss is sum(J_p + beta J_r) + L1."""
    n_channels = forward_model.n_channels
    n_sim = len(forward_model.elements)
    latent_dim = n_sim + 1
    tape = ad.Tape()
    g = _Graph(tape)
    g.x = tape.placeholder(np.zeros((1, n_channels)), "x")
    g.y = tape.placeholder(np.zeros((1, n_targets)), "y")
    _build_encoder(g, n_channels, latent_dim, cfg, rng, norm_scale)
    _build_output_head(g, latent_dim, n_targets, rng)
    for name in GLOBAL_PARAM_NAMES:
        g.params[name] = tape.parameter(getattr(init_globals, name), name)
    if not freeze_globals:
        g.trainable += list(GLOBAL_PARAM_NAMES)
    theta = ad.slice_cols(g.latent, 0, n_sim)
    alpha = ad.slice_cols(g.latent, n_sim, n_sim + 1)
    g.theta = theta
    g.alpha = alpha
    g.x_recon = forward_model.attach(tape, theta, alpha,
                                     {k: g.params[k] for k in GLOBAL_PARAM_NAMES})
    _add_prediction_loss(g, n_targets)
    recon_diff = ad.sub(g.x, g.x_recon)
    g.jr_sum = ad.reduce_sum(ad.square(recon_diff), axis=1).sum() * (1.0 / n_channels)
    g.loss = g.jp_sum + g.jr_sum * cfg.beta + _add_l1(g, cfg)
    return g


# -- training loop -------------------------------------------------------------

def _sample_mask(rng, shape, p):
    if p <= 0:
        return np.ones(shape)
    keep = rng.uniform(size=shape) >= p
    return keep / (1.0 - p)


def _val_criterion_nodes(g: _Graph):
    """Validation early-stopping value: J_p for FCNN/CNN, J_p + beta J_r for AXS."""
    if g.jr_sum is None:
        return (g.jp_sum,)
    return (g.jp_sum, g.jr_sum)


def train_graph(g: _Graph, X, Y, cfg: TrainConfig, rng):
    """Full-batch training with early stopping on a held-out validation split.

    Returns a history list of (epoch, train_loss, val_value) rows; ``g``
    holds the weights of the best validation epoch afterwards.
    """
    column = cfg.stratify_column if cfg.stratify_column < Y.shape[1] else 0
    train_idx, val_idx = stratified_validation_split(
        Y, cfg.val_fraction, cfg.seed, column=column)
    X_tr, Y_tr = X[train_idx], Y[train_idx]
    X_va, Y_va = X[val_idx], Y[val_idx]
    params = [g.params[name] for name in g.trainable]
    if cfg.optimizer == "adam":
        opt = ad.Adam(params, lr=cfg.learning_rate)
    else:
        opt = ad.Sgd(params, lr=cfg.learning_rate)
    val_nodes = _val_criterion_nodes(g)
    ones_va = np.ones((len(val_idx), g.mask_dim)) if g.mask is not None else None

    best_val = np.inf
    best_epoch = -1
    best_state = g.weight_values()
    history = []
    for epoch in range(cfg.max_epochs):
        p = dropout_probability(cfg, epoch)
        mask = _sample_mask(rng, (len(train_idx), g.mask_dim), p)
        train_loss = float(g.tape.evaluate(g.feeds(X_tr, Y_tr, mask), g.loss))
        opt.zero_grad()
        g.tape.backprop(g.loss)
        opt.step()
        vals = g.tape.evaluate(g.feeds(X_va, Y_va, ones_va), list(val_nodes))
        val_value = float(vals[0]) / len(val_idx)
        if len(vals) > 1:
            val_value += cfg.beta * float(vals[1]) / len(val_idx)
        history.append((epoch, train_loss, val_value))
        if val_value < best_val:
            best_val = val_value
            best_epoch = epoch
            best_state = g.weight_values()
        elif epoch - best_epoch >= cfg.early_stop_patience:
            break
    g.set_weights(best_state)
    return history, best_epoch


# -- estimators -----------------------------------------------------------------

class _NeuralRegressor(BaseEstimator, RegressorMixin):
    """Shared fit/predict plumbing for the tape-trained models."""

    def __init__(self, config=None):
        self.config = config

    def _config(self) -> TrainConfig:
        return self.config if self.config is not None else TrainConfig()

    def _build(self, n_channels, n_targets, cfg, rng, norm_scale) -> _Graph:
        raise NotImplementedError

    def fit(self, X, Y):
        X = check_matrix(X, "X")
        Y = check_matrix(Y, "Y")
        check_paired(X, Y)
        cfg = self._config()
        rng = np.random.default_rng(cfg.seed)
        scale = float(X.max())
        self.norm_scale_ = scale if scale > 0 else 1.0
        self.n_channels_ = X.shape[1]
        self.n_targets_ = Y.shape[1]
        self.graph_ = self._build(self.n_channels_, self.n_targets_, cfg, rng,
                                  self.norm_scale_)
        self.history_, self.best_epoch_ = train_graph(self.graph_, X, Y, cfg, rng)
        self.weights_ = self.graph_.weight_values()
        return self

    def _ensure_graph(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("fit before predict")
        if getattr(self, "graph_", None) is None:
            cfg = self._config()
            rng = np.random.default_rng(cfg.seed)
            self.graph_ = self._build(self.n_channels_, self.n_targets_, cfg, rng,
                                      self.norm_scale_)
            self.graph_.set_weights(self.weights_)
        return self.graph_

    def predict(self, X):
        g = self._ensure_graph()
        X = check_matrix(X, "X", n_cols=self.n_channels_)
        return g.tape.evaluate(g.feeds(X), g.y_pred).copy()

    def _checkpoint_body(self) -> dict:
        return {
            "config": asdict(self._config()),
            "n_channels": self.n_channels_,
            "n_targets": self.n_targets_,
            "norm_scale": self.norm_scale_,
            "best_epoch": self.best_epoch_,
            "weights": {k: v.tolist() for k, v in sorted(self.weights_.items())},
        }

    def _restore_body(self, body: dict):
        cfg = dict(body["config"])
        cfg["conv_filters"] = tuple(cfg["conv_filters"])
        self.config = TrainConfig(**cfg)
        self.n_channels_ = int(body["n_channels"])
        self.n_targets_ = int(body["n_targets"])
        self.norm_scale_ = float(body["norm_scale"])
        self.best_epoch_ = int(body["best_epoch"])
        self.weights_ = {k: np.array(v, dtype=np.float64)
                         for k, v in body["weights"].items()}
        self.history_ = []
        self.graph_ = None


class FcnnRegressor(_NeuralRegressor):
    """Spectrum directly connected to the outputs through one ReLU layer."""

    model_name = "fcnn"

    def _build(self, n_channels, n_targets, cfg, rng, norm_scale):
        return build_fcnn_graph(n_channels, n_targets, cfg, rng, norm_scale)

    def to_checkpoint(self) -> dict:
        return {"format": CHECKPOINT_FORMAT, "model": self.model_name,
                **self._checkpoint_body()}

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "FcnnRegressor":
        _check_format(doc, cls.model_name)
        model = cls()
        model._restore_body(doc)
        return model


class CnnRegressor(_NeuralRegressor):
    """Encoder + output head with the latent treated as a hidden layer."""

    model_name = "cnn"

    def __init__(self, config=None, latent_dim=None):
        super().__init__(config)
        self.latent_dim = latent_dim

    def _resolved_latent_dim(self, n_targets):
        # mirrors the AXS default of (targets + 3 extra emitters + background)
        return self.latent_dim if self.latent_dim is not None else n_targets + 4

    def _build(self, n_channels, n_targets, cfg, rng, norm_scale):
        return build_cnn_graph(n_channels, n_targets,
                               self._resolved_latent_dim(n_targets),
                               cfg, rng, norm_scale)

    def encode(self, X):
        g = self._ensure_graph()
        X = check_matrix(X, "X", n_cols=self.n_channels_)
        return g.tape.evaluate(g.feeds(X), g.latent).copy()

    def to_checkpoint(self) -> dict:
        return {"format": CHECKPOINT_FORMAT, "model": self.model_name,
                "latent_dim": self._resolved_latent_dim(self.n_targets_),
                **self._checkpoint_body()}

    @classmethod
    def from_checkpoint(cls, doc: dict) -> "CnnRegressor":
        _check_format(doc, cls.model_name)
        model = cls(latent_dim=int(doc["latent_dim"]))
        model._restore_body(doc)
        return model


class AxsRegressor(_NeuralRegressor):
    """Analysis-by-synthesis model: Encoder -> XRF simulator -> Output."""

    model_name = "axs"

    def __init__(self, config=None, table=None, calibration=None,
                 sim_elements=None, init_globals=None, freeze_globals=False):
        super().__init__(config)
        self.table = table
        self.calibration = calibration
        self.sim_elements = sim_elements
        self.init_globals = init_globals
        self.freeze_globals = freeze_globals

    def _resolve(self):
        table = self.table if self.table is not None else load_bundled_table()
        cal = self.calibration if self.calibration is not None else EnergyCalibration()
        elements = (tuple(self.sim_elements) if self.sim_elements is not None
                    else default_simulated_elements())
        init = self.init_globals if self.init_globals is not None else SimulatorGlobals()
        return table, cal, elements, init

    def _build(self, n_channels, n_targets, cfg, rng, norm_scale):
        table, cal, elements, init = self._resolve()
        if cal.n_channels != n_channels:
            raise ValueError(
                f"calibration has {cal.n_channels} channels but spectra have "
                f"{n_channels}"
            )
        self.forward_model_ = ForwardModel(table, cal, elements)
        return build_axs_graph(self.forward_model_, n_targets, cfg, rng,
                               norm_scale, init, self.freeze_globals)

    @property
    def simulator_globals_(self) -> SimulatorGlobals:
        g = self._ensure_graph()
        return SimulatorGlobals(**{name: float(g.params[name].value)
                                   for name in GLOBAL_PARAM_NAMES})

    def encode(self, X):
        """Latent diagnostics: (theta matrix, alpha vector) for each spectrum."""
        g = self._ensure_graph()
        X = check_matrix(X, "X", n_cols=self.n_channels_)
        latent = g.tape.evaluate(g.feeds(X), g.latent).copy()
        return latent[:, :-1], latent[:, -1]

    def reconstruct(self, X):
        """Simulator output for the encoded latent of each spectrum."""
        theta, alpha = self.encode(X)
        return self.forward_model_.simulate_batch(theta, alpha, self.simulator_globals_)

    def reconstruct_from_latent(self, theta, alpha):
        self._ensure_graph()
        return self.forward_model_.simulate_batch(
            np.atleast_2d(theta), np.atleast_1d(alpha), self.simulator_globals_)

    def to_checkpoint(self) -> dict:
        table, cal, elements, _ = self._resolve()
        return {
            "format": CHECKPOINT_FORMAT,
            "model": self.model_name,
            "sim_elements": list(elements),
            "calibration": {"e_min": cal.e_min, "e_max": cal.e_max,
                            "n_channels": cal.n_channels},
            "simulator_globals": self.simulator_globals_.to_dict(),
            "freeze_globals": self.freeze_globals,
            **self._checkpoint_body(),
        }

    @classmethod
    def from_checkpoint(cls, doc: dict, table=None) -> "AxsRegressor":
        """Rebuild from a checkpoint; the transition table is supplied by the
        caller (bundled table by default) because it is an input, not a
        learned artifact."""
        _check_format(doc, cls.model_name)
        cal = EnergyCalibration(**doc["calibration"])
        model = cls(table=table, calibration=cal,
                    sim_elements=tuple(doc["sim_elements"]),
                    init_globals=SimulatorGlobals.from_dict(doc["simulator_globals"]),
                    freeze_globals=bool(doc["freeze_globals"]))
        model._restore_body(doc)
        return model


def _check_format(doc: dict, expected_model: str):
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    if doc.get("model") != expected_model:
        raise ValueError(
            f"checkpoint holds a {doc.get('model')!r} model, expected "
            f"{expected_model!r}"
        )


MODEL_CLASSES = {
    "fcnn": FcnnRegressor,
    "cnn": CnnRegressor,
    "axs": AxsRegressor,
}


def load_checkpoint(doc: dict, table=None):
    """Dispatch a checkpoint document to the right estimator class."""
    name = doc.get("model")
    if name == "axs":
        return AxsRegressor.from_checkpoint(doc, table=table)
    if name in MODEL_CLASSES:
        return MODEL_CLASSES[name].from_checkpoint(doc)
    raise ValueError(f"unknown model {name!r} in checkpoint")
