"""Linear direct forecaster, windowing, training loop and experiment tables."""

import math
import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import InvalidInputError, InvalidParameterError, TrainingError
from .loss import COMPONENTS, EmaNormalizer, LossConfig, frest_loss, l_time
from .rng import INIT, SHUFFLE, make_rng
from .validation import check_finite

SPLITS = ("train", "val", "test")

ABLATION_ROWS = (
    ("MSE", None),
    ("FFT", ("fft",)),
    ("GFT", ("gft",)),
    ("JFT", ("jft",)),
    ("FFT+GFT", ("fft", "gft")),
    ("FreST", COMPONENTS),
)


class NodeScaler(TransformerMixin, BaseEstimator):
    """Per-node z-score normalization; the last axis indexes nodes."""

    def fit(self, X, y=None):
        X = check_finite(np.asarray(X, dtype=np.float64), "X")
        flat = X.reshape(-1, X.shape[-1])
        self.mean_ = flat.mean(axis=0)
        std = flat.std(axis=0)
        self.scale_ = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X):
        if not hasattr(self, "mean_"):
            raise NotFittedError("NodeScaler is not fitted")
        return (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_

    def inverse_transform(self, X):
        if not hasattr(self, "mean_"):
            raise NotFittedError("NodeScaler is not fitted")
        return np.asarray(X, dtype=np.float64) * self.scale_ + self.mean_


@dataclass
class WindowedDataset:
    """History/future window pairs of one split, in normalized units."""

    x: np.ndarray
    y: np.ndarray
    split: str
    scaler: NodeScaler

    def __post_init__(self):
        if self.x.ndim != 3 or self.y.ndim != 3 or self.x.shape[0] != self.y.shape[0]:
            raise InvalidInputError("windows must be (M, T, N) and (M, H, N) with equal M")
        if self.x.shape[2] != self.y.shape[2]:
            raise InvalidInputError("history and future windows differ in node count")
        if self.split not in SPLITS:
            raise InvalidParameterError(f"unknown split {self.split!r}")

    def __len__(self):
        return self.x.shape[0]


def make_windows(series, t, h, stride=1):
    """All ``(X, Y)`` pairs with ``X = series[s:s+t]`` and ``Y = series[s+t:s+t+h]``."""
    series = np.asarray(series, dtype=np.float64)
    if series.ndim != 2:
        raise InvalidInputError(f"series must be L x N, got {series.shape}")
    if t < 1 or h < 1 or stride < 1:
        raise InvalidParameterError("t, h and stride must be positive")
    starts = np.arange(0, series.shape[0] - t - h + 1, stride)
    if starts.size == 0:
        raise InvalidInputError(
            f"series of length {series.shape[0]} is too short for t={t}, h={h}")
    x = np.stack([series[s:s + t] for s in starts])
    y = np.stack([series[s + t:s + t + h] for s in starts])
    return x, y, starts


def split_windows(series, t, h, ratios=(0.6, 0.2, 0.2), stride=1):
    """Chronological train/val/test split of the windows, normalized with train statistics.

    Window start indices are cut in order by ``ratios``. The scaler is fitted on
    the series rows covered by train windows only.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidParameterError(f"split ratios must be 3 non-negatives summing to 1, got {ratios}")
    series = check_finite(np.asarray(series, dtype=np.float64), "series")
    x, y, starts = make_windows(series, t, h, stride)
    m = len(starts)
    n_train = int(math.floor(ratios[0] * m))
    n_val = int(math.floor(ratios[1] * m))
    if n_train < 1:
        raise InvalidInputError("train split is empty")
    scaler = NodeScaler().fit(series[: starts[n_train - 1] + t + h])
    bounds = {"train": (0, n_train), "val": (n_train, n_train + n_val),
              "test": (n_train + n_val, m)}
    out = {}
    for name, (lo, hi) in bounds.items():
        out[name] = WindowedDataset(scaler.transform(x[lo:hi]), scaler.transform(y[lo:hi]),
                                    name, scaler)
    return out


def forecast(coef, intercept, x):
    """``W @ X + b`` for shared weights ``(H, T)`` or per-node weights ``(N, H, T)``.

    ``x`` is ``(T, N)`` or a batch ``(B, T, N)``; the result has ``H`` rows.
    """
    x = np.asarray(x, dtype=np.float64)
    if coef.ndim == 2:
        if x.shape[-2] != coef.shape[1]:
            raise InvalidInputError(f"history length {x.shape[-2]} != weight width {coef.shape[1]}")
        return coef @ x + intercept[:, None]
    if x.shape[-2] != coef.shape[2] or x.shape[-1] != coef.shape[0]:
        raise InvalidInputError("history shape does not match per-node weights")
    return np.einsum("nht,...tn->...hn", coef, x) + intercept.T


class _Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for key, g in grads.items():
            m = self.m.get(key, 0.0) * self.b1 + (1.0 - self.b1) * g
            v = self.v.get(key, 0.0) * self.b2 + (1.0 - self.b2) * g * g
            self.m[key], self.v[key] = m, v
            params[key] = params[key] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class _SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params, grads):
        for key, g in grads.items():
            params[key] = params[key] - self.lr * g


class LinearForecaster(BaseEstimator):
    """Direct multi-step linear forecaster trained with MSE or the spectral objective.

    ``fit`` takes history windows ``X`` of shape ``(M, T, N)`` and futures ``Y`` of
    shape ``(M, H, N)``. With ``sharing="shared"`` one ``H x T`` map is applied
    to every node; ``"per-node"`` learns ``N`` separate maps.

    Setting ``loss="mse"`` trains on the time-domain term alone; ``loss="frest"``
    uses the configuration ``alpha``/``components``/... and needs a
    ``spectrum`` whenever a graph component is active.
    """

    def __init__(self, sharing="shared", loss="frest", alpha=0.5, beta_init=(0.0, 0.0, 0.0),
                 epsilon=1e-8, normalization_mode="per-step", ema_decay=0.99,
                 complex_l1_convention="modulus", components=COMPONENTS, optimizer="adam",
                 lr=1e-3, epochs=50, batch_size=32, seed=0, spectrum=None,
                 record_trajectory=False):
        self.sharing = sharing
        self.loss = loss
        self.alpha = alpha
        self.beta_init = beta_init
        self.epsilon = epsilon
        self.normalization_mode = normalization_mode
        self.ema_decay = ema_decay
        self.complex_l1_convention = complex_l1_convention
        self.components = components
        self.optimizer = optimizer
        self.lr = lr
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.spectrum = spectrum
        self.record_trajectory = record_trajectory

    def loss_config(self):
        return LossConfig(alpha=self.alpha, beta_init=tuple(self.beta_init), epsilon=self.epsilon,
                          normalization_mode=self.normalization_mode, ema_decay=self.ema_decay,
                          complex_l1_convention=self.complex_l1_convention,
                          components=tuple(self.components))

    def _validate(self, X, Y):
        if self.sharing not in ("shared", "per-node"):
            raise InvalidParameterError(f"unknown sharing {self.sharing!r}")
        if self.loss not in ("mse", "frest"):
            raise InvalidParameterError(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise InvalidParameterError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 1 or self.batch_size < 1 or not self.lr > 0:
            raise InvalidParameterError("epochs, batch_size and lr must be positive")
        X = check_finite(np.asarray(X, dtype=np.float64), "X")
        Y = check_finite(np.asarray(Y, dtype=np.float64), "Y")
        if X.ndim != 3 or Y.ndim != 3 or X.shape[0] != Y.shape[0] or X.shape[2] != Y.shape[2]:
            raise InvalidInputError(f"X (M, T, N) and Y (M, H, N) required, got {X.shape}, {Y.shape}")
        if X.shape[0] < 1:
            raise InvalidInputError("empty training set")
        return X, Y

    def _objective(self, y, pred, cfg, beta, ema):
        if self.loss == "mse":
            d = pred - y
            return float(np.mean(d * d)), 2.0 * d / d.size, None
        s = None
        if cfg.normalization_mode == "ema" and ema is not None:
            probe = frest_loss(y, pred, cfg, self.spectrum, beta=beta)
            s = ema.update(probe.components)
        ev = frest_loss(y, pred, cfg, self.spectrum, stopgrad_values=s, beta=beta)
        return ev.total, ev.grad_prediction, ev.grad_beta

    def _grads(self, xb, g):
        if self.sharing == "shared":
            gw = np.zeros_like(self.coef_)
            for i in range(xb.shape[0]):
                gw += g[i] @ xb[i].T
            gb = np.sum(g, axis=(0, 2))
        else:
            gw = np.zeros_like(self.coef_)
            for i in range(xb.shape[0]):
                gw += np.einsum("hn,tn->nht", g[i], xb[i])
            gb = np.sum(g, axis=0).T
        return gw, gb

    def fit(self, X, Y, X_val=None, Y_val=None):
        X, Y = self._validate(X, Y)
        cfg = self.loss_config() if self.loss == "frest" else None
        if cfg is not None and any(c != "fft" for c in cfg.components) and self.spectrum is None:
            raise InvalidInputError("graph components require a spectrum")
        m, t, n = X.shape
        h = Y.shape[1]
        bound = 1.0 / math.sqrt(t)
        init = make_rng(self.seed, 0, INIT)
        if self.sharing == "shared":
            self.coef_ = init.uniform(-bound, bound, size=(h, t))
            self.intercept_ = init.uniform(-bound, bound, size=h)
        else:
            self.coef_ = init.uniform(-bound, bound, size=(n, h, t))
            self.intercept_ = init.uniform(-bound, bound, size=(n, h))
        self.beta_ = np.array(cfg.beta_init if cfg else (0.0, 0.0, 0.0), dtype=np.float64)
        self.n_history_, self.horizon_, self.n_nodes_ = t, h, n

        opt = _Adam(self.lr) if self.optimizer == "adam" else _SGD(self.lr)
        ema = EmaNormalizer(cfg.ema_decay) if cfg is not None and cfg.normalization_mode == "ema" else None
        params = {"coef": self.coef_, "intercept": self.intercept_, "beta": self.beta_}
        self.history_ = []
        self.trajectory_ = [] if self.record_trajectory else None
        best = None
        for epoch in range(1, self.epochs + 1):
            order = make_rng(self.seed, epoch, SHUFFLE).permutation(m)
            running = 0.0
            for lo in range(0, m, self.batch_size):
                idx = order[lo:lo + self.batch_size]
                xb, yb = X[idx], Y[idx]
                pred = forecast(params["coef"], params["intercept"], xb)
                with np.errstate(over="ignore", invalid="ignore"):
                    value, g_pred, g_beta = self._objective(yb, pred, cfg, params["beta"], ema)
                if not math.isfinite(value):
                    raise TrainingError(f"non-finite loss in epoch {epoch}", epoch)
                self.coef_, self.intercept_ = params["coef"], params["intercept"]
                gw, gb = self._grads(xb, g_pred)
                grads = {"coef": gw, "intercept": gb}
                if g_beta is not None:
                    grads["beta"] = g_beta
                opt.step(params, grads)
                running += value * len(idx)
                if self.trajectory_ is not None:
                    self.trajectory_.append((params["coef"].copy(), params["intercept"].copy()))
            self.coef_, self.intercept_, self.beta_ = params["coef"], params["intercept"], params["beta"]
            if not all(np.all(np.isfinite(p)) for p in params.values()):
                raise TrainingError(f"non-finite parameters after epoch {epoch}", epoch)
            record = {"epoch": epoch, "train_loss": running / m}
            if X_val is not None and len(X_val):
                record["val_loss"] = self.objective(X_val, Y_val)
                if best is None or record["val_loss"] < best[0]:
                    best = (record["val_loss"], epoch, self.coef_.copy(),
                            self.intercept_.copy(), self.beta_.copy())
            self.history_.append(record)
        self.best_epoch_ = self.epochs
        if best is not None:
            _, self.best_epoch_, self.coef_, self.intercept_, self.beta_ = best
        return self

    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise NotFittedError("LinearForecaster is not fitted")

    def predict(self, X):
        self._check_fitted()
        return forecast(self.coef_, self.intercept_, X)

    def objective(self, X, Y):
        """Training objective on ``(X, Y)`` as one batch, with per-call normalization."""
        self._check_fitted()
        pred = self.predict(X)
        Y = np.asarray(Y, dtype=np.float64)
        if self.loss == "mse":
            return l_time(Y, pred)
        return frest_loss(Y, pred, self.loss_config(), self.spectrum, beta=self.beta_).total

    def score(self, X, Y):
        """Negative mean squared error."""
        return -l_time(np.asarray(Y, dtype=np.float64), self.predict(X))


def metrics(y_true, y_pred):
    d = np.asarray(y_true, dtype=np.float64) - np.asarray(y_pred, dtype=np.float64)
    if d.size == 0:
        raise InvalidInputError("cannot evaluate an empty split")
    mse = float(np.mean(d * d))
    return {"mae": float(np.mean(np.abs(d))), "mse": mse, "rmse": math.sqrt(mse)}


def evaluate(model, dataset):
    """MAE, MSE and RMSE of ``model`` on ``dataset`` in the original (denormalized) units."""
    if len(dataset) == 0:
        raise InvalidInputError(f"{dataset.split} split is empty")
    pred = dataset.scaler.inverse_transform(model.predict(dataset.x))
    true = dataset.scaler.inverse_transform(dataset.y)
    return metrics(true, pred)


@dataclass(frozen=True)
class OptimizerConfig:
    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0
    sharing: str = "shared"

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class TrainReport:
    epochs: list
    test: dict
    config: dict
    seed: int
    best_epoch: int
    wall_clock_seconds: float = field(default=None)

    def to_dict(self, include_timing=False):
        d = {"config": self.config, "seed": self.seed, "best_epoch": self.best_epoch,
             "epochs": self.epochs, "test": self.test}
        if include_timing:
            d["wall_clock_seconds"] = self.wall_clock_seconds
        return d


def train(datasets, loss_cfg, opt_cfg, spectrum=None, loss="frest"):
    """Fit a :class:`LinearForecaster` on ``datasets["train"]``, selecting on ``"val"``.

    Returns the fitted model and a :class:`TrainReport` with per-epoch losses and
    test metrics (MAE/MSE/RMSE in original units).
    """
    start = time.perf_counter()
    model = LinearForecaster(
        sharing=opt_cfg.sharing, loss=loss, alpha=loss_cfg.alpha, beta_init=loss_cfg.beta_init,
        epsilon=loss_cfg.epsilon, normalization_mode=loss_cfg.normalization_mode,
        ema_decay=loss_cfg.ema_decay, complex_l1_convention=loss_cfg.complex_l1_convention,
        components=loss_cfg.components, optimizer=opt_cfg.optimizer, lr=opt_cfg.lr,
        epochs=opt_cfg.epochs, batch_size=opt_cfg.batch_size, seed=opt_cfg.seed,
        spectrum=spectrum)
    val = datasets.get("val")
    model.fit(datasets["train"].x, datasets["train"].y,
              val.x if val is not None and len(val) else None,
              val.y if val is not None and len(val) else None)
    test = evaluate(model, datasets["test"])
    config = {"loss": loss, "loss_config": loss_cfg.to_dict(), "optimizer": opt_cfg.to_dict()}
    report = TrainReport(epochs=model.history_, test=test, config=config, seed=opt_cfg.seed,
                         best_epoch=model.best_epoch_,
                         wall_clock_seconds=time.perf_counter() - start)
    return model, report


def alpha_sweep(datasets, alphas, loss_cfg, opt_cfg, spectrum=None, seeds=None):
    """Test metrics for every ``(alpha, seed)``; ``alpha == 0`` is the MSE baseline."""
    seeds = [opt_cfg.seed] if seeds is None else list(seeds)
    rows = []
    for alpha in alphas:
        for seed in seeds:
            _, rep = train(datasets, loss_cfg.with_alpha(float(alpha)),
                           OptimizerConfig(**{**opt_cfg.to_dict(), "seed": seed}), spectrum)
            rows.append({"alpha": float(alpha), "seed": seed, **rep.test})
    return rows


def ablation_table(datasets, loss_cfg, opt_cfg, spectrum=None, seeds=None):
    """Rows MSE, FFT, GFT, JFT, FFT+GFT and FreST, each averaged over ``seeds``."""
    from dataclasses import replace
    seeds = [opt_cfg.seed] if seeds is None else list(seeds)
    rows = []
    for label, comps in ABLATION_ROWS:
        per_seed = []
        for seed in seeds:
            oc = OptimizerConfig(**{**opt_cfg.to_dict(), "seed": seed})
            if comps is None:
                _, rep = train(datasets, loss_cfg, oc, spectrum, loss="mse")
            else:
                _, rep = train(datasets, replace(loss_cfg, components=comps), oc, spectrum)
            per_seed.append(rep.test)
        rows.append({"row": label,
                     **{k: float(np.mean([r[k] for r in per_seed])) for k in ("mae", "mse", "rmse")}})
    return rows


def summarize(rows, key="alpha"):
    """Average metric rows sharing the same ``key`` value, preserving first-seen order."""
    groups = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    return [{key: k, "seed": "mean",
             **{m: float(np.mean([r[m] for r in rs])) for m in ("mae", "mse", "rmse")}}
            for k, rs in groups.items()]
