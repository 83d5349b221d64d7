"""The frequency-enhanced spatio-temporal objective and its analytic gradients.

``total = (1 - alpha) * l_time + alpha * sum_k w_k * l_k / (s_k + eps)``

with ``w = softmax(beta)`` over the active spectral components ``fft``, ``gft``
and ``jft``, and ``s_k`` a detached copy of the component magnitude. Each
spectral component is the entrywise l1 norm of the transformed residual;
complex entries contribute their modulus by default.

Inputs may be single ``H x N`` matrices or batches ``(B, H, N)``. For batches
the time term is the mean over all entries and each spectral term is the mean
over windows of the per-window l1 norm, so ``B = 1`` reproduces the bare norm.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError
from .transforms import adjoint_transform, apply_transform, dft_matrix
from .validation import check_same_shape

COMPONENTS = ("fft", "gft", "jft")
NORMALIZATION_MODES = ("per-step", "ema")
COMPLEX_L1 = ("modulus", "re-im")


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 0.5
    beta_init: tuple = (0.0, 0.0, 0.0)
    epsilon: float = 1e-8
    normalization_mode: str = "per-step"
    ema_decay: float = 0.99
    complex_l1_convention: str = "modulus"
    components: tuple = COMPONENTS

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise InvalidParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not self.epsilon > 0:
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon}")
        if self.normalization_mode not in NORMALIZATION_MODES:
            raise InvalidParameterError(f"unknown normalization_mode {self.normalization_mode!r}")
        if self.normalization_mode == "ema" and not (0.0 < self.ema_decay < 1.0):
            raise InvalidParameterError(f"ema_decay must lie in (0, 1), got {self.ema_decay}")
        if self.complex_l1_convention not in COMPLEX_L1:
            raise InvalidParameterError(
                f"unknown complex_l1_convention {self.complex_l1_convention!r}")
        beta = tuple(float(b) for b in self.beta_init)
        if len(beta) != 3 or not np.all(np.isfinite(beta)):
            raise InvalidParameterError("beta_init must be 3 finite reals")
        comps = tuple(self.components)
        if not comps or any(c not in COMPONENTS for c in comps) or len(set(comps)) != len(comps):
            raise InvalidParameterError(f"components must be a non-empty subset of {COMPONENTS}")
        object.__setattr__(self, "beta_init", beta)
        object.__setattr__(self, "components", tuple(c for c in COMPONENTS if c in comps))

    @property
    def mask(self):
        return np.array([c in self.components for c in COMPONENTS])

    def to_dict(self):
        return {
            "alpha": self.alpha,
            "beta_init": list(self.beta_init),
            "epsilon": self.epsilon,
            "normalization_mode": self.normalization_mode,
            "ema_decay": self.ema_decay,
            "complex_l1_convention": self.complex_l1_convention,
            "components": list(self.components),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("beta_init", "components"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def with_alpha(self, alpha):
        return replace(self, alpha=alpha)


@dataclass
class LossEvaluation:
    total: float
    l_time: float
    l_fft: float
    l_gft: float
    l_jft: float
    weights_w: np.ndarray
    grad_prediction: np.ndarray
    grad_beta: np.ndarray
    stopgrad_values: np.ndarray = field(default=None)

    @property
    def components(self):
        return np.array([self.l_fft, self.l_gft, self.l_jft])


def _pair(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    check_same_shape(y_true, y_pred)
    if y_true.ndim not in (2, 3) or 0 in y_true.shape:
        raise InvalidInputError(f"expected (H, N) or (B, H, N) arrays, got {y_true.shape}")
    return y_true, y_pred


def l_time(y_true, y_pred):
    """Mean squared error over all entries."""
    y_true, y_pred = _pair(y_true, y_pred)
    d = y_pred - y_true
    return float(np.mean(d * d))


def l_time_grad(y_true, y_pred):
    y_true, y_pred = _pair(y_true, y_pred)
    return 2.0 * (y_pred - y_true) / y_true.size


def _n_windows(a):
    return 1 if a.ndim == 2 else a.shape[0]


def _spectral_l1_and_grad(diff, kind, spectrum, convention, need_grad=True):
    z = apply_transform(diff, kind, spectrum)
    if convention == "modulus":
        mag = np.abs(z)
        value = float(np.sum(mag)) / _n_windows(diff)
        if not need_grad:
            return value, None
        with np.errstate(invalid="ignore", divide="ignore"):
            g = np.where(mag > 0, z / np.where(mag > 0, mag, 1.0), 0.0)
    else:
        zr, zi = np.real(z), np.imag(z)
        value = float(np.sum(np.abs(zr)) + np.sum(np.abs(zi))) / _n_windows(diff)
        if not need_grad:
            return value, None
        g = np.sign(zr) + 1j * np.sign(zi)
    grad = np.real(adjoint_transform(g, kind, spectrum)) / _n_windows(diff)
    return value, grad


def spectral_l1(y_true, y_pred, transform, spectrum=None, convention="modulus"):
    """l1 norm of ``transform(y_pred) - transform(y_true)`` (no size normalization)."""
    y_true, y_pred = _pair(y_true, y_pred)
    if transform not in COMPONENTS:
        raise InvalidParameterError(f"unknown transform {transform!r}")
    value, _ = _spectral_l1_and_grad(y_pred - y_true, transform, spectrum, convention, False)
    return value


def spectral_l1_grad(y_true, y_pred, transform, spectrum=None, convention="modulus"):
    """Gradient of :func:`spectral_l1` w.r.t. ``y_pred``; zero subgradient at exact zeros."""
    y_true, y_pred = _pair(y_true, y_pred)
    return _spectral_l1_and_grad(y_pred - y_true, transform, spectrum, convention)[1]


def softmax(beta, mask=None):
    beta = np.asarray(beta, dtype=np.float64)
    if mask is None:
        mask = np.ones(beta.shape, dtype=bool)
    w = np.zeros_like(beta)
    b = beta[mask]
    e = np.exp(b - np.max(b))
    w[mask] = e / np.sum(e)
    return w


class EmaNormalizer:
    """Running average of the spectral component magnitudes.

    The first update initializes the average with the observed values; later
    updates blend with weight ``1 - decay``. The returned values already
    include the current step.
    """

    def __init__(self, decay=0.99):
        self.decay = decay
        self.value = None

    def update(self, components):
        components = np.asarray(components, dtype=np.float64)
        if self.value is None:
            self.value = components.copy()
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * components
        return self.value.copy()


@lru_cache(maxsize=32)
def _half_dft(h):
    """Rows ``0..h//2`` of the DFT matrix split into real/imag parts, plus row weights.

    For real input, row ``h - k`` is the conjugate of row ``k``: both its modulus
    and its gradient contribution equal those of row ``k``, so interior rows
    count twice.
    """
    k = h // 2 + 1
    f = dft_matrix(h)[:k]
    weight = np.full(k, 2.0)
    weight[0] = 1.0
    if h % 2 == 0:
        weight[-1] = 1.0
    parts = (np.ascontiguousarray(f.real), np.ascontiguousarray(f.imag), weight[:, None])
    for p in parts:
        p.setflags(write=False)
    return parts


def _fused_spectral(diff, mask, spectrum, convention):
    """Values of all active spectral terms plus a closure for their weighted gradient.

    The batch is flattened to ``H x (B*N)`` so that each transform is one real
    matrix product over the non-redundant half spectrum. The reference route
    is :func:`spectral_l1_grad`.
    """
    batched = diff if diff.ndim == 3 else diff[None]
    b, h, n = batched.shape
    fr, fi, wk = _half_dft(h)
    need_fft, need_gft, need_jft = mask
    u = spectrum.eigenvectors if (need_gft or need_jft) else None
    du = batched @ u if u is not None else None

    def flat(a):
        return a.transpose(1, 0, 2).reshape(h, b * n)

    cols = []
    if need_fft:
        cols.append(flat(batched))
    if need_jft:
        cols.append(flat(du))
    values = np.zeros(3)
    dirs = {}
    if cols:
        stack = np.concatenate(cols, axis=1) if len(cols) > 1 else cols[0]
        zr, zi = fr @ stack, fi @ stack
        if convention == "modulus":
            mag = np.sqrt(zr * zr + zi * zi)
            inv = np.divide(wk, mag, out=np.zeros_like(mag), where=mag > 0)
            gr, gi = zr * inv, zi * inv
            mag *= wk
        else:
            mag = (np.abs(zr) + np.abs(zi)) * wk
            gr, gi = np.sign(zr) * wk, np.sign(zi) * wk
        width = b * n
        pos = 0
        for i, needed in ((0, need_fft), (2, need_jft)):
            if needed:
                sl = slice(pos, pos + width)
                values[i] = float(np.sum(mag[:, sl])) / b
                dirs[i] = (gr[:, sl], gi[:, sl])
                pos += width
    if need_gft:
        values[1] = float(np.sum(np.abs(du))) / b
        dirs[1] = np.sign(du)

    def gradient(coefs):
        out = np.zeros_like(batched)
        spatial = None
        for i in (0, 2):
            if i in dirs and coefs[i] != 0.0:
                # Re(F^H G) restricted to the weighted half spectrum
                adj = fr.T @ dirs[i][0] + fi.T @ dirs[i][1]
                block = (coefs[i] * adj).reshape(h, b, n).transpose(1, 0, 2)
                if i == 0:
                    out += block
                else:
                    spatial = block
        if 1 in dirs and coefs[1] != 0.0:
            g = coefs[1] * dirs[1]
            spatial = g if spatial is None else spatial + g
        if spatial is not None:
            out += spatial @ u.T
        out /= b
        return out if diff.ndim == 3 else out[0]

    return values, gradient


def frest_loss(y_true, y_pred, cfg, spectrum=None, stopgrad_values=None, beta=None):
    """Evaluate the objective and its gradients w.r.t. ``y_pred`` and ``beta``.

    Parameters
    ----------
    y_true, y_pred : array of shape (H, N) or (B, H, N)
    cfg : LossConfig
    spectrum : GraphSpectrum
        Needed whenever ``gft`` or ``jft`` is an active component.
    stopgrad_values : array of 3 reals, optional
        Detached magnitudes ``s_k``. Defaults to the current component values,
        which is the per-step normalization. Pass frozen values to
        finite-difference the total, or EMA values from :class:`EmaNormalizer`.
    beta : array of 3 reals, optional
        Mixing logits; defaults to ``cfg.beta_init``.
    """
    y_true, y_pred = _pair(y_true, y_pred)
    if not isinstance(cfg, LossConfig):
        raise InvalidParameterError("cfg must be a LossConfig")
    beta = np.asarray(cfg.beta_init if beta is None else beta, dtype=np.float64)
    mask = cfg.mask
    diff = y_pred - y_true

    lt = float(np.mean(diff * diff))
    g_time = 2.0 * diff / diff.size

    if (mask[1] or mask[2]) and spectrum is None:
        raise InvalidInputError("gft/jft components require a graph spectrum")
    if spectrum is not None and diff.shape[-1] != spectrum.n_nodes:
        raise InvalidInputError(
            f"prediction has {diff.shape[-1]} nodes but spectrum has {spectrum.n_nodes}")
    comps, spectral_grad = _fused_spectral(diff, tuple(bool(m) for m in mask), spectrum,
                                           cfg.complex_l1_convention)

    if stopgrad_values is None:
        s = comps.copy()
    else:
        s = np.asarray(stopgrad_values, dtype=np.float64)
        if s.shape != (3,):
            raise InvalidInputError("stopgrad_values must hold 3 reals")

    w = softmax(beta, mask)
    denom = s + cfg.epsilon
    normalized = np.where(mask, comps / denom, 0.0)
    l_freq = float(np.sum(w * normalized))

    alpha = cfg.alpha
    if alpha == 0.0:
        total = lt
        grad_pred = g_time
        grad_beta = np.zeros(3)
    else:
        total = (1.0 - alpha) * lt + alpha * l_freq
        coefs = np.where(mask, alpha * w / denom, 0.0)
        grad_pred = (1.0 - alpha) * g_time + spectral_grad(coefs)
        grad_beta = np.where(mask, alpha * w * (normalized - l_freq), 0.0)

    return LossEvaluation(
        total=float(total), l_time=lt, l_fft=float(comps[0]), l_gft=float(comps[1]),
        l_jft=float(comps[2]), weights_w=w, grad_prediction=grad_pred,
        grad_beta=grad_beta, stopgrad_values=s)
