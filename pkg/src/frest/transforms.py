"""Temporal DFT, graph Fourier transform and their joint composition.

Signals are ``T x N`` matrices: rows are time steps, columns are nodes. The
forward DFT is unnormalized (``F[k, n] = exp(-2j*pi*k*n/T)``) and the inverse
carries the ``1/T`` factor. The GFT maps each time slice ``y`` to ``U^T y``,
i.e. the matrix ``Y`` to ``Y @ U``.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import InvalidInputError, InvalidParameterError, TransformStateError
from .graph import GraphSpectrum
from .validation import check_finite, check_signal

TIME = "time"
GRAPH = "graph"


@dataclass(frozen=True)
class SpectralSignal:
    """A ``T x N`` complex matrix tagged with the axes already transformed."""

    values: np.ndarray
    transformed_axes: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.ndim != 2:
            raise InvalidInputError(f"spectral values must be 2-D, got {v.shape}")
        check_finite(v, "spectral values")
        axes = frozenset(self.transformed_axes)
        if not axes <= {TIME, GRAPH}:
            raise InvalidInputError(f"unknown axes {set(axes) - {TIME, GRAPH}}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "transformed_axes", axes)

    @property
    def shape(self):
        return self.values.shape

    def real_signal(self, tol=1e-10):
        """Return the real part once no axis remains transformed."""
        if self.transformed_axes:
            raise TransformStateError(f"axes {sorted(self.transformed_axes)} still transformed")
        if np.max(np.abs(self.values.imag), initial=0.0) > tol * max(1.0, np.max(np.abs(self.values))):
            raise TransformStateError("untransformed signal has non-negligible imaginary part")
        return self.values.real.copy()


@lru_cache(maxsize=64)
def _dft_matrix_cached(t):
    k = np.arange(t)
    # reduce k*n mod t before scaling so large products keep full phase accuracy
    phase = (np.outer(k, k) % t) * (-2.0 * np.pi / t)
    f = np.exp(1j * phase)
    f.setflags(write=False)
    return f


def dft_matrix(t):
    """Unnormalized ``t x t`` DFT matrix (read-only, cached)."""
    if t < 1:
        raise InvalidParameterError(f"length must be >= 1, got {t}")
    return _dft_matrix_cached(int(t))


def _is_power_of_two(t):
    return t >= 1 and (t & (t - 1)) == 0


def radix2_fft(x):
    """Iterative decimation-in-time radix-2 FFT along axis 0 (length a power of two)."""
    x = np.asarray(x, dtype=np.complex128)
    t = x.shape[0]
    if not _is_power_of_two(t):
        raise InvalidParameterError(f"radix-2 FFT needs a power-of-two length, got {t}")
    bits = t.bit_length() - 1
    rev = np.zeros(t, dtype=np.intp)
    for i in range(t):
        rev[i] = int(format(i, f"0{bits}b")[::-1], 2) if bits else 0
    a = x[rev].copy()
    size = 2
    while size <= t:
        half = size // 2
        tw = np.exp(-2j * np.pi * np.arange(half) / size)
        tw = tw.reshape((half,) + (1,) * (a.ndim - 1))
        a = a.reshape((t // size, size) + a.shape[1:])
        even = a[:, :half].copy()
        odd = a[:, half:] * tw
        a[:, :half] = even + odd
        a[:, half:] = even - odd
        a = a.reshape((t,) + a.shape[2:])
        size *= 2
    return a


def _dft_axis0(x, method="auto"):
    t = x.shape[0]
    if method == "auto":
        method = "radix2" if _is_power_of_two(t) else "matrix"
    if method == "radix2":
        return radix2_fft(x)
    if method == "matrix":
        return dft_matrix(t) @ x
    raise InvalidParameterError(f"unknown FFT method {method!r}")


def _as_spectral(sig):
    if isinstance(sig, SpectralSignal):
        return sig
    return SpectralSignal(check_signal(sig), frozenset())


def _check_spectrum(sig, spectrum):
    if not isinstance(spectrum, GraphSpectrum):
        raise InvalidInputError("spectrum must be a GraphSpectrum")
    if sig.shape[1] != spectrum.n_nodes:
        raise InvalidInputError(
            f"signal has {sig.shape[1]} nodes but spectrum has {spectrum.n_nodes}")


def fft_time(sig, method="auto"):
    """DFT of every node column. ``method`` is ``"auto"``, ``"matrix"`` or ``"radix2"``."""
    sig = _as_spectral(sig)
    if TIME in sig.transformed_axes:
        raise TransformStateError("time axis already transformed")
    return SpectralSignal(_dft_axis0(sig.values, method), sig.transformed_axes | {TIME})


def ifft_time(sig, method="auto"):
    if not isinstance(sig, SpectralSignal) or TIME not in sig.transformed_axes:
        raise TransformStateError("time axis is not transformed")
    t = sig.shape[0]
    # F^H x / T == conj(F conj(x)) / T
    out = np.conj(_dft_axis0(np.conj(sig.values), method)) / t
    return SpectralSignal(out, sig.transformed_axes - {TIME})


def gft_space(sig, spectrum):
    sig = _as_spectral(sig)
    _check_spectrum(sig, spectrum)
    if GRAPH in sig.transformed_axes:
        raise TransformStateError("graph axis already transformed")
    return SpectralSignal(sig.values @ spectrum.eigenvectors, sig.transformed_axes | {GRAPH})


def igft_space(sig, spectrum):
    if not isinstance(sig, SpectralSignal) or GRAPH not in sig.transformed_axes:
        raise TransformStateError("graph axis is not transformed")
    _check_spectrum(sig, spectrum)
    return SpectralSignal(sig.values @ spectrum.eigenvectors.T, sig.transformed_axes - {GRAPH})


def jft(sig, spectrum, method="auto"):
    """Joint transform ``F @ Y @ U``."""
    if isinstance(sig, SpectralSignal) and sig.transformed_axes:
        raise TransformStateError("jft expects an untransformed signal")
    return fft_time(gft_space(sig, spectrum), method)


def ijft(sig, spectrum, method="auto"):
    if not isinstance(sig, SpectralSignal) or sig.transformed_axes != {TIME, GRAPH}:
        raise TransformStateError("ijft expects a jointly transformed signal")
    return igft_space(ifft_time(sig, method), spectrum)


def apply_transform(values, kind, spectrum=None):
    """Batched forward transform of real arrays shaped ``(..., T, N)``.

    ``kind`` is one of ``"raw"``, ``"fft"``, ``"gft"``, ``"jft"``. Used by the
    loss and analysis code, where the state tracking of ``SpectralSignal``
    only adds overhead.
    """
    values = np.asarray(values)
    if kind == "raw":
        return values
    if kind in ("gft", "jft"):
        if spectrum is None:
            raise InvalidInputError(f"{kind} requires a graph spectrum")
        if values.shape[-1] != spectrum.n_nodes:
            raise InvalidInputError(
                f"signal has {values.shape[-1]} nodes but spectrum has {spectrum.n_nodes}")
        values = values @ spectrum.eigenvectors
    if kind in ("fft", "jft"):
        values = dft_matrix(values.shape[-2]) @ values
    elif kind not in ("gft",):
        raise InvalidParameterError(f"unknown transform {kind!r}")
    return values


def adjoint_transform(values, kind, spectrum=None):
    """Adjoint (conjugate transpose) of :func:`apply_transform` for the same ``kind``."""
    values = np.asarray(values)
    if kind == "raw":
        return values
    if kind in ("fft", "jft"):
        values = np.conj(dft_matrix(values.shape[-2])) @ values
    if kind in ("gft", "jft"):
        values = values @ spectrum.eigenvectors.T
    return values


class SpectralTransformer(TransformerMixin, BaseEstimator):
    """Scikit-learn wrapper applying ``fft``, ``gft`` or ``jft`` to stacks of signals.

    ``X`` has shape ``(M, T, N)`` or ``(T, N)``; outputs are complex arrays of the
    same shape.
    """

    def __init__(self, kind="jft", spectrum=None):
        self.kind = kind
        self.spectrum = spectrum

    def fit(self, X, y=None):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim not in (2, 3):
            raise InvalidInputError(f"X must be (T, N) or (M, T, N), got {X.shape}")
        check_finite(X, "X")
        if self.kind not in ("fft", "gft", "jft"):
            raise InvalidParameterError(f"unknown transform {self.kind!r}")
        if self.kind != "fft":
            if self.spectrum is None:
                raise InvalidInputError(f"{self.kind} requires a graph spectrum")
            if X.shape[-1] != self.spectrum.n_nodes:
                raise InvalidInputError("node count does not match spectrum")
        self.n_timesteps_, self.n_nodes_ = X.shape[-2:]
        return self

    def _check_fitted(self, X):
        if not hasattr(self, "n_nodes_"):
            from sklearn.exceptions import NotFittedError
            raise NotFittedError("SpectralTransformer is not fitted")
        if X.shape[-2:] != (self.n_timesteps_, self.n_nodes_):
            raise InvalidInputError(f"expected trailing shape {(self.n_timesteps_, self.n_nodes_)}")

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        self._check_fitted(X)
        return apply_transform(X, self.kind, self.spectrum).astype(np.complex128)

    def inverse_transform(self, Z):
        Z = np.asarray(Z, dtype=np.complex128)
        self._check_fitted(Z)
        t = Z.shape[-2]
        out = adjoint_transform(Z, self.kind, self.spectrum)
        if self.kind in ("fft", "jft"):
            out = out / t
        return out.real
