"""Synthetic spatio-temporal ensembles with prescribed correlation structure.

Every generator returns an array of shape ``(M, T, N)`` and is a pure function
of its :class:`SynthSpec` (and graph): sample ``i`` is drawn from the stream
``make_rng(seed, i)``.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import InvalidInputError, InvalidParameterError
from .graph import Graph, GraphSpectrum, eigendecompose, laplacian, random_geometric_graph
from .rng import GRAPH, SAMPLES, SOURCES, make_rng
from .transforms import dft_matrix

KINDS = ("white", "temporal-ar1", "graph-stationary", "joint-stationary", "diffusion-wave")
SOURCE_KINDS = ("none", "impulse", "periodic")


def parse_profile(profile):
    """Turn ``"flat"``, ``"heat:tau"`` or ``"inverse:tau"`` (or a callable) into a function.

    ``heat:tau`` is ``exp(-tau * x)`` and ``inverse:tau`` is ``1 / (1 + tau * x)``.
    """
    if callable(profile):
        return profile
    name, _, arg = str(profile).partition(":")
    tau = float(arg) if arg else 1.0
    if name == "flat":
        return lambda x: np.ones_like(np.asarray(x, dtype=np.float64))
    if name == "heat":
        return lambda x: np.exp(-tau * np.asarray(x, dtype=np.float64))
    if name == "inverse":
        return lambda x: 1.0 / (1.0 + tau * np.asarray(x, dtype=np.float64))
    raise InvalidParameterError(f"unknown spectral profile {profile!r}")


def temporal_frequencies(t):
    """Cycle-graph Laplacian eigenvalues ``2 - 2 cos(2 pi k / T)``, symmetric in ``k <-> T - k``."""
    k = np.arange(t)
    return 2.0 - 2.0 * np.cos(2.0 * np.pi * k / t)


@dataclass(frozen=True)
class SynthSpec:
    kind: str = "white"
    t: int = 8
    n: int = 8
    m: int = 1
    seed: int = 0
    rho: float = 0.0
    spatial_profile: object = "flat"
    temporal_profile: object = "flat"
    eta: float = 0.0
    damping: float = 1.0
    noise_std: float = 1.0
    source: str = "none"
    n_sources: int = 3
    source_amplitude: float = 1.0
    source_periods: tuple = (24.0, 12.0)
    burn_in: int = 0
    laplacian_kind: str = "combinatorial"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        for name in ("t", "n", "m"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise InvalidParameterError(f"{name} must be a positive integer, got {v}")
        if not abs(self.rho) < 1:
            raise InvalidParameterError(f"|rho| must be < 1, got {self.rho}")
        if self.source not in SOURCE_KINDS:
            raise InvalidParameterError(f"unknown source {self.source!r}")
        if self.noise_std < 0 or self.burn_in < 0:
            raise InvalidParameterError("noise_std and burn_in must be non-negative")
        object.__setattr__(self, "source_periods", tuple(float(p) for p in self.source_periods))

    def to_dict(self):
        d = asdict(self)
        for key in ("spatial_profile", "temporal_profile"):
            if callable(d[key]):
                d[key] = repr(d[key])
        d["source_periods"] = list(d["source_periods"])
        return d


def _per_sample_normals(spec, shape):
    return np.stack([make_rng(spec.seed, i, SAMPLES).standard_normal(shape)
                     for i in range(spec.m)])


def gen_white(spec):
    return _per_sample_normals(spec, (spec.t, spec.n))


def gen_temporal_ar1(spec):
    """Independent AR(1) columns with unit innovations and stationary start."""
    rho = spec.rho
    if not abs(rho) < 1:
        raise InvalidParameterError(f"|rho| must be < 1, got {rho}")
    e = _per_sample_normals(spec, (spec.t, spec.n))
    y = np.empty_like(e)
    y[:, 0] = e[:, 0] / math.sqrt(1.0 - rho * rho)
    for i in range(1, spec.t):
        y[:, i] = rho * y[:, i - 1] + e[:, i]
    return y


def _profile_values(profile, x):
    vals = np.asarray(parse_profile(profile)(x), dtype=np.float64)
    if vals.shape != np.shape(x):
        vals = np.broadcast_to(vals, np.shape(x)).copy()
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
        raise InvalidParameterError("spectral profile must be strictly positive and finite")
    return vals


def gen_graph_stationary(spec, spectrum):
    """Time slices ``U diag(sqrt(h(lambda))) w`` with independent standard normal ``w``."""
    if spectrum.n_nodes != spec.n:
        raise InvalidInputError(f"spec has n={spec.n} but spectrum has {spectrum.n_nodes} nodes")
    h = _profile_values(spec.spatial_profile, spectrum.eigenvalues)
    w = _per_sample_normals(spec, (spec.t, spec.n))
    return (w * np.sqrt(h)) @ spectrum.eigenvectors.T


def joint_profile_grid(spec, spectrum):
    """Separable ``p(k, lambda) = a(omega_k) * h(lambda)`` on the ``T x N`` grid."""
    a = _profile_values(spec.temporal_profile, temporal_frequencies(spec.t))
    h = _profile_values(spec.spatial_profile, spectrum.eigenvalues)
    return np.outer(a, h)


def sample_joint_spectrum(p, rng):
    """Hermitian-symmetric complex normal spectrum with ``E|Z[k, j]|^2 = p[k, j]``.

    Rows ``0`` and ``T/2`` are real; row ``T - k`` is the conjugate of row ``k``
    and takes its variance from row ``k``.
    """
    t, n = p.shape
    z = np.zeros((t, n), dtype=np.complex128)
    z[0] = rng.standard_normal(n) * np.sqrt(p[0])
    for k in range(1, t // 2 + 1):
        if 2 * k == t:
            z[k] = rng.standard_normal(n) * np.sqrt(p[k])
        else:
            re = rng.standard_normal(n)
            im = rng.standard_normal(n)
            z[k] = (re + 1j * im) * np.sqrt(p[k] / 2.0)
            z[t - k] = np.conj(z[k])
    return z


def inverse_joint(z, spectrum):
    """Complex inverse of the joint transform, ``F^-1 Z U^T`` (imaginary part kept)."""
    t = z.shape[0]
    return (np.conj(dft_matrix(t)) @ z / t) @ spectrum.eigenvectors.T


def gen_joint_stationary(spec, spectrum):
    if spectrum.n_nodes != spec.n:
        raise InvalidInputError(f"spec has n={spec.n} but spectrum has {spectrum.n_nodes} nodes")
    p = joint_profile_grid(spec, spectrum)
    out = np.empty((spec.m, spec.t, spec.n))
    for i in range(spec.m):
        y = inverse_joint(sample_joint_spectrum(p, make_rng(spec.seed, i, SAMPLES)), spectrum)
        if np.max(np.abs(y.imag)) > 1e-10:
            raise ArithmeticError("inverse joint transform produced a complex signal")
        out[i] = y.real
    return out


def source_schedule(spec, steps):
    """``steps x N`` additive source terms shared by all samples."""
    s = np.zeros((steps, spec.n))
    if spec.source == "impulse":
        s[0, 0] = spec.source_amplitude
    elif spec.source == "periodic":
        rng = make_rng(spec.seed, 0, SOURCES)
        k = min(spec.n_sources, spec.n)
        nodes = np.sort(rng.choice(spec.n, size=k, replace=False))
        tt = np.arange(steps)[:, None]
        for period in spec.source_periods:
            phase = rng.uniform(0.0, 2.0 * np.pi, size=k)
            s[:, nodes] += spec.source_amplitude * np.sin(2.0 * np.pi * tt / period + phase)
    return s


def gen_diffusion_wave(spec, graph):
    """Damped diffusion ``y[t+1] = damping * (I - eta L) y[t] + source[t+1] + noise``.

    The state starts at zero, so ``y[0] = source[0] + noise[0]``; ``burn_in``
    leading steps are simulated and discarded. ``eta`` must lie in
    ``[0, 1 / lambda_max)`` of the chosen Laplacian.
    """
    if isinstance(graph, GraphSpectrum):
        raise InvalidInputError("gen_diffusion_wave needs the Graph, not its spectrum")
    if not isinstance(graph, Graph):
        graph = Graph(graph)
    if graph.n_nodes != spec.n:
        raise InvalidInputError(f"spec has n={spec.n} but graph has {graph.n_nodes} nodes")
    lap = laplacian(graph, spec.laplacian_kind)
    lam_max = float(eigendecompose(lap).eigenvalues[-1])
    if spec.eta < 0 or (lam_max > 0 and spec.eta >= 1.0 / lam_max):
        raise InvalidParameterError(
            f"eta={spec.eta} outside the stable range [0, {1.0 / lam_max if lam_max > 0 else math.inf})")
    steps = spec.burn_in + spec.t
    prop = spec.damping * (np.eye(spec.n) - spec.eta * lap)
    src = source_schedule(spec, steps)
    out = np.empty((spec.m, spec.t, spec.n))
    for i in range(spec.m):
        noise = spec.noise_std * make_rng(spec.seed, i, SAMPLES).standard_normal((steps, spec.n))
        y = src[0] + noise[0]
        if spec.burn_in == 0:
            out[i, 0] = y
        for step in range(1, steps):
            y = prop @ y + src[step] + noise[step]
            if step >= spec.burn_in:
                out[i, step - spec.burn_in] = y
    return out


def generate(spec, graph=None, spectrum=None):
    """Dispatch on ``spec.kind``."""
    if spec.kind == "white":
        return gen_white(spec)
    if spec.kind == "temporal-ar1":
        return gen_temporal_ar1(spec)
    if spec.kind == "diffusion-wave":
        if graph is None:
            raise InvalidInputError("diffusion-wave kind requires a graph")
        return gen_diffusion_wave(spec, graph)
    if spectrum is None:
        if graph is None:
            raise InvalidInputError(f"{spec.kind} kind requires a graph or spectrum")
        spectrum = GraphSpectrum.from_graph(graph, spec.laplacian_kind)
    if spec.kind == "graph-stationary":
        return gen_graph_stationary(spec, spectrum)
    return gen_joint_stationary(spec, spectrum)


def needs_graph(kind):
    return kind in ("graph-stationary", "joint-stationary", "diffusion-wave")


def default_graph(n, seed, sigma_sq=0.1, epsilon=0.1):
    """Connected Gaussian-kernel graph on random points of the unit square."""
    return random_geometric_graph(n, make_rng(seed, 0, GRAPH), sigma_sq, epsilon)[0]


def diffusion_benchmark(n=32, length=1500, seed=0, damping=0.9, noise_std=0.3, n_sources=4,
                        burn_in=200, eta_fraction=0.5):
    """Graph and one long diffusion-wave series with periodic sources.

    ``eta`` is set to ``eta_fraction / lambda_max`` of the combinatorial Laplacian.
    Returns ``(graph, series, spec)``.
    """
    graph = default_graph(n, seed)
    lam_max = float(eigendecompose(laplacian(graph)).eigenvalues[-1])
    spec = SynthSpec(kind="diffusion-wave", t=length, n=n, m=1, seed=seed,
                     eta=eta_fraction / lam_max if lam_max > 0 else 0.0, damping=damping,
                     noise_std=noise_std, source="periodic", n_sources=n_sources,
                     burn_in=burn_in)
    return graph, gen_diffusion_wave(spec, graph)[0], spec
