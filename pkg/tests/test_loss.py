import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frest.exceptions import InvalidInputError, InvalidParameterError
from frest.graph import GraphSpectrum, random_geometric_graph
from frest.loss import (EmaNormalizer, LossConfig, frest_loss, l_time, l_time_grad, softmax,
                        spectral_l1, spectral_l1_grad)
from frest.rng import GRAPH, make_rng

FD_STEP = 1e-5


def _spectrum(n, seed=0):
    g, _ = random_geometric_graph(n, make_rng(seed, 0, GRAPH), sigma_sq=0.3, epsilon=0.05)
    return GraphSpectrum.from_graph(g)


def _pair(shape, seed):
    r = make_rng(seed, 7)
    return r.standard_normal(shape), r.standard_normal(shape)


def _fd(f, x):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += FD_STEP
        xm[idx] -= FD_STEP
        g[idx] = (f(xp) - f(xm)) / (2 * FD_STEP)
    return g


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12)


def _direct_components(y, yhat, u, convention="modulus"):
    d = yhat - y
    out = []
    for z in (np.fft.fft(d, axis=0), d @ u, np.fft.fft(d @ u, axis=0)):
        if convention == "modulus":
            out.append(np.sum(np.abs(z)))
        else:
            out.append(np.sum(np.abs(z.real)) + np.sum(np.abs(np.imag(z))))
    return np.array(out)


class TestTimeLoss:
    def test_equal(self):
        y = np.ones((3, 2))
        assert l_time(y, y) == 0.0

    def test_scalar(self):
        assert l_time([[2.0]], [[0.0]]) == 4.0

    def test_double_loop(self):
        y, yhat = _pair((4, 3), 0)
        acc = 0.0
        for i in range(4):
            for j in range(3):
                acc += (yhat[i, j] - y[i, j]) ** 2
        assert l_time(y, yhat) == pytest.approx(acc / 12, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            l_time(np.ones((2, 2)), np.ones((2, 3)))

    def test_gradient_fd(self):
        y, yhat = _pair((5, 3), 1)
        num = _fd(lambda p: l_time(y, p), yhat)
        assert _rel_err(l_time_grad(y, yhat), num) < 1e-5


class TestSpectralL1:
    @pytest.mark.parametrize("kind", ["fft", "gft", "jft"])
    def test_equal_inputs(self, kind):
        y = make_rng(0, 0).standard_normal((6, 4))
        assert spectral_l1(y, y, kind, _spectrum(4)) == 0.0

    @pytest.mark.parametrize("convention", ["modulus", "re-im"])
    def test_direct_oracle(self, convention):
        sp = _spectrum(5)
        y, yhat = _pair((7, 5), 2)
        want = _direct_components(y, yhat, sp.eigenvectors, convention)
        got = [spectral_l1(y, yhat, k, sp, convention) for k in ("fft", "gft", "jft")]
        np.testing.assert_allclose(got, want, rtol=1e-12)

    @pytest.mark.parametrize("kind", ["fft", "gft", "jft"])
    @pytest.mark.parametrize("convention", ["modulus", "re-im"])
    def test_gradient_fd(self, kind, convention):
        sp = _spectrum(4)
        # odd length keeps every re/im part away from the |.| kink
        y, yhat = _pair((7, 4), 3)
        num = _fd(lambda p: spectral_l1(y, p, kind, sp, convention), yhat)
        assert _rel_err(spectral_l1_grad(y, yhat, kind, sp, convention), num) < 1e-5

    def test_unknown_transform(self):
        with pytest.raises(InvalidParameterError):
            spectral_l1(np.ones((2, 2)), np.zeros((2, 2)), "dct")

    def test_batch_is_mean_over_windows(self):
        sp = _spectrum(3)
        y, yhat = _pair((4, 6, 3), 4)
        per = [spectral_l1(y[i], yhat[i], "jft", sp) for i in range(4)]
        assert spectral_l1(y, yhat, "jft", sp) == pytest.approx(np.mean(per), rel=1e-12)


class TestConfig:
    def test_defaults_round_trip(self):
        cfg = LossConfig(alpha=0.3, components=("jft", "fft"))
        assert cfg.components == ("fft", "jft")
        assert LossConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("kwargs", [
        {"alpha": 1.5}, {"alpha": -0.1}, {"epsilon": 0.0},
        {"normalization_mode": "batch"}, {"normalization_mode": "ema", "ema_decay": 1.0},
        {"complex_l1_convention": "l2"}, {"components": ()}, {"components": ("fft", "dct")},
        {"beta_init": (0.0, 1.0)},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(InvalidParameterError):
            LossConfig(**kwargs)

    def test_mask(self):
        np.testing.assert_array_equal(LossConfig(components=("gft",)).mask, [False, True, False])


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), [1 / 3] * 3)

    def test_mask(self):
        w = softmax([5.0, 1.0, 1.0], np.array([False, True, True]))
        np.testing.assert_allclose(w, [0, 0.5, 0.5])

    def test_large_logits_stable(self):
        w = softmax([1000.0, 0.0, 0.0])
        assert np.all(np.isfinite(w)) and w[0] == pytest.approx(1.0)


class TestEma:
    def test_first_update_initializes(self):
        ema = EmaNormalizer(0.9)
        np.testing.assert_array_equal(ema.update([1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])
        np.testing.assert_allclose(ema.update([2.0, 2.0, 2.0]), [1.1, 2.0, 2.9])


class TestFrestLoss:
    def test_alpha_zero_is_mse_exactly(self):
        sp = _spectrum(4)
        y, yhat = _pair((6, 4), 5)
        ev = frest_loss(y, yhat, LossConfig(alpha=0.0), sp)
        assert ev.total == l_time(y, yhat)
        assert np.array_equal(ev.grad_prediction, l_time_grad(y, yhat))
        assert not ev.grad_beta.any()

    def test_perfect_prediction(self):
        sp = _spectrum(4)
        y = make_rng(0, 1).standard_normal((6, 4))
        ev = frest_loss(y, y.copy(), LossConfig(alpha=0.5), sp)
        assert ev.total == 0.0
        assert not ev.grad_prediction.any()
        assert not ev.grad_beta.any()

    def test_scalar_oracle(self):
        sp = _spectrum(5)
        y, yhat = _pair((8, 5), 6)
        alpha, eps, beta = 0.4, 1e-3, np.array([0.3, -0.2, 0.1])
        comps = _direct_components(y, yhat, sp.eigenvectors)
        w = np.exp(beta) / np.sum(np.exp(beta))
        l_freq = np.sum(w * comps / (comps + eps))
        want = (1 - alpha) * np.mean((yhat - y) ** 2) + alpha * l_freq
        ev = frest_loss(y, yhat, LossConfig(alpha=alpha, epsilon=eps), sp, beta=beta)
        assert ev.total == pytest.approx(want, rel=1e-12)
        np.testing.assert_allclose(ev.components, comps, rtol=1e-12)
        # grad_beta = alpha * J_softmax * normalized components
        norm = comps / (comps + eps)
        jac = np.diag(w) - np.outer(w, w)
        np.testing.assert_allclose(ev.grad_beta, alpha * jac @ norm, atol=1e-15)

    def test_grad_beta_vanishes_as_epsilon_shrinks(self):
        sp = _spectrum(4)
        y, yhat = _pair((6, 4), 7)
        ev = frest_loss(y, yhat, LossConfig(alpha=0.5, epsilon=1e-12), sp,
                        beta=np.array([1.0, 0.0, -1.0]))
        assert np.max(np.abs(ev.grad_beta)) < 1e-10

    @pytest.mark.parametrize("convention", ["modulus", "re-im"])
    @pytest.mark.parametrize("shape", [(7, 4), (3, 5, 4), (1, 4), (2, 4)])
    def test_total_gradient_fd(self, convention, shape):
        sp = _spectrum(4)
        y, yhat = _pair(shape, 8)
        cfg = LossConfig(alpha=0.6, complex_l1_convention=convention)
        beta = np.array([0.2, -0.4, 0.1])
        s = frest_loss(y, yhat, cfg, sp, beta=beta).stopgrad_values
        ev = frest_loss(y, yhat, cfg, sp, stopgrad_values=s, beta=beta)
        num = _fd(lambda p: frest_loss(y, p, cfg, sp, stopgrad_values=s, beta=beta).total, yhat)
        assert _rel_err(ev.grad_prediction, num) < 1e-5

    def test_beta_gradient_fd(self):
        sp = _spectrum(4)
        y, yhat = _pair((5, 4), 9)
        cfg = LossConfig(alpha=0.7, epsilon=0.5)
        beta = np.array([0.3, 0.0, -0.3])
        s = frest_loss(y, yhat, cfg, sp, beta=beta).stopgrad_values
        ev = frest_loss(y, yhat, cfg, sp, stopgrad_values=s, beta=beta)
        num = _fd(lambda b: frest_loss(y, yhat, cfg, sp, stopgrad_values=s, beta=b).total, beta)
        assert _rel_err(ev.grad_beta, num) < 1e-5

    @settings(max_examples=30, deadline=None)
    @given(h=st.integers(1, 9), b=st.integers(0, 3), seed=st.integers(0, 500),
           convention=st.sampled_from(["modulus", "re-im"]),
           comps=st.sampled_from([("fft",), ("gft",), ("jft",), ("fft", "gft"),
                                  ("fft", "gft", "jft")]))
    def test_fused_matches_reference(self, h, b, seed, convention, comps):
        sp = _spectrum(3)
        shape = (h, 3) if b == 0 else (b, h, 3)
        y, yhat = _pair(shape, seed)
        cfg = LossConfig(alpha=0.5, complex_l1_convention=convention, components=comps,
                         epsilon=1e-3)
        ev = frest_loss(y, yhat, cfg, sp)
        w = ev.weights_w
        ref_grad = (1 - cfg.alpha) * l_time_grad(y, yhat)
        for i, k in enumerate(("fft", "gft", "jft")):
            if k in comps:
                val = spectral_l1(y, yhat, k, sp, convention)
                assert ev.components[i] == pytest.approx(val, rel=1e-10, abs=1e-12)
                ref_grad = ref_grad + cfg.alpha * w[i] / (val + cfg.epsilon) * spectral_l1_grad(
                    y, yhat, k, sp, convention)
            else:
                assert ev.components[i] == 0.0 and w[i] == 0.0
        # the re/im kinks at real-valued rows may resolve differently; stay on the modulus side
        if convention == "modulus":
            np.testing.assert_allclose(ev.grad_prediction, ref_grad, atol=1e-12)

    def test_needs_spectrum(self):
        with pytest.raises(InvalidInputError):
            frest_loss(np.ones((3, 2)), np.zeros((3, 2)), LossConfig())

    def test_fft_only_needs_no_spectrum(self):
        y, yhat = _pair((4, 2), 0)
        ev = frest_loss(y, yhat, LossConfig(components=("fft",)))
        assert ev.l_gft == 0.0 and ev.l_fft > 0

    def test_bad_stopgrad_shape(self):
        with pytest.raises(InvalidInputError):
            frest_loss(np.ones((3, 2)), np.zeros((3, 2)), LossConfig(components=("fft",)),
                       stopgrad_values=[1.0])
