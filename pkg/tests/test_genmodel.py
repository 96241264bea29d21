import numpy as np
import pytest

from imbench import genmodel
from imbench.dataset import Dataset
from imbench.errors import ConfigError, DataError
from imbench.genmodel import (CganSpec, CvaeSpec, Mlp, cgan_fit,
                              cvae_fit, cvae_loss_and_grads,
                              gan_disc_loss_and_grads, gan_gen_loss_and_grads,
                              mlp_forward, sample_synthetic)

from conftest import make_dataset, random_imbalanced


def flatten_grads(grads):
    return np.concatenate([np.concatenate([dw.ravel(), db])
                           for dw, db in grads])


def finite_diff(loss_fn, net, h=1e-5):
    """Central finite differences of loss_fn() w.r.t. net's parameters."""
    base = net.flat_params()
    grad = np.empty_like(base)
    for i in range(base.size):
        bumped = base.copy()
        bumped[i] = base[i] + h
        net.set_flat_params(bumped)
        up = loss_fn()
        bumped[i] = base[i] - h
        net.set_flat_params(bumped)
        down = loss_fn()
        grad[i] = (up - down) / (2 * h)
    net.set_flat_params(base)
    return grad


def rel_err(a, b):
    return np.abs(a - b).max() / max(1.0, np.abs(b).max())


class TestMlpForward:
    def test_identity_network(self):
        net = Mlp(weights=[np.eye(3)], biases=[np.zeros(3)],
                  activations=["linear"])
        x = np.array([1.0, -2.0, 0.5])
        assert np.array_equal(mlp_forward(net, x), x)

    def test_sigmoid_output_range(self):
        rng = np.random.default_rng(0)
        net = Mlp.create([4, 6, 2], ["tanh", "sigmoid"], rng)
        out = mlp_forward(net, rng.standard_normal((20, 4)))
        assert ((out > 0) & (out < 1)).all()

    def test_width_mismatch(self):
        net = Mlp.create([3, 2], ["linear"], np.random.default_rng(1))
        with pytest.raises(DataError):
            mlp_forward(net, np.ones(4))

    def test_two_layer_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        net = Mlp.create([3, 4, 2], ["tanh", "linear"], rng)
        X = rng.standard_normal((6, 3))
        target = rng.standard_normal((6, 2))

        def loss_and_grads():
            out, caches = genmodel._forward_cached(net, X)
            loss = float(((out - target) ** 2).sum()) / X.shape[0]
            grads, _ = genmodel._backward(net, caches,
                                          2.0 * (out - target) / X.shape[0])
            return loss, grads

        _, grads = loss_and_grads()
        fd = finite_diff(lambda: loss_and_grads()[0], net)
        assert rel_err(flatten_grads(grads), fd) < 1e-4


class TestCvae:
    def _nets(self, rng, d=2, latent=2, hidden=3):
        enc = Mlp.create([d + 1, hidden, 2 * latent], ["tanh", "linear"], rng)
        dec = Mlp.create([latent + 1, hidden, d], ["tanh", "linear"], rng)
        return enc, dec

    def test_kl_zero_at_standard_normal(self):
        # encoder forced to mu=0, logvar=0 -> KL term vanishes
        rng = np.random.default_rng(2)
        enc, dec = self._nets(rng)
        for i, w in enumerate(enc.weights):
            enc.weights[i] = np.zeros_like(w)
            enc.biases[i] = np.zeros_like(enc.biases[i])
        X = rng.standard_normal((4, 2))
        eps = np.zeros((4, 2))
        loss, _, _ = cvae_loss_and_grads(enc, dec, X, eps, beta=1.0)
        dec_in = np.hstack([np.zeros((4, 2)), np.ones((4, 1))])
        recon = float(((mlp_forward(dec, dec_in) - X) ** 2).sum()) / 4
        assert loss == pytest.approx(recon)

    def test_reparameterization_zero_eps_deterministic(self):
        rng = np.random.default_rng(3)
        enc, dec = self._nets(rng)
        X = rng.standard_normal((5, 2))
        eps = np.zeros((5, 2))
        l1, _, _ = cvae_loss_and_grads(enc, dec, X, eps, beta=1.0)
        l2, _, _ = cvae_loss_and_grads(enc, dec, X, eps, beta=1.0)
        assert l1 == l2

    def test_encoder_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        enc, dec = self._nets(rng)
        assert enc.n_params <= 50
        X = rng.standard_normal((5, 2))
        eps = rng.standard_normal((5, 2))
        _, enc_g, _ = cvae_loss_and_grads(enc, dec, X, eps, beta=1.3)
        fd = finite_diff(
            lambda: cvae_loss_and_grads(enc, dec, X, eps, beta=1.3)[0], enc)
        assert rel_err(flatten_grads(enc_g), fd) < 1e-4

    def test_decoder_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        enc, dec = self._nets(rng)
        X = rng.standard_normal((5, 2))
        eps = rng.standard_normal((5, 2))
        _, _, dec_g = cvae_loss_and_grads(enc, dec, X, eps, beta=0.7)
        fd = finite_diff(
            lambda: cvae_loss_and_grads(enc, dec, X, eps, beta=0.7)[0], dec)
        assert rel_err(flatten_grads(dec_g), fd) < 1e-4

    def test_fit_recovers_gaussian_mean(self):
        rng = np.random.default_rng(4)
        true_mean = np.array([3.0, -1.0])
        rows = rng.standard_normal((80, 2)) * 0.5 + true_mean
        gen = cvae_fit(rows, CvaeSpec(epochs=120, seed=1))
        sample = sample_synthetic(gen, 500, seed=2)
        pooled = rows.std(axis=0)
        assert (np.abs(sample.mean(axis=0) - rows.mean(axis=0))
                < 0.5 * pooled).all()

    def test_fixed_seed_identical_outputs(self):
        rng = np.random.default_rng(9)
        rows = rng.standard_normal((30, 3))
        gen1 = cvae_fit(rows, CvaeSpec(epochs=5, seed=11))
        gen2 = cvae_fit(rows, CvaeSpec(epochs=5, seed=11))
        a = sample_synthetic(gen1, 10, seed=3)
        b = sample_synthetic(gen2, 10, seed=3)
        assert np.array_equal(a, b)

    def test_degenerate_input_falls_back(self, caplog):
        rows = np.ones((10, 2))
        with caplog.at_level("WARNING"):
            gen = cvae_fit(rows, CvaeSpec(epochs=5, seed=0))
        assert "falling back" in caplog.text
        out = sample_synthetic(gen, 5, seed=1)
        assert np.allclose(out, 1.0)

    def test_too_few_rows(self):
        with pytest.raises(DataError):
            cvae_fit(np.ones((1, 2)), CvaeSpec())


class TestCgan:
    def test_disc_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(12)
        disc = Mlp.create([3, 4, 1], ["tanh", "sigmoid"], rng)
        assert disc.n_params <= 50
        real = rng.standard_normal((6, 3))
        fake = rng.standard_normal((6, 3))
        _, grads = gan_disc_loss_and_grads(disc, real, fake)
        fd = finite_diff(
            lambda: gan_disc_loss_and_grads(disc, real, fake)[0], disc)
        assert rel_err(flatten_grads(grads), fd) < 1e-4

    def test_gen_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        gen = Mlp.create([3, 3, 2], ["tanh", "linear"], rng)
        disc = Mlp.create([3, 4, 1], ["tanh", "sigmoid"], rng)
        assert gen.n_params <= 50
        Z = rng.standard_normal((5, 2))
        cond = rng.integers(0, 2, size=(5, 1)).astype(float)
        _, grads = gan_gen_loss_and_grads(gen, disc, Z, cond)
        fd = finite_diff(
            lambda: gan_gen_loss_and_grads(gen, disc, Z, cond)[0], gen)
        assert rel_err(flatten_grads(grads), fd) < 1e-4

    def test_fit_produces_bounded_finite_samples(self):
        d = random_imbalanced(np.random.default_rng(1), 150, 30, d=3)
        gen = cgan_fit(d, CganSpec(epochs=15, seed=2))
        rows = sample_synthetic(gen, 1000, seed=5)
        assert np.isfinite(rows).all()
        z = (rows - gen.mu) / gen.sd
        frac_within = float((np.abs(z) <= 6.0).all(axis=1).mean())
        assert frac_within >= 0.99

    def test_fixed_seed_identical_batches(self):
        d = random_imbalanced(np.random.default_rng(2), 60, 12, d=2)
        g1 = cgan_fit(d, CganSpec(epochs=3, seed=7))
        g2 = cgan_fit(d, CganSpec(epochs=3, seed=7))
        assert np.array_equal(sample_synthetic(g1, 8, seed=1),
                              sample_synthetic(g2, 8, seed=1))

    def test_parameters_stay_finite_through_training(self):
        d = random_imbalanced(np.random.default_rng(3), 100, 20, d=2)
        gen = cgan_fit(d, CganSpec(epochs=10, seed=4))
        assert np.isfinite(gen.net.flat_params()).all()


class TestSampleSynthetic:
    def test_count_contract(self):
        rng = np.random.default_rng(6)
        rows = rng.standard_normal((20, 2))
        gen = cvae_fit(rows, CvaeSpec(epochs=5, seed=0))
        assert sample_synthetic(gen, 90, seed=1).shape == (90, 2)

    def test_count_validation(self):
        rng = np.random.default_rng(6)
        gen = cvae_fit(rng.standard_normal((10, 2)), CvaeSpec(epochs=2, seed=0))
        with pytest.raises(ConfigError):
            sample_synthetic(gen, 0, seed=1)

    def test_synthetic_mean_near_training_mean(self):
        rng = np.random.default_rng(10)
        rows = rng.standard_normal((100, 3)) * 2.0 + np.array([5.0, 0.0, -4.0])
        gen = cvae_fit(rows, CvaeSpec(epochs=150, seed=3))
        sample = sample_synthetic(gen, 600, seed=9)
        assert (np.abs(sample.mean(axis=0) - rows.mean(axis=0))
                <= rows.std(axis=0)).all()
