"""Generative pre-processing: a conditional VAE and a simplified
conditional GAN that learn the failure-class distribution and emit
synthetic telemetry rows, plus the minimal MLP/backprop substrate both
share.

Training uses plain SGD with global gradient-norm clipping at 5.0; all
loss functions expose analytic gradients that are finite-difference
checkable. Models train on z-scored features and generators emit rows in
original feature units.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError, NumericsError

log = logging.getLogger(__name__)

_ACTIVATIONS = ("tanh", "relu", "sigmoid", "linear")
_GRAD_CLIP = 5.0
_LOG_EPS = 1e-7


@dataclass
class Mlp:
    """Fully connected layers: weights[i] has shape (out, in)."""

    weights: list
    biases: list
    activations: list

    @classmethod
    def create(cls, widths, activations, rng):
        if len(activations) != len(widths) - 1:
            raise ConfigError("one activation per layer required")
        for a in activations:
            if a not in _ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        weights = []
        biases = []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            scale = 1.0 / np.sqrt(fan_in)
            weights.append(rng.standard_normal((fan_out, fan_in)) * scale)
            biases.append(np.zeros(fan_out))
        return cls(weights=weights, biases=biases, activations=list(activations))

    @property
    def n_params(self):
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def flat_params(self):
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def set_flat_params(self, flat):
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos:pos + b.size].copy()
            pos += b.size


def _activate(name, z):
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _activation_grad(name, z, a):
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def _forward_cached(net, X):
    a = X
    caches = []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        z = a @ w.T + b
        out = _activate(act, z)
        caches.append((a, z, out))
        a = out
    return a, caches


def _backward(net, caches, d_out):
    """Gradients of a scalar loss given d(loss)/d(output).

    Returns ([(dW, db) per layer], d(loss)/d(input)).
    """
    grads = [None] * len(net.weights)
    da = d_out
    for i in range(len(net.weights) - 1, -1, -1):
        x_in, z, a = caches[i]
        dz = da * _activation_grad(net.activations[i], z, a)
        grads[i] = (dz.T @ x_in, dz.sum(axis=0))
        da = dz @ net.weights[i]
    return grads, da


def mlp_forward(net, x):
    """Plain forward pass; accepts a single vector or a batch matrix."""
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr.reshape(1, -1)
    if arr.shape[1] != net.weights[0].shape[1]:
        raise DataError(
            f"input width {arr.shape[1]} != {net.weights[0].shape[1]}")
    out, _ = _forward_cached(net, arr)
    return out[0] if single else out


def _grad_norm(grad_lists):
    total = 0.0
    for grads in grad_lists:
        for dw, db in grads:
            total += float((dw * dw).sum()) + float((db * db).sum())
    return np.sqrt(total)


def _sgd_step(nets, grad_lists, lrs, clip=_GRAD_CLIP):
    """One SGD step over several nets with a shared global-norm clip."""
    norm = _grad_norm(grad_lists)
    scale = 1.0 if norm <= clip else clip / norm
    for net, grads, lr in zip(nets, grad_lists, lrs):
        for i, (dw, db) in enumerate(grads):
            net.weights[i] = net.weights[i] - lr * scale * dw
            net.biases[i] = net.biases[i] - lr * scale * db
            if not (np.isfinite(net.weights[i]).all()
                    and np.isfinite(net.biases[i]).all()):
                raise NumericsError("non-finite parameters after SGD step")


@dataclass(frozen=True)
class CvaeSpec:
    latent_dim: int = 4
    hidden: int = 32
    epochs: int = 200
    batch: int = 32
    learning_rate: float = 1e-3
    kl_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.latent_dim, self.hidden, self.epochs, self.batch) < 1:
            raise ConfigError("CVAE sizes must be positive")
        if self.learning_rate <= 0 or self.kl_weight <= 0:
            raise ConfigError("CVAE rates must be positive")


@dataclass(frozen=True)
class CganSpec:
    latent_dim: int = 8
    hidden: int = 32
    epochs: int = 20
    batch: int = 64
    lr_generator: float = 2e-3
    lr_discriminator: float = 2e-3
    seed: int = 0

    def __post_init__(self):
        if min(self.latent_dim, self.hidden, self.epochs, self.batch) < 1:
            raise ConfigError("CGAN sizes must be positive")
        if self.lr_generator <= 0 or self.lr_discriminator <= 0:
            raise ConfigError("CGAN learning rates must be positive")


@dataclass
class SyntheticGenerator:
    """Sampler for minority-class rows in original feature units."""

    kind: str                 # "decoder" or "resample"
    latent_dim: int
    mu: np.ndarray
    sd: np.ndarray
    net: Mlp | None = None
    fallback_rows: np.ndarray | None = None
    fallback_noise: np.ndarray | None = None

    def sample(self, count, seed):
        rng = np.random.default_rng(seed)
        if self.kind == "resample":
            parents = rng.integers(0, self.fallback_rows.shape[0], size=count)
            noise = rng.standard_normal((count, self.fallback_rows.shape[1]))
            return self.fallback_rows[parents] + noise * self.fallback_noise
        z = rng.standard_normal((count, self.latent_dim))
        cond = np.ones((count, 1))
        out = mlp_forward(self.net, np.hstack([z, cond]))
        return out * self.sd + self.mu


def sample_synthetic(gen, count, seed=0):
    """Exactly ``count`` synthetic minority rows; identical for identical
    (generator, count, seed)."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    return gen.sample(count, seed)


def _scaler(rows, scaler):
    if scaler is not None:
        mu, sd = scaler
        return np.asarray(mu, dtype=np.float64), np.asarray(sd, dtype=np.float64)
    mu = rows.mean(axis=0)
    sd = rows.std(axis=0)
    return mu, np.where(sd > 0, sd, 1.0)


def cvae_loss_and_grads(enc, dec, X, eps, beta):
    """Reconstruction MSE + beta * KL(N(mu, sigma^2) || N(0, I)) with the
    reparameterization z = mu + sigma * eps; returns (loss, enc grads,
    dec grads). Deterministic given eps."""
    b = X.shape[0]
    latent = eps.shape[1]
    cond = np.ones((b, 1))
    enc_out, enc_caches = _forward_cached(enc, np.hstack([X, cond]))
    mu_z = enc_out[:, :latent]
    logv = enc_out[:, latent:]
    sig = np.exp(0.5 * logv)
    z = mu_z + sig * eps
    xhat, dec_caches = _forward_cached(dec, np.hstack([z, cond]))

    recon = float(((xhat - X) ** 2).sum()) / b
    kl = 0.5 * float((mu_z ** 2 + np.exp(logv) - 1.0 - logv).sum()) / b
    loss = recon + beta * kl

    d_xhat = 2.0 * (xhat - X) / b
    dec_grads, d_dec_in = _backward(dec, dec_caches, d_xhat)
    dz = d_dec_in[:, :latent]
    d_mu = dz + beta * mu_z / b
    d_logv = dz * eps * 0.5 * sig + beta * 0.5 * (np.exp(logv) - 1.0) / b
    enc_grads, _ = _backward(enc, enc_caches, np.hstack([d_mu, d_logv]))
    return loss, enc_grads, dec_grads


def cvae_fit(rows, spec, scaler=None):
    """Train encoder/decoder on minority rows; returns a generator.

    All-identical input rows degrade to duplicate-with-noise sampling with
    a warning.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise DataError("CVAE needs at least 2 minority rows")
    mu, sd = _scaler(rows, scaler)
    if rows.std(axis=0).max() == 0:
        log.warning("cvae_fit: degenerate constant input, falling back to "
                    "perturbation-style sampling")
        return SyntheticGenerator(
            kind="resample", latent_dim=spec.latent_dim, mu=mu, sd=sd,
            fallback_rows=rows.copy(), fallback_noise=0.1 * rows.std(axis=0))

    Xz = (rows - mu) / sd
    n, d = Xz.shape
    rng = np.random.default_rng(spec.seed)
    enc = Mlp.create([d + 1, spec.hidden, 2 * spec.latent_dim],
                     ["tanh", "linear"], rng)
    dec = Mlp.create([spec.latent_dim + 1, spec.hidden, d],
                     ["tanh", "linear"], rng)

    final_loss = np.inf
    for epoch in range(spec.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, spec.batch):
            batch = perm[start:start + spec.batch]
            eps = rng.standard_normal((batch.size, spec.latent_dim))
            loss, enc_g, dec_g = cvae_loss_and_grads(
                enc, dec, Xz[batch], eps, spec.kl_weight)
            if not np.isfinite(loss):
                raise NumericsError(f"CVAE loss diverged at epoch {epoch}")
            _sgd_step([enc, dec], [enc_g, dec_g],
                      [spec.learning_rate, spec.learning_rate])
            losses.append(loss)
        final_loss = float(np.mean(losses))
    if not np.isfinite(final_loss):
        raise NumericsError("CVAE final loss not finite")
    log.debug("cvae_fit: final epoch loss %.4f", final_loss)
    return SyntheticGenerator(kind="decoder", latent_dim=spec.latent_dim,
                              mu=mu, sd=sd, net=dec)


def gan_disc_loss_and_grads(disc, real_in, fake_in):
    """Non-saturating discriminator loss
    -mean log D(real) - mean log(1 - D(fake)); returns (loss, grads)."""
    b = real_in.shape[0]
    s_r, cache_r = _forward_cached(disc, real_in)
    s_f, cache_f = _forward_cached(disc, fake_in)
    s_r = np.clip(s_r, _LOG_EPS, 1.0 - _LOG_EPS)
    s_f = np.clip(s_f, _LOG_EPS, 1.0 - _LOG_EPS)
    loss = float(-(np.log(s_r).sum() + np.log(1.0 - s_f).sum()) / b)
    d_sr = -1.0 / (b * s_r)
    d_sf = 1.0 / (b * (1.0 - s_f))
    grads_r, _ = _backward(disc, cache_r, d_sr)
    grads_f, _ = _backward(disc, cache_f, d_sf)
    grads = [(gr[0] + gf[0], gr[1] + gf[1])
             for gr, gf in zip(grads_r, grads_f)]
    return loss, grads


def gan_gen_loss_and_grads(gen, disc, Z, cond):
    """Non-saturating generator loss -mean log D(G(z)); returns
    (loss, generator grads)."""
    b = Z.shape[0]
    fake, cache_g = _forward_cached(gen, np.hstack([Z, cond]))
    s, cache_d = _forward_cached(disc, np.hstack([fake, cond]))
    s = np.clip(s, _LOG_EPS, 1.0 - _LOG_EPS)
    loss = float(-np.log(s).sum() / b)
    d_s = -1.0 / (b * s)
    _, d_disc_in = _backward(disc, cache_d, d_s)
    d_fake = d_disc_in[:, :fake.shape[1]]
    gen_grads, _ = _backward(gen, cache_g, d_fake)
    return loss, gen_grads


def cgan_fit(train, spec):
    """Train a conditional generator/discriminator pair on the full fold
    (class label as the conditioning input); returns a generator that
    samples failure-class rows."""
    X = train.rows
    y = train.labels
    if len(np.unique(y)) < 2:
        raise DataError("CGAN needs both classes present")
    mu, sd = _scaler(X, None)
    Xz = (X - mu) / sd
    n, d = Xz.shape
    cond_all = y.astype(np.float64).reshape(-1, 1)

    rng = np.random.default_rng(spec.seed)
    gen = Mlp.create([spec.latent_dim + 1, spec.hidden, d],
                     ["tanh", "linear"], rng)
    disc = Mlp.create([d + 1, spec.hidden, 1], ["tanh", "sigmoid"], rng)

    for epoch in range(spec.epochs):
        perm = rng.permutation(n)
        d_losses = []
        g_losses = []
        acc_num = 0.0
        acc_den = 0
        for start in range(0, n, spec.batch):
            batch = perm[start:start + spec.batch]
            xb = Xz[batch]
            cb = cond_all[batch]
            z = rng.standard_normal((batch.size, spec.latent_dim))
            fake = mlp_forward(gen, np.hstack([z, cb]))
            d_loss, d_grads = gan_disc_loss_and_grads(
                disc, np.hstack([xb, cb]), np.hstack([fake, cb]))
            if not np.isfinite(d_loss):
                raise NumericsError(
                    f"CGAN discriminator loss diverged at epoch {epoch}")
            _sgd_step([disc], [d_grads], [spec.lr_discriminator])

            z2 = rng.standard_normal((batch.size, spec.latent_dim))
            c2 = rng.integers(0, 2, size=batch.size).astype(np.float64)
            g_loss, g_grads = gan_gen_loss_and_grads(
                gen, disc, z2, c2.reshape(-1, 1))
            if not np.isfinite(g_loss):
                raise NumericsError(
                    f"CGAN generator loss diverged at epoch {epoch}")
            _sgd_step([gen], [g_grads], [spec.lr_generator])

            s_real = mlp_forward(disc, np.hstack([xb, cb]))
            s_fake = mlp_forward(disc, np.hstack([fake, cb]))
            acc_num += float((s_real >= 0.5).sum() + (s_fake < 0.5).sum())
            acc_den += 2 * batch.size
            d_losses.append(d_loss)
            g_losses.append(g_loss)
        log.debug("cgan_fit: epoch %d d_loss %.4f g_loss %.4f disc_acc %.3f",
                  epoch, np.mean(d_losses), np.mean(g_losses),
                  acc_num / acc_den)
    return SyntheticGenerator(kind="decoder", latent_dim=spec.latent_dim,
                              mu=mu, sd=sd, net=gen)
