"""Small conditional denoising-diffusion model for pattern-shaped segments.

The denoiser is a two-hidden-layer fully connected network, written in
plain numpy with explicit backprop so its gradients can be checked against
finite differences. Input is the noisy segment at length l_max, a
sinusoidal step embedding, and the conditioning pattern vector.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .segmentation import Pattern, PatternLibrary

PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3", "W4")


class DiffusionTrainingError(RuntimeError):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


def sinusoidal_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Standard sin/cos step embedding; t is the 1-based step index."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    angles = np.asarray(t, dtype=float).reshape(-1, 1) * freqs.reshape(1, -1)
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


class PatternDiffusion(BaseEstimator):
    """Conditional denoiser over segments, one model per cluster.

    Forward process: x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps with a
    linear beta schedule hot enough that x_N is (0, 1) noise. Training
    minimizes ||eps - eps_theta(x_t, t, p)||^2 with Adam under cosine lr
    decay; sampling runs the ancestral reverse chain (posterior variance)
    conditioned on the reference pattern and denormalizes with the segment
    magnitude. The network carries a linear path from the noisy input to
    the output; without it the tanh stack cannot express the near-identity
    response the high-noise steps need.
    """

    def __init__(self, l_max: int = 64, n_steps: int = 50,
                 beta_start: float = 0.002, beta_end: float = 0.4,
                 hidden: int = 128, emb_dim: int = 32, epochs: int = 300,
                 batch_size: int = 32, lr: float = 1e-3, seed: int = 0):
        self.l_max = l_max
        self.n_steps = n_steps
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.hidden = hidden
        self.emb_dim = emb_dim
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed

    # -- schedule ----------------------------------------------------------

    def _init_schedule(self) -> None:
        betas = np.linspace(self.beta_start, self.beta_end, self.n_steps)
        if not (0 < betas[0] and betas[-1] < 1 and (np.diff(betas) > 0).all()):
            raise ValueError("beta schedule must be increasing within (0, 1)")
        self.betas_ = betas
        self.alphas_ = 1.0 - betas
        self.alpha_bars_ = np.cumprod(self.alphas_)

    def forward_noise(self, x0: np.ndarray, t: int, eps: np.ndarray) -> np.ndarray:
        """q(x_t | x0) sample for a given noise draw (t is 1-based)."""
        abar = self.alpha_bars_[t - 1]
        return math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps

    def reverse_step_mean(self, x_t: np.ndarray, eps_hat: np.ndarray,
                          t: int) -> np.ndarray:
        """Mean of p(x_{t-1} | x_t) given the predicted noise."""
        alpha = self.alphas_[t - 1]
        abar = self.alpha_bars_[t - 1]
        return (x_t - (1.0 - alpha) / math.sqrt(1.0 - abar) * eps_hat) \
            / math.sqrt(alpha)

    def q_posterior_mean(self, x_t: np.ndarray, x0: np.ndarray,
                         t: int) -> np.ndarray:
        """Mean of q(x_{t-1} | x_t, x0); equals reverse_step_mean with the
        true noise, which the identity test asserts."""
        abar = self.alpha_bars_[t - 1]
        abar_prev = self.alpha_bars_[t - 2] if t > 1 else 1.0
        beta = self.betas_[t - 1]
        alpha = self.alphas_[t - 1]
        c0 = math.sqrt(abar_prev) * beta / (1.0 - abar)
        ct = math.sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar)
        return c0 * x0 + ct * x_t

    # -- network -----------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> None:
        d_in = 2 * self.l_max + self.emb_dim
        def xavier(n_in, n_out):
            scale = math.sqrt(2.0 / (n_in + n_out))
            return rng.normal(0.0, scale, size=(n_in, n_out))
        self.params_ = {
            "W1": xavier(d_in, self.hidden), "b1": np.zeros(self.hidden),
            "W2": xavier(self.hidden, self.hidden), "b2": np.zeros(self.hidden),
            "W3": xavier(self.hidden, self.l_max), "b3": np.zeros(self.l_max),
            "W4": np.zeros((self.l_max, self.l_max)),
        }

    def _net_input(self, x_t: np.ndarray, t: np.ndarray,
                   cond: np.ndarray) -> np.ndarray:
        temb = sinusoidal_embedding(t, self.emb_dim)
        return np.concatenate([np.atleast_2d(x_t), temb, np.atleast_2d(cond)],
                              axis=1)

    def predict_noise(self, x_t: np.ndarray, t, cond: np.ndarray) -> np.ndarray:
        """eps_theta(x_t, t, p); accepts single rows or batches."""
        single = np.asarray(x_t).ndim == 1
        x_t = np.atleast_2d(x_t)
        X = self._net_input(x_t, np.atleast_1d(t), np.atleast_2d(cond))
        p = self.params_
        a1 = np.tanh(X @ p["W1"] + p["b1"])
        a2 = np.tanh(a1 @ p["W2"] + p["b2"])
        out = a2 @ p["W3"] + p["b3"] + x_t @ p["W4"]
        return out[0] if single else out

    def loss_on(self, x0: np.ndarray, t: np.ndarray, eps: np.ndarray,
                cond: np.ndarray) -> float:
        """MSE noise-prediction loss on one fixed (x0, t, eps, cond) batch."""
        x_t = self._noise_batch(x0, t, eps)
        pred = self.predict_noise(x_t, t, cond)
        return float(np.mean((pred - eps) ** 2))

    def grads_on(self, x0: np.ndarray, t: np.ndarray, eps: np.ndarray,
                 cond: np.ndarray) -> dict[str, np.ndarray]:
        """Analytic parameter gradients of loss_on, via backprop."""
        x_t = self._noise_batch(x0, t, eps)
        X = self._net_input(x_t, t, cond)
        p = self.params_
        z1 = X @ p["W1"] + p["b1"]
        a1 = np.tanh(z1)
        z2 = a1 @ p["W2"] + p["b2"]
        a2 = np.tanh(z2)
        out = a2 @ p["W3"] + p["b3"] + x_t @ p["W4"]
        d_out = 2.0 * (out - eps) / out.size
        d_a2 = d_out @ p["W3"].T
        d_z2 = d_a2 * (1.0 - a2 ** 2)
        d_a1 = d_z2 @ p["W2"].T
        d_z1 = d_a1 * (1.0 - a1 ** 2)
        return {
            "W4": x_t.T @ d_out,
            "W3": a2.T @ d_out, "b3": d_out.sum(axis=0),
            "W2": a1.T @ d_z2, "b2": d_z2.sum(axis=0),
            "W1": X.T @ d_z1, "b1": d_z1.sum(axis=0),
        }

    def _noise_batch(self, x0: np.ndarray, t: np.ndarray,
                     eps: np.ndarray) -> np.ndarray:
        abar = self.alpha_bars_[np.asarray(t, dtype=int) - 1].reshape(-1, 1)
        return np.sqrt(abar) * np.atleast_2d(x0) + np.sqrt(1 - abar) \
            * np.atleast_2d(eps)

    # -- training ----------------------------------------------------------

    def fit(self, segments_by_pattern: Mapping[int, Sequence[np.ndarray]],
            library: PatternLibrary):
        """Train on segments grouped by pattern id.

        Segments must be normalized to l_max samples and unit scale (the
        same form the segmenter's library stores). The recorded loss trace
        is evaluated on a fixed held-out noise set so it reflects parameter
        movement, not fresh noise draws.
        """
        x0_rows, cond_rows = [], []
        for pid, segments in sorted(segments_by_pattern.items()):
            cond = library.get(pid).values
            for seg in segments:
                seg = np.asarray(seg, dtype=float)
                if seg.shape != (self.l_max,):
                    raise ValueError(f"segment shape {seg.shape} != ({self.l_max},)")
                x0_rows.append(seg)
                cond_rows.append(cond)
        if not x0_rows:
            raise ValueError("no training segments")
        X0 = np.stack(x0_rows)
        C = np.stack(cond_rows)
        n = len(X0)

        self._init_schedule()
        rng = np.random.default_rng(self.seed)
        self._init_params(rng)

        n_eval = min(256, 4 * n)
        eval_idx = rng.integers(0, n, size=n_eval)
        eval_t = rng.integers(1, self.n_steps + 1, size=n_eval)
        eval_eps = rng.standard_normal((n_eval, self.l_max))

        m = {k: np.zeros_like(v) for k, v in self.params_.items()}
        v = {k: np.zeros_like(v) for k, v in self.params_.items()}
        beta1, beta2, eps_adam = 0.9, 0.999, 1e-8
        total_steps = self.epochs * max(1, math.ceil(n / self.batch_size))
        step = 0
        trace = []
        for _epoch in range(self.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, self.batch_size):
                idx = order[lo: lo + self.batch_size]
                t = rng.integers(1, self.n_steps + 1, size=len(idx))
                eps = rng.standard_normal((len(idx), self.l_max))
                grads = self.grads_on(X0[idx], t, eps, C[idx])
                step += 1
                # cosine decay with a small floor keeps late epochs stable
                lr = self.lr * max(
                    0.5 * (1.0 + math.cos(math.pi * step / total_steps)), 0.02)
                for key, g in grads.items():
                    if not np.isfinite(g).all():
                        raise DiffusionTrainingError(step, "gradient is not finite")
                    m[key] = beta1 * m[key] + (1 - beta1) * g
                    v[key] = beta2 * v[key] + (1 - beta2) * g ** 2
                    m_hat = m[key] / (1 - beta1 ** step)
                    v_hat = v[key] / (1 - beta2 ** step)
                    self.params_[key] -= lr * m_hat / (np.sqrt(v_hat) + eps_adam)
            loss = self.loss_on(X0[eval_idx], eval_t, eval_eps, C[eval_idx])
            if not math.isfinite(loss):
                raise DiffusionTrainingError(step, "loss diverged to NaN/inf")
            trace.append(loss)
        self.loss_trace_ = np.array(trace)
        return self

    # -- sampling ----------------------------------------------------------

    def sample(self, pattern, alpha: int, beta: float,
               seed: int = 0) -> np.ndarray:
        """Ancestral sampling conditioned on a pattern, denormalized to beta
        and sliced to the first alpha samples."""
        self._check_fitted()
        if beta == 0:
            return np.zeros(alpha)
        cond = pattern.values if isinstance(pattern, Pattern) else \
            np.asarray(pattern, dtype=float)
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(self.l_max)
        for t in range(self.n_steps, 0, -1):
            eps_hat = self.predict_noise(x, t, cond)
            x = self.reverse_step_mean(x, eps_hat, t)
            if t > 1:
                # posterior variance; the fixed-beta alternative over-injects
                # noise on a 50-step schedule
                abar, abar_prev = self.alpha_bars_[t - 1], self.alpha_bars_[t - 2]
                var = (1.0 - abar_prev) / (1.0 - abar) * self.betas_[t - 1]
                x = x + math.sqrt(var) * rng.standard_normal(self.l_max)
        span = float(x.max() - x.min())
        if span <= 0:
            return np.zeros(alpha)
        return (x * (beta / span))[:alpha].copy()

    def _check_fitted(self) -> None:
        if not hasattr(self, "params_"):
            raise NotFittedError("call fit() first")

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        self._check_fitted()
        return {
            "format": "pattern-diffusion-v1",
            "config": self.get_params(),
            "params": {k: v.tolist() for k, v in self.params_.items()},
            "loss_trace": getattr(self, "loss_trace_", np.empty(0)).tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PatternDiffusion":
        if payload.get("format") != "pattern-diffusion-v1":
            raise ValueError("unsupported diffusion model format")
        model = cls(**payload["config"])
        model._init_schedule()
        model.params_ = {k: np.asarray(v, dtype=float)
                         for k, v in payload["params"].items()}
        model.loss_trace_ = np.asarray(payload["loss_trace"], dtype=float)
        return model


def train_pattern_diffusion(segments_by_pattern: Mapping[int, Sequence[np.ndarray]],
                            library: PatternLibrary,
                            **config) -> tuple[PatternDiffusion, np.ndarray]:
    """Train a PatternDiffusion; returns (model, training-loss trace)."""
    model = PatternDiffusion(l_max=library.l_max, **config)
    model.fit(segments_by_pattern, library)
    return model, model.loss_trace_


def sample_pattern(model: PatternDiffusion, pattern, alpha: int, beta: float,
                   seed: int = 0) -> np.ndarray:
    return model.sample(pattern, alpha, beta, seed=seed)
