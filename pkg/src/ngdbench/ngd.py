"""Preconditioned noisy gradient descent over scheduled two-layer networks.

One update reads

    W_{k+1} = S_eta( W_k - eta * grad Lhat(W_k) + sqrt(2 eta / beta) * xi_k )

with xi_k iid standard normal on the first `width` blocks, Lhat the empirical
squared-error risk, and S_eta the per-block shrink (I + eta*A)^{-1} of the
weighted ridge operator A W = lam * mu(m)^{-1} w_m.  The shrink step treats
the stiff ridge flow exactly (semi-implicit Euler), so deep blocks with tiny
mu(m) stay stable at any step size.

With no data the chain samples its stationary Gaussian law exactly in the
wide-time limit; closed forms for that law are exposed for diagnostics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import zeta

from .model import FLOAT_FMT, eval_network, h_norm, hgamma_norm, sigmoid, soft_clip

__all__ = [
    "NgdConfig",
    "ChainResult",
    "ChainDivergence",
    "MeanPredictor",
    "ridge_grad",
    "shrink_factors",
    "apply_shrink",
    "loss_grad",
    "loss_grad_bound",
    "step",
    "step_explicit",
    "run_chain",
    "ou_block_variance",
    "prior_block_variance",
    "mixing_diagnostic",
    "save_trace",
]

# h_norm beyond this is treated as divergence of the chain
DIVERGENCE_NORM = 1e6


class ChainDivergence(RuntimeError):
    """Raised when a chain produces non-finite or runaway weights."""


@dataclass(frozen=True)
class NgdConfig:
    """Chain hyperparameters.

    beta is the inverse temperature (must exceed eta), lam the ridge weight,
    width the number of optimized blocks M.  burn_in defaults to k_max // 2
    and thinning to max(1, k_max // 2000), so about two thousand snapshots
    are kept regardless of chain length.
    """

    eta: float
    beta: float
    lam: float
    k_max: int
    width: int
    burn_in: int | None = None
    thinning: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be > 0")
        if self.beta <= self.eta:
            raise ValueError("beta must exceed eta")
        if self.lam <= 0:
            raise ValueError("lam must be > 0")
        if self.k_max < 1 or self.width < 1:
            raise ValueError("k_max and width must be >= 1")
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.k_max // 2)
        if self.thinning is None:
            object.__setattr__(self, "thinning", max(1, self.k_max // 2000))
        if not 0 <= self.burn_in < self.k_max:
            raise ValueError("burn_in must lie in [0, k_max)")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")

    @classmethod
    def auto(cls, config, n, noise_bound, eta=0.5, budget=50.0, seed=0):
        """Hyperparameters from the excess-risk theory, given sample size n.

        beta = min(n / (2 U^2), n), lam = 1/beta, width = ceil of
        n^(1 / (2 (alpha1 + 1))), and k_max chosen so eta * k_max >= budget
        / lam (a fixed multiple of the slowest ridge relaxation time).
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        U = float(noise_bound)
        beta = float(n) if U == 0.0 else min(n / (2.0 * U * U), float(n))
        lam = 1.0 / beta
        expo = 1.0 / (2.0 * (config.alpha1 + 1.0))
        width = max(1, math.ceil(n**expo - 1e-9))
        k_max = max(1, math.ceil(budget / (lam * eta) - 1e-9))
        return cls(eta=eta, beta=beta, lam=lam, k_max=k_max, width=width,
                   seed=seed)


def ridge_grad(config, lam, W):
    """Gradient of the weighted ridge penalty: lam * mu(m)^{-1} * w_m per block."""
    W = np.asarray(W, dtype=float)
    m = np.arange(1, W.shape[0] + 1)
    return (lam / config.mu(m))[:, None] * W


def shrink_factors(config, eta, lam, width):
    """Per-block factors of (I + eta*A)^{-1}: 1 / (1 + eta*lam/mu(m))."""
    m = np.arange(1, width + 1)
    return 1.0 / (1.0 + eta * lam / config.mu(m))


def apply_shrink(config, eta, lam, W):
    """Apply the semi-implicit shrink blockwise."""
    W = np.asarray(W, dtype=float)
    return shrink_factors(config, eta, lam, W.shape[0])[:, None] * W


def _forward(config, W, X1, b_safe, bs, bs1, amp):
    """Shared forward pass: preactivations, scaled sigmoids, clipped outputs."""
    with np.errstate(over="ignore", under="ignore"):
        z = X1 @ W[:, :-1].T
        sig = sigmoid(z / b_safe)
    t2 = np.tanh(W[:, -1] / config.R)
    act = bs * sig
    coef = amp * (config.R * t2)
    return sig, act, coef, t2


def _grad_tables(config, width):
    m = np.arange(1, width + 1)
    amp = config.amp(m)
    b = config.width(m)
    b_safe = np.where(b > 0.0, b, 1.0)  # b==0 blocks have zero activation anyway
    with np.errstate(under="ignore"):
        bs = b**config.s
        bs1 = b ** (config.s - 1.0)
    return amp, b_safe, bs, bs1


def loss_grad(config, W, data):
    """Analytic gradient of the empirical squared-error risk at W.

    Block m of the first-layer gradient is
        (2/n) sum_i r_i * amp(m) * soft_clip(w2_m, R) * act_m'(z_im) * [x_i; 1]
    and the second-layer gradient is
        (2/n) sum_i r_i * amp(m) * soft_clip'(w2_m, R) * act_m(z_im),
    with residuals r_i = f_W(x_i) - y_i.
    """
    W = np.asarray(W, dtype=float)
    M = W.shape[0]
    amp, b_safe, bs, bs1 = _grad_tables(config, M)
    X1 = np.concatenate([data.X, np.ones((data.n, 1))], axis=1)
    sig, act, coef, t2 = _forward(config, W, X1, b_safe, bs, bs1, amp)
    r = act @ coef - data.y
    two_n = 2.0 / data.n
    rsp = r[:, None] * (bs1 * (sig * (1.0 - sig)))
    G = np.empty_like(W)
    G[:, :-1] = (two_n * coef)[:, None] * (X1.T @ rsp).T
    G[:, -1] = two_n * (r @ act) * amp * (1.0 - t2 * t2)
    return G


def loss_grad_bound(config, noise_bound):
    """Width-free bound on h_norm(loss_grad): holds for every W and dataset.

    Residuals are bounded by 2*R*sum_m amp(m) + U, activations by 1, their
    slopes by C = 1/4 after width scaling (s >= 3, width <= 1), giving

        |grad|^2 <= 4 * rbar * (R^2 C^2 (d+1) + 1) * sum_m amp(m)^2

    with rbar the squared residual bound.  Amplitude sums are evaluated in
    closed form: sum amp = c_mu^alpha1 * zeta(2 alpha1).
    """
    if config.width(1) > 1.0:
        raise ValueError("bound assumes width(1) = c_mu^alpha2 <= 1")
    amp_sum = config.c_mu**config.alpha1 * zeta(2.0 * config.alpha1)
    amp_sq_sum = config.c_mu ** (2.0 * config.alpha1) * zeta(4.0 * config.alpha1)
    rbar = (2.0 * config.R * amp_sum + noise_bound) ** 2
    c_slope = 0.25
    return float(np.sqrt(
        4.0 * rbar * (config.R**2 * c_slope**2 * (config.d + 1) + 1.0) * amp_sq_sum
    ))


def _check_finite(W, where):
    if not np.all(np.isfinite(W)):
        raise ChainDivergence(f"non-finite weights {where}")


def step(config, ngd, W, data=None, noise=None):
    """One semi-implicit update; noise is the already-scaled injected term.

    With data=None the empirical-risk gradient is identically zero (pure
    sampling of the ridge Gaussian).  Raises ChainDivergence on non-finite
    output.
    """
    W = np.asarray(W, dtype=float)
    V = W if data is None else W - ngd.eta * loss_grad(config, W, data)
    if noise is not None:
        V = V + noise
    out = apply_shrink(config, ngd.eta, ngd.lam, V)
    _check_finite(out, "after step")
    return out


def step_explicit(config, ngd, W, data=None, noise=None):
    """The same update written as an explicit scheme.

    Algebraically (I + eta*A)^{-1} v = v - eta * A (I + eta*A)^{-1} v, so the
    ridge gradient is evaluated at the post-shrink point.  Agrees with step()
    to floating-point roundoff; kept as an independent code path for tests.
    """
    W = np.asarray(W, dtype=float)
    V = W if data is None else W - ngd.eta * loss_grad(config, W, data)
    if noise is not None:
        V = V + noise
    out = V - ngd.eta * ridge_grad(config, ngd.lam, apply_shrink(config, ngd.eta, ngd.lam, V))
    _check_finite(out, "after step")
    return out


@dataclass
class MeanPredictor:
    """Average of the networks at the kept snapshots (evaluable)."""

    config: object
    stack: np.ndarray  # (S, M, d+2)

    def __call__(self, x):
        out = None
        for W in self.stack:
            v = eval_network(self.config, W, x)
            out = v if out is None else out + v
        return out / len(self.stack)


@dataclass
class ChainResult:
    """Final weights, kept snapshots, and traces at the kept iterates."""

    config: object
    ngd: NgdConfig
    weights: np.ndarray
    kept: np.ndarray        # (S, M, d+2)
    kept_steps: np.ndarray  # (S,)
    risk_trace: np.ndarray
    hnorm_trace: np.ndarray
    h1norm_trace: np.ndarray

    def averaged_predictor(self):
        return MeanPredictor(self.config, self.kept)

    def last_predictor(self):
        cfg, W = self.config, self.weights
        return lambda x: eval_network(cfg, W, x)


def run_chain(config, ngd, data=None, init=None):
    """Run the chain for k_max steps; returns snapshots past burn-in.

    init: None starts from zero weights, "prior" draws from the gradient-free
    stationary Gaussian (per-coordinate variance mu(m) / (beta * lam)), or
    pass an explicit (width, d+2) array.  Divergence (non-finite weights or
    h_norm above 1e6) raises ChainDivergence.
    """
    M, dp2 = ngd.width, config.d + 2
    rng = np.random.default_rng(ngd.seed)
    if init is None:
        W = np.zeros((M, dp2))
    elif isinstance(init, str) and init == "prior":
        sd = np.sqrt(prior_block_variance(config, ngd))
        W = rng.standard_normal((M, dp2)) * sd[:, None]
    else:
        W = np.array(init, dtype=float)
        if W.shape != (M, dp2):
            raise ValueError(f"init must have shape {(M, dp2)}")

    s_fac = shrink_factors(config, ngd.eta, ngd.lam, M)[:, None]
    noise_sd = math.sqrt(2.0 * ngd.eta / ngd.beta)
    eta = ngd.eta

    have_data = data is not None
    if have_data:
        if data.d != config.d:
            raise ValueError("dataset dimension does not match config")
        X1 = np.concatenate([data.X, np.ones((data.n, 1))], axis=1)
        y = data.y
        amp, b_safe, bs, bs1 = _grad_tables(config, M)
        two_n = 2.0 / data.n
        R = config.R

    kept, kept_steps, risks, hn, h1n = [], [], [], [], []
    for k in range(1, ngd.k_max + 1):
        if have_data:
            with np.errstate(over="ignore", under="ignore"):
                z = X1 @ W[:, :-1].T
                sig = sigmoid(z / b_safe)
            t2 = np.tanh(W[:, -1] / R)
            act = bs * sig
            coef = amp * (R * t2)
            r = act @ coef - y
            rsp = r[:, None] * (bs1 * (sig * (1.0 - sig)))
            V = np.empty_like(W)
            V[:, :-1] = W[:, :-1] - (eta * two_n * coef)[:, None] * (X1.T @ rsp).T
            V[:, -1] = W[:, -1] - eta * two_n * (r @ act) * amp * (1.0 - t2 * t2)
        else:
            V = W
        V = V + noise_sd * rng.standard_normal((M, dp2))
        W = s_fac * V
        if k > ngd.burn_in and (k - ngd.burn_in) % ngd.thinning == 0:
            _check_finite(W, f"at step {k}")
            nrm = h_norm(W)
            if nrm > DIVERGENCE_NORM:
                raise ChainDivergence(f"h_norm {nrm:.3g} at step {k}")
            kept.append(W.copy())
            kept_steps.append(k)
            risks.append(float(np.mean((eval_network(config, W, data.X) - y) ** 2))
                         if have_data else 0.0)
            hn.append(nrm)
            h1n.append(hgamma_norm(config, W, 1.0))
    _check_finite(W, "at final step")

    return ChainResult(
        config=config, ngd=ngd, weights=W,
        kept=np.asarray(kept), kept_steps=np.asarray(kept_steps, dtype=int),
        risk_trace=np.asarray(risks), hnorm_trace=np.asarray(hn),
        h1norm_trace=np.asarray(h1n),
    )


def ou_block_variance(config, ngd):
    """Exact per-coordinate stationary variance of the gradient-free chain.

    Each coordinate of block m is an AR(1) recursion w' = s*(w + noise) with
    s the shrink factor, so the stationary variance is
    (2 eta / beta) * s^2 / (1 - s^2).
    """
    s = shrink_factors(config, ngd.eta, ngd.lam, ngd.width)
    return (2.0 * ngd.eta / ngd.beta) * s * s / (1.0 - s * s)


def prior_block_variance(config, ngd):
    """Per-coordinate variance mu(m)/(beta*lam) of the continuous-time
    gradient-free stationary law (the eta -> 0 limit of ou_block_variance)."""
    m = np.arange(1, ngd.width + 1)
    return config.mu(m) / (ngd.beta * ngd.lam)


@dataclass(frozen=True)
class MixingReport:
    ratio: float
    mixed: bool
    threshold: float
    chain_means: tuple
    within_variance: float

    def __str__(self):
        tag = "mixed" if self.mixed else "NOT MIXED"
        return f"between/within ratio {self.ratio:.4f} (threshold {self.threshold}): {tag}"


def mixing_diagnostic(traces, threshold=1.1):
    """Between/within variance ratio of risk traces from independent chains.

    ratio = 1 + B/(N*W) with B = N * var(chain means), W the mean within-chain
    variance, N the common trace length.  Identical traces give exactly 1;
    independent stationary chains approach 1 as N grows; a frozen chain next
    to a live one inflates B and trips the threshold.
    """
    traces = [np.asarray(t, dtype=float) for t in traces]
    if len(traces) < 2:
        raise ValueError("need at least two chains")
    N = traces[0].size
    if N < 2 or any(t.size != N for t in traces):
        raise ValueError("traces must share a common length >= 2")
    means = np.array([t.mean() for t in traces])
    within = float(np.mean([t.var(ddof=1) for t in traces]))
    B = N * float(means.var(ddof=1))
    if within == 0.0:
        ratio = 1.0 if B == 0.0 else math.inf
    else:
        ratio = 1.0 + B / (N * within)
    return MixingReport(ratio=float(ratio), mixed=ratio <= threshold,
                        threshold=threshold, chain_means=tuple(means),
                        within_variance=within)


def save_trace(path, result):
    """Write kept-iterate traces as CSV: k,empirical_risk,h_norm,h1_norm."""
    with open(path, "w") as fh:
        fh.write("k,empirical_risk,h_norm,h1_norm\n")
        for k, r, a, b in zip(result.kept_steps, result.risk_trace,
                              result.hnorm_trace, result.h1norm_trace):
            fh.write(f"{k},{FLOAT_FMT % r},{FLOAT_FMT % a},{FLOAT_FMT % b}\n")
