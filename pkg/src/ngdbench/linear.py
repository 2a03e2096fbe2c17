"""Linear-in-y baseline estimators: kernel ridge, k-NN, Nadaraya-Watson.

Every estimator here maps y linearly to predictions for fixed inputs; that
linearity is the defining property of the class the lower-bound theory
covers, and the test suite pins it.  Kernel ridge supports a Gaussian RBF
kernel, the empirical tangent kernel of a scheduled network at a frozen
random initialization, and the random-feature kernel with a frozen first
layer.  Hyperparameters are tuned by deterministic k-fold cross validation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
import scipy.linalg

from .model import (
    FLOAT_FMT,
    ScheduleConfig,
    sample_teacher,
    soft_clip,
    soft_clip_deriv,
    with_ones,
)

__all__ = [
    "ESTIMATOR_KINDS",
    "RbfKernel",
    "NtkKernel",
    "RandomFeatureKernel",
    "make_kernel",
    "kernel_eval",
    "krr_fit",
    "knn_predict",
    "nw_predict",
    "tune",
    "TuneResult",
    "fit_estimator",
    "save_estimator",
    "load_estimator",
]

ESTIMATOR_KINDS = ("krr-rbf", "krr-ntk", "krr-rf", "knn", "nw")

# prediction-time gram blocks are chunked to roughly this many doubles
_CHUNK_DOUBLES = 4_000_000


def _sq_dists(X, Z):
    """Pairwise squared euclidean distances, clamped at 0."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    sq = (X * X).sum(1)[:, None] + (Z * Z).sum(1)[None, :] - 2.0 * (X @ Z.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


@dataclass(frozen=True)
class RbfKernel:
    """Gaussian kernel exp(-|x-z|^2 / (2 h^2))."""

    bandwidth: float

    def gram(self, X, Z):
        return np.exp(_sq_dists(X, Z) / (-2.0 * self.bandwidth**2))


def _frozen_init(config, width, seed):
    # reference initialization drawn by the same law teachers use
    return sample_teacher(config, width, radius=1.0, seed=seed).weights


@dataclass(frozen=True)
class NtkKernel:
    """Empirical tangent kernel of a scheduled network at a frozen init.

    k(x, z) = <grad_W f_{W0}(x), grad_W f_{W0}(z)> over all weight
    coordinates; computed through the explicit finite-dimensional feature
    map, so the gram is positive semidefinite by construction.
    """

    config: ScheduleConfig
    width: int
    seed: int = 0

    def features(self, X):
        cfg = self.config
        W0 = _frozen_init(cfg, self.width, self.seed)
        X1, _ = with_ones(X, cfg.d)
        m = np.arange(1, self.width + 1)
        z = X1 @ W0[:, :-1].T
        dact = cfg.activation_deriv(m, z)       # (n, M)
        act = cfg.activation(m, z)
        amp = cfg.amp(m)
        c1 = amp * soft_clip(W0[:, -1], cfg.R)
        c2 = amp * soft_clip_deriv(W0[:, -1], cfg.R)
        first = (c1 * dact)[:, :, None] * X1[:, None, :]  # (n, M, d+1)
        second = (c2 * act)[:, :, None]                   # (n, M, 1)
        return np.concatenate([first, second], axis=2).reshape(X1.shape[0], -1)

    def gram(self, X, Z):
        return self.features(X) @ self.features(Z).T


@dataclass(frozen=True)
class RandomFeatureKernel:
    """Inner product of amp(m) * act_m at a frozen random first layer."""

    config: ScheduleConfig
    width: int
    seed: int = 0

    def features(self, X):
        cfg = self.config
        W0 = _frozen_init(cfg, self.width, self.seed)
        X1, _ = with_ones(X, cfg.d)
        m = np.arange(1, self.width + 1)
        return cfg.amp(m) * cfg.activation(m, X1 @ W0[:, :-1].T)

    def gram(self, X, Z):
        return self.features(X) @ self.features(Z).T


def make_kernel(kind, config=None, bandwidth=None, width=None, seed=0):
    """Kernel factory for the three krr variants."""
    if kind == "krr-rbf":
        if bandwidth is None or bandwidth <= 0:
            raise ValueError("krr-rbf needs a positive bandwidth")
        return RbfKernel(bandwidth=float(bandwidth))
    if kind in ("krr-ntk", "krr-rf"):
        if config is None or width is None:
            raise ValueError(f"{kind} needs a ScheduleConfig and a width")
        cls = NtkKernel if kind == "krr-ntk" else RandomFeatureKernel
        return cls(config=config, width=int(width), seed=int(seed))
    raise ValueError(f"unknown kernel kind {kind!r}")


def kernel_eval(kind, x, z, config=None, **params):
    """Evaluate the named kernel on two point batches."""
    return make_kernel(kind, config=config, **params).gram(x, z)


def _solve_regularized(K, ridge, y):
    A = K + ridge * np.eye(K.shape[0])
    try:
        factor = cho_factor(A, lower=True)
        coef = cho_solve(factor, y)
        # one step of iterative refinement: tiny ridges leave A with a large
        # condition number, and the refreshed residual solve buys back the
        # digits the factorization loses there
        return coef + cho_solve(factor, y - A @ coef)
    except LinAlgError:
        # semi-definite gram plus tiny ridge can lose positivity to roundoff
        return scipy.linalg.solve(A, y, assume_a="sym")


@dataclass
class KrrEstimator:
    """Kernel ridge fit: predict(x) = gram(x, X_train) @ dual_coef."""

    kind: str
    kernel: object
    ridge: float
    X: np.ndarray
    dual_coef: np.ndarray
    params: dict

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rows_per_chunk = max(1, _CHUNK_DOUBLES // max(1, self.X.shape[0]))
        out = np.empty(x.shape[0])
        for lo in range(0, x.shape[0], rows_per_chunk):
            sl = slice(lo, lo + rows_per_chunk)
            out[sl] = self.kernel.gram(x[sl], self.X) @ self.dual_coef
        return out


def krr_fit(kind, data, ridge, config=None, **params):
    """Solve (K + ridge I) c = y on the training gram."""
    if ridge <= 0:
        raise ValueError("ridge must be > 0")
    kernel = make_kernel(kind, config=config, **params)
    coef = _solve_regularized(kernel.gram(data.X, data.X), ridge, data.y)
    return KrrEstimator(kind=kind, kernel=kernel, ridge=float(ridge),
                        X=np.asarray(data.X, dtype=float), dual_coef=coef,
                        params=dict(params, ridge=float(ridge)))


def _k_smallest_sets(D, k):
    """Per-row index sets of the k smallest entries, ties by lowest index.

    Fast path uses argpartition; rows whose k-th distance value also occurs
    outside the candidate set are resolved by a stable argsort.
    """
    n_rows, n_cols = D.shape
    if k >= n_cols:
        return np.tile(np.arange(n_cols), (n_rows, 1))
    part = np.argpartition(D, k - 1, axis=1)[:, :k]
    rows = np.arange(n_rows)[:, None]
    vals = D[rows, part]
    kth = vals.max(axis=1)
    cand_at = (vals == kth[:, None]).sum(axis=1)
    all_at = (D == kth[:, None]).sum(axis=1)
    exact = np.flatnonzero(all_at > cand_at)
    for r in exact:
        part[r] = np.argsort(D[r], kind="stable")[:k]
    return part


def knn_predict(data, k, x):
    """k nearest neighbor mean; distance ties resolved by lowest index."""
    if not 1 <= k <= data.n:
        raise ValueError("k must lie in [1, n]")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rows_per_chunk = max(1, _CHUNK_DOUBLES // data.n)
    out = np.empty(x.shape[0])
    for lo in range(0, x.shape[0], rows_per_chunk):
        sl = slice(lo, lo + rows_per_chunk)
        sets = _k_smallest_sets(_sq_dists(x[sl], data.X), k)
        out[sl] = data.y[sets].mean(axis=1)
    return out


def nw_predict(data, bandwidth, x):
    """Gaussian-kernel local average; rows whose weights all underflow fall
    back to the 1-nearest-neighbor value."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be > 0")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    rows_per_chunk = max(1, _CHUNK_DOUBLES // data.n)
    out = np.empty(x.shape[0])
    tiny = np.finfo(float).tiny
    for lo in range(0, x.shape[0], rows_per_chunk):
        sl = slice(lo, lo + rows_per_chunk)
        sq = _sq_dists(x[sl], data.X)
        w = np.exp(sq / (-2.0 * bandwidth**2))
        denom = w.sum(axis=1)
        ok = denom > tiny
        vals = np.zeros(sq.shape[0])
        vals[ok] = (w[ok] @ data.y) / denom[ok]
        if not np.all(ok):
            bad = np.flatnonzero(~ok)
            sets = _k_smallest_sets(sq[bad], 1)
            vals[bad] = data.y[sets[:, 0]]
        out[sl] = vals
    return out


@dataclass
class KnnEstimator:
    kind: str
    k: int
    data: object
    params: dict

    def __call__(self, x):
        return knn_predict(self.data, self.k, x)


@dataclass
class NwEstimator:
    kind: str
    bandwidth: float
    data: object
    params: dict

    def __call__(self, x):
        return nw_predict(self.data, self.bandwidth, x)


def default_grid(kind, data=None):
    """Log-spaced hyperparameter grids used when the caller gives none."""
    if kind == "krr-rbf":
        return {"bandwidth": [0.25, 0.5, 1.0, 2.0], "ridge": [1e-7, 1e-5, 1e-3, 1e-1]}
    if kind in ("krr-ntk", "krr-rf"):
        return {"ridge": [1e-9, 1e-7, 1e-5, 1e-3, 1e-1]}
    if kind == "knn":
        top = 64 if data is None else max(1, data.n // 2)
        ks = [k for k in (1, 2, 4, 8, 16, 32, 64) if k <= top]
        return {"k": ks or [1]}
    if kind == "nw":
        return {"bandwidth": [0.05, 0.1, 0.2, 0.4, 0.8, 1.6]}
    raise ValueError(f"unknown estimator kind {kind!r}")


@dataclass(frozen=True)
class TuneResult:
    kind: str
    params: dict
    score: float
    table: tuple  # ((params, score), ...) in grid order
    folds: int
    seed: int


def _fold_indices(n, folds, seed):
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(chunk) for chunk in np.array_split(perm, folds)]


def _combo_iter(grid):
    # keys sorted, values ascending: ties resolve to the smallest combination
    keys = sorted(grid)
    val_lists = [sorted(grid[k]) for k in keys]
    for combo in itertools.product(*val_lists):
        yield dict(zip(keys, combo))


def tune(kind, data, grid=None, folds=5, seed=0, config=None, kernel_seed=0,
         kernel_width=None):
    """Pick hyperparameters by k-fold cross validation (pooled squared error).

    Folds are a seeded permutation split, so the selection is a deterministic
    function of (data, grid, folds, seed).  Score ties go to the smallest
    parameter combination in sorted key order.
    """
    if kind not in ESTIMATOR_KINDS:
        raise ValueError(f"unknown estimator kind {kind!r}")
    if data.n < folds or folds < 2:
        raise ValueError("need folds >= 2 and n >= folds")
    grid = grid if grid else default_grid(kind, data)
    fold_idx = _fold_indices(data.n, folds, seed)
    masks = []
    all_idx = np.arange(data.n)
    for va in fold_idx:
        tr = np.setdiff1d(all_idx, va, assume_unique=False)
        masks.append((tr, va))

    combos = list(_combo_iter(grid))
    sq_err = {i: 0.0 for i in range(len(combos))}

    if kind in ("krr-rbf", "krr-ntk", "krr-rf"):
        bandwidths = sorted(set(c.get("bandwidth", None) for c in combos))
        for bw in bandwidths:
            if kind == "krr-rbf":
                kern = make_kernel(kind, bandwidth=bw)
            else:
                width = kernel_width or max(8, data.n // 4)
                kern = make_kernel(kind, config=config, width=width,
                                   seed=kernel_seed)
            G = kern.gram(data.X, data.X)
            for tr, va in masks:
                Ktr = G[np.ix_(tr, tr)]
                Kva = G[np.ix_(va, tr)]
                for i, combo in enumerate(combos):
                    if combo.get("bandwidth", None) != bw:
                        continue
                    coef = _solve_regularized(Ktr, combo["ridge"], data.y[tr])
                    resid = Kva @ coef - data.y[va]
                    sq_err[i] += float(resid @ resid)
    elif kind == "knn":
        kmax = max(c["k"] for c in combos)
        for tr, va in masks:
            if kmax > tr.size:
                raise ValueError("k grid exceeds training fold size")
            D = _sq_dists(data.X[va], data.X[tr])
            order = np.argsort(D, axis=1, kind="stable")[:, :kmax]
            csum = np.cumsum(data.y[tr][order], axis=1)
            for i, combo in enumerate(combos):
                k = combo["k"]
                resid = csum[:, k - 1] / k - data.y[va]
                sq_err[i] += float(resid @ resid)
    else:  # nw
        from .data import Dataset
        for tr, va in masks:
            sub = Dataset(X=data.X[tr], y=data.y[tr],
                          noise_bound=data.noise_bound,
                          noise_kind=data.noise_kind, seed=None)
            for i, combo in enumerate(combos):
                resid = nw_predict(sub, combo["bandwidth"], data.X[va]) - data.y[va]
                sq_err[i] += float(resid @ resid)

    table = tuple((combos[i], sq_err[i] / data.n) for i in range(len(combos)))
    best_i = 0
    for i in range(1, len(combos)):
        if table[i][1] < table[best_i][1]:
            best_i = i
    return TuneResult(kind=kind, params=dict(combos[best_i]),
                      score=table[best_i][1], table=table, folds=folds,
                      seed=seed)


def fit_estimator(kind, data, params, config=None, kernel_seed=0,
                  kernel_width=None):
    """Fit one baseline with explicit hyperparameters; returns a predictor."""
    if kind == "krr-rbf":
        return krr_fit(kind, data, params["ridge"], bandwidth=params["bandwidth"])
    if kind in ("krr-ntk", "krr-rf"):
        width = kernel_width or max(8, data.n // 4)
        return krr_fit(kind, data, params["ridge"], config=config,
                       width=width, seed=kernel_seed)
    if kind == "knn":
        return KnnEstimator(kind=kind, k=int(params["k"]), data=data,
                            params=dict(params))
    if kind == "nw":
        return NwEstimator(kind=kind, bandwidth=float(params["bandwidth"]),
                           data=data, params=dict(params))
    raise ValueError(f"unknown estimator kind {kind!r}")


# -- serialization -----------------------------------------------------------

def save_estimator(path, est):
    """Structured-text dump: kind, hyperparameters, training set, dual coefs."""
    lines = ["# ngdbench estimator", f"kind = {est.kind}"]
    if isinstance(est, KrrEstimator):
        lines.append(f"ridge = {FLOAT_FMT % est.ridge}")
        kern = est.kernel
        if isinstance(kern, RbfKernel):
            lines.append(f"bandwidth = {FLOAT_FMT % kern.bandwidth}")
        else:
            cfg = kern.config
            lines += [f"width = {kern.width}", f"kernel_seed = {kern.seed}",
                      f"d = {cfg.d}", f"R = {FLOAT_FMT % cfg.R}",
                      f"gamma = {FLOAT_FMT % cfg.gamma}",
                      f"alpha1 = {FLOAT_FMT % cfg.alpha1}",
                      f"alpha2 = {FLOAT_FMT % cfg.alpha2}",
                      f"s = {FLOAT_FMT % cfg.s}",
                      f"c_mu = {FLOAT_FMT % cfg.c_mu}"]
        lines.append(f"n = {est.X.shape[0]}")
        lines.append("inputs:")
        lines += [" ".join(FLOAT_FMT % v for v in row) for row in est.X]
        lines.append("dual_coef:")
        lines += [FLOAT_FMT % v for v in est.dual_coef]
    elif isinstance(est, (KnnEstimator, NwEstimator)):
        for key, val in sorted(est.params.items()):
            sval = str(val) if isinstance(val, int) else FLOAT_FMT % val
            lines.append(f"{key} = {sval}")
        lines.append(f"n = {est.data.n}")
        lines.append("train:")
        for xi, yi in zip(est.data.X, est.data.y):
            lines.append(" ".join(FLOAT_FMT % v for v in xi) + " " + FLOAT_FMT % yi)
    else:
        raise TypeError(f"cannot serialize {type(est).__name__}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_estimator(path, config=None):
    """Inverse of save_estimator; krr round trips exactly."""
    header, section, rows = {}, None, {"inputs": [], "dual_coef": [], "train": []}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line in ("inputs:", "dual_coef:", "train:"):
                section = line[:-1]
                continue
            if section is None:
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
            else:
                rows[section].append([float(t) for t in line.split()])
    kind = header["kind"]
    from .data import Dataset
    if kind.startswith("krr"):
        X = np.asarray(rows["inputs"], dtype=float)
        coef = np.asarray(rows["dual_coef"], dtype=float).ravel()
        if kind == "krr-rbf":
            kern = RbfKernel(bandwidth=float(header["bandwidth"]))
            params = {"bandwidth": kern.bandwidth}
        else:
            cfg = config or ScheduleConfig(
                d=int(header["d"]), R=float(header["R"]),
                gamma=float(header["gamma"]), alpha1=float(header["alpha1"]),
                alpha2=float(header["alpha2"]), s=float(header["s"]),
                c_mu=float(header["c_mu"]))
            kern = make_kernel(kind, config=cfg, width=int(header["width"]),
                               seed=int(header["kernel_seed"]))
            params = {"width": kern.width}
        ridge = float(header["ridge"])
        return KrrEstimator(kind=kind, kernel=kern, ridge=ridge, X=X,
                            dual_coef=coef, params=dict(params, ridge=ridge))
    arr = np.asarray(rows["train"], dtype=float)
    ds = Dataset(X=arr[:, :-1], y=arr[:, -1], noise_bound=0.0,
                 noise_kind="none", seed=None)
    if kind == "knn":
        return KnnEstimator(kind=kind, k=int(header["k"]), data=ds,
                            params={"k": int(header["k"])})
    if kind == "nw":
        bw = float(header["bandwidth"])
        return NwEstimator(kind=kind, bandwidth=bw, data=ds,
                           params={"bandwidth": bw})
    raise ValueError(f"unknown estimator kind {kind!r}")
