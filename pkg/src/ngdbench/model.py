"""Clipped two-layer networks with polynomially scheduled per-node scales.

The function class is

    f_W(x) = sum_m  amp(m) * soft_clip(w2_m, R) * act_m(w1_m . [x; 1])

where block m carries a first-layer vector w1_m in R^(d+1) (last coordinate
multiplies the appended constant 1) and a scalar second-layer weight w2_m.
Per-block scales follow power schedules of mu(m) = c_mu * m^-2: the output
amplitude amp(m) = mu^alpha1 and the activation width width(m) = mu^alpha2,
with act_m(u) = width^s * sigmoid(u / width).

Weights are stored as float arrays of shape (M, d+2); rows are blocks, the
last column is w2.  A narrower weight vector is identified with any wider one
by zero padding, which changes neither the function nor any norm.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

__all__ = [
    "ScheduleConfig",
    "TeacherSpec",
    "AssumptionReport",
    "check_assumptions",
    "sigmoid",
    "sigmoid_deriv",
    "soft_clip",
    "soft_clip_deriv",
    "eval_network",
    "h_norm",
    "hgamma_norm",
    "pad_weights",
    "sample_teacher",
    "bump_teacher",
    "save_teacher",
    "load_teacher",
    "save_weights",
    "load_weights",
    "FLOAT_FMT",
]

# All text serialization uses 17 significant digits: exact float64 round trip.
FLOAT_FMT = "%.17g"

# sigmoid(u) rounds to exactly 1.0 for u >= 38 and exactly 0.0 for u <= -746
# (exp underflow), so expit is only evaluated on the middle band.  Verified
# bitwise against expit in the test suite.
_SIG_HI = 38.0
_SIG_LO = -746.0


def sigmoid(u):
    """Logistic sigmoid 1/(1+exp(-u)), saturation short-circuited."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        if u >= _SIG_HI:
            return 1.0
        if u <= _SIG_LO:
            return 0.0
        return float(expit(u))
    out = np.empty_like(u)
    hi = u >= _SIG_HI
    lo = u <= _SIG_LO
    mid = ~(hi | lo)
    out[hi] = 1.0
    out[lo] = 0.0
    out[mid] = expit(u[mid])
    return out


def sigmoid_deriv(u):
    """Derivative sigmoid(u)*(1-sigmoid(u)); 0 at both saturated ends."""
    s = sigmoid(u)
    return s * (1.0 - s)


def soft_clip(w, R):
    """Smooth clip R*tanh(w/R): identity near 0, bounded by R, 1-Lipschitz."""
    return R * np.tanh(np.asarray(w, dtype=float) / R)


def soft_clip_deriv(w, R):
    """d/dw of soft_clip: 1 - tanh(w/R)^2, in (0, 1]."""
    t = np.tanh(np.asarray(w, dtype=float) / R)
    return 1.0 - t * t


_ASSUMPTION_CLAUSES = (
    ("d >= 1", lambda p: p["d"] >= 1),
    ("R >= 1", lambda p: p["R"] >= 1.0),
    ("gamma > 0", lambda p: p["gamma"] > 0.0),
    ("alpha1 > 1/2", lambda p: p["alpha1"] > 0.5),
    ("alpha2 > gamma/2", lambda p: p["alpha2"] > p["gamma"] / 2.0),
    ("s >= 3", lambda p: p["s"] >= 3.0),
    ("c_mu > 0", lambda p: p["c_mu"] > 0.0),
    # widths must not exceed 1 or the scaled activations (sup b_m^s) leave
    # the unit ball; b_m = (c_mu m^-2)^alpha2 peaks at m = 1
    ("b_m <= 1 (needs c_mu <= 1)", lambda p: p["c_mu"] <= 1.0),
)


@dataclass(frozen=True)
class AssumptionReport:
    """Outcome of the schedule admissibility check."""

    ok: bool
    failures: tuple = ()
    sigma_bound: float = math.nan  # sampled sup of scaled-sigmoid derivatives

    def __str__(self):
        base = ("assumptions: pass" if self.ok else
                "assumptions: FAIL (" + "; ".join(self.failures) + ")")
        if math.isfinite(self.sigma_bound):
            base += f"; sigma-derivative bound {self.sigma_bound:.6g}"
        return base


def _sigma_derivative_bound(alpha2, s, c_mu, blocks=8, grid=20001):
    """Sampled sup over u and the first `blocks` schedule indices of the
    scaled activation's first three derivatives.

    The scaled activation is b^s sigmoid(u/b), so derivative j has magnitude
    b^(s-j) |sigmoid^(j)(z)| with z = u/b; sampling z directly covers every u.
    """
    z = np.linspace(-12.0, 12.0, grid)
    sig = sigmoid(z)
    d1 = np.abs(sig * (1.0 - sig)).max()
    d2 = np.abs(sig * (1.0 - sig) * (1.0 - 2.0 * sig)).max()
    d3 = np.abs(sig * (1.0 - sig) * (1.0 - 6.0 * sig + 6.0 * sig * sig)).max()
    bound = 0.0
    for m in range(1, blocks + 1):
        b = (c_mu * m ** -2.0) ** alpha2
        bound = max(bound, b ** (s - 1) * d1, b ** (s - 2) * d2,
                    b ** (s - 3) * d3)
    return float(bound)


def check_assumptions(config=None, **params) -> AssumptionReport:
    """Check schedule admissibility; returns a report naming violated clauses
    and carrying the sampled bound on the scaled activations' derivatives.

    Accepts either a ScheduleConfig or the raw keyword parameters
    (d, R, gamma, alpha1, alpha2, s, c_mu), so inadmissible parameter sets
    can be checked without constructing a config.
    """
    p = {"R": 1.0, "c_mu": 1.0}
    if config is not None:
        p.update(d=config.d, R=config.R, gamma=config.gamma, alpha1=config.alpha1,
                 alpha2=config.alpha2, s=config.s, c_mu=config.c_mu)
    p.update(params)
    missing = {k for k in ("d", "gamma", "alpha1", "alpha2", "s") if k not in p}
    if missing:
        raise TypeError(f"check_assumptions missing parameters: {sorted(missing)}")
    failures = tuple(clause for clause, ok in _ASSUMPTION_CLAUSES if not ok(p))
    sigma = math.nan
    if p["c_mu"] > 0 and p["s"] >= 3.0:
        sigma = _sigma_derivative_bound(p["alpha2"], p["s"], p["c_mu"])
    return AssumptionReport(ok=not failures, failures=failures,
                            sigma_bound=sigma)


@dataclass(frozen=True)
class ScheduleConfig:
    """Input dimension, clip level, and the power-schedule exponents.

    Parameters
    ----------
    d : int
        Input dimension; covariates live in [0, 1]^d.
    R : float
        Soft-clip level for second-layer weights, >= 1.
    gamma : float
        Norm-weighting exponent of the target class (source smoothness).
    alpha1 : float
        Amplitude schedule exponent, > 1/2 so total amplitude is summable.
    alpha2 : float
        Activation width schedule exponent, > gamma/2.
    s : float
        Activation output power, >= 3 (keeps scaled sigmoids and their first
        two derivatives uniformly bounded).
    c_mu : float
        Leading constant of mu(m) = c_mu * m^-2.

    Construction rejects parameter sets violating any admissibility clause.
    """

    d: int
    R: float = 1.0
    gamma: float = 1.0
    alpha1: float = 1.0
    alpha2: float = 4.0
    s: float = 3.0
    c_mu: float = 1.0

    def __post_init__(self):
        report = check_assumptions(self)
        if not report.ok:
            raise ValueError("inadmissible schedule: " + "; ".join(report.failures))

    # -- schedules (m is 1-based, scalar or array) --

    def mu(self, m):
        """Block scale mu(m) = c_mu * m^-2."""
        return self.c_mu * np.asarray(m, dtype=float) ** -2.0

    def amp(self, m):
        """Output amplitude schedule mu(m)^alpha1."""
        return self.mu(m) ** self.alpha1

    def width(self, m):
        """Activation width schedule mu(m)^alpha2."""
        return self.mu(m) ** self.alpha2

    def activation(self, m, u):
        """Scaled sigmoid of block m: width^s * sigmoid(u / width).

        For extreme schedules width(m) can underflow to exactly 0; those
        blocks have identically zero activation and derivative.
        """
        b = np.asarray(self.width(m), dtype=float)
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", divide="ignore", under="ignore"):
            scaled = np.where(b > 0.0, u / np.where(b > 0.0, b, 1.0), np.inf)
            out = b**self.s * sigmoid(scaled)
        return out if out.ndim else float(out)

    def activation_deriv(self, m, u):
        """Derivative of activation w.r.t. u: width^(s-1) * sigmoid'(u / width)."""
        b = np.asarray(self.width(m), dtype=float)
        u = np.asarray(u, dtype=float)
        with np.errstate(over="ignore", divide="ignore", under="ignore"):
            scaled = np.where(b > 0.0, u / np.where(b > 0.0, b, 1.0), np.inf)
            out = b ** (self.s - 1.0) * sigmoid_deriv(scaled)
        return out if out.ndim else float(out)


def _as_weight_matrix(config, W):
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[1] != config.d + 2:
        raise ValueError(f"weights must have shape (M, {config.d + 2}), got {W.shape}")
    return W


def pad_weights(W, width):
    """Zero-pad a weight matrix to a larger block count (same function)."""
    W = np.asarray(W, dtype=float)
    if width < W.shape[0]:
        raise ValueError("pad_weights cannot shrink a weight matrix")
    out = np.zeros((width, W.shape[1]))
    out[: W.shape[0]] = W
    return out


def with_ones(x, d):
    """Append the constant-1 coordinate: [x; 1].  x is (d,) or (n, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != d:
        raise ValueError(f"expected points in R^{d}, got shape {x.shape}")
    X1 = np.concatenate([x, np.ones((x.shape[0], 1))], axis=1)
    return X1, single


def eval_network(config, W, x):
    """Evaluate f_W at x; x is a point (d,) or a batch (n, d).

    Returns a float for a single point, an (n,) array for a batch.
    """
    W = _as_weight_matrix(config, W)
    X1, single = with_ones(x, config.d)
    M = W.shape[0]
    if M == 0:
        out = np.zeros(X1.shape[0])
        return float(out[0]) if single else out
    m = np.arange(1, M + 1)
    z = X1 @ W[:, :-1].T  # (n, M) preactivations
    act = config.activation(m, z)
    coef = config.amp(m) * soft_clip(W[:, -1], config.R)
    out = act @ coef
    return float(out[0]) if single else out


def h_norm(W):
    """Euclidean norm over all weight coordinates."""
    return float(np.sqrt(np.sum(np.asarray(W, dtype=float) ** 2)))


def hgamma_norm(config, W, g=None):
    """Weighted norm with per-block weights mu(m)^-g; g defaults to gamma.

    g = 0 recovers h_norm.  Wider zero-padded copies have identical norms.
    """
    if g is None:
        g = config.gamma
    if g < 0:
        raise ValueError("norm exponent g must be >= 0")
    W = _as_weight_matrix(config, W)
    if W.shape[0] == 0:
        return 0.0
    m = np.arange(1, W.shape[0] + 1)
    block_sq = np.sum(W * W, axis=1)
    return float(np.sqrt(np.sum(block_sq * config.mu(m) ** -g)))


@dataclass(frozen=True)
class TeacherSpec:
    """A fixed target network with recorded norm-ball radius.

    The radius is the weighted norm hgamma_norm(config, weights); membership
    in the unit ball (radius <= 1) is what the estimation theory assumes.
    """

    config: ScheduleConfig
    weights: np.ndarray
    radius: float
    seed: int | None = None
    kind: str = "gaussian"

    def __post_init__(self):
        W = _as_weight_matrix(self.config, self.weights)
        W.setflags(write=False)
        object.__setattr__(self, "weights", W)
        if not 0.0 < self.radius <= 1.0:
            raise ValueError("teacher radius must lie in (0, 1]")

    @property
    def width(self):
        return self.weights.shape[0]

    def __call__(self, x):
        return eval_network(self.config, self.weights, x)

    def tail_amplitude(self, student_width):
        """Bound on the teacher mass a student of given width cannot express:
        R * sum_{m > student_width} amp(m)."""
        m = np.arange(student_width + 1, self.width + 1)
        if m.size == 0:
            return 0.0
        return float(self.config.R * np.sum(self.config.amp(m)))


def _gaussian_hg_draw(config, width, rng):
    """Standard normal draw in the mu^(gamma/2)-scaled block geometry."""
    raw = rng.standard_normal((width, config.d + 2))
    m = np.arange(1, width + 1)
    scaled = raw * (config.mu(m) ** (config.gamma / 2.0))[:, None]
    return raw, scaled


def sample_teacher(config, width, radius=1.0, seed=0):
    """Draw a teacher uniformly-directionally in the weighted-norm ball shell.

    Per-coordinate Gaussians are scaled by mu(m)^(gamma/2) and then the whole
    vector is renormalized so hgamma_norm equals `radius` exactly.
    """
    if not 0.0 < radius <= 1.0:
        raise ValueError("teacher radius must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    raw, scaled = _gaussian_hg_draw(config, width, rng)
    norm = np.sqrt(np.sum(raw * raw))
    if norm == 0.0:
        raise RuntimeError("degenerate zero draw")
    W = scaled * (radius / norm)
    return TeacherSpec(config=config, weights=W, radius=radius, seed=seed,
                       kind="gaussian")


def bump_teacher(config, width, index=1, center=None, direction=None, radius=1.0):
    """Deterministic one-active-node teacher: a single scheduled ridge bump.

    Block `index` gets w1 proportional to [u; -u.c] (a ridge along direction
    u through center c) and w2 topped up so the weighted norm is exactly
    `radius`; every other block is zero.  Worst-case-style target for
    experiments probing the resolution of a single node.
    """
    if not 1 <= index <= width:
        raise ValueError("bump index must lie in [1, width]")
    if not 0.0 < radius <= 1.0:
        raise ValueError("teacher radius must lie in (0, 1]")
    d = config.d
    c = np.full(d, 0.5) if center is None else np.asarray(center, dtype=float)
    u = np.ones(d) if direction is None else np.asarray(direction, dtype=float)
    if c.shape != (d,) or u.shape != (d,):
        raise ValueError("center and direction must be d-vectors")
    un = np.linalg.norm(u)
    if un == 0.0:
        raise ValueError("direction must be nonzero")
    u = u / un
    v = np.concatenate([u, [-float(u @ c)]])
    mu_i = float(config.mu(index))
    rt = mu_i ** (config.gamma / 2.0)
    W = np.zeros((width, d + 2))
    # half the norm budget in the ridge direction, half in the output weight
    W[index - 1, :-1] = rt * radius * v / (np.linalg.norm(v) * np.sqrt(2.0))
    block_sq = float(np.sum(W[index - 1, :-1] ** 2))
    W[index - 1, -1] = np.sqrt(max(mu_i**config.gamma * radius**2 - block_sq, 0.0))
    return TeacherSpec(config=config, weights=W, radius=radius, seed=None,
                       kind="bump")


# -- structured-text serialization ------------------------------------------

def _config_header_lines(config):
    return [
        f"d = {config.d}",
        f"R = {FLOAT_FMT % config.R}",
        f"gamma = {FLOAT_FMT % config.gamma}",
        f"alpha1 = {FLOAT_FMT % config.alpha1}",
        f"alpha2 = {FLOAT_FMT % config.alpha2}",
        f"s = {FLOAT_FMT % config.s}",
        f"c_mu = {FLOAT_FMT % config.c_mu}",
    ]


def _weights_block_lines(W):
    return [" ".join(FLOAT_FMT % v for v in row) for row in W]


def save_teacher(path, teacher):
    """Write a teacher to a self-describing text file (17 sig digits)."""
    lines = ["# ngdbench teacher"]
    lines += _config_header_lines(teacher.config)
    lines.append(f"M = {teacher.width}")
    lines.append(f"seed = {'none' if teacher.seed is None else teacher.seed}")
    lines.append(f"radius = {FLOAT_FMT % teacher.radius}")
    lines.append(f"kind = {teacher.kind}")
    lines.append("blocks:")
    lines += _weights_block_lines(teacher.weights)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header_and_blocks(path, expect_tag):
    header = {}
    blocks = []
    in_blocks = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line == "blocks:":
                in_blocks = True
                continue
            if in_blocks:
                blocks.append([float(tok) for tok in line.split()])
            else:
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected 'key = value'")
                key, _, val = line.partition("=")
                header[key.strip()] = val.strip()
    return header, blocks


def _config_from_header(header):
    return ScheduleConfig(
        d=int(header["d"]),
        R=float(header["R"]),
        gamma=float(header["gamma"]),
        alpha1=float(header["alpha1"]),
        alpha2=float(header["alpha2"]),
        s=float(header["s"]),
        c_mu=float(header["c_mu"]),
    )


def load_teacher(path):
    """Read a teacher written by save_teacher; round trip is exact."""
    header, blocks = _parse_header_and_blocks(path, "teacher")
    config = _config_from_header(header)
    W = np.asarray(blocks, dtype=float)
    if W.shape != (int(header["M"]), config.d + 2):
        raise ValueError(f"{path}: block shape {W.shape} does not match header")
    seed = None if header["seed"] == "none" else int(header["seed"])
    return TeacherSpec(config=config, weights=W, radius=float(header["radius"]),
                       seed=seed, kind=header.get("kind", "gaussian"))


def save_weights(path, config, weights, extra=None):
    """Write one weight matrix (or a stack of snapshots) as structured text.

    `weights` is (M, d+2) or (S, M, d+2).  `extra` is an optional dict of
    additional header lines (ints, floats or strings).
    """
    W = np.asarray(weights, dtype=float)
    stack = W[None, ...] if W.ndim == 2 else W
    if stack.ndim != 3 or stack.shape[2] != config.d + 2:
        raise ValueError(f"bad weight shape {W.shape}")
    lines = ["# ngdbench weights"]
    lines += _config_header_lines(config)
    lines.append(f"M = {stack.shape[1]}")
    lines.append(f"snapshots = {stack.shape[0]}")
    for key, val in (extra or {}).items():
        sval = FLOAT_FMT % val if isinstance(val, float) else str(val)
        lines.append(f"{key} = {sval}")
    lines.append("blocks:")
    for snap in stack:
        lines += _weights_block_lines(snap)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path):
    """Read weights written by save_weights -> (config, stack (S, M, d+2))."""
    header, blocks = _parse_header_and_blocks(path, "weights")
    config = _config_from_header(header)
    M = int(header["M"])
    S = int(header.get("snapshots", 1))
    W = np.asarray(blocks, dtype=float)
    if W.shape != (S * M, config.d + 2):
        raise ValueError(f"{path}: block shape {W.shape} does not match header")
    return config, W.reshape(S, M, config.d + 2)
