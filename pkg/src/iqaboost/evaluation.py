"""Logistic score mapping, accuracy/linearity/ranking criteria, correlation
significance and seeded k-fold plans."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.special import expit
from scipy.stats import norm, rankdata

from .errors import DegenerateInputError, ShapeError
from .optim import LeastSquaresProblem, LMOptions, lm_fit


# -- logistic mapping -------------------------------------------------------

# Past ~50 steps the fit only sharpens the sigmoid into a step over noise.
LOGISTIC_LM_OPTIONS = LMOptions(max_iters=50)

@dataclass(frozen=True)
class LogisticFit:
    beta: tuple  # (b1, b2, b3, b4, b5)

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        if len(beta) != 5 or not all(math.isfinite(b) for b in beta):
            raise ValueError("beta must hold five finite values")
        object.__setattr__(self, "beta", beta)


def logistic_curve(beta, v0):
    """b1*(1/2 - 1/(1 + exp(b2*(v0 - b3)))) + b4*v0 + b5."""
    b1, b2, b3, b4, b5 = beta
    v0 = np.asarray(v0, dtype=np.float64)
    return b1 * (expit(b2 * (v0 - b3)) - 0.5) + b4 * v0 + b5


@njit(cache=True)
def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _logistic_residual(beta, x, y):
    b1, b2, b3, b4, b5 = beta[0], beta[1], beta[2], beta[3], beta[4]
    r = np.empty(x.size)
    for i in range(x.size):
        r[i] = b1 * (_sigmoid(b2 * (x[i] - b3)) - 0.5) + b4 * x[i] + b5 - y[i]
    return r


@njit(cache=True)
def _logistic_jacobian(beta, x):
    b1, b2, b3 = beta[0], beta[1], beta[2]
    J = np.empty((x.size, 5))
    for i in range(x.size):
        d = x[i] - b3
        s = _sigmoid(b2 * d)
        ds = b1 * s * (1.0 - s)
        J[i, 0] = s - 0.5
        J[i, 1] = ds * d
        J[i, 2] = -b2 * ds
        J[i, 3] = x[i]
        J[i, 4] = 1.0
    return J


def _logistic_problem(x, y, theta0):
    return LeastSquaresProblem(
        lambda beta: _logistic_residual(beta, x, y),
        lambda beta: _logistic_jacobian(beta, x),
        theta0,
    )


def logistic_starts(x, y):
    """Initial guesses: three centres with the trend's slope sign, plus an identity start."""
    sd = x.std()
    slope = float(np.cov(x, y, bias=True)[0, 1] / x.var())
    b2 = (1.0 if slope >= 0 else -1.0) / sd
    starts = [[np.ptp(y), b2, b3, slope, y.mean()] for b3 in (x.min(), np.median(x), x.max())]
    starts.append([0.0, 1.0 / sd, np.median(x), 1.0, 0.0])
    return [np.array(s, dtype=np.float64) for s in starts]


def _to_unit(beta, mx, sx, my, sy):
    b1, b2, b3, b4, b5 = beta
    return np.array([b1 / sy, b2 * sx, (b3 - mx) / sx, b4 * sx / sy, (b5 + b4 * mx - my) / sy])


def _from_unit(u, mx, sx, my, sy):
    u1, u2, u3, u4, u5 = u
    b4 = u4 * sy / sx
    return (u1 * sy, u2 / sx, mx + sx * u3, b4, my + sy * u5 - b4 * mx)


def fit_logistic_map(objective, subjective, lm_options: LMOptions | None = None) -> LogisticFit:
    """Least-squares fit of the five-parameter logistic, best of several starts.

    The fit runs on z-scored scores (an exact reparameterization) so that the
    isotropic LM damping sees comparably scaled parameters.
    """
    x = np.asarray(objective, dtype=np.float64).ravel()
    y = np.asarray(subjective, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 5:
        raise DegenerateInputError(f"need at least 5 points to fit the mapping, got {x.size}")
    if x.std() == 0:
        raise DegenerateInputError("objective scores are constant")

    mx, sx = x.mean(), x.std()
    my, sy = y.mean(), y.std()
    if sy == 0:
        sy = 1.0
    xz, yz = (x - mx) / sx, (y - my) / sy
    if lm_options is None:
        lm_options = LOGISTIC_LM_OPTIONS
    best_cost, best = np.inf, None
    for theta0 in logistic_starts(x, y):
        res = lm_fit(_logistic_problem(xz, yz, _to_unit(theta0, mx, sx, my, sy)), lm_options)
        if res.final_cost < best_cost:
            best_cost, best = res.final_cost, res.theta
    return LogisticFit(_from_unit(best, mx, sx, my, sy))


def apply_logistic_map(fit: LogisticFit, v0):
    out = logistic_curve(fit.beta, v0)
    return float(out) if np.ndim(out) == 0 else out


# -- criteria ---------------------------------------------------------------

def _pair(x, y):
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"length mismatch: {x.size} vs {y.size}")
    return x, y


def rmse(x, y) -> float:
    x, y = _pair(x, y)
    if x.size < 1:
        raise ShapeError("rmse of empty vectors")
    d = x - y
    return math.sqrt(float(d @ d) / x.size)


def plcc(x, y) -> float:
    x, y = _pair(x, y)
    if x.size < 3:
        raise DegenerateInputError("PLCC needs at least 3 samples")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise DegenerateInputError("PLCC undefined for zero-spread input")
    return min(1.0, max(-1.0, float(dx @ dy) / (sx * sy)))


def srcc(x, y) -> float:
    """Spearman coefficient as the Pearson correlation of average ranks."""
    x, y = _pair(x, y)
    if x.size < 3:
        raise DegenerateInputError("SRCC needs at least 3 samples")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInputError("SRCC undefined for all-equal input")
    return plcc(rankdata(x), rankdata(y))


@dataclass(frozen=True)
class CriterionResult:
    rmse: float
    plcc: float | None
    srcc: float | None
    n: int


def evaluate_criteria(predicted, subjective, mapped=None) -> CriterionResult:
    """RMSE and PLCC on ``mapped`` (defaults to ``predicted``), SRCC on ``predicted``."""
    predicted, subjective = _pair(predicted, subjective)
    mapped = predicted if mapped is None else np.asarray(mapped, dtype=np.float64)
    n = predicted.size
    if n < 3:
        return CriterionResult(rmse(mapped, subjective), None, None, n)
    return CriterionResult(rmse(mapped, subjective), plcc(mapped, subjective),
                           srcc(predicted, subjective), n)


# -- significance -----------------------------------------------------------

def _check_sig_args(r, n):
    if n <= 3:
        raise DegenerateInputError(f"significance test needs n >= 4, got {n}")
    if not abs(r) < 1:
        raise DegenerateInputError(f"correlation {r} must lie strictly inside (-1, 1)")


def significance_diff(r1: float, r2: float, n: int, alpha: float = 0.05):
    """Two-tailed Fisher-z test for a difference of two correlations on n samples."""
    _check_sig_args(r1, n)
    _check_sig_args(r2, n)
    z = (math.atanh(r1) - math.atanh(r2)) / math.sqrt(2.0 / (n - 3))
    return abs(z) > norm.ppf(1.0 - alpha / 2.0), z


def significance_threshold(r_base: float, n: int, alpha: float = 0.05, tol: float = 1e-6) -> float:
    """Smallest correlation significantly above ``r_base``, by bisection."""
    _check_sig_args(r_base, n)
    lo, hi = r_base, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid >= 1.0 or significance_diff(mid, r_base, n, alpha)[0]:
            hi = mid
        else:
            lo = mid
    return hi


# -- fold plans -------------------------------------------------------------

def hash64(*parts) -> int:
    """Stable 64-bit hash of ints/strings (independent of PYTHONHASHSEED)."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, (int, np.integer)):
            h.update(b"i" + struct.pack("<q", int(p)))
        else:
            raw = str(p).encode("utf-8")
            h.update(b"s" + struct.pack("<q", len(raw)) + raw)
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class FoldPlan:
    run_index: int
    seed: int
    k: int
    assignment: np.ndarray  # fold label per stimulus index

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != fold)

    def fold_sizes(self) -> list[int]:
        return np.bincount(self.assignment, minlength=self.k).tolist()


def make_fold_plan(n: int, k: int, run_index: int, master_seed: int, stream: str = "") -> FoldPlan:
    """Seeded shuffle of 0..n-1 dealt round-robin into k folds."""
    if k < 2:
        raise DegenerateInputError("k must be at least 2")
    if n < k:
        raise DegenerateInputError(f"cannot split {n} stimuli into {k} folds")
    seed = hash64(master_seed, stream, run_index)
    perm = np.random.default_rng(seed).permutation(n)
    assignment = np.empty(n, dtype=np.int64)
    assignment[perm] = np.arange(n) % k
    assignment.setflags(write=False)
    return FoldPlan(run_index, seed, k, assignment)
