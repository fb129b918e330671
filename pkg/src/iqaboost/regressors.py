"""Boosting learners: a one-hidden-layer tanh network trained with
Levenberg-Marquardt, and a linear-kernel epsilon-SVR solved by SMO."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import ConvergenceError, DegenerateInputError, NumericError, ShapeError
from .optim import LeastSquaresProblem, LMOptions, lm_fit

MODEL_FORMAT_VERSION = 1

SVR_DEFAULT_C = 1.0
SVR_DEFAULT_EPSILON = 0.1
SVR_DEFAULT_TOL = 1e-3


def _as_matrix(X, name="X"):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {X.shape}")
    return X


def _fit_standardization(X, y):
    x_mean = X.mean(axis=0)
    x_std = X.std(axis=0)
    bad = np.flatnonzero(x_std == 0)
    if bad.size:
        raise DegenerateInputError(f"feature column {int(bad[0])} is constant")
    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std == 0.0:
        y_std = 1.0
    return x_mean, x_std, y_mean, y_std


def _check_inputs(X, y):
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite training inputs")
    return X, y


def _prep_predict(x, input_dim):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != input_dim:
        raise ShapeError(f"expected {input_dim} features, got shape {x.shape}")
    return X, single


# -- neural network ---------------------------------------------------------

@dataclass
class NNModel:
    input_dim: int
    hidden_dim: int
    W1: np.ndarray  # (H, m)
    b1: np.ndarray  # (H,)
    W2: np.ndarray  # (H,)
    b2: float
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float
    train_status: str = field(default="", compare=False)

    kind = "nn"

    def to_json(self) -> dict:
        return {
            "format": "iqaboost.nn",
            "version": MODEL_FORMAT_VERSION,
            "input_dim": self.input_dim,
            "hidden_dim": self.hidden_dim,
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.tolist(),
            "b2": float(self.b2),
            "input_standardization": {"mean": self.x_mean.tolist(), "std": self.x_std.tolist()},
            "target_scaling": {"mean": self.y_mean, "std": self.y_std},
        }

    @classmethod
    def from_json(cls, d: dict) -> "NNModel":
        if d.get("format") != "iqaboost.nn" or d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not a version-1 NN model document")
        return cls(
            int(d["input_dim"]), int(d["hidden_dim"]),
            np.array(d["W1"], dtype=np.float64).reshape(d["hidden_dim"], d["input_dim"]),
            np.array(d["b1"], dtype=np.float64),
            np.array(d["W2"], dtype=np.float64),
            float(d["b2"]),
            np.array(d["input_standardization"]["mean"], dtype=np.float64),
            np.array(d["input_standardization"]["std"], dtype=np.float64),
            float(d["target_scaling"]["mean"]),
            float(d["target_scaling"]["std"]),
        )


def _unpack(theta, m, H):
    i = H * m
    W1 = theta[:i].reshape(H, m)
    b1 = theta[i:i + H]
    W2 = theta[i + H:i + 2 * H]
    b2 = theta[i + 2 * H]
    return W1, b1, W2, b2


def init_nn_params(m: int, hidden_dim: int, seed: int) -> np.ndarray:
    """Uniform in +-1/sqrt(fan_in), drawn from a Philox (counter-based) stream."""
    rng = np.random.Generator(np.random.Philox(seed))
    a1 = 1.0 / np.sqrt(m)
    a2 = 1.0 / np.sqrt(hidden_dim)
    W1 = rng.uniform(-a1, a1, size=(hidden_dim, m))
    b1 = rng.uniform(-a1, a1, size=hidden_dim)
    W2 = rng.uniform(-a2, a2, size=hidden_dim)
    b2 = rng.uniform(-a2, a2)
    return np.concatenate([W1.ravel(), b1, W2, [b2]])


def nn_problem(Z, t, hidden_dim, theta0) -> LeastSquaresProblem:
    """Residuals (prediction - target) of the standardized network."""
    n, m = Z.shape
    H = hidden_dim

    def residual(theta):
        W1, b1, W2, b2 = _unpack(theta, m, H)
        return np.tanh(Z @ W1.T + b1) @ W2 + b2 - t

    def jacobian(theta):
        W1, b1, W2, b2 = _unpack(theta, m, H)
        A = np.tanh(Z @ W1.T + b1)          # (n, H)
        D = (1.0 - A * A) * W2              # d yhat / d pre-activation
        J = np.empty((n, H * m + 2 * H + 1))
        J[:, :H * m] = (D[:, :, None] * Z[:, None, :]).reshape(n, H * m)
        J[:, H * m:H * m + H] = D
        J[:, H * m + H:H * m + 2 * H] = A
        J[:, -1] = 1.0
        return J

    return LeastSquaresProblem(residual, jacobian, theta0)


def train_nn(X, y, hidden_dim: int, seed: int, lm_options: LMOptions | None = None) -> NNModel:
    """Fit a tanh network on z-scored inputs/targets by LM on the squared error."""
    X, y = _check_inputs(X, y)
    n, m = X.shape
    if n < m + 1:
        raise DegenerateInputError(f"need at least {m + 1} samples for {m} features, got {n}")
    if hidden_dim < 1:
        raise ValueError("hidden_dim must be at least 1")
    x_mean, x_std, y_mean, y_std = _fit_standardization(X, y)
    Z = (X - x_mean) / x_std
    t = (y - y_mean) / y_std
    theta0 = init_nn_params(m, hidden_dim, seed)
    res = lm_fit(nn_problem(Z, t, hidden_dim, theta0), lm_options)
    W1, b1, W2, b2 = _unpack(res.theta, m, hidden_dim)
    return NNModel(m, hidden_dim, W1.copy(), b1.copy(), W2.copy(), float(b2),
                   x_mean, x_std, y_mean, y_std, res.status)


def predict_nn(model: NNModel, x):
    """Predict from raw scores; accepts one vector or a matrix of rows."""
    X, single = _prep_predict(x, model.input_dim)
    Z = (X - model.x_mean) / model.x_std
    out = np.tanh(Z @ model.W1.T + model.b1) @ model.W2 + model.b2
    out = out * model.y_std + model.y_mean
    return float(out[0]) if single else out


# -- support vector regression ----------------------------------------------

@dataclass
class SVRModel:
    w: np.ndarray
    b: float
    C: float
    epsilon: float
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    kind = "svr"

    @property
    def input_dim(self):
        return self.w.size

    def to_json(self) -> dict:
        return {
            "format": "iqaboost.svr",
            "version": MODEL_FORMAT_VERSION,
            "w": self.w.tolist(),
            "b": float(self.b),
            "C": self.C,
            "epsilon": self.epsilon,
            "input_standardization": {"mean": self.x_mean.tolist(), "std": self.x_std.tolist()},
            "target_scaling": {"mean": self.y_mean, "std": self.y_std},
        }

    @classmethod
    def from_json(cls, d: dict) -> "SVRModel":
        if d.get("format") != "iqaboost.svr" or d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not a version-1 SVR model document")
        return cls(
            np.array(d["w"], dtype=np.float64), float(d["b"]), float(d["C"]), float(d["epsilon"]),
            np.array(d["input_standardization"]["mean"], dtype=np.float64),
            np.array(d["input_standardization"]["std"], dtype=np.float64),
            float(d["target_scaling"]["mean"]),
            float(d["target_scaling"]["std"]),
        )


@dataclass
class SMOSolution:
    beta: np.ndarray        # alpha - alpha*, one per sample
    w: np.ndarray
    b: float
    iterations: int
    max_violation: float


def _kkt_gap(G, a, sign, C):
    """Maximal violating-pair gap m(a) - M(a) of the 2l-variable dual."""
    up = ((sign > 0) & (a < C)) | ((sign < 0) & (a > 0))
    low = ((sign > 0) & (a > 0)) | ((sign < 0) & (a < C))
    yg = -sign * G
    m_up = yg[up].max() if up.any() else -np.inf
    m_low = yg[low].min() if low.any() else np.inf
    return float(m_up - m_low)


@njit(cache=True)
def _smo_kernel(Z, t, C, epsilon, tol, max_iter):
    # variables 0..n-1 are alpha (sign +1), n..2n-1 are alpha* (sign -1)
    n, m = Z.shape
    L = 2 * n
    a = np.zeros(L)
    G = np.empty(L)
    QD = np.empty(n)
    for s in range(n):
        G[s] = epsilon - t[s]
        G[s + n] = epsilon + t[s]
        q = 0.0
        for k in range(m):
            q += Z[s, k] * Z[s, k]
        QD[s] = q
    ki = np.empty(n)
    kj = np.empty(n)
    tau = 1e-12
    it = 0
    gap = 0.0
    while True:
        # i: maximal violator in I_up; gmin over I_low; yg = -sign * G
        gmax = -np.inf
        gmin = np.inf
        i = -1
        for s in range(n):
            yg = -G[s]
            if a[s] < C and yg > gmax:
                gmax = yg
                i = s
            if a[s] > 0 and yg < gmin:
                gmin = yg
        for s in range(n, L):
            yg = G[s]
            if a[s] > 0 and yg > gmax:
                gmax = yg
                i = s
            if a[s] < C and yg < gmin:
                gmin = yg
        if i < 0 or gmin == np.inf:
            gap = 0.0
            break
        gap = gmax - gmin
        if gap <= tol:
            break
        if it >= max_iter:
            return a, G, it, gap, False
        it += 1
        ii = i - n if i >= n else i
        for s in range(n):
            acc = 0.0
            for k in range(m):
                acc += Z[s, k] * Z[ii, k]
            ki[s] = acc
        # j: member of I_low giving the largest second-order decrease
        j = -1
        best = np.inf
        qi = QD[ii]
        for s in range(n):
            if a[s] > 0:
                bij = gmax + G[s]
                if bij > 0:
                    quad = qi + QD[s] - 2.0 * ki[s]
                    if quad <= 0:
                        quad = tau
                    score = -(bij * bij) / quad
                    if score < best:
                        best = score
                        j = s
        for s in range(n):
            if a[s + n] < C:
                bij = gmax - G[s + n]
                if bij > 0:
                    quad = qi + QD[s] - 2.0 * ki[s]
                    if quad <= 0:
                        quad = tau
                    score = -(bij * bij) / quad
                    if score < best:
                        best = score
                        j = s + n
        if j < 0:
            break
        jj = j - n if j >= n else j
        yi = 1.0 if i < n else -1.0
        yj = 1.0 if j < n else -1.0
        Qij = yi * yj * ki[jj]
        old_i = a[i]
        old_j = a[j]
        if yi != yj:
            qc = QD[ii] + QD[jj] + 2.0 * Qij
            if qc <= 0:
                qc = tau
            delta = (-G[i] - G[j]) / qc
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            elif a[j] > C:
                a[j] = C
                a[i] = C + diff
        else:
            qc = QD[ii] + QD[jj] - 2.0 * Qij
            if qc <= 0:
                qc = tau
            delta = (G[i] - G[j]) / qc
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            elif a[j] < 0:
                a[j] = 0.0
                a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            elif a[i] < 0:
                a[i] = 0.0
                a[j] = total
        # gradient update; Q[s, v] = sign_s * sign_v * K[s mod n, v mod n]
        ci = yi * (a[i] - old_i)
        cj = yj * (a[j] - old_j)
        for s in range(n):
            acc = 0.0
            for k in range(m):
                acc += Z[s, k] * Z[jj, k]
            kj[s] = acc
        for s in range(n):
            dg = ci * ki[s] + cj * kj[s]
            G[s] += dg
            G[s + n] -= dg
    return a, G, it, gap, True


def smo_solve(Z, t, C, epsilon, tol=SVR_DEFAULT_TOL, max_passes=None) -> SMOSolution:
    """Linear-kernel epsilon-SVR dual by SMO.

    Works on the stacked variables a = [alpha, alpha*] of
    min 0.5 a'Qa + p'a  s.t.  sum(sign*a) = 0, 0 <= a <= C.
    The working pair is the maximal KKT violator plus the partner giving the
    largest second-order decrease, scanned in index order. One pass is n pair
    updates; the default budget is 10*n passes.
    """
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    n = Z.shape[0]
    if max_passes is None:
        max_passes = 10 * n
    max_iter = max_passes * n
    a, G, it, gap, ok = _smo_kernel(Z, t, float(C), float(epsilon), float(tol), max_iter)
    if not ok:
        raise ConvergenceError(
            f"SMO did not converge in {max_passes} passes (worst KKT violation {gap:.3g})",
            worst_violation=gap,
        )
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    beta = a[:n] - a[n:]
    return SMOSolution(beta, beta @ Z, -_rho(G, a, sign, C), it, max(gap, 0.0))


def _rho(G, a, sign, C):
    yG = sign * G
    at_ub = a >= C
    at_lb = a <= 0
    free = ~(at_ub | at_lb)
    if free.any():
        return float(yG[free].mean())
    ub_mask = (at_ub & (sign < 0)) | (at_lb & (sign > 0))
    lb_mask = (at_ub & (sign > 0)) | (at_lb & (sign < 0))
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    return float((ub + lb) / 2.0)


def svr_dual_objective(Z, t, beta, epsilon) -> float:
    """Dual objective (to be maximized) in the beta = alpha - alpha* form."""
    Z = np.asarray(Z, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    v = beta @ Z
    return float(-0.5 * v @ v + t @ beta - epsilon * np.abs(beta).sum())


def kkt_violation(Z, t, beta, C, epsilon) -> float:
    """Maximal violating-pair gap of a dual solution; zero or negative at optimum."""
    Z = np.asarray(Z, dtype=np.float64)
    n = Z.shape[0]
    a = np.concatenate([np.clip(beta, 0, None), np.clip(-beta, 0, None)])
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    f = Z @ (beta @ Z)
    G = np.concatenate([f + epsilon - t, -f + epsilon + t])
    return max(_kkt_gap(G, a, sign, C), 0.0)


def train_svr(X, y, C: float = SVR_DEFAULT_C, epsilon: float = SVR_DEFAULT_EPSILON,
              tol: float = SVR_DEFAULT_TOL, max_passes=None) -> SVRModel:
    X, y = _check_inputs(X, y)
    n = X.shape[0]
    if n < 2:
        raise DegenerateInputError("SVR needs at least two samples")
    if C <= 0 or epsilon < 0:
        raise ValueError("C must be positive and epsilon non-negative")
    x_mean, x_std, y_mean, y_std = _fit_standardization(X, y)
    Z = (X - x_mean) / x_std
    t = (y - y_mean) / y_std
    sol = smo_solve(Z, t, C, epsilon, tol, max_passes)
    return SVRModel(sol.w, sol.b, float(C), float(epsilon), x_mean, x_std, y_mean, y_std)


def predict_svr(model: SVRModel, x):
    X, single = _prep_predict(x, model.w.size)
    Z = (X - model.x_mean) / model.x_std
    out = (Z @ model.w + model.b) * model.y_std + model.y_mean
    return float(out[0]) if single else out


def predict(model, x):
    if isinstance(model, NNModel):
        return predict_nn(model, x)
    return predict_svr(model, x)


def model_to_json(model) -> str:
    return json.dumps(model.to_json(), indent=2)


def model_from_json(text: str):
    d = json.loads(text)
    if d.get("format") == "iqaboost.nn":
        return NNModel.from_json(d)
    if d.get("format") == "iqaboost.svr":
        return SVRModel.from_json(d)
    raise ValueError(f"unknown model format {d.get('format')!r}")
