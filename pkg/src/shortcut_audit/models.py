"""Small numpy model zoo behind one fit/predict interface.

Every family is deterministic given ``(spec, X, y)``: training rows are put
into a canonical order before fitting, so the input row order never matters,
and the SGD-style families draw their batch order from the PredictorSpec seed.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.optimize import minimize

from .dataset import CategoricalSeries

FAMILIES = ("logistic_regression", "decision_tree", "naive_bayes", "mlp")

DEFAULT_HYPERPARAMETERS: dict[str, dict[str, Any]] = {
    "logistic_regression": {"solver": "lbfgs", "lr": 0.1, "epochs": 500, "l2": 1e-4, "class_weight": "balanced"},
    "decision_tree": {"max_depth": 12, "min_leaf": 5, "class_weight": None},
    "naive_bayes": {"var_smoothing": 1e-9, "alpha": 1.0, "class_weight": None},
    "mlp": {"hidden": 64, "optimizer": "adam", "lr": 0.01, "epochs": 30, "batch_size": 64, "l2": 0.0,
            "class_weight": "balanced"},
}

_CHUNK_ELEMS = 4_000_000


@dataclass(frozen=True)
class PredictorSpec:
    family: str
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown model family {self.family!r}; choose from {FAMILIES}")
        defaults = DEFAULT_HYPERPARAMETERS[self.family]
        unknown = sorted(set(self.hyperparameters) - set(defaults))
        if unknown:
            raise ValueError(f"{self.family}: unknown hyperparameters {unknown}")
        cw = self.hyperparameters.get("class_weight", defaults["class_weight"])
        if cw not in (None, "balanced"):
            raise ValueError("class_weight must be None or 'balanced'")
        if self.hyperparameters.get("solver", "lbfgs") not in ("lbfgs", "gd"):
            raise ValueError("solver must be 'lbfgs' or 'gd'")
        if self.hyperparameters.get("optimizer", "adam") not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        object.__setattr__(self, "hyperparameters", {**defaults, **dict(self.hyperparameters)})

    def with_seed(self, seed: int) -> "PredictorSpec":
        return PredictorSpec(self.family, dict(self.hyperparameters), int(seed))

    def with_params(self, **kw) -> "PredictorSpec":
        return PredictorSpec(self.family, {**self.hyperparameters, **kw}, self.seed)


class FittedModel:
    """Common surface of trained models; concrete families fill in ``_proba``."""

    has_representation = False

    def __init__(self, spec: PredictorSpec, n_classes: int, n_features: int, present: np.ndarray):
        self.spec = spec
        self.n_classes = int(n_classes)
        self.n_features = int(n_features)
        self.present = _frozen(present.astype(bool))

    def _check(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} feature columns, got shape {X.shape}")
        return X

    def predict_proba(self, X) -> np.ndarray:
        return self._proba(self._check(X))

    def predict(self, X) -> np.ndarray:
        # np.argmax returns the first maximum, i.e. ties go to the lowest code
        return np.argmax(self.predict_proba(X), axis=1).astype(np.int64)

    def representation(self, X) -> np.ndarray:
        raise TypeError(f"{self.spec.family} models do not expose a representation")

    def parameters(self) -> dict[str, np.ndarray]:
        return {}

    def parameter_hash(self) -> str:
        h = hashlib.sha256()
        for k, v in sorted(self.parameters().items()):
            h.update(k.encode())
            h.update(np.ascontiguousarray(v).tobytes())
        return h.hexdigest()

    def _proba(self, X: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _masked_softmax(logits: np.ndarray, present: np.ndarray) -> np.ndarray:
    logits = np.where(present[None, :], logits, -np.inf)
    return _softmax(logits)


def _sample_weights(y: np.ndarray, n_classes: int, mode: str | None) -> np.ndarray:
    if mode is None:
        return np.ones(y.size)
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    n_present = np.count_nonzero(counts)
    cw = np.divide(y.size, n_present * counts, out=np.zeros_like(counts), where=counts > 0)
    return cw[y]


def _standardizer(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std == 0] = 1.0
    return mean, std


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # lexsort treats the last key as primary
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


# --------------------------------------------------------------------------
# logistic regression


class LogisticModel(FittedModel):
    def __init__(self, spec, n_classes, n_features, present, W, b, mean, std):
        super().__init__(spec, n_classes, n_features, present)
        self.W, self.b = _frozen(W), _frozen(b)
        self.mean, self.std = _frozen(mean), _frozen(std)

    @classmethod
    def from_weights(cls, W, b) -> "LogisticModel":
        """Wrap fixed weights (``D x C``) with no feature scaling."""
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        d, c = W.shape
        spec = PredictorSpec("logistic_regression")
        return cls(spec, c, d, np.ones(c, bool), W, b, np.zeros(d), np.ones(d))

    def _proba(self, X):
        return _masked_softmax(((X - self.mean) / self.std) @ self.W + self.b, self.present)

    def parameters(self):
        return {"W": self.W, "b": self.b, "mean": self.mean, "std": self.std}


def _logistic_loss(theta, Xs, Y, ws, present, l2):
    d, C = Xs.shape[1], Y.shape[1]
    W, b = theta[:d * C].reshape(d, C), theta[d * C:]
    P = _masked_softmax(Xs @ W + b, present)
    with np.errstate(divide="ignore"):
        logp = np.log(np.where(Y > 0, P, 1.0))
    loss = -(ws[:, None] * Y * logp).sum() + 0.5 * l2 * (W ** 2).sum()
    G = (P - Y) * ws[:, None]
    grad = np.concatenate([(Xs.T @ G + l2 * W).ravel(), G.sum(axis=0)])
    return loss, grad


def _fit_logistic(spec, X, y, C, present, w):
    """Weighted multinomial logistic regression on standardized features.

    ``lbfgs`` minimizes the loss with at most ``epochs`` quasi-Newton steps;
    ``gd`` takes ``epochs`` full-batch gradient steps of size ``lr``.
    """
    hp = spec.hyperparameters
    mean, std = _standardizer(X)
    Xs = (X - mean) / std
    n, d = Xs.shape
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    ws = w / w.sum()
    l2 = hp["l2"]
    if hp["solver"] == "lbfgs":
        res = minimize(_logistic_loss, np.zeros(d * C + C), args=(Xs, Y, ws, present, l2), jac=True,
                       method="L-BFGS-B", options={"maxiter": int(hp["epochs"])})
        W, b = res.x[:d * C].reshape(d, C).copy(), res.x[d * C:].copy()
        return LogisticModel(spec, C, d, present, W, b, mean, std)
    W = np.zeros((d, C))
    b = np.zeros(C)
    lr = hp["lr"]
    for _ in range(int(hp["epochs"])):
        P = _masked_softmax(Xs @ W + b, present)
        G = (P - Y) * ws[:, None]
        W -= lr * (Xs.T @ G + l2 * W)
        b -= lr * G.sum(axis=0)
    return LogisticModel(spec, C, d, present, W, b, mean, std)


# --------------------------------------------------------------------------
# CART decision tree


class TreeModel(FittedModel):
    def __init__(self, spec, n_classes, n_features, present, feature, threshold, left, right, value):
        super().__init__(spec, n_classes, n_features, present)
        self.feature, self.threshold = _frozen(feature), _frozen(threshold)
        self.left, self.right, self.value = _frozen(left), _frozen(right), _frozen(value)

    @property
    def n_nodes(self) -> int:
        return int(self.feature.size)

    def apply(self, X) -> np.ndarray:
        X = self._check(X)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            f = self.feature[node]
            inner = np.flatnonzero(f >= 0)
            if inner.size == 0:
                return node
            nd = node[inner]
            go_left = X[inner, f[inner]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def _proba(self, X):
        return self.value[self.apply(X)]

    def parameters(self):
        return {"feature": self.feature, "threshold": self.threshold, "left": self.left,
                "right": self.right, "value": self.value}


def _best_split(Xn: np.ndarray, Wy: np.ndarray, min_leaf: int):
    """Lowest weighted Gini split of one node: (gini, feature, threshold) or None."""
    n, d = Xn.shape
    C = Wy.shape[1]
    best = None
    lo, hi = min_leaf - 1, n - min_leaf - 1  # split after sorted position i
    if hi < lo:
        return None
    total = Wy.sum(axis=0)
    wtot = total.sum()
    chunk = max(1, _CHUNK_ELEMS // max(1, n * C))
    for f0 in range(0, d, chunk):
        f1 = min(d, f0 + chunk)
        order = np.argsort(Xn[:, f0:f1], axis=0, kind="stable")
        xs = np.take_along_axis(Xn[:, f0:f1], order, axis=0)
        cum = np.cumsum(Wy[order], axis=0)[lo:hi + 1]  # (m, nf, C)
        wl = cum.sum(axis=2)
        wr = wtot - wl
        right = total - cum
        with np.errstate(divide="ignore", invalid="ignore"):
            gini = (wl - (cum ** 2).sum(axis=2) / wl) + (wr - (right ** 2).sum(axis=2) / wr)
        valid = (xs[lo:hi + 1] < xs[lo + 1:hi + 2]) & (wl > 0) & (wr > 0)
        gini = np.where(valid, gini, np.inf)
        # first minimum in (feature, position) order
        flat = np.argmin(gini.T)
        fi, pos = divmod(int(flat), gini.shape[0])
        g = gini[pos, fi]
        if np.isfinite(g) and (best is None or g < best[0]):
            a, b = xs[lo + pos, fi], xs[lo + pos + 1, fi]
            thr = 0.5 * (a + b)
            if not (a <= thr < b):
                thr = a
            best = (float(g), f0 + fi, float(thr))
    return best


def _fit_tree(spec, X, y, C, present, w):
    hp = spec.hyperparameters
    max_depth, min_leaf = int(hp["max_depth"]), int(hp["min_leaf"])
    n, d = X.shape
    Wy = np.zeros((n, C))
    Wy[np.arange(n), y] = w
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        tot = Wy[idx].sum(axis=0)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(tot / tot.sum())
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or idx.size < 2 * min_leaf:
            continue
        tot = Wy[idx].sum(axis=0)
        if np.count_nonzero(tot) <= 1:
            continue
        wsum = tot.sum()
        parent = wsum - (tot ** 2).sum() / wsum
        split = _best_split(X[idx], Wy[idx], min_leaf)
        if split is None or split[0] >= parent - 1e-12 * wsum:
            continue
        _, f, thr = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # push right first so the left subtree is numbered first
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return TreeModel(spec, C, d, present, np.array(feature, np.int64), np.array(threshold),
                     np.array(left, np.int64), np.array(right, np.int64), np.array(value))


# --------------------------------------------------------------------------
# naive Bayes: Bernoulli for 0/1 columns, Gaussian otherwise


class NaiveBayesModel(FittedModel):
    def __init__(self, spec, n_classes, n_features, present, log_prior, binary, theta, var, log_p1, log_p0):
        super().__init__(spec, n_classes, n_features, present)
        self.log_prior, self.binary = _frozen(log_prior), _frozen(binary)
        self.theta, self.var = _frozen(theta), _frozen(var)
        self.log_p1, self.log_p0 = _frozen(log_p1), _frozen(log_p0)

    def _proba(self, X):
        jll = np.tile(self.log_prior, (X.shape[0], 1))
        g = ~self.binary
        if g.any():
            Xg = X[:, g]
            th, var = self.theta[:, g], self.var[:, g]
            jll += -0.5 * np.log(2 * np.pi * var).sum(axis=1)[None, :]
            jll += -0.5 * (((Xg[:, None, :] - th[None]) ** 2) / var[None]).sum(axis=2)
        if self.binary.any():
            Xb = X[:, self.binary]
            jll += Xb @ self.log_p1[:, self.binary].T + (1 - Xb) @ self.log_p0[:, self.binary].T
        return _masked_softmax(jll, self.present)

    def parameters(self):
        return {"log_prior": self.log_prior, "theta": self.theta, "var": self.var,
                "log_p1": self.log_p1, "log_p0": self.log_p0}


def _fit_naive_bayes(spec, X, y, C, present, w):
    hp = spec.hyperparameters
    n, d = X.shape
    counts = np.bincount(y, minlength=C).astype(np.float64)
    with np.errstate(divide="ignore"):
        if hp["class_weight"] == "balanced":
            log_prior = np.where(present, -np.log(present.sum()), -np.inf)
        else:
            log_prior = np.log(counts / n)
    binary = np.all((X == 0) | (X == 1), axis=0)
    theta = np.zeros((C, d))
    var = np.ones((C, d))
    log_p1 = np.zeros((C, d))
    log_p0 = np.zeros((C, d))
    eps = hp["var_smoothing"] * max(float(X.var(axis=0).max()), 1.0)
    alpha = hp["alpha"]
    for c in np.flatnonzero(present):
        Xc = X[y == c]
        theta[c] = Xc.mean(axis=0)
        var[c] = Xc.var(axis=0) + eps
        p1 = (Xc[:, binary].sum(axis=0) + alpha) / (Xc.shape[0] + 2 * alpha)
        log_p1[c, binary], log_p0[c, binary] = np.log(p1), np.log1p(-p1)
    return NaiveBayesModel(spec, C, d, present, log_prior, binary, theta, var, log_p1, log_p0)


# --------------------------------------------------------------------------
# one-hidden-layer tanh MLP


class MLPModel(FittedModel):
    has_representation = True

    def __init__(self, spec, n_classes, n_features, present, W1, b1, W2, b2, mean, std):
        super().__init__(spec, n_classes, n_features, present)
        self.W1, self.b1, self.W2, self.b2 = _frozen(W1), _frozen(b1), _frozen(W2), _frozen(b2)
        self.mean, self.std = _frozen(mean), _frozen(std)

    @property
    def hidden_width(self) -> int:
        return int(self.W1.shape[1])

    def representation(self, X) -> np.ndarray:
        """Post-activation hidden layer (the input to the output layer)."""
        X = self._check(X)
        return np.tanh(((X - self.mean) / self.std) @ self.W1 + self.b1)

    def head(self, R: np.ndarray) -> np.ndarray:
        """Output layer applied to a representation; recomposes ``predict_proba``."""
        return _masked_softmax(R @ self.W2 + self.b2, self.present)

    def _proba(self, X):
        return self.head(self.representation(X))

    def parameters(self):
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2, "mean": self.mean, "std": self.std}


def mlp_loss_and_grads(params: dict, X: np.ndarray, Y: np.ndarray, w: np.ndarray, present=None, l2: float = 0.0):
    """Weighted softmax cross-entropy of the MLP and its analytic gradients.

    ``X`` is the already-standardized batch and ``Y`` its one-hot targets.
    """
    W1, b1, W2, b2 = params["W1"], params["b1"], params["W2"], params["b2"]
    if present is None:
        present = np.ones(W2.shape[1], dtype=bool)
    H = np.tanh(X @ W1 + b1)
    P = _masked_softmax(H @ W2 + b2, present)
    ws = w / w.sum()
    with np.errstate(divide="ignore"):
        logp = np.where(Y > 0, np.log(np.where(Y > 0, P, 1.0)), 0.0)
    loss = -(ws[:, None] * Y * logp).sum() + 0.5 * l2 * ((W1 ** 2).sum() + (W2 ** 2).sum())
    dlog = (P - Y) * ws[:, None]
    dW2 = H.T @ dlog + l2 * W2
    db2 = dlog.sum(axis=0)
    dZ = (dlog @ W2.T) * (1.0 - H ** 2)
    dW1 = X.T @ dZ + l2 * W1
    db1 = dZ.sum(axis=0)
    return float(loss), {"W1": dW1, "b1": db1, "W2": dW2, "b2": db2}


def _fit_mlp(spec, X, y, C, present, w):
    hp = spec.hyperparameters
    rng = np.random.default_rng(spec.seed)
    mean, std = _standardizer(X)
    Xs = (X - mean) / std
    n, d = Xs.shape
    h = int(hp["hidden"])
    params = {
        "W1": rng.uniform(-1, 1, (d, h)) / np.sqrt(max(d, 1)),
        "b1": np.zeros(h),
        "W2": rng.uniform(-1, 1, (h, C)) / np.sqrt(h),
        "b2": np.zeros(C),
    }
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    bs, lr, l2 = int(hp["batch_size"]), hp["lr"], hp["l2"]
    adam = hp["optimizer"] == "adam"
    b1, b2, eps = 0.9, 0.999, 1e-8
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(v) for k, v in params.items()}
    t = 0
    for _ in range(int(hp["epochs"])):
        perm = rng.permutation(n)
        for s in range(0, n, bs):
            bi = perm[s:s + bs]
            _, g = mlp_loss_and_grads(params, Xs[bi], Y[bi], w[bi], present, l2)
            t += 1
            for k in params:
                if adam:
                    m[k] = b1 * m[k] + (1 - b1) * g[k]
                    v[k] = b2 * v[k] + (1 - b2) * g[k] ** 2
                    step = lr * np.sqrt(1 - b2 ** t) / (1 - b1 ** t)
                    params[k] -= step * m[k] / (np.sqrt(v[k]) + eps)
                else:
                    params[k] -= lr * g[k]
    return MLPModel(spec, C, d, present, params["W1"], params["b1"], params["W2"], params["b2"], mean, std)


_FITTERS = {
    "logistic_regression": _fit_logistic,
    "decision_tree": _fit_tree,
    "naive_bayes": _fit_naive_bayes,
    "mlp": _fit_mlp,
}


def fit(spec: PredictorSpec, X, y, n_classes: int | None = None) -> FittedModel:
    """Train one model. ``y`` is a :class:`CategoricalSeries` or an integer code vector.

    Classes that never occur in ``y`` keep zero probability at prediction time.
    """
    if isinstance(y, CategoricalSeries):
        codes, C = y.codes, y.n_categories
    else:
        codes = np.asarray(y, dtype=np.int64)
        C = int(codes.max()) + 1 if codes.size else 1
    if n_classes is not None:
        C = int(n_classes)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != codes.size:
        raise ValueError("X must be an N x D matrix aligned with y")
    n = codes.size
    if n < 1 or C < 1:
        raise ValueError("need at least one training row and one class")
    if C > n:
        raise ValueError(f"class count {C} exceeds training rows {n}")
    if codes.min() < 0 or codes.max() >= C:
        raise ValueError("label codes out of range")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    order = _canonical_order(X, codes)
    X, codes = np.ascontiguousarray(X[order]), codes[order]
    present = np.bincount(codes, minlength=C) > 0
    w = _sample_weights(codes, C, spec.hyperparameters["class_weight"])
    return _FITTERS[spec.family](spec, X, codes, C, present, w)
