"""Movement classifiers over feature rows: CART trees with exact split
search, random forest, gradient-boosted trees (level-wise and leaf-wise
growth presets), and a dual-coordinate-descent linear SVM baseline, all
behind one fit/predict interface."""

from __future__ import annotations

import heapq
import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

from .errors import DataError, ConfigError, FormatError, ModelStateError

MODEL_FORMAT_VERSION = 1

MODEL_KINDS = ("rf", "gbdt-level", "gbdt-leaf", "svm")

# legal hyperparameter ranges, checked at FitConfig construction
_LEGAL = {
    "n_trees": (1, 10_000),
    "max_depth": (1, 64),
    "n_leaves": (2, 4096),
    "rounds": (0, 10_000),
    "learning_rate": (1e-8, 1.0),
    "reg_lambda": (0.0, 1e6),
    "feature_fraction": (1e-6, 1.0),
    "subsample": (1e-6, 1.0),
    "C": (1e-8, 1e8),
    "tol": (0.0, 1.0),
    "max_iter": (1, 1_000_000),
}


@dataclass(frozen=True)
class FitConfig:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}; choose from {MODEL_KINDS}")
        for key, val in self.params.items():
            if key not in _LEGAL:
                raise ConfigError(f"unknown hyperparameter {key!r}")
            lo, hi = _LEGAL[key]
            if not (lo <= val <= hi):
                raise ConfigError(f"{key}={val} outside legal range [{lo}, {hi}]")
        if self.params.get("learning_rate", 1) <= 0:
            raise ConfigError("learning rate must be positive")


# ---------------------------------------------------------------------------
# trees: nodes as JSON-friendly nested lists
#   ["split", feature, threshold, left, right] | ["leaf", value]


def _leaf(value: float):
    return ["leaf", float(value)]


def _tree_predict(node, X: np.ndarray) -> np.ndarray:
    out = np.empty(len(X))
    stack = [(node, np.arange(len(X)))]
    while stack:
        nd, idx = stack.pop()
        if len(idx) == 0:
            continue
        if nd[0] == "leaf":
            out[idx] = nd[1]
        else:
            _, f, thr, left, right = nd
            go_left = X[idx, f] <= thr
            stack.append((left, idx[go_left]))
            stack.append((right, idx[~go_left]))
    return out


def _best_split_gini(X, y, feat_idx):
    """Exact Gini split over candidate features; thresholds are midpoints
    of adjacent distinct values. Returns (impurity, feature, threshold) or None."""
    n = len(y)
    best = None
    for f in feat_idx:
        v = X[:, f]
        order = np.argsort(v, kind="stable")
        vs, ys = v[order], y[order]
        valid = vs[:-1] < vs[1:]
        if not valid.any():
            continue
        left1 = np.cumsum(ys)[:-1]
        left_n = np.arange(1, n, dtype=np.float64)
        right_n = n - left_n
        right1 = np.sum(ys) - left1
        pl = left1 / left_n
        pr = right1 / right_n
        gini = (left_n * 2 * pl * (1 - pl) + right_n * 2 * pr * (1 - pr)) / n
        gini = np.where(valid, gini, np.inf)
        i = int(np.argmin(gini))
        if best is None or gini[i] < best[0] - 1e-15:
            best = (float(gini[i]), int(f), float((vs[i] + vs[i + 1]) / 2.0))
    return best


def _grow_gini_tree(X, y, rng, max_depth, feature_fraction):
    n_feat = X.shape[1]
    k = max(1, int(round(feature_fraction * n_feat)))

    def grow(idx, depth):
        ys = y[idx]
        p = float(ys.mean())
        if depth >= max_depth or p in (0.0, 1.0) or len(idx) < 2:
            return _leaf(p)
        if k < n_feat:
            feats = np.sort(rng.choice(n_feat, size=k, replace=False))
        else:
            feats = np.arange(n_feat)
        found = _best_split_gini(X[idx], ys, feats)
        if found is None:
            return _leaf(p)
        _, f, thr = found
        go_left = X[idx, f] <= thr
        if not go_left.any() or go_left.all():
            return _leaf(p)
        return ["split", f, thr, grow(idx[go_left], depth + 1),
                grow(idx[~go_left], depth + 1)]

    return grow(np.arange(len(y)), 0)


@dataclass
class ForestModel:
    config: FitConfig
    trees: list = field(default_factory=list)
    tree_seeds: list = field(default_factory=list)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if not self.trees:
            raise ModelStateError("forest not fitted")
        X = np.asarray(X, dtype=np.float64)
        return np.mean([_tree_predict(t, X) for t in self.trees], axis=0)


def fit_random_forest(X, y, cfg: FitConfig) -> ForestModel:
    """Seeded bootstrap per tree, Gini splits over per-node feature subsets."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise DataError("empty training data")
    if len(np.unique(y)) < 2:
        log.warning("random forest trained on single-class data")
    p = cfg.params
    n_trees = int(p.get("n_trees", 100))
    max_depth = int(p.get("max_depth", 8))
    feature_fraction = float(p.get("feature_fraction", 1.0 / 3.0))
    subsample = float(p.get("subsample", 1.0))
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_trees)
    trees = []
    for ss in seeds:
        rng = np.random.default_rng(ss)
        if subsample >= 1.0:
            idx = rng.integers(0, len(X), len(X))  # bootstrap
        else:
            idx = rng.choice(len(X), size=max(1, int(round(subsample * len(X)))),
                             replace=False)
        trees.append(_grow_gini_tree(X[idx], y[idx], rng, max_depth, feature_fraction))
    return ForestModel(config=cfg, trees=trees,
                       tree_seeds=[int(s.entropy) for s in seeds])


# ---------------------------------------------------------------------------
# gradient boosting on log-odds with second-order leaf weights


def _split_gain_stats(X, g, h, reg_lambda, feat_idx):
    """Best gain split for one node: gain = GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)."""
    n = len(g)
    G, H = float(g.sum()), float(h.sum())
    parent = G * G / (H + reg_lambda)
    best = None
    for f in feat_idx:
        v = X[:, f]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        valid = vs[:-1] < vs[1:]
        if not valid.any():
            continue
        gl = np.cumsum(g[order])[:-1]
        hl = np.cumsum(h[order])[:-1]
        gain = gl * gl / (hl + reg_lambda) + (G - gl) ** 2 / (H - hl + reg_lambda) - parent
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))
        if best is None or gain[i] > best[0] + 1e-15:
            best = (float(gain[i]), int(f), float((vs[i] + vs[i + 1]) / 2.0))
    return best


def _leaf_value(g, h, reg_lambda):
    # g holds negative gradients (residuals y - p); h the hessians p(1-p)
    return float(g.sum() / (h.sum() + reg_lambda))


def _grow_level_wise(X, g, h, reg_lambda, max_depth):
    feats = np.arange(X.shape[1])

    def grow(idx, depth):
        if depth >= max_depth or len(idx) < 2:
            return _leaf(_leaf_value(g[idx], h[idx], reg_lambda))
        found = _split_gain_stats(X[idx], g[idx], h[idx], reg_lambda, feats)
        if found is None or found[0] <= 1e-12:
            return _leaf(_leaf_value(g[idx], h[idx], reg_lambda))
        _, f, thr = found
        go_left = X[idx, f] <= thr
        return ["split", f, thr, grow(idx[go_left], depth + 1),
                grow(idx[~go_left], depth + 1)]

    return grow(np.arange(len(g)), 0)


def _grow_leaf_wise(X, g, h, reg_lambda, n_leaves):
    feats = np.arange(X.shape[1])
    root = _leaf(_leaf_value(g, h, reg_lambda))
    heap = []
    counter = 0

    def consider(node, idx):
        nonlocal counter
        if len(idx) < 2:
            return
        found = _split_gain_stats(X[idx], g[idx], h[idx], reg_lambda, feats)
        if found is not None and found[0] > 1e-12:
            heapq.heappush(heap, (-found[0], counter, node, idx, found))
            counter += 1

    consider(root, np.arange(len(g)))
    leaves = 1
    while heap and leaves < n_leaves:
        _, _, node, idx, (gain, f, thr) = heapq.heappop(heap)
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        left = _leaf(_leaf_value(g[li], h[li], reg_lambda))
        right = _leaf(_leaf_value(g[ri], h[ri], reg_lambda))
        node[:] = ["split", f, thr, left, right]
        leaves += 1
        consider(left, li)
        consider(right, ri)
    return root


@dataclass
class GbdtModel:
    config: FitConfig
    base_score: float = 0.0  # prior log-odds
    trees: list = field(default_factory=list)
    fitted: bool = False
    train_loss: list = field(default_factory=list)

    def decision(self, X: np.ndarray) -> np.ndarray:
        if not self.fitted:
            raise ModelStateError("gbdt not fitted")
        X = np.asarray(X, dtype=np.float64)
        eta = float(self.config.params.get("learning_rate", 0.1))
        z = np.full(len(X), self.base_score)
        for t in self.trees:
            z += eta * _tree_predict(t, X)
        return z

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision(X)))


def fit_gbdt(X, y, cfg: FitConfig) -> GbdtModel:
    """Logistic-loss boosting: each round fits a regression tree to residuals
    y - p with leaf value sum(g) / (sum(h) + lambda)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise DataError("empty training data")
    if len(np.unique(y)) < 2:
        log.warning("gbdt trained on single-class data")
    p = cfg.params
    rounds = int(p.get("rounds", 100))
    eta = float(p.get("learning_rate", 0.1))
    reg_lambda = float(p.get("reg_lambda", 1.0))
    leaf_wise = cfg.kind == "gbdt-leaf"
    n_leaves = int(p.get("n_leaves", 31))
    max_depth = int(p.get("max_depth", 5))

    prior = min(max(float(y.mean()), 1e-12), 1.0 - 1e-12)
    base = float(np.log(prior / (1.0 - prior)))
    model = GbdtModel(config=cfg, base_score=base, fitted=True)
    z = np.full(len(y), base)
    for _ in range(rounds):
        prob = 1.0 / (1.0 + np.exp(-z))
        g = y - prob
        h = prob * (1.0 - prob)
        if leaf_wise:
            tree = _grow_leaf_wise(X, g, h, reg_lambda, n_leaves)
        else:
            tree = _grow_level_wise(X, g, h, reg_lambda, max_depth)
        model.trees.append(tree)
        z += eta * _tree_predict(tree, X)
        pc = np.clip(1.0 / (1.0 + np.exp(-z)), 1e-12, 1 - 1e-12)
        model.train_loss.append(float(-np.mean(y * np.log(pc) + (1 - y) * np.log(1 - pc))))
    return model


# ---------------------------------------------------------------------------
# linear SVM via dual coordinate descent on the L1 hinge loss


@dataclass
class SvmModel:
    config: FitConfig
    w: np.ndarray | None = None  # includes bias as the last component
    mean: np.ndarray | None = None
    std: np.ndarray | None = None
    alpha: np.ndarray | None = None

    def _standardize(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    def decision(self, X: np.ndarray) -> np.ndarray:
        if self.w is None:
            raise ModelStateError("svm not fitted")
        Xs = self._standardize(X)
        return Xs @ self.w[:-1] + self.w[-1]

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        # sigmoid of the margin; ranking only, labels come from the sign
        return 1.0 / (1.0 + np.exp(-self.decision(X)))


def fit_linear_svm(X, y, cfg: FitConfig) -> SvmModel:
    """Standardize, then solve the L2-regularized hinge loss in the dual."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise DataError("empty training data")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError("linear SVM requires both classes in the training data")
    p = cfg.params
    C = float(p.get("C", 1.0))
    tol = float(p.get("tol", 1e-6))
    max_iter = int(p.get("max_iter", 1000))

    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xs = (X - mean) / std
    Xa = np.hstack([Xs, np.ones((len(Xs), 1))])  # bias via augmentation
    ys = np.where(y == 1, 1.0, -1.0)

    n = len(Xa)
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    qii = np.einsum("ij,ij->i", Xa, Xa)
    rng = np.random.default_rng(cfg.seed)
    for _ in range(max_iter):
        max_violation = 0.0
        for i in rng.permutation(n):
            grad = ys[i] * (Xa[i] @ w) - 1.0
            if alpha[i] <= 0:
                pg = min(grad, 0.0)
            elif alpha[i] >= C:
                pg = max(grad, 0.0)
            else:
                pg = grad
            max_violation = max(max_violation, abs(pg))
            if abs(pg) > 1e-14 and qii[i] > 0:
                new = min(max(alpha[i] - grad / qii[i], 0.0), C)
                if new != alpha[i]:
                    w += (new - alpha[i]) * ys[i] * Xa[i]
                    alpha[i] = new
        if max_violation < tol:
            break
    return SvmModel(config=cfg, w=w, mean=mean, std=std, alpha=alpha)


# ---------------------------------------------------------------------------
# unified interface and persistence


def fit_model(X, y, cfg: FitConfig):
    if cfg.kind == "rf":
        return fit_random_forest(X, y, cfg)
    if cfg.kind in ("gbdt-level", "gbdt-leaf"):
        return fit_gbdt(X, y, cfg)
    if cfg.kind == "svm":
        return fit_linear_svm(X, y, cfg)
    raise ConfigError(f"unknown model kind {cfg.kind!r}")


def predict_proba(model, X) -> np.ndarray:
    return model.predict_proba(np.asarray(X, dtype=np.float64))


def predict_label(model, X) -> np.ndarray:
    if isinstance(model, SvmModel):
        return (model.decision(X) >= 0).astype(np.int64)
    return (predict_proba(model, X) >= 0.5).astype(np.int64)


def _cfg_doc(cfg: FitConfig) -> dict:
    return {"kind": cfg.kind, "params": cfg.params, "seed": cfg.seed}


def model_to_doc(model) -> dict:
    doc = {"format_version": MODEL_FORMAT_VERSION, "config": _cfg_doc(model.config)}
    if isinstance(model, ForestModel):
        doc.update(kind="rf", trees=model.trees, tree_seeds=model.tree_seeds)
    elif isinstance(model, GbdtModel):
        doc.update(kind="gbdt", base_score=model.base_score, trees=model.trees)
    elif isinstance(model, SvmModel):
        doc.update(kind="svm", w=model.w.tolist(), mean=model.mean.tolist(),
                   std=model.std.tolist())
    else:
        raise ConfigError(f"cannot serialize {type(model).__name__}")
    return doc


def model_from_doc(doc: dict):
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise FormatError(f"unsupported model format {doc.get('format_version')}")
    cfg = FitConfig(**doc["config"])
    if doc["kind"] == "rf":
        return ForestModel(config=cfg, trees=doc["trees"], tree_seeds=doc["tree_seeds"])
    if doc["kind"] == "gbdt":
        return GbdtModel(config=cfg, base_score=doc["base_score"],
                         trees=doc["trees"], fitted=True)
    if doc["kind"] == "svm":
        return SvmModel(config=cfg, w=np.array(doc["w"]), mean=np.array(doc["mean"]),
                        std=np.array(doc["std"]))
    raise FormatError(f"unknown model kind {doc['kind']!r} in file")


def save_model(model, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_doc(model), f)


def load_model(path):
    with open(path, encoding="utf-8") as f:
        return model_from_doc(json.load(f))
