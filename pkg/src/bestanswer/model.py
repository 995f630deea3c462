"""CART-style decision tree and L2 logistic regression, plus model artifacts."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from bestanswer.dataset import Dataset, FeatureCase
from bestanswer.discretise import DirectionProfile

FORMAT_VERSION = 1
ARTIFACT_KIND = "bestanswer-model"


class ModelFormatError(ValueError):
    """Artifact bytes are corrupt, truncated or of an unsupported version."""


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = 10
    min_leaf: int = 20

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")


@dataclass(frozen=True)
class LogisticConfig:
    learning_rate: float = 0.5
    iterations: int = 500
    l2: float = 1e-3

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.learning_rate <= 0 or self.l2 < 0:
            raise ValueError("learning_rate must be > 0 and l2 >= 0")


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "decision_tree"
    tree: TreeConfig = field(default_factory=TreeConfig)
    logistic: LogisticConfig = field(default_factory=LogisticConfig)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("decision_tree", "logistic"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: Mapping) -> "ClassifierConfig":
        return cls(
            kind=doc.get("kind", "decision_tree"),
            tree=TreeConfig(**doc.get("tree", {})),
            logistic=LogisticConfig(**doc.get("logistic", {})),
            seed=int(doc.get("seed", 0)),
        )

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()[:16]


# --- decision tree ---------------------------------------------------------


def _gini(pos, n):
    p = pos / n
    return 2.0 * p * (1.0 - p)


class DecisionTree:
    """Binary CART tree grown on Gini impurity.

    Ties between candidate splits go to the lowest feature index, then the
    lowest threshold. Leaves predict the Laplace-smoothed positive fraction.
    """

    def __init__(self, max_depth: int | None = 10, min_leaf: int = 20):
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self._reset()

    def _reset(self):
        # parallel node arrays; feature == -1 marks a leaf
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.pos: list[int] = []
        self.count: list[int] = []

    def _best_split(self, X, y):
        n, d = X.shape
        total_pos = y.sum()
        parent = _gini(total_pos, n)
        best = None  # (gain, feature, threshold)
        sizes = np.arange(1, n)
        left_ok = (sizes >= self.min_leaf) & (n - sizes >= self.min_leaf)
        for j in range(d):
            order = np.argsort(X[:, j], kind="mergesort")
            xs = X[order, j]
            ys = y[order]
            left_pos = np.cumsum(ys)[:-1]
            valid = left_ok & (xs[:-1] < xs[1:])
            if not valid.any():
                continue
            n_left = sizes
            n_right = n - sizes
            right_pos = total_pos - left_pos
            pl = left_pos / n_left
            pr = right_pos / n_right
            child = (n_left * 2 * pl * (1 - pl) + n_right * 2 * pr * (1 - pr)) / n
            gain = np.where(valid, parent - child, -np.inf)
            i = int(np.argmax(gain))
            if best is None or gain[i] > best[0] + 1e-12:
                lo, hi = xs[i], xs[i + 1]
                thr = lo + (hi - lo) / 2.0
                if not lo <= thr < hi:
                    thr = lo
                best = (float(gain[i]), j, float(thr))
        return best

    def _add_node(self, pos, n):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.pos.append(int(pos))
        self.count.append(int(n))
        return len(self.feature) - 1

    def fit(self, X: np.ndarray, y: np.ndarray) -> "DecisionTree":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=np.int64)
        self._reset()
        stack = [(self._add_node(y.sum(), len(y)), np.arange(len(y)), 0)]
        while stack:
            node, idx, depth = stack.pop()
            pos, n = self.pos[node], self.count[node]
            if pos == 0 or pos == n or n < 2 * self.min_leaf:
                continue
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            split = self._best_split(X[idx], y[idx])
            if split is None:
                continue
            _, j, thr = split
            go_left = X[idx, j] <= thr
            li, ri = idx[go_left], idx[~go_left]
            self.feature[node] = j
            self.threshold[node] = thr
            self.left[node] = self._add_node(y[li].sum(), len(li))
            self.right[node] = self._add_node(y[ri].sum(), len(ri))
            stack.append((self.right[node], ri, depth + 1))
            stack.append((self.left[node], li, depth + 1))
        return self

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X), dtype=np.int64)
        for r, row in enumerate(X):
            node = 0
            while self.feature[node] >= 0:
                node = self.left[node] if row[self.feature[node]] <= self.threshold[node] else self.right[node]
            out[r] = node
        return out

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        leaves = self.apply(X)
        pos = np.asarray(self.pos, dtype=float)[leaves]
        cnt = np.asarray(self.count, dtype=float)[leaves]
        return (pos + 1.0) / (cnt + 2.0)

    @property
    def depth(self) -> int:
        def walk(node):
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0) if self.feature else 0

    def to_json(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "nodes": {
                "feature": self.feature,
                "threshold": self.threshold,
                "left": self.left,
                "right": self.right,
                "pos": self.pos,
                "count": self.count,
            },
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "DecisionTree":
        tree = cls(doc["max_depth"], doc["min_leaf"])
        nodes = doc["nodes"]
        tree.feature = [int(v) for v in nodes["feature"]]
        tree.threshold = [float(v) for v in nodes["threshold"]]
        tree.left = [int(v) for v in nodes["left"]]
        tree.right = [int(v) for v in nodes["right"]]
        tree.pos = [int(v) for v in nodes["pos"]]
        tree.count = [int(v) for v in nodes["count"]]
        n = len(tree.feature)
        if n == 0 or any(len(v) != n for v in nodes.values()):
            raise ModelFormatError("inconsistent tree node arrays")
        return tree


# --- logistic regression -----------------------------------------------------


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def logistic_loss(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> float:
    """Mean cross-entropy plus ``l2/2 * |w|^2``."""
    z = X @ w + b
    # log(1 + e^z) - y z, computed stably
    per_row = np.logaddexp(0.0, z) - y * z
    return float(per_row.mean() + 0.5 * l2 * (w @ w))


def logistic_gradient(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2: float) -> tuple[np.ndarray, float]:
    resid = sigmoid(X @ w + b) - y
    return X.T @ resid / len(y) + l2 * w, float(resid.mean())


class LogisticModel:
    """Full-batch gradient descent on standardised features."""

    def __init__(self, learning_rate: float = 0.5, iterations: int = 500, l2: float = 1e-3):
        self.learning_rate = learning_rate
        self.iterations = iterations
        self.l2 = l2
        self.mean = np.zeros(0)
        self.scale = np.ones(0)
        self.weights = np.zeros(0)
        self.bias = 0.0

    def _standardise(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LogisticModel":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        constant = std == 0
        self.scale = np.where(constant, 1.0, std)
        Z = self._standardise(X)
        Z[:, constant] = 0.0
        w = np.zeros(X.shape[1])
        b = 0.0
        for _ in range(self.iterations):
            gw, gb = logistic_gradient(w, b, Z, y, self.l2)
            w = w - self.learning_rate * gw
            b = b - self.learning_rate * gb
        w[constant] = 0.0
        self.weights, self.bias = w, float(b)
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        Z = self._standardise(np.atleast_2d(X))
        return sigmoid(Z @ self.weights + self.bias)

    def to_json(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "iterations": self.iterations,
            "l2": self.l2,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "weights": self.weights.tolist(),
            "bias": self.bias,
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "LogisticModel":
        m = cls(doc["learning_rate"], doc["iterations"], doc["l2"])
        m.mean = np.asarray(doc["mean"], dtype=float)
        m.scale = np.asarray(doc["scale"], dtype=float)
        m.weights = np.asarray(doc["weights"], dtype=float)
        m.bias = float(doc["bias"])
        if not len(m.mean) == len(m.scale) == len(m.weights):
            raise ModelFormatError("inconsistent logistic parameter lengths")
        return m


# --- trained model artifact --------------------------------------------------


@dataclass
class TrainedModel:
    kind: str
    estimator: DecisionTree | LogisticModel
    feature_order: tuple[str, ...]
    case: FeatureCase
    direction_profile: DirectionProfile | None
    background_model_digest: str
    format_version: int = FORMAT_VERSION

    def predict_matrix(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_order):
            raise ValueError(f"expected {len(self.feature_order)} features, got {X.shape[1]}")
        if not np.isfinite(X).all():
            raise ValueError("non-finite feature value")
        return self.estimator.predict_proba(X)

    def digest(self) -> str:
        return hashlib.sha256(save_model(self)).hexdigest()


def train(
    dataset: Dataset,
    config: ClassifierConfig,
    profile: DirectionProfile | None,
    bg_digest: str,
) -> TrainedModel:
    X, y = dataset.matrix(), dataset.labels()
    if len(y) == 0:
        raise ValueError("cannot train on an empty dataset")
    if y.all() or not y.any():
        raise ValueError("training data must contain both classes")
    if not np.isfinite(X).all():
        raise ValueError("non-finite feature value in training data")
    if config.kind == "decision_tree":
        estimator: DecisionTree | LogisticModel = DecisionTree(config.tree.max_depth, config.tree.min_leaf).fit(X, y)
    else:
        lc = config.logistic
        estimator = LogisticModel(lc.learning_rate, lc.iterations, lc.l2).fit(X, y)
    return TrainedModel(config.kind, estimator, dataset.feature_order, dataset.case, profile, bg_digest)


def predict_proba(model: TrainedModel, features: Sequence[float]) -> float:
    if len(features) != len(model.feature_order):
        raise ValueError(f"expected {len(model.feature_order)} features, got {len(features)}")
    return float(model.predict_matrix([list(features)])[0])


def _canonical(doc) -> bytes:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=True).encode("utf-8")


def save_model(model: TrainedModel) -> bytes:
    payload = {
        "kind": model.kind,
        "parameters": model.estimator.to_json(),
        "feature_order": list(model.feature_order),
        "case": int(model.case),
        "direction_profile": model.direction_profile.to_json() if model.direction_profile else None,
        "background_model_digest": model.background_model_digest,
    }
    doc = {
        "artifact": ARTIFACT_KIND,
        "format_version": model.format_version,
        "checksum": hashlib.sha256(_canonical(payload)).hexdigest(),
        "payload": payload,
    }
    return json.dumps(doc, sort_keys=True, indent=1).encode("utf-8") + b"\n"


def load_model(data: bytes) -> TrainedModel:
    try:
        doc = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable model artifact: {exc}") from None
    if not isinstance(doc, dict) or doc.get("artifact") != ARTIFACT_KIND:
        raise ModelFormatError("not a model artifact")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version!r} (supported: {FORMAT_VERSION})")
    payload = doc.get("payload")
    if not isinstance(payload, dict) or hashlib.sha256(_canonical(payload)).hexdigest() != doc.get("checksum"):
        raise ModelFormatError("model artifact checksum mismatch")
    try:
        kind = payload["kind"]
        params = payload["parameters"]
        estimator: DecisionTree | LogisticModel
        if kind == "decision_tree":
            estimator = DecisionTree.from_json(params)
        elif kind == "logistic":
            estimator = LogisticModel.from_json(params)
        else:
            raise ModelFormatError(f"unknown model kind {kind!r}")
        order = tuple(payload["feature_order"])
        if kind == "logistic" and len(estimator.weights) != len(order):  # type: ignore[union-attr]
            raise ModelFormatError("feature_order does not match parameter dimensionality")
        if kind == "decision_tree" and max(estimator.feature, default=-1) >= len(order):  # type: ignore[union-attr]
            raise ModelFormatError("tree references a feature beyond feature_order")
        profile = payload["direction_profile"]
        return TrainedModel(
            kind,
            estimator,
            order,
            FeatureCase(payload["case"]),
            DirectionProfile.from_json(profile) if profile is not None else None,
            payload["background_model_digest"],
            version,
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelFormatError):
            raise
        raise ModelFormatError(f"malformed model artifact: {exc!r}") from None
