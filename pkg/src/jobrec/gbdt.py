"""Gradient boosted decision trees for binary logloss, built from scratch.

Second-order boosting: per round, gradients g = p - y and hessians
h = p (1 - p) are computed from the current margins, one regression tree
is grown by exact greedy split search (every feature, every distinct
threshold), and margins advance by eta times the leaf weights
-G / (H + lambda). Split gain is

    1/2 * (GL^2/(HL+lambda) + GR^2/(HR+lambda) - (GL+GR)^2/(HL+HR+lambda)) - gamma

and a split is accepted only when the gain is strictly positive and both
children keep a hessian sum of at least min_child_weight. Ties between
equal-gain splits go to the lowest feature index, then the lowest
threshold. Training is fully deterministic.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MODEL_FORMAT = "jobrec-gbdt"
MODEL_VERSION = 1
MARGIN_CLAMP = 10.0
PROB_EPS = 1e-15


class ModelFormatError(ValueError):
    """Model file is corrupt, has a wrong format marker or version."""


@dataclass
class TrainConfig:
    max_depth: int = 5
    min_child_weight: float = 5.0
    eta: float = 0.1
    gamma: float = 1.0
    num_round: int = 1000
    reg_lambda: float = 1.0
    early_stopping_rounds: int | None = None
    seed: int = 0
    # None: logit of the positive rate, clamped to +-MARGIN_CLAMP
    base_margin: float | None = None

    def validate(self) -> None:
        if self.max_depth < 1:
            raise ValueError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.num_round < 0:
            raise ValueError(f"num_round must be >= 0, got {self.num_round}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must be in (0, 1], got {self.eta}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.reg_lambda < 0:
            raise ValueError(f"reg_lambda must be >= 0, got {self.reg_lambda}")
        if self.min_child_weight < 0:
            raise ValueError(f"min_child_weight must be >= 0, got {self.min_child_weight}")
        if self.early_stopping_rounds is not None and self.early_stopping_rounds < 1:
            raise ValueError("early_stopping_rounds must be >= 1 when set")


def sigmoid(margin: np.ndarray | float) -> np.ndarray | float:
    return 1.0 / (1.0 + np.exp(-margin))


def logloss_terms(margin: np.ndarray, y: np.ndarray) -> np.ndarray:
    p = np.clip(sigmoid(margin), PROB_EPS, 1.0 - PROB_EPS)
    return -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))


def logloss(margin: np.ndarray, y: np.ndarray) -> float:
    return float(logloss_terms(margin, y).mean())


def grad_hess(margin: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second derivatives of per-example logloss wrt the margin."""
    p = sigmoid(margin)
    return p - y, p * (1.0 - p)


class Tree:
    """One regression tree stored as parallel arrays.

    feature[n] == -1 marks node n as a leaf with weight value[n];
    internal nodes route x[feature] <= threshold to children_left.
    """

    def __init__(self) -> None:
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.children_left: list[int] = []
        self.children_right: list[int] = []
        self.value: list[float] = []

    def _new_node(self) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.children_left.append(-1)
        self.children_right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.float64)
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if self.feature[node] < 0:
                out[idx] = self.value[node]
                continue
            left = X[idx, self.feature[node]] <= self.threshold[node]
            stack.append((self.children_left[node], idx[left]))
            stack.append((self.children_right[node], idx[~left]))
        return out

    def split_features(self) -> list[int]:
        return [f for f in self.feature if f >= 0]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.children_left,
            "right": self.children_right,
            "value": self.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        tree = cls()
        tree.feature = [int(v) for v in d["feature"]]
        tree.threshold = [float(v) for v in d["threshold"]]
        tree.children_left = [int(v) for v in d["left"]]
        tree.children_right = [int(v) for v in d["right"]]
        tree.value = [float(v) for v in d["value"]]
        return tree


def _best_split(
    X: np.ndarray, g: np.ndarray, h: np.ndarray, idx: np.ndarray, cfg: TrainConfig
) -> tuple[float, int, float] | None:
    """Exact greedy search over all features and distinct thresholds."""
    G = g[idx].sum()
    H = h[idx].sum()
    lam = cfg.reg_lambda
    parent = G * G / (H + lam)
    best: tuple[float, int, float] | None = None
    for f in range(X.shape[1]):
        x = X[idx, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        if xs[0] == xs[-1]:
            continue
        gs = np.cumsum(g[idx][order])[:-1]
        hs = np.cumsum(h[idx][order])[:-1]
        cut = xs[1:] != xs[:-1]
        gl, hl = gs, hs
        gr, hr = G - gs, H - hs
        gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent) - cfg.gamma
        ok = cut & (hl >= cfg.min_child_weight) & (hr >= cfg.min_child_weight) & (gain > 0.0)
        if not ok.any():
            continue
        pos = np.nonzero(ok)[0]
        j = pos[np.argmax(gain[pos])]
        cand = (float(gain[j]), f, float(xs[j]))
        # strict comparison keeps the lowest feature index on equal gain;
        # within a feature argmax already picks the lowest threshold
        if best is None or cand[0] > best[0]:
            best = cand
    return best


def _grow(X: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: TrainConfig) -> Tree:
    tree = Tree()

    def build(idx: np.ndarray, depth: int) -> int:
        node = tree._new_node()
        split = _best_split(X, g, h, idx, cfg) if depth < cfg.max_depth else None
        if split is None:
            tree.value[node] = -g[idx].sum() / (h[idx].sum() + cfg.reg_lambda)
            return node
        _, f, thr = split
        tree.feature[node] = f
        tree.threshold[node] = thr
        left = X[idx, f] <= thr
        tree.children_left[node] = build(idx[left], depth + 1)
        tree.children_right[node] = build(idx[~left], depth + 1)
        return node

    build(np.arange(X.shape[0]), 0)
    return tree


@dataclass
class GbdtModel:
    config: TrainConfig
    base_margin: float
    trees: list[Tree]
    feature_names: list[str]
    eval_history: dict[str, list[float]] = field(default_factory=dict)
    best_round: int | None = None

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        margin = np.full(X.shape[0], self.base_margin, dtype=np.float64)
        for tree in self.trees:
            margin += self.config.eta * tree.predict(X)
        return margin

    def predict_proba(self, X: np.ndarray, feature_names: Sequence[str] | None = None) -> np.ndarray:
        if feature_names is not None and list(feature_names) != self.feature_names:
            raise ValueError("feature schema does not match the model's training schema")
        if np.asarray(X).shape[1] != len(self.feature_names):
            raise ValueError(
                f"expected {len(self.feature_names)} features, got {np.asarray(X).shape[1]}"
            )
        return np.clip(sigmoid(self.predict_margin(X)), PROB_EPS, 1.0 - PROB_EPS)

    def feature_importance(self) -> dict[str, int]:
        """Split counts per feature over all trees (all features listed)."""
        counts = {name: 0 for name in self.feature_names}
        for tree in self.trees:
            for f in tree.split_features():
                counts[self.feature_names[f]] += 1
        return counts

    def save(self, path: str | Path) -> None:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "config": asdict(self.config),
            "base_margin": self.base_margin,
            "feature_names": self.feature_names,
            "eval_history": self.eval_history,
            "best_round": self.best_round,
            "trees": [t.to_dict() for t in self.trees],
        }
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "GbdtModel":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"{path}: not a valid model file: {exc}") from None
        if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
            raise ModelFormatError(f"{path}: missing {MODEL_FORMAT!r} format marker")
        if doc.get("version") != MODEL_VERSION:
            raise ModelFormatError(
                f"{path}: unsupported model version {doc.get('version')!r}, expected {MODEL_VERSION}"
            )
        try:
            cfg_raw = dict(doc["config"])
            config = TrainConfig(**cfg_raw)
            return cls(
                config=config,
                base_margin=float(doc["base_margin"]),
                trees=[Tree.from_dict(t) for t in doc["trees"]],
                feature_names=[str(n) for n in doc["feature_names"]],
                eval_history={k: [float(v) for v in vs] for k, vs in doc["eval_history"].items()},
                best_round=doc.get("best_round"),
            )
        except (KeyError, TypeError) as exc:
            raise ModelFormatError(f"{path}: malformed model document: {exc}") from None


def train(
    X: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    feature_names: Sequence[str] | None = None,
    valid: tuple[np.ndarray, np.ndarray] | None = None,
) -> GbdtModel:
    """Fit a boosted ensemble; validation data drives early stopping."""
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training matrix must be 2-d and non-empty")
    if X.shape[0] != y.shape[0]:
        raise ValueError("label count does not match row count")
    if not np.isfinite(X).all():
        raise ValueError("training matrix contains NaN or infinite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0 or 1")
    if feature_names is None:
        feature_names = [f"f{j}" for j in range(X.shape[1])]
    if len(feature_names) != X.shape[1]:
        raise ValueError("feature_names length does not match matrix width")

    if config.base_margin is not None:
        base = float(config.base_margin)
    else:
        rate = float(y.mean())
        if rate <= 0.0:
            base = -MARGIN_CLAMP
        elif rate >= 1.0:
            base = MARGIN_CLAMP
        else:
            base = float(np.clip(np.log(rate / (1.0 - rate)), -MARGIN_CLAMP, MARGIN_CLAMP))

    margin = np.full(X.shape[0], base, dtype=np.float64)
    history: dict[str, list[float]] = {"train": []}
    if valid is not None:
        Xv = np.asarray(valid[0], dtype=np.float64)
        yv = np.asarray(valid[1], dtype=np.float64)
        if Xv.shape[1] != X.shape[1]:
            raise ValueError("validation matrix width does not match training matrix")
        vmargin = np.full(Xv.shape[0], base, dtype=np.float64)
        history["valid"] = []

    trees: list[Tree] = []
    best_round: int | None = None
    best_loss = np.inf
    for _ in range(config.num_round):
        g, h = grad_hess(margin, y)
        tree = _grow(X, g, h, config)
        trees.append(tree)
        margin += config.eta * tree.predict(X)
        history["train"].append(logloss(margin, y))
        if valid is not None:
            vmargin += config.eta * tree.predict(Xv)
            vloss = logloss(vmargin, yv)
            history["valid"].append(vloss)
            if vloss < best_loss:
                best_loss = vloss
                best_round = len(trees)
            elif (
                config.early_stopping_rounds is not None
                and len(trees) - (best_round or 0) >= config.early_stopping_rounds
            ):
                break

    if valid is not None and config.early_stopping_rounds is not None and best_round is not None:
        trees = trees[:best_round]
        history = {k: v[:best_round] for k, v in history.items()}

    return GbdtModel(
        config=config,
        base_margin=base,
        trees=trees,
        feature_names=list(feature_names),
        eval_history=history,
        best_round=best_round,
    )


def save_importance(model: GbdtModel, path: str | Path, groups: dict[str, str] | None = None, provenance=None) -> None:
    """Importance report: feature, group, split count, sorted by count desc."""
    from .dataio import _write_tsv

    counts = model.feature_importance()
    rows = (
        [name, (groups or {}).get(name, ""), str(counts[name])]
        for name in sorted(counts, key=lambda n: (-counts[n], n))
    )
    _write_tsv(Path(path), ["feature", "group", "splits"], rows, provenance)
