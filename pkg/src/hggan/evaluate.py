"""Downstream evaluation: MLP classification on connectivity features and region ranking."""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.neural_network import MLPClassifier
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from .errors import InputError, SplitError

__all__ = [
    "EvalReport",
    "RegionRanking",
    "upper_triangle",
    "confusion_metrics",
    "split_indices",
    "classify_eval",
    "classify_repeated",
    "region_ranking",
]

MAX_SPLIT_TRIES = 10


@dataclass
class EvalReport:
    connectivity_kind: str
    acc: float
    sen: float
    spe: float
    split_seed: int
    train_fraction: float
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    positive: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RegionRanking:
    groups: tuple[str, str]
    means: np.ndarray  # (2, n) group-mean Co
    diff: np.ndarray
    top_k: list[int] = field(default_factory=list)


def upper_triangle(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return m[np.triu_indices(m.shape[0], k=1)]


def confusion_metrics(y_true, y_pred) -> dict:
    """Counts plus ACC, SEN = TP/(TP+FN), SPE = TN/(TN+FP) with label 1 positive.

    An empty denominator gives 0.
    """
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    total = tp + tn + fp + fn
    return {
        "tp": tp, "tn": tn, "fp": fp, "fn": fn,
        "acc": (tp + tn) / total if total else 0.0,
        "sen": tp / (tp + fn) if tp + fn else 0.0,
        "spe": tn / (tn + fp) if tn + fp else 0.0,
    }


def split_indices(y, train_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray, int]:
    """Random train/test split; reseeds (seed+1, ...) until both classes are in both parts."""
    y = np.asarray(y)
    count = len(y)
    n_train = int(round(train_fraction * count))
    for attempt in range(MAX_SPLIT_TRIES):
        used = seed + attempt
        perm = np.random.default_rng(used).permutation(count)
        tr, te = perm[:n_train], perm[n_train:]
        if len(np.unique(y[tr])) == 2 and len(np.unique(y[te])) == 2:
            return np.sort(tr), np.sort(te), used
    raise SplitError(f"no split with both classes on each side after {MAX_SPLIT_TRIES} tries from seed {seed}")


def _labels(groups) -> tuple[np.ndarray, tuple[str, str]]:
    groups = list(groups)
    order = list(dict.fromkeys(groups))
    if len(order) != 2:
        raise InputError(f"binary classification needs exactly two groups, got {order}")
    y = np.array([order.index(g) for g in groups])
    for label in (0, 1):
        if np.sum(y == label) < 4:
            raise InputError(f"group {order[label]!r} has fewer than 4 subjects")
    return y, (order[0], order[1])


NORMALIZATIONS = ("fro", "none")


def _features(matrices, normalize: str) -> np.ndarray:
    if normalize not in NORMALIZATIONS:
        raise InputError(f"normalize must be one of {NORMALIZATIONS}, got {normalize!r}")
    x = np.stack([upper_triangle(m) for m in matrices])
    if normalize == "fro":
        norms = np.linalg.norm(x, axis=1, keepdims=True)
        x = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0)
    return x


def classify_eval(matrices, groups, kind: str, train_fraction: float = 0.65, seed: int = 0,
                  normalize: str = "fro") -> EvalReport:
    """Train the 16-16-2 rectifier MLP on upper-triangle features and score the held-out part.

    With ``normalize="fro"`` each subject's feature vector is scaled to unit
    norm first, so only the pattern of connectivity matters, not its overall
    magnitude.  The second group (in order of first appearance) is the
    positive class.
    """
    x = _features(matrices, normalize)
    y, names = _labels(groups)
    tr, te, used = split_indices(y, train_fraction, seed)
    clf = make_pipeline(
        StandardScaler(),
        MLPClassifier(hidden_layer_sizes=(16, 16), activation="relu", learning_rate_init=0.001,
                      max_iter=2000, random_state=used),
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        clf.fit(x[tr], y[tr])
    stats = confusion_metrics(y[te], clf.predict(x[te]))
    return EvalReport(kind.upper(), stats["acc"], stats["sen"], stats["spe"], used, train_fraction,
                      stats["tp"], stats["tn"], stats["fp"], stats["fn"], names[1])


def classify_repeated(matrices, groups, kind: str, seeds=range(5), train_fraction: float = 0.65,
                      normalize: str = "fro"):
    """One report per seed plus the mean ACC/SEN/SPE."""
    reports = [classify_eval(matrices, groups, kind, train_fraction, s, normalize) for s in seeds]
    mean = {key: float(np.mean([getattr(r, key) for r in reports])) for key in ("acc", "sen", "spe")}
    return reports, mean


def region_ranking(co_by_subject, groups, k: int) -> RegionRanking:
    """Group-mean node correlation, absolute difference, and the k largest differences.

    Ties go to the lower node index.
    """
    co = np.asarray(co_by_subject, dtype=float)
    groups = list(groups)
    order = list(dict.fromkeys(groups))
    if len(order) != 2:
        raise InputError(f"region ranking needs exactly two groups, got {order}")
    n = co.shape[1]
    if not 1 <= k <= n:
        raise InputError(f"k must lie in 1..{n}, got {k}")
    labels = np.array(groups)
    means = np.stack([co[labels == g].mean(axis=0) for g in order])
    diff = np.abs(means[1] - means[0])
    top = np.lexsort((np.arange(n), -diff))[:k]
    return RegionRanking((order[0], order[1]), means, diff, [int(i) for i in top])
