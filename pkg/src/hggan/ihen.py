"""Generator: stacked interactive hyperedge-neuron layers and the fused connectivity.

Forward map for one subject::

    X_V0 = B,  X_E0 = A^T S
    X_V(l+1) = act(A X_E W_E + lam X_V W_V)
    X_E(l+1) = act(A^T X_V W_V + lam X_E W_E)
    gamma = A * (X_V X_E^T),  w = ||rows of X_E||
    M = gamma diag(w) gamma^T
    Co_i = (1/n) sum_j M_ij <X_V[i], X_V[j]>

:func:`generator_backward` is the hand-derived reverse pass of that map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError, NumericOverflowError, StateError

__all__ = [
    "Activation",
    "GeneratorConfig",
    "GeneratorParams",
    "FeaturePair",
    "FusionWeights",
    "ForwardCache",
    "init_generator",
    "prepare_bold",
    "init_features",
    "ihen_forward",
    "fusion_weights",
    "multimodal_connectivity",
    "node_correlation",
    "generator_forward",
    "generator_backward",
]


@dataclass(frozen=True)
class Activation:
    name: str = "leaky_relu"
    slope: float = 0.2

    def __post_init__(self):
        if self.name not in ("leaky_relu", "identity", "tanh"):
            raise ConfigError(f"unknown activation {self.name!r}")

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self.name == "leaky_relu":
            return np.where(z > 0, z, self.slope * z)
        if self.name == "tanh":
            return np.tanh(z)
        return z

    def grad(self, z: np.ndarray) -> np.ndarray:
        if self.name == "leaky_relu":
            return np.where(z > 0, 1.0, self.slope)
        if self.name == "tanh":
            return 1.0 - np.tanh(z) ** 2
        return np.ones_like(z)


@dataclass(frozen=True)
class GeneratorConfig:
    layers: int = 2
    hidden: int = 16
    lam: float = 1.0
    activation: str = "leaky_relu"
    slope: float = 0.2
    zscore_bold: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ConfigError("generator needs layers >= 1 and hidden >= 1")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")


@dataclass
class GeneratorParams:
    layers: list[tuple[np.ndarray, np.ndarray]]  # (W_V, W_E) per layer
    lam: float = 1.0
    activation: Activation = field(default_factory=Activation)
    version: int = 0  # bumped on every in-place update; stale caches are rejected

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("generator needs at least one layer")
        if self.lam < 0:
            raise ConfigError("lambda must be non-negative")
        for l, (wv, we) in enumerate(self.layers):
            if wv.ndim != 2 or we.ndim != 2 or wv.shape[1] != we.shape[1]:
                raise DimensionError(f"layer {l}: W_V {wv.shape} and W_E {we.shape} must share output width")
            if l > 0:
                h = self.layers[l - 1][0].shape[1]
                if wv.shape[0] != h or we.shape[0] != h:
                    raise DimensionError(f"layer {l}: input widths {wv.shape[0]}, {we.shape[0]} must equal {h}")
            if not (np.isfinite(wv).all() and np.isfinite(we).all()):
                raise ConfigError(f"layer {l} has non-finite weights")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def tensors(self) -> list[np.ndarray]:
        return [w for pair in self.layers for w in pair]

    def tensor_names(self) -> list[str]:
        return [f"{kind}{l}" for l in range(self.depth) for kind in ("W_V", "W_E")]

    def copy(self) -> "GeneratorParams":
        return GeneratorParams([(wv.copy(), we.copy()) for wv, we in self.layers], self.lam, self.activation, self.version)


def init_generator(d: int, n: int, cfg: GeneratorConfig = GeneratorConfig()) -> GeneratorParams:
    """Glorot-uniform weights; the first layer maps node width ``d`` and edge width ``n`` to ``hidden``."""
    rng = np.random.default_rng(cfg.seed)

    def glorot(fan_in, fan_out):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-limit, limit, size=(fan_in, fan_out))

    layers = []
    f_v, f_e = d, n
    for _ in range(cfg.layers):
        layers.append((glorot(f_v, cfg.hidden), glorot(f_e, cfg.hidden)))
        f_v = f_e = cfg.hidden
    return GeneratorParams(layers, cfg.lam, Activation(cfg.activation, cfg.slope))


@dataclass
class FeaturePair:
    x_v: np.ndarray
    x_e: np.ndarray


@dataclass
class FusionWeights:
    gamma: np.ndarray  # n x m_total, zero off the incidence support
    w: np.ndarray  # m_total


def prepare_bold(b, zscore: bool = True) -> np.ndarray:
    """Per-row z-scoring of node time series (optional)."""
    b = np.asarray(b, dtype=float)
    if not zscore:
        return b
    sd = b.std(axis=1, keepdims=True)
    sd[sd == 0] = 1.0
    return (b - b.mean(axis=1, keepdims=True)) / sd


def init_features(b, s, a) -> FeaturePair:
    b = np.asarray(b, dtype=float)
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if b.ndim != 2 or b.shape[0] != n:
        raise DimensionError(f"time series has shape {b.shape}, incidence has {n} rows")
    if s.shape != (n, n):
        raise DimensionError(f"structural matrix has shape {s.shape}, expected {(n, n)}")
    return FeaturePair(b, a.T @ s)


def _check_finite(x: np.ndarray, where: str) -> None:
    if not np.isfinite(x).all():
        raise NumericOverflowError(f"non-finite values in {where}")


def _layer_inputs(p: GeneratorParams, a: np.ndarray, f0: FeaturePair):
    n, m = a.shape
    if f0.x_v.shape[0] != n or f0.x_e.shape[0] != m:
        raise DimensionError(f"features ({f0.x_v.shape}, {f0.x_e.shape}) do not match incidence {a.shape}")
    wv0, we0 = p.layers[0]
    if f0.x_v.shape[1] != wv0.shape[0] or f0.x_e.shape[1] != we0.shape[0]:
        raise DimensionError(
            f"input widths ({f0.x_v.shape[1]}, {f0.x_e.shape[1]}) do not match first layer "
            f"({wv0.shape[0]}, {we0.shape[0]})"
        )


def _forward_layers(p: GeneratorParams, a: np.ndarray, f0: FeaturePair):
    _layer_inputs(p, a, f0)
    feats = [f0]
    pre = []
    act = p.activation
    for l, (wv, we) in enumerate(p.layers):
        x_v, x_e = feats[-1].x_v, feats[-1].x_e
        with np.errstate(over="ignore", invalid="ignore"):  # reported by _check_finite below
            p_v = x_v @ wv
            p_e = x_e @ we
            z_v = a @ p_e + p.lam * p_v
            z_e = a.T @ p_v + p.lam * p_e
        _check_finite(z_v, f"layer {l} node pre-activation")
        _check_finite(z_e, f"layer {l} edge pre-activation")
        pre.append((z_v, z_e))
        feats.append(FeaturePair(act(z_v), act(z_e)))
    return feats, pre


def ihen_forward(p: GeneratorParams, a, f0: FeaturePair) -> list[FeaturePair]:
    """All layer features ``X(0) .. X(L)``."""
    feats, _ = _forward_layers(p, np.asarray(a, dtype=float), f0)
    return feats


def fusion_weights(f_last: FeaturePair, a) -> FusionWeights:
    a = np.asarray(a, dtype=float)
    x_v, x_e = f_last.x_v, f_last.x_e
    if x_v.shape[0] != a.shape[0] or x_e.shape[0] != a.shape[1] or x_v.shape[1] != x_e.shape[1]:
        raise DimensionError(f"features ({x_v.shape}, {x_e.shape}) inconsistent with incidence {a.shape}")
    gamma = a * (x_v @ x_e.T)
    w = np.linalg.norm(x_e, axis=1)
    return FusionWeights(gamma, w)


def multimodal_connectivity(fw: FusionWeights) -> np.ndarray:
    gamma, w = fw.gamma, fw.w
    if gamma.ndim != 2 or w.shape != (gamma.shape[1],):
        raise DimensionError(f"gamma {gamma.shape} and w {w.shape} are inconsistent")
    m = (gamma * w) @ gamma.T
    return 0.5 * (m + m.T)  # exact symmetry; the two halves agree up to rounding


def node_correlation(m, x_v) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    x_v = np.asarray(x_v, dtype=float)
    n = m.shape[0]
    if m.shape != (n, n) or x_v.shape[0] != n:
        raise DimensionError(f"M {m.shape} and node features {x_v.shape} are inconsistent")
    return (m * (x_v @ x_v.T)).sum(axis=1) / n


@dataclass
class ForwardCache:
    a: np.ndarray
    feats: list[FeaturePair]
    pre: list[tuple[np.ndarray, np.ndarray]]
    fusion: FusionWeights
    m: np.ndarray
    co: np.ndarray
    params_id: int
    params_version: int


def generator_forward(p: GeneratorParams, a, f0: FeaturePair) -> ForwardCache:
    """Full forward pass (layers, fusion, M, Co), cached for :func:`generator_backward`."""
    a = np.asarray(a, dtype=float)
    feats, pre = _forward_layers(p, a, f0)
    fw = fusion_weights(feats[-1], a)
    m = multimodal_connectivity(fw)
    _check_finite(m, "multimodal connectivity")
    co = node_correlation(m, feats[-1].x_v)
    return ForwardCache(a, feats, pre, fw, m, co, id(p), p.version)


def generator_backward(
    p: GeneratorParams,
    cache: ForwardCache | None,
    grad_m=None,
    grad_co=None,
    grad_xv=None,
    grad_xe=None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients ``(dW_V, dW_E)`` per layer of a scalar whose partials w.r.t. M, Co,
    X_V(L), X_E(L) are given (any may be omitted).

    ``grad_m`` is taken entry-wise over the full matrix; the symmetric
    structure of M is accounted for internally.
    """
    if cache is None:
        raise StateError("generator_backward needs the cache from generator_forward")
    if cache.params_id != id(p) or cache.params_version != p.version:
        raise StateError("forward cache is stale: parameters changed since the forward pass")
    a = cache.a
    x_v, x_e = cache.feats[-1].x_v, cache.feats[-1].x_e
    gamma, w = cache.fusion.gamma, cache.fusion.w
    n = a.shape[0]

    g_xv = np.zeros_like(x_v) if grad_xv is None else np.array(grad_xv, dtype=float)
    g_xe = np.zeros_like(x_e) if grad_xe is None else np.array(grad_xe, dtype=float)
    g_m = np.zeros((n, n)) if grad_m is None else np.array(grad_m, dtype=float)

    if grad_co is not None:
        g_co = np.asarray(grad_co, dtype=float)
        gram = x_v @ x_v.T
        g_m += g_co[:, None] * gram / n
        g_gram = g_co[:, None] * cache.m / n
        g_xv += (g_gram + g_gram.T) @ x_v

    # M = 0.5 (K + K^T) with K = G diag(w) G^T
    g_sym = g_m + g_m.T
    g_gamma = (g_sym @ gamma) * w
    g_w = 0.5 * np.einsum("ij,ik,kj->j", gamma, g_sym, gamma)
    safe = np.where(w > 0, w, 1.0)
    g_xe += np.where(w[:, None] > 0, g_w[:, None] * x_e / safe[:, None], 0.0)
    g_s = a * g_gamma
    g_xv += g_s @ x_e
    g_xe += g_s.T @ x_v

    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * p.depth  # type: ignore[list-item]
    act = p.activation
    for l in range(p.depth - 1, -1, -1):
        wv, we = p.layers[l]
        z_v, z_e = cache.pre[l]
        xv_in, xe_in = cache.feats[l].x_v, cache.feats[l].x_e
        g_zv = g_xv * act.grad(z_v)
        g_ze = g_xe * act.grad(z_e)
        # each weight is used in both update rules
        g_pv = p.lam * g_zv + a @ g_ze
        g_pe = a.T @ g_zv + p.lam * g_ze
        grads[l] = (xv_in.T @ g_pv, xe_in.T @ g_pe)
        g_xv = g_pv @ wv.T
        g_xe = g_pe @ we.T
    return grads
