"""Random-walk discriminator, GAN objectives and adversarial training.

The discriminator scores (endpoint, start) node pairs.  Real endpoint
distributions come from walks on FC; fake ones from walks on the generated
matrix M.  Generator gradients go through the discrete walks with the
score-function estimator::

    grad E[log D] ~ mean_w (log D(end_w, start_w) - b) * grad log p(path_w)

where ``grad log p(path)`` is pushed from M into the generator weights by
:func:`hggan.ihen.generator_backward`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, InputError, SamplingFailureError
from .hgcore import Hypergraph, concat, incidence_matrix
from .ihen import (
    FeaturePair,
    GeneratorConfig,
    GeneratorParams,
    generator_backward,
    generator_forward,
    init_features,
    init_generator,
    prepare_bold,
)
from .walk import (
    DEFAULT_CAP,
    EXACT_MAX_N,
    EndpointDistribution,
    empirical_distribution,
    endpoint_distributions_exact,
    sample_walks,
    transition_matrix,
    tv_distance,
)

log = logging.getLogger(__name__)

__all__ = [
    "EPS",
    "DiscriminatorConfig",
    "DiscriminatorParams",
    "TrainConfig",
    "TrainHistory",
    "SubjectInputs",
    "Adam",
    "Baseline",
    "init_discriminator",
    "discriminator_table",
    "discriminator_score",
    "discriminator_loss",
    "discriminator_gradient",
    "logprob_grad_m",
    "generator_gradient",
    "subject_inputs",
    "real_distributions",
    "train",
]

EPS = 1e-7


# -- discriminator ----------------------------------------------------------

@dataclass(frozen=True)
class DiscriminatorConfig:
    hidden: tuple[int, int] = (32, 32)
    seed: int = 0


@dataclass
class DiscriminatorParams:
    """Three dense layers on the concatenated one-hot pair [endpoint, start]; tanh hidden units."""

    weights: list[np.ndarray]  # (2n, h1), (h1, h2), (h2, 1)
    biases: list[np.ndarray]

    @property
    def n(self) -> int:
        return self.weights[0].shape[0] // 2

    def tensors(self) -> list[np.ndarray]:
        return [t for pair in zip(self.weights, self.biases) for t in pair]

    def tensor_names(self) -> list[str]:
        return [name for l in range(len(self.weights)) for name in (f"D_W{l}", f"D_b{l}")]

    def copy(self) -> "DiscriminatorParams":
        return DiscriminatorParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    @classmethod
    def zeros(cls, n: int, hidden: Sequence[int] = (32, 32)) -> "DiscriminatorParams":
        sizes = [2 * n, *hidden, 1]
        return cls(
            [np.zeros((a, b)) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b) for b in sizes[1:]],
        )


def init_discriminator(n: int, cfg: DiscriminatorConfig = DiscriminatorConfig()) -> DiscriminatorParams:
    rng = np.random.default_rng(cfg.seed)
    sizes = [2 * n, *cfg.hidden, 1]
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (a + b))
        weights.append(rng.uniform(-limit, limit, size=(a, b)))
        biases.append(np.zeros(b))
    return DiscriminatorParams(weights, biases)


def _forward_table(dp: DiscriminatorParams):
    """Logits and hidden activations for every (endpoint v, start i) pair, indexed [v, i]."""
    n = dp.n
    w1, w2, w3 = dp.weights
    b1, b2, b3 = dp.biases
    z1 = w1[:n][:, None, :] + w1[n:][None, :, :] + b1  # (v, i, h1)
    h1 = np.tanh(z1)
    h2 = np.tanh(h1 @ w2 + b2)
    logits = (h2 @ w3 + b3)[..., 0]
    return logits, h1, h2


def _squash(logits: np.ndarray) -> np.ndarray:
    out = np.empty_like(logits)
    pos = logits >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-logits[pos]))
    e = np.exp(logits[~pos])
    out[~pos] = e / (1.0 + e)
    return np.clip(out, EPS, 1.0 - EPS)


def discriminator_table(dp: DiscriminatorParams) -> np.ndarray:
    """``D[v, i]`` for all endpoint/start pairs."""
    return _squash(_forward_table(dp)[0])


def discriminator_score(dp: DiscriminatorParams, v: int, v0: int) -> float:
    n = dp.n
    if not (0 <= v < n and 0 <= v0 < n):
        raise InputError(f"node indices ({v}, {v0}) out of range 0..{n - 1}")
    x = np.zeros(2 * n)
    x[v] = 1.0
    x[n + v0] = 1.0
    h = x
    for l, (w, b) in enumerate(zip(dp.weights, dp.biases)):
        h = h @ w + b
        if l < len(dp.weights) - 1:
            h = np.tanh(h)
    return float(_squash(h)[0])


def _real_weights(real_dists: Iterable[EndpointDistribution], n: int) -> np.ndarray:
    w = np.zeros((n, n))
    for dist in real_dists:
        w[:, dist.start] += dist.probs
    return w


def _fake_weights(fake_samples, n: int) -> np.ndarray:
    w = np.zeros((n, n))
    for start, ends in fake_samples:
        ends = np.asarray(ends)
        ends = ends[ends >= 0]
        if ends.size:
            w[:, start] += np.bincount(ends, minlength=n) / ends.size
    return w


def _objective_from_weights(table: np.ndarray, w_real: np.ndarray, w_fake: np.ndarray) -> float:
    return float(np.sum(w_real * np.log(table)) + np.sum(w_fake * np.log1p(-table)))


def discriminator_loss(dp: DiscriminatorParams, real_dists, fake_samples) -> float:
    """The discriminator's objective (to maximize).

    ``real_dists``: endpoint distributions on FC, one per (subject, start).
    ``fake_samples``: ``(start, endpoints)`` pairs sampled on M, one per (subject, start).
    """
    real_dists = list(real_dists)
    fake_samples = list(fake_samples)
    if not real_dists and not fake_samples:
        raise InputError("discriminator loss needs at least one real or fake term")
    n = dp.n
    return _objective_from_weights(discriminator_table(dp), _real_weights(real_dists, n), _fake_weights(fake_samples, n))


def discriminator_gradient(dp: DiscriminatorParams, w_real: np.ndarray, w_fake: np.ndarray):
    """Objective and its gradient for weight tables ``w_real[v, i]``, ``w_fake[v, i]``.

    Returns ``(objective, grads)`` with grads ordered like ``dp.tensors()``.
    """
    n = dp.n
    w1, w2, w3 = dp.weights
    logits, h1, h2 = _forward_table(dp)
    raw = 1.0 / (1.0 + np.exp(-logits))
    table = np.clip(raw, EPS, 1.0 - EPS)
    obj = _objective_from_weights(table, w_real, w_fake)
    live = (raw > EPS) & (raw < 1.0 - EPS)
    g_logit = np.where(live, w_real * (1.0 - table) - w_fake * table, 0.0)

    g_w3 = np.einsum("vih,vi->h", h2, g_logit)[:, None]
    g_b3 = np.array([g_logit.sum()])
    g_h2 = g_logit[..., None] * w3[:, 0]
    g_z2 = g_h2 * (1.0 - h2**2)
    g_w2 = np.einsum("via,vib->ab", h1, g_z2)
    g_b2 = g_z2.sum(axis=(0, 1))
    g_z1 = (g_z2 @ w2.T) * (1.0 - h1**2)
    g_w1 = np.concatenate([g_z1.sum(axis=1), g_z1.sum(axis=0)])
    g_b1 = g_z1.sum(axis=(0, 1))
    return obj, [g_w1, g_b1, g_w2, g_b2, g_w3, g_b3]


# -- optimizer / baseline ---------------------------------------------------

class Adam:
    """Adaptive-moment ascent/descent on a list of arrays, updated in place."""

    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray], ascend: bool = True) -> None:
        self.t += 1
        sign = 1.0 if ascend else -1.0
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**self.t)
            v_hat = v / (1 - self.beta2**self.t)
            p += sign * self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Baseline:
    """Per-start exponential moving average of the walk reward."""

    def __init__(self, n: int, decay: float = 0.9):
        self.decay = decay
        self.value = np.zeros(n)
        self.seen = np.zeros(n, dtype=bool)

    def update(self, starts: np.ndarray, means: np.ndarray) -> None:
        fresh = ~self.seen[starts]
        self.value[starts] = np.where(
            fresh, means, self.decay * self.value[starts] + (1 - self.decay) * means
        )
        self.seen[starts] = True


# -- generator gradient -----------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 200
    walks_per_start: int = 64
    lr_d: float = 1e-3
    lr_g: float = 1e-4
    baseline_decay: float = 0.9
    seed: int = 0
    d_steps_per_g_step: int = 1
    cap: int = DEFAULT_CAP
    retries: int = 10
    start_subsample: int | None = None  # None: every node is a start
    probe_subject: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        for name in ("walks_per_start", "lr_d", "lr_g", "baseline_decay", "d_steps_per_g_step", "cap"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not self.baseline_decay < 1:
            raise ConfigError("baseline_decay must be < 1")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")


@dataclass
class SubjectInputs:
    id: str
    a: np.ndarray
    f0: FeaturePair
    fc: np.ndarray


def logprob_grad_m(m: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``sum_(a,b) weights[a, b] * d log P(a, b) / dM`` for ``P = transition_matrix(M)``.

    ``weights[a, b]`` is typically an advantage-weighted count of ``a -> b`` moves.
    Rows of M that are entirely zero use the uniform fallback and carry no gradient.
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    off = ~np.eye(n, dtype=bool)
    absm = np.where(off, np.abs(m), 0.0)
    row_sum = absm.sum(axis=1)
    live = row_sum > 0
    g = np.zeros_like(m)
    used = (weights != 0) & off & live[:, None]
    g[used] = weights[used] / m[used]
    total = weights.sum(axis=1)
    safe = np.where(live, row_sum, 1.0)
    g -= np.where(off & live[:, None], (total / safe)[:, None] * np.sign(m), 0.0)
    return g


def generator_gradient(
    gp: GeneratorParams,
    dp: DiscriminatorParams,
    subject: SubjectInputs,
    cfg: TrainConfig,
    baseline: Baseline | None = None,
    seed: int | None = None,
    starts: np.ndarray | None = None,
    d_table: np.ndarray | None = None,
    stream: int = 0,
):
    """Score-function estimate of ``grad sum_i E_{p_G(.|i)}[log D(v, i)]`` for one subject.

    Returns ``(grads, info)``; ``info`` carries the objective estimate, the
    fake endpoint samples (reused by the discriminator) and truncation counts.
    Truncated walks (after retries) score zero but keep their prefix
    likelihood term, which keeps the estimate unbiased for the capped objective.
    """
    cache = generator_forward(gp, subject.a, subject.f0)
    m = cache.m
    n = m.shape[0]
    p = transition_matrix(m)
    starts = np.arange(n) if starts is None else np.asarray(starts)
    per = cfg.walks_per_start
    walk_starts = np.repeat(starts, per)
    batch = sample_walks(
        p, walk_starts, seed=cfg.seed if seed is None else seed, cap=cfg.cap, retries=cfg.retries, stream=stream
    )
    if batch.truncated.all():
        raise SamplingFailureError(f"subject {subject.id}: all {len(walk_starts)} walks hit the cap of {cfg.cap} moves")

    table = discriminator_table(dp) if d_table is None else d_table
    ends = batch.endpoints
    reward = np.where(batch.truncated, 0.0, np.log(table[np.clip(ends, 0, None), walk_starts]))
    means = reward.reshape(len(starts), per).mean(axis=1)
    if baseline is None:
        b = np.zeros(len(walk_starts))
    else:
        b = np.repeat(np.where(baseline.seen[starts], baseline.value[starts], 0.0), per)
    adv = (reward - b) / per

    walk, src, dst = batch.transitions()
    weights = np.zeros((n, n))
    np.add.at(weights, (src, dst), adv[walk])
    g_m = logprob_grad_m(m, weights)
    grads = generator_backward(gp, cache, grad_m=g_m)

    if baseline is not None:
        baseline.update(starts, means)
    info = {
        "objective": float(means.sum()),
        "fake": [(int(s), ends[k * per:(k + 1) * per]) for k, s in enumerate(starts)],
        "truncated": int(batch.truncated.sum()),
        "m": m,
    }
    return grads, info


# -- training ---------------------------------------------------------------

@dataclass
class TrainHistory:
    d_objective: list[float] = field(default_factory=list)
    g_objective: list[float] = field(default_factory=list)
    tv: list[float] = field(default_factory=list)
    initial_tv: float | None = None

    def __len__(self) -> int:
        return len(self.tv)

    def rows(self):
        for e, (d, g, t) in enumerate(zip(self.d_objective, self.g_objective, self.tv), start=1):
            yield {"epoch": e, "d_objective": d, "g_objective": g, "tv": t}


def subject_inputs(records, consensus: Hypergraph, cohort_hypergraphs, zscore_bold: bool = True) -> list[SubjectInputs]:
    """Incidence of ``consensus || H_k'`` plus initial features for each subject."""
    out = []
    for rec, hk in zip(records, cohort_hypergraphs):
        a = incidence_matrix(concat(consensus, hk)).astype(float)
        f0 = init_features(prepare_bold(rec.bold, zscore_bold), rec.sc, a)
        out.append(SubjectInputs(rec.id, a, f0, rec.fc))
    return out


def real_distributions(fc: np.ndarray, seed: int = 0, samples: int = 4096, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Endpoint distributions on FC, ``[start, v]``; exact for n <= 64, sampled above."""
    p = transition_matrix(fc)
    n = p.shape[0]
    if n <= EXACT_MAX_N:
        return endpoint_distributions_exact(p)
    out = np.zeros((n, n))
    for i in range(n):
        batch = sample_walks(p, np.full(samples, i), seed=seed, cap=cap, stream=i + 1)
        out[i] = empirical_distribution(batch, n)
    return out


def _mean_tv(gp: GeneratorParams, subject: SubjectInputs, real: np.ndarray) -> float:
    m = generator_forward(gp, subject.a, subject.f0).m
    fake = endpoint_distributions_exact(transition_matrix(m))
    return float(np.mean([tv_distance(fake[i], real[i]) for i in range(len(real))]))


def _stream(epoch: int, step: int, subject: int, role: int) -> int:
    # disjoint Philox streams per (epoch, step, subject, role)
    return ((epoch * 4099 + step) * 1_000_003 + subject) * 4 + role


def _finite(arrays) -> bool:
    return all(np.isfinite(a).all() for a in arrays)


def train(
    subjects: list[SubjectInputs],
    gcfg: GeneratorConfig = GeneratorConfig(),
    dcfg: DiscriminatorConfig = DiscriminatorConfig(),
    tcfg: TrainConfig = TrainConfig(),
    gp: GeneratorParams | None = None,
    dp: DiscriminatorParams | None = None,
):
    """Alternate discriminator ascent steps and one generator ascent step per epoch.

    Returns ``(generator, discriminator, history)``.  The run is deterministic
    given the configs and subjects.
    """
    if not subjects:
        raise InputError("no subjects to train on")
    n = subjects[0].a.shape[0]
    d = subjects[0].f0.x_v.shape[1]
    gp = init_generator(d, n, gcfg) if gp is None else gp
    dp = init_discriminator(n, dcfg) if dp is None else dp
    history = TrainHistory()
    if tcfg.epochs == 0:
        return gp, dp, history

    reals = [real_distributions(s.fc, seed=tcfg.seed) for s in subjects]
    w_real_full = sum(r.T for r in reals)  # [v, i]
    probe = subjects[tcfg.probe_subject]
    history.initial_tv = _mean_tv(gp, probe, reals[tcfg.probe_subject])

    opt_g = Adam(gp.tensors(), tcfg.lr_g)
    opt_d = Adam(dp.tensors(), tcfg.lr_d)
    baselines = [Baseline(n, tcfg.baseline_decay) for _ in subjects]
    rng = np.random.default_rng(tcfg.seed)

    for epoch in range(tcfg.epochs):
        if tcfg.start_subsample:
            starts = np.sort(rng.choice(n, size=min(n, tcfg.start_subsample), replace=False))
        else:
            starts = np.arange(n)
        w_real = w_real_full[:, starts]

        for step in range(tcfg.d_steps_per_g_step):
            fake = []
            for k, s in enumerate(subjects):
                m = generator_forward(gp, s.a, s.f0).m
                batch = sample_walks(
                    transition_matrix(m), np.repeat(starts, tcfg.walks_per_start), seed=tcfg.seed,
                    cap=tcfg.cap, retries=tcfg.retries, stream=_stream(epoch, step, k, 1),
                )
                ends = batch.endpoints.reshape(len(starts), tcfg.walks_per_start)
                fake.extend(zip(starts, ends))
            w_fake = _fake_weights(fake, n)
            w_real_cols = np.zeros((n, n))
            w_real_cols[:, starts] = w_real
            d_obj, d_grads = discriminator_gradient(dp, w_real_cols, w_fake)
            if not np.isfinite(d_obj) or not _finite(d_grads):
                raise DivergenceError(f"discriminator diverged at epoch {epoch}", epoch)
            opt_d.step(d_grads, ascend=True)

        table = discriminator_table(dp)
        total = [np.zeros_like(t) for t in gp.tensors()]
        g_obj = 0.0
        for k, s in enumerate(subjects):
            grads, info = generator_gradient(
                gp, dp, s, tcfg, baselines[k], starts=starts, d_table=table,
                stream=_stream(epoch, tcfg.d_steps_per_g_step, k, 2),
            )
            for acc, g in zip(total, (t for pair in grads for t in pair)):
                acc += g
            g_obj += info["objective"]
        if not np.isfinite(g_obj) or not _finite(total):
            raise DivergenceError(f"generator diverged at epoch {epoch}", epoch)
        opt_g.step(total, ascend=True)
        gp.version += 1
        if not _finite(gp.tensors()):
            raise DivergenceError(f"generator weights became non-finite at epoch {epoch}", epoch)

        tv = _mean_tv(gp, probe, reals[tcfg.probe_subject])
        history.d_objective.append(d_obj)
        history.g_objective.append(g_obj)
        history.tv.append(tv)
        log.debug("epoch %d d=%.4f g=%.4f tv=%.4f", epoch, d_obj, g_obj, tv)
    return gp, dp, history
