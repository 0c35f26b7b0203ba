"""From-scratch feedforward backend with an antisymmetric twin-tower head.

The 12-feature input and its side-swapped twin pass through the same dense
stack (activation, inverted dropout, layer norm per layer), producing
embeddings h1 and h2. The default head scores them with a skew-symmetric
bilinear form on the unit-normalized embeddings, which makes
p(a,b) + p(b,a) = 1 hold exactly with no inference-time correction. The
literal scaled-cosine head (symmetric bilinear form A'A) is kept behind
`head_kind="paper_literal"`; since it is symmetric in its arguments, its
predictions are wrapped with the averaging symmetrization instead.

Training is plain numpy reverse-mode accumulation plus Adam with a stepped
learning-rate schedule; an ensemble of like-configured models differing
only in seed is combined by probability averaging (or majority vote).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError
from .signals import flip_features

_LN_EPS = 1e-10
_NORM_EPS = 1e-12

DEFAULT_LR_SCHEDULE = ((0, 0.01), (10_000, 0.005), (20_000, 0.001), (30_000, 0.0005), (40_000, 0.0001))


@dataclass(frozen=True)
class DnnConfig:
    layer_sizes: tuple[int, ...] = (12, 128, 64, 32, 16, 8)
    activation: str = "relu"
    dropout_rate: float = 0.5
    layer_norm: bool = True
    residual: bool = False
    head_kind: str = "skew_bilinear"
    ensemble_size: int = 11
    batch_size: int = 128
    lr_schedule: tuple[tuple[int, float], ...] = DEFAULT_LR_SCHEDULE
    total_steps: int = 50_000
    ema_decay: float | None = None
    combine: str = "mean_probability"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_sizes", tuple(self.layer_sizes))
        object.__setattr__(self, "lr_schedule", tuple(tuple(x) for x in self.lr_schedule))
        if self.layer_sizes[0] != 12:
            raise ConfigurationError("input layer must have 12 units")
        if len(self.layer_sizes) < 2:
            raise ConfigurationError("need at least one dense layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError("dropout_rate must be in [0,1)")
        if self.activation not in ("relu", "leaky_relu", "tanh"):
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.head_kind not in ("skew_bilinear", "score_difference", "paper_literal"):
            raise ConfigurationError(f"unknown head_kind {self.head_kind!r}")
        if self.combine not in ("mean_probability", "majority_vote"):
            raise ConfigurationError(f"unknown combine {self.combine!r}")
        steps = [s for s, _ in self.lr_schedule]
        if steps != sorted(set(steps)):
            raise ConfigurationError("lr_schedule steps must be strictly increasing")
        if self.residual and len(set(self.layer_sizes[1:])) != 1:
            raise ConfigurationError("residual stacks require equal hidden widths")

    @property
    def embedding_dim(self) -> int:
        return self.layer_sizes[-1]

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activation": self.activation,
            "dropout_rate": self.dropout_rate,
            "layer_norm": self.layer_norm,
            "residual": self.residual,
            "head_kind": self.head_kind,
            "ensemble_size": self.ensemble_size,
            "batch_size": self.batch_size,
            "lr_schedule": [list(x) for x in self.lr_schedule],
            "total_steps": self.total_steps,
            "ema_decay": self.ema_decay,
            "combine": self.combine,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DnnConfig":
        return cls(**d)


@dataclass
class DnnModel:
    config: DnnConfig
    params: dict[str, np.ndarray]
    seed: int = 0
    step: int = 0
    ema: dict[str, np.ndarray] | None = None

    def eval_params(self, use_ema: bool = False) -> dict[str, np.ndarray]:
        return self.ema if (use_ema and self.ema is not None) else self.params


@dataclass
class DnnEnsemble:
    config: DnnConfig
    members: list[DnnModel]

    def __post_init__(self):
        if not self.members:
            raise InputError("ensemble needs at least one member")


def init_model(config: DnnConfig, seed) -> DnnModel:
    """He-initialized weights, zero biases, unit layer-norm gains."""
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    sizes = config.layer_sizes
    for l in range(len(sizes) - 1):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        params[f"W{l}"] = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params[f"b{l}"] = np.zeros(fan_out)
        if config.layer_norm:
            params[f"g{l}"] = np.ones(fan_out)
            params[f"o{l}"] = np.zeros(fan_out)
    e = config.embedding_dim
    if config.head_kind == "paper_literal":
        params["M"] = np.eye(e)
    elif config.head_kind == "score_difference":
        params["u"] = rng.standard_normal(e) * 0.01
    else:
        params["M"] = rng.standard_normal((e, e)) * 0.01
    params["w"] = np.array(1.0)
    return DnnModel(config=config, params=params, seed=_seed_entropy(seed))


def _seed_entropy(seed) -> int:
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1, dtype=np.uint64)[0])
    return int(seed)


def _activation(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky_relu":
        return np.where(z > 0, z, 0.01 * z)
    return np.tanh(z)


def _activation_grad(name, z, a):
    if name == "relu":
        return (z > 0).astype(float)
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, 0.01)
    return 1.0 - a * a


def tower_forward(model: DnnModel, x: np.ndarray, train: bool = False,
                  rng: np.random.Generator | None = None, params: dict | None = None):
    """Run the dense stack; returns (embedding, caches for backward)."""
    cfg = model.config
    p = params if params is not None else model.params
    caches = []
    out = np.atleast_2d(np.asarray(x, dtype=float))
    for l in range(len(cfg.layer_sizes) - 1):
        x_in = out
        z = x_in @ p[f"W{l}"] + p[f"b{l}"]
        a = _activation(cfg.activation, z)
        if train and cfg.dropout_rate > 0.0:
            mask = (rng.random(a.shape) >= cfg.dropout_rate) / (1.0 - cfg.dropout_rate)
            d = a * mask
        else:
            mask = None
            d = a
        if cfg.layer_norm:
            mu = d.mean(axis=1, keepdims=True)
            centered = d - mu
            std = np.sqrt((centered * centered).mean(axis=1, keepdims=True) + _LN_EPS)
            xhat = centered / std
            out = xhat * p[f"g{l}"] + p[f"o{l}"]
        else:
            xhat = std = None
            out = d
        if cfg.residual and x_in.shape == out.shape:
            out = out + x_in
        caches.append((x_in, z, a, mask, xhat, std))
    return out, caches


def tower_backward(model: DnnModel, dout: np.ndarray, caches, grads: dict,
                   params: dict | None = None):
    """Accumulate parameter gradients for one tower pass."""
    cfg = model.config
    p = params if params is not None else model.params
    for l in range(len(cfg.layer_sizes) - 2, -1, -1):
        x_in, z, a, mask, xhat, std = caches[l]
        residual_skip = cfg.residual and x_in.shape == dout.shape
        if cfg.layer_norm:
            grads[f"g{l}"] += (dout * xhat).sum(axis=0)
            grads[f"o{l}"] += dout.sum(axis=0)
            dxhat = dout * p[f"g{l}"]
            dd = (
                dxhat
                - dxhat.mean(axis=1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
            ) / std
        else:
            dd = dout
        da = dd * mask if mask is not None else dd
        dz = da * _activation_grad(cfg.activation, z, a)
        grads[f"W{l}"] += x_in.T @ dz
        grads[f"b{l}"] += dz.sum(axis=0)
        dx = dz @ p[f"W{l}"].T
        if residual_skip:
            dx = dx + dout
        dout = dx
    return dout


def _unit_rows(h):
    n = np.sqrt((h * h).sum(axis=-1, keepdims=True))
    n = np.where(n < _NORM_EPS, n + _NORM_EPS, n)
    return h / n, n


def head_probability(model: DnnModel, h1: np.ndarray, h2: np.ndarray,
                     params: dict | None = None, with_cache: bool = False):
    """Probability that the first embedding's side is preferred."""
    cfg = model.config
    p = params if params is not None else model.params
    h1 = np.atleast_2d(h1)
    h2 = np.atleast_2d(h2)
    h1n, n1 = _unit_rows(h1)
    h2n, n2 = _unit_rows(h2)
    w = float(p["w"])
    if cfg.head_kind == "skew_bilinear":
        bmat = p["M"] - p["M"].T
        s = np.einsum("bi,ij,bj->b", h1n, bmat, h2n)
    elif cfg.head_kind == "score_difference":
        s = (h1n - h2n) @ p["u"]
    else:  # paper_literal: symmetric bilinear form A'A
        bmat = p["M"].T @ p["M"]
        s = np.einsum("bi,ij,bj->b", h1n, bmat, h2n)
    prob = 1.0 / (1.0 + np.exp(-np.clip(w * s, -500, 500)))
    if with_cache:
        return prob, (h1n, n1, h2n, n2, s)
    return prob


def _head_backward(model: DnnModel, dlogit, cache, grads, params=None):
    cfg = model.config
    p = params if params is not None else model.params
    h1n, n1, h2n, n2, s = cache
    w = float(p["w"])
    grads["w"] += np.array(dlogit @ s)
    if cfg.head_kind == "skew_bilinear":
        bmat = p["M"] - p["M"].T
        c = w * np.einsum("b,bi,bj->ij", dlogit, h1n, h2n)
        grads["M"] += c - c.T
        dh1n = w * dlogit[:, None] * (h2n @ bmat.T)
        dh2n = w * dlogit[:, None] * (h1n @ bmat)
    elif cfg.head_kind == "score_difference":
        grads["u"] += w * (dlogit @ (h1n - h2n))
        dh1n = w * dlogit[:, None] * p["u"]
        dh2n = -w * dlogit[:, None] * p["u"]
    else:
        gmat = p["M"].T @ p["M"]
        dgm = w * np.einsum("b,bi,bj->ij", dlogit, h1n, h2n)
        grads["M"] += p["M"] @ (dgm + dgm.T)
        dh1n = w * dlogit[:, None] * (h2n @ gmat.T)
        dh2n = w * dlogit[:, None] * (h1n @ gmat)
    dh1 = (dh1n - h1n * (h1n * dh1n).sum(axis=-1, keepdims=True)) / n1
    dh2 = (dh2n - h2n * (h2n * dh2n).sum(axis=-1, keepdims=True)) / n2
    return dh1, dh2


def pair_probability(model: DnnModel, fv, params=None, use_ema: bool = False):
    """Deterministic eval-mode probability for feature vectors (B,12)."""
    p = params if params is not None else model.eval_params(use_ema)
    fv = np.atleast_2d(np.asarray(fv, dtype=float))
    b = fv.shape[0]
    h, _ = tower_forward(model, np.concatenate([fv, flip_features(fv)], axis=0),
                         train=False, params=p)
    h1, h2 = h[:b], h[b:]
    prob = head_probability(model, h1, h2, params=p)
    if model.config.head_kind == "paper_literal":
        # The symmetric cosine head needs the averaging fix-up.
        prob = 0.5 * (prob + 1.0 - head_probability(model, h2, h1, params=p))
    return prob


def batch_loss(model: DnnModel, fv, y, w, params=None, train: bool = False,
               rng: np.random.Generator | None = None) -> float:
    """Weighted mean binary cross-entropy of the pair probabilities."""
    p = params if params is not None else model.params
    fv = np.atleast_2d(np.asarray(fv, dtype=float))
    b = fv.shape[0]
    stacked = np.concatenate([fv, flip_features(fv)], axis=0)
    h, _ = tower_forward(model, stacked, train=train, rng=rng, params=p)
    prob = head_probability(model, h[:b], h[b:], params=p)
    pc = np.clip(prob, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(w * (y * np.log(pc) + (1 - y) * np.log1p(-pc))))


def loss_and_grads(model: DnnModel, fv, y, w, train: bool = True,
                   rng: np.random.Generator | None = None):
    """Loss plus full reverse-mode gradients for one minibatch."""
    cfg = model.config
    fv = np.atleast_2d(np.asarray(fv, dtype=float))
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    b = fv.shape[0]

    # Both tower passes share weights; run them as one stacked batch.
    stacked = np.concatenate([fv, flip_features(fv)], axis=0)
    h, cache = tower_forward(model, stacked, train=train, rng=rng)
    prob, head_cache = head_probability(model, h[:b], h[b:], with_cache=True)
    pc = np.clip(prob, 1e-12, 1.0 - 1e-12)
    loss = float(-np.mean(w * (y * np.log(pc) + (1 - y) * np.log1p(-pc))))

    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    dlogit = w * (prob - y) / b  # sigmoid + BCE shortcut
    dh1, dh2 = _head_backward(model, dlogit, head_cache, grads)
    tower_backward(model, np.concatenate([dh1, dh2], axis=0), cache, grads)
    return loss, grads


def lr_at(schedule, step: int) -> float:
    rate = schedule[0][1]
    for s, r in schedule:
        if step >= s:
            rate = r
    return rate


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, g in grads.items():
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        params[k] = params[k] - lr * (state.m[k] / bc1) / (np.sqrt(state.v[k] / bc2) + eps)


def ema_update(model: DnnModel, decay: float):
    if model.ema is None:
        model.ema = {k: p.copy() for k, p in model.params.items()}
        return
    for k, p in model.params.items():
        model.ema[k] = decay * model.ema[k] + (1.0 - decay) * p


def train_single(fv, y, w, config: DnnConfig, seed) -> DnnModel:
    """Train one member to config.total_steps; deterministic given seed."""
    fv = np.asarray(fv, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(fv) == 0:
        raise InputError("empty training set")
    model = init_model(config, seed)
    rng = np.random.default_rng(
        seed.spawn(1)[0] if isinstance(seed, np.random.SeedSequence) else [int(seed), 0xD0]
    )
    adam = AdamState.for_params(model.params)
    n = len(fv)
    bs = config.batch_size
    order = rng.permutation(n)
    pos = 0
    while model.step < config.total_steps:
        if pos + bs > n:
            order = rng.permutation(n)
            pos = 0
        idx = order[pos:pos + bs]
        pos += bs
        _, grads = loss_and_grads(model, fv[idx], y[idx], w[idx], train=True, rng=rng)
        adam_step(model.params, grads, adam, lr_at(config.lr_schedule, model.step))
        model.step += 1
        if config.ema_decay is not None:
            ema_update(model, config.ema_decay)
    return model


def _train_member(args):
    fv, y, w, config, spawn_key = args
    seed = np.random.SeedSequence(config.seed, spawn_key=(spawn_key,))
    return train_single(fv, y, w, config, seed)


def train_ensemble(fv, y, w, config: DnnConfig, n_jobs: int = 1) -> DnnEnsemble:
    """Train ensemble_size models differing only in their RNG streams."""
    jobs = [(fv, y, w, config, i) for i in range(config.ensemble_size)]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            members = list(pool.map(_train_member, jobs))
    else:
        members = [_train_member(j) for j in jobs]
    return DnnEnsemble(config=config, members=members)


def member_probabilities(ensemble: DnnEnsemble, fv, use_ema: bool = False) -> np.ndarray:
    fv = np.atleast_2d(np.asarray(fv, dtype=float))
    return np.stack(
        [pair_probability(m, fv, use_ema=use_ema) for m in ensemble.members], axis=-1
    )


def predict(ensemble: DnnEnsemble, fv, use_ema: bool = False):
    """Combined probability that side a is preferred."""
    single = np.asarray(fv).ndim == 1
    probs = member_probabilities(ensemble, fv, use_ema=use_ema)
    if ensemble.config.combine == "majority_vote":
        out = (probs > 0.5).mean(axis=-1)
    else:
        out = probs.mean(axis=-1)
    return float(out[0]) if single else out


def to_dict(ensemble: DnnEnsemble) -> dict:
    return {
        "kind": "dnn",
        "config": ensemble.config.to_dict(),
        "members": [
            {
                "seed": m.seed,
                "step": m.step,
                "params": {k: v.tolist() for k, v in m.params.items()},
                "ema": {k: v.tolist() for k, v in m.ema.items()} if m.ema else None,
            }
            for m in ensemble.members
        ],
    }


def from_dict(d: dict) -> DnnEnsemble:
    if d.get("kind") != "dnn":
        raise InputError(f"not a dnn model: kind={d.get('kind')!r}")
    config = DnnConfig.from_dict(d["config"])
    members = []
    for md in d["members"]:
        params = {k: np.asarray(v) for k, v in md["params"].items()}
        ema = {k: np.asarray(v) for k, v in md["ema"].items()} if md.get("ema") else None
        members.append(DnnModel(config=config, params=params, seed=md["seed"],
                                step=md["step"], ema=ema))
    return DnnEnsemble(config=config, members=members)
