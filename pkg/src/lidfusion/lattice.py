"""Lattice-regression ensemble backend.

Twenty multilinear-interpolation submodels over random 8-of-12 feature
subsets, fed by monotonic piecewise-linear calibrators. The acoustic
language-id features (indices 0 and 6) get 3 lattice vertices, all others
2. Monotonicity of every calibrator is enforced after every optimizer step
by projecting its outputs onto the non-decreasing cone (pool adjacent
violators). Inference symmetrizes: f'(a,b) = (f(a,b) + 1 - f(b,a)) / 2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .signals import (
    INCREASING_FEATURES,
    LANGID_FEATURES,
    SIDE_A_FEATURES,
    NormConfig,
    flip_features,
)

N_FEATURES = 12
SUBSET_SIZE = 8

# All 2**8 corner bit patterns of an 8-dim interpolation cell, ordered so
# that a C-order reshape of a (.., 256) corner axis to (.., 2, ..., 2)
# puts dim d of the cell on tensor axis d.
_CORNERS = np.array(
    [[(c >> (SUBSET_SIZE - 1 - d)) & 1 for d in range(SUBSET_SIZE)] for c in range(2**SUBSET_SIZE)],
    dtype=np.int64,
)
_CORNER_MASK = _CORNERS.astype(bool)


@dataclass
class Calibrator:
    """Monotonic piecewise-linear map from [-1,1] into [0,1].

    Decreasing-direction calibrators negate the input first, so `outputs`
    is always stored non-decreasing.
    """

    feature_index: int
    outputs: np.ndarray  # (K,)
    increasing: bool = True
    keypoints: np.ndarray = None  # (K,) uniform over [-1,1]

    def __post_init__(self):
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.keypoints is None:
            self.keypoints = np.linspace(-1.0, 1.0, len(self.outputs))

    def brackets(self, x: np.ndarray):
        """Keypoint interval index and interpolation fraction for inputs x."""
        xx = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
        if not self.increasing:
            xx = -xx
        k = len(self.outputs)
        t = (xx + 1.0) * 0.5 * (k - 1)
        j = np.clip(np.floor(t).astype(np.int64), 0, k - 2)
        return j, t - j


def calibrate(cal: Calibrator, x) -> np.ndarray | float:
    j, a = cal.brackets(x)
    y = cal.outputs[j] * (1.0 - a) + cal.outputs[j + 1] * a
    return float(y) if np.isscalar(x) else y


@dataclass
class LatticeSubmodel:
    feature_subset: np.ndarray  # (8,) ascending feature indices
    vertices: np.ndarray  # (8,) vertex counts per dim
    params: np.ndarray  # flat, length prod(vertices)
    scale: float = 1.0
    bias: float = 0.0

    def __post_init__(self):
        self.feature_subset = np.asarray(self.feature_subset, dtype=np.int64)
        self.vertices = np.asarray(self.vertices, dtype=np.int64)
        self.params = np.asarray(self.params, dtype=float)
        if len(self.params) != int(np.prod(self.vertices)):
            raise InputError(
                f"param table size {len(self.params)} != vertex product {int(np.prod(self.vertices))}"
            )
        # C-order strides over the vertex grid.
        self.strides = np.ones(SUBSET_SIZE, dtype=np.int64)
        for d in range(SUBSET_SIZE - 2, -1, -1):
            self.strides[d] = self.strides[d + 1] * self.vertices[d + 1]
        self.corner_offsets = _CORNERS @ self.strides  # (256,)

    def cell(self, u: np.ndarray):
        """Interpolation cell: base index, flat vertex ids, and fractions."""
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        t = u * (self.vertices - 1)
        i = np.clip(np.floor(t).astype(np.int64), 0, self.vertices - 2)
        f = t - i
        flat = i @ self.strides
        return flat[..., None] + self.corner_offsets, f


def interpolate(sub: LatticeSubmodel, u) -> np.ndarray | float:
    """Multilinear interpolation of the submodel's vertex table at u in [0,1]^8."""
    u_arr = np.atleast_2d(np.asarray(u, dtype=float))
    flat, f = sub.cell(u_arr)
    w = np.where(_CORNER_MASK, f[:, None, :], 1.0 - f[:, None, :]).prod(axis=-1)
    out = (sub.params[flat] * w).sum(axis=-1)
    return float(out[0]) if np.asarray(u).ndim == 1 else out


@dataclass
class LatticeEnsembleModel:
    calibrators: list[Calibrator]
    submodels: list[LatticeSubmodel]
    norm_config: NormConfig
    seed: int = 0
    metadata: dict = field(default_factory=dict)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


def calibrate_all(model: LatticeEnsembleModel, fv: np.ndarray) -> np.ndarray:
    u = np.empty_like(fv)
    for k, cal in enumerate(model.calibrators):
        u[:, k] = calibrate(cal, fv[:, k])
    return u


def member_probabilities(model: LatticeEnsembleModel, fv: np.ndarray) -> np.ndarray:
    """Per-submodel probabilities, shape (B, n_submodels)."""
    fv = np.atleast_2d(fv)
    u = calibrate_all(model, fv)
    out = np.empty((fv.shape[0], len(model.submodels)))
    for j, sub in enumerate(model.submodels):
        raw = interpolate(sub, u[:, sub.feature_subset])
        out[:, j] = _sigmoid(sub.scale * np.atleast_1d(raw) + sub.bias)
    return out


def forward(model: LatticeEnsembleModel, fv) -> np.ndarray | float:
    """Ensemble probability that side a is preferred (unsymmetrized)."""
    single = np.asarray(fv).ndim == 1
    p = member_probabilities(model, fv).mean(axis=-1)
    return float(p[0]) if single else p


def predict_symmetrized(model: LatticeEnsembleModel, fv) -> np.ndarray | float:
    """f'(a,b) = (f(a,b) + 1 - f(b,a)) / 2; satisfies f'(a,b) = 1 - f'(b,a)."""
    single = np.asarray(fv).ndim == 1
    fv = np.atleast_2d(fv)
    p = 0.5 * (forward(model, fv) + 1.0 - forward(model, flip_features(fv)))
    return float(p[0]) if single else p


def pav_project(values) -> np.ndarray:
    """Euclidean projection onto the non-decreasing cone, clamped to [0,1]."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    # Stack of (mean, count) blocks; adjacent violators are pooled.
    means = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    top = 0
    for x in v:
        means[top] = x
        counts[top] = 1
        top += 1
        while top > 1 and means[top - 2] > means[top - 1]:
            total = counts[top - 2] + counts[top - 1]
            means[top - 2] = (means[top - 2] * counts[top - 2] + means[top - 1] * counts[top - 1]) / total
            counts[top - 2] = total
            top -= 1
    return np.clip(np.repeat(means[:top], counts[:top]), 0.0, 1.0)


@dataclass(frozen=True)
class LatticeTrainConfig:
    n_submodels: int = 20
    keypoints: int = 10
    langid_vertices: int = 3
    other_vertices: int = 2
    learning_rate: float = 0.05
    batch_size: int = 256
    epochs: int = 4
    ramp_scale: float = 2.0
    init_noise: float = 0.01
    seed: int = 0


def init_model(norm_config: NormConfig, config: LatticeTrainConfig) -> LatticeEnsembleModel:
    rng = np.random.default_rng(config.seed)
    calibrators = [
        Calibrator(
            feature_index=k,
            outputs=np.linspace(0.0, 1.0, config.keypoints),
            increasing=(k in INCREASING_FEATURES),
        )
        for k in range(N_FEATURES)
    ]
    submodels = []
    for _ in range(config.n_submodels):
        subset = np.sort(rng.choice(N_FEATURES, size=SUBSET_SIZE, replace=False))
        vertices = np.where(
            np.isin(subset, LANGID_FEATURES), config.langid_vertices, config.other_vertices
        )
        # Prior: calibrated side-a features pull toward "a preferred",
        # side-b features push away; small noise breaks ties.
        grids = np.meshgrid(
            *[np.linspace(-0.5, 0.5, v) for v in vertices], indexing="ij"
        )
        ramp = np.zeros(grids[0].shape)
        for d, feat in enumerate(subset):
            sign = 1.0 if feat in SIDE_A_FEATURES else -1.0
            ramp += sign * grids[d]
        params = (
            ramp.reshape(-1) * (config.ramp_scale / SUBSET_SIZE)
            + config.init_noise * rng.standard_normal(ramp.size)
        )
        submodels.append(LatticeSubmodel(subset, vertices, params))
    return LatticeEnsembleModel(
        calibrators=calibrators, submodels=submodels,
        norm_config=norm_config, seed=config.seed,
    )


def batch_loss(model: LatticeEnsembleModel, fv, y, w) -> float:
    p = np.clip(forward(model, fv), 1e-12, 1.0 - 1e-12)
    return float(-np.mean(w * (y * np.log(p) + (1 - y) * np.log1p(-p))))


def _train_step(model, fv, y, w, lr):
    """One SGD step on a minibatch; returns the pre-step batch loss."""
    b = fv.shape[0]
    n_sub = len(model.submodels)

    # Calibration forward, keeping brackets for the backward pass.
    u = np.empty_like(fv)
    cal_j = np.empty((b, N_FEATURES), dtype=np.int64)
    cal_a = np.empty((b, N_FEATURES))
    for k, cal in enumerate(model.calibrators):
        j, a = cal.brackets(fv[:, k])
        cal_j[:, k], cal_a[:, k] = j, a
        u[:, k] = cal.outputs[j] * (1.0 - a) + cal.outputs[j + 1] * a

    caches = []
    p_members = np.empty((b, n_sub))
    for j, sub in enumerate(model.submodels):
        flat, f = sub.cell(u[:, sub.feature_subset])
        pv = sub.params[flat]
        # Contract the (B, 2, ..., 2) corner tensor with one [1-f, f]
        # vector per dim, keeping the prefix tensors for the backward pass.
        vs = [np.stack([1.0 - f[:, d], f[:, d]], axis=1) for d in range(SUBSET_SIZE)]
        prefixes = []
        cur = pv  # (b, 2**k) with dim d on the most significant axis
        for d in range(SUBSET_SIZE):
            cur = cur.reshape(b, 2, -1)
            prefixes.append(cur)
            cur = np.einsum("bir,bi->br", cur, vs[d])
        raw = cur[:, 0]
        p_members[:, j] = _sigmoid(sub.scale * raw + sub.bias)
        caches.append((flat, vs, prefixes, raw))

    prob = p_members.mean(axis=-1)
    pc = np.clip(prob, 1e-12, 1.0 - 1e-12)
    loss = float(-np.mean(w * (y * np.log(pc) + (1 - y) * np.log1p(-pc))))

    dprob = w * (pc - y) / (pc * (1.0 - pc)) / b
    du = np.zeros_like(u)
    for j, sub in enumerate(model.submodels):
        flat, vs, prefixes, raw = caches[j]
        pj = p_members[:, j]
        dz = dprob * pj * (1.0 - pj) / n_sub
        draw = dz * sub.scale
        gscale = float(dz @ raw)
        gbias = float(dz.sum())

        # Reverse pass through the contraction chain: yields the gradient
        # w.r.t. every per-dim vector and (fully re-expanded) the corner
        # tensor, i.e. the vertex-parameter gradient.
        dcur = draw[:, None]  # (b, 1)
        dfrac = np.empty((b, SUBSET_SIZE))
        for d in range(SUBSET_SIZE - 1, -1, -1):
            dv = np.einsum("br,bir->bi", dcur, prefixes[d])
            dfrac[:, d] = dv[:, 1] - dv[:, 0]
            dcur = np.einsum("br,bi->bir", dcur, vs[d]).reshape(b, -1)
        gparams = np.bincount(
            flat.ravel(), weights=dcur.ravel(), minlength=len(sub.params)
        )
        du[:, sub.feature_subset] += dfrac * (sub.vertices - 1)

        sub.params -= lr * gparams
        sub.scale -= lr * gscale
        sub.bias -= lr * gbias

    for k, cal in enumerate(model.calibrators):
        g = np.bincount(cal_j[:, k], weights=du[:, k] * (1.0 - cal_a[:, k]), minlength=len(cal.outputs))
        g += np.bincount(cal_j[:, k] + 1, weights=du[:, k] * cal_a[:, k], minlength=len(cal.outputs))
        cal.outputs = pav_project(cal.outputs - lr * g)

    return loss


def train(fv, y, w, norm_config: NormConfig, config: LatticeTrainConfig,
          step_callback=None) -> LatticeEnsembleModel:
    """Minibatch SGD on weighted log loss; calibrators re-projected onto the
    monotone cone after every step. Deterministic given config.seed."""
    fv = np.asarray(fv, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if len(fv) == 0:
        raise InputError("empty training set")
    model = init_model(norm_config, config)
    rng = np.random.default_rng(config.seed + 1)
    step = 0
    for _ in range(config.epochs):
        order = rng.permutation(len(fv))
        for start in range(0, len(fv), config.batch_size):
            idx = order[start:start + config.batch_size]
            _train_step(model, fv[idx], y[idx], w[idx], config.learning_rate)
            step += 1
            if step_callback is not None:
                step_callback(model, step)
    model.metadata = {"steps": step, "train_config": config.__dict__ | {}}
    return model


def to_dict(model: LatticeEnsembleModel) -> dict:
    return {
        "kind": "lattice",
        "seed": model.seed,
        "metadata": model.metadata,
        "norm_config": json.loads(model.norm_config.to_json()),
        "calibrators": [
            {
                "feature_index": c.feature_index,
                "outputs": c.outputs.tolist(),
                "increasing": c.increasing,
            }
            for c in model.calibrators
        ],
        "submodels": [
            {
                "feature_subset": s.feature_subset.tolist(),
                "vertices": s.vertices.tolist(),
                "params": s.params.tolist(),
                "scale": s.scale,
                "bias": s.bias,
            }
            for s in model.submodels
        ],
    }


def from_dict(d: dict) -> LatticeEnsembleModel:
    if d.get("kind") != "lattice":
        raise InputError(f"not a lattice model: kind={d.get('kind')!r}")
    return LatticeEnsembleModel(
        calibrators=[
            Calibrator(c["feature_index"], np.asarray(c["outputs"]), c["increasing"])
            for c in d["calibrators"]
        ],
        submodels=[
            LatticeSubmodel(
                np.asarray(s["feature_subset"]),
                np.asarray(s["vertices"]),
                np.asarray(s["params"]),
                s["scale"],
                s["bias"],
            )
            for s in d["submodels"]
        ],
        norm_config=NormConfig.from_json(json.dumps(d["norm_config"])),
        seed=d["seed"],
        metadata=d.get("metadata", {}),
    )
