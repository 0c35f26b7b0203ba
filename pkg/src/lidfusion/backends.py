"""Uniform prediction interface over the trained classifier families.

A backend maps a batch of pair samples to the probability that side a is
preferred. The baseline backend only compares the two acoustic language-id
scores; the lattice and DNN backends embed the normalization config they
were trained with so a saved model file is self-contained.
"""

from __future__ import annotations

import json

import numpy as np

from . import dnn, lattice
from .errors import InputError
from .signals import NormConfig, build_feature_matrix


class BaselineBackend:
    """Raw acoustic score comparison; 0.5 on exact ties."""

    name = "baseline"

    def pair_probability(self, samples) -> np.ndarray:
        la = np.array([s.side_a.langid_score for s in samples])
        lb = np.array([s.side_b.langid_score for s in samples])
        return np.where(la > lb, 1.0, np.where(la < lb, 0.0, 0.5))


class LatticeBackend:
    name = "lattice"

    def __init__(self, model: lattice.LatticeEnsembleModel):
        self.model = model

    def pair_probability(self, samples) -> np.ndarray:
        fv = build_feature_matrix(samples, self.model.norm_config)
        return np.atleast_1d(lattice.predict_symmetrized(self.model, fv))


class DnnBackend:
    name = "dnn"

    def __init__(self, ensemble: dnn.DnnEnsemble, norm_config: NormConfig):
        self.ensemble = ensemble
        self.norm_config = norm_config

    def pair_probability(self, samples) -> np.ndarray:
        fv = build_feature_matrix(samples, self.norm_config)
        return np.atleast_1d(dnn.predict(self.ensemble, fv))


def save_model(backend, path) -> None:
    if isinstance(backend, LatticeBackend):
        payload = lattice.to_dict(backend.model)
    elif isinstance(backend, DnnBackend):
        payload = dnn.to_dict(backend.ensemble)
        payload["norm_config"] = json.loads(backend.norm_config.to_json())
    elif isinstance(backend, BaselineBackend):
        payload = {"kind": "baseline"}
    else:
        raise InputError(f"cannot serialize backend {backend!r}")
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)
        f.write("\n")


def load_model(path):
    with open(path) as f:
        payload = json.load(f)
    kind = payload.get("kind")
    if kind == "lattice":
        return LatticeBackend(lattice.from_dict(payload))
    if kind == "dnn":
        norm = NormConfig.from_json(json.dumps(payload["norm_config"]))
        return DnnBackend(dnn.from_dict(payload), norm)
    if kind == "baseline":
        return BaselineBackend()
    raise InputError(f"unknown model kind {kind!r} in {path}")
