"""Signal vocabulary, normalization, pairing and missingness semantics.

All classifier backends consume the same 12-dimensional feature vector:
the six normalized signals of side a followed by the six of side b.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError

# Canonical signal order within one side. Index 0 of each side is the
# acoustic language-id probability, which is always present.
SIGNAL_NAMES = (
    "langid_score",
    "am_cost",
    "lm_cost",
    "confidence_score",
    "entropy_score",
    "text_langid_score",
)
RECOGNIZER_SIGNALS = SIGNAL_NAMES[1:]

# Signals already bounded in [0,1] get the affine map 2x-1; wide-span
# cost-like signals get a log map with per-corpus bounds.
BOUNDED_SIGNALS = frozenset({"langid_score", "confidence_score", "text_langid_score"})
LOG_SIGNALS = frozenset({"am_cost", "lm_cost", "entropy_score"})

# Feature indices where higher calibrated values favor that side's language.
INCREASING_FEATURES = frozenset({0, 3, 5, 6, 9, 11})
SIDE_A_FEATURES = tuple(range(6))
SIDE_B_FEATURES = tuple(range(6, 12))
LANGID_FEATURES = (0, 6)


class MissingnessClass(enum.Enum):
    BOTH = "both"
    EITHER = "either"
    NEITHER = "neither"


@dataclass(frozen=True)
class SignalVector:
    """One language side's signals. Recognizer-derived signals may be absent."""

    langid_score: float
    am_cost: float | None = None
    lm_cost: float | None = None
    confidence_score: float | None = None
    entropy_score: float | None = None
    text_langid_score: float | None = None
    recognizer_available: bool = True

    def __post_init__(self):
        if not math.isfinite(self.langid_score):
            raise InputError("langid_score must be finite")
        if not 0.0 <= self.langid_score <= 1.0:
            raise InputError(f"langid_score out of [0,1]: {self.langid_score}")
        recog = [getattr(self, name) for name in RECOGNIZER_SIGNALS]
        if self.recognizer_available:
            if any(v is None for v in recog):
                raise InputError("recognizer_available=True but recognizer signals missing")
        elif any(v is not None for v in recog):
            raise InputError("recognizer_available=False but recognizer signals present")

    def masked(self) -> "SignalVector":
        """Copy with the five recognizer signals removed."""
        return SignalVector(langid_score=self.langid_score, recognizer_available=False)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in SIGNAL_NAMES}

    @classmethod
    def from_dict(cls, d: dict) -> "SignalVector":
        recog = {name: d.get(name) for name in RECOGNIZER_SIGNALS}
        available = all(v is not None for v in recog.values())
        if not available:
            recog = {name: None for name in RECOGNIZER_SIGNALS}
        return cls(langid_score=d["langid_score"], recognizer_available=available, **recog)


@dataclass(frozen=True)
class PairSample:
    """A labeled ordered language pair. label=1 means side a is correct."""

    side_a: SignalVector
    side_b: SignalVector
    lang_a: str
    lang_b: str
    label: int
    utterance_id: str
    weight: float = 1.0

    def __post_init__(self):
        if self.lang_a == self.lang_b:
            raise InputError(f"pair with identical languages: {self.lang_a}")
        if self.label not in (0, 1):
            raise InputError(f"label must be 0 or 1, got {self.label}")
        if not self.weight > 0:
            raise InputError(f"weight must be positive, got {self.weight}")

    def swapped(self) -> "PairSample":
        return PairSample(
            side_a=self.side_b,
            side_b=self.side_a,
            lang_a=self.lang_b,
            lang_b=self.lang_a,
            label=1 - self.label,
            utterance_id=self.utterance_id,
            weight=self.weight,
        )

    def reweighted(self, weight: float) -> "PairSample":
        return PairSample(
            side_a=self.side_a,
            side_b=self.side_b,
            lang_a=self.lang_a,
            lang_b=self.lang_b,
            label=self.label,
            utterance_id=self.utterance_id,
            weight=weight,
        )

    def to_dict(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "lang_a": self.lang_a,
            "lang_b": self.lang_b,
            "label": self.label,
            "weight": self.weight,
            "a": self.side_a.to_dict(),
            "b": self.side_b.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PairSample":
        return cls(
            side_a=SignalVector.from_dict(d["a"]),
            side_b=SignalVector.from_dict(d["b"]),
            lang_a=d["lang_a"],
            lang_b=d["lang_b"],
            label=int(d["label"]),
            utterance_id=d["utterance_id"],
            weight=float(d.get("weight", 1.0)),
        )


@dataclass(frozen=True)
class SignalNorm:
    kind: str  # "affine" | "log"
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("affine", "log"):
            raise ConfigurationError(f"unknown normalization kind: {self.kind}")
        if not self.hi > self.lo:
            raise ConfigurationError(f"bounds must satisfy hi > lo: ({self.lo}, {self.hi})")
        if self.kind == "log" and self.lo <= 0:
            raise ConfigurationError("log normalization needs a positive lower bound")


@dataclass(frozen=True)
class NormConfig:
    """Per-signal normalization parameters mapping raw signals into [-1,1]."""

    signals: dict[str, SignalNorm] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            name: {"kind": n.kind, "lo": n.lo, "hi": n.hi}
            for name, n in self.signals.items()
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NormConfig":
        payload = json.loads(text)
        return cls(signals={name: SignalNorm(**spec) for name, spec in payload.items()})

    @classmethod
    def default(cls) -> "NormConfig":
        """Unit bounds for the bounded signals, generic bounds for costs."""
        signals = {}
        for name in SIGNAL_NAMES:
            if name in BOUNDED_SIGNALS:
                signals[name] = SignalNorm("affine", 0.0, 1.0)
            else:
                signals[name] = SignalNorm("log", 0.1, 100.0)
        return cls(signals=signals)


def normalize(signal_name: str, raw_value: float, norm_config: NormConfig) -> float:
    """Map one raw signal value into [-1, 1]."""
    try:
        norm = norm_config.signals[signal_name]
    except KeyError:
        raise ConfigurationError(f"no normalization configured for {signal_name!r}")
    if not math.isfinite(raw_value):
        raise InputError(f"{signal_name}: non-finite value {raw_value}")
    if norm.kind == "affine":
        y = 2.0 * (raw_value - norm.lo) / (norm.hi - norm.lo) - 1.0
    else:
        x = max(raw_value, norm.lo)  # floor nonpositive / underflowing inputs
        y = 2.0 * (math.log(x) - math.log(norm.lo)) / (math.log(norm.hi) - math.log(norm.lo)) - 1.0
    return min(1.0, max(-1.0, y))


def build_feature_vector(pair: PairSample, norm_config: NormConfig) -> np.ndarray:
    """Concatenated normalized features, side a then side b, missing slots 0."""
    fv = np.zeros(12)
    for offset, side in ((0, pair.side_a), (6, pair.side_b)):
        fv[offset] = normalize("langid_score", side.langid_score, norm_config)
        if side.recognizer_available:
            for k, name in enumerate(RECOGNIZER_SIGNALS, start=1):
                fv[offset + k] = normalize(name, getattr(side, name), norm_config)
    return fv


def flip_features(fv: np.ndarray) -> np.ndarray:
    """Swap the side-a and side-b halves of feature vectors (last axis 12)."""
    return np.concatenate([fv[..., 6:], fv[..., :6]], axis=-1)


def normalize_array(signal_name: str, values: np.ndarray, norm_config: NormConfig) -> np.ndarray:
    """Vectorized normalize(); NaN entries (missing signals) map to 0."""
    try:
        norm = norm_config.signals[signal_name]
    except KeyError:
        raise ConfigurationError(f"no normalization configured for {signal_name!r}")
    values = np.asarray(values, dtype=float)
    if np.isinf(values).any():
        raise InputError(f"{signal_name}: non-finite value in batch")
    missing = np.isnan(values)
    x = np.where(missing, norm.lo if norm.kind == "log" else norm.lo, values)
    if norm.kind == "affine":
        y = 2.0 * (x - norm.lo) / (norm.hi - norm.lo) - 1.0
    else:
        x = np.maximum(x, norm.lo)
        y = 2.0 * (np.log(x) - math.log(norm.lo)) / (math.log(norm.hi) - math.log(norm.lo)) - 1.0
    y = np.clip(y, -1.0, 1.0)
    return np.where(missing, 0.0, y)


def build_feature_matrix(samples, norm_config: NormConfig) -> np.ndarray:
    """Stacked feature vectors for a list of samples, shape (N, 12)."""
    n = len(samples)
    raw = np.full((n, 12), np.nan)
    for i, s in enumerate(samples):
        for offset, side in ((0, s.side_a), (6, s.side_b)):
            raw[i, offset] = side.langid_score
            if side.recognizer_available:
                for k, name in enumerate(RECOGNIZER_SIGNALS, start=1):
                    raw[i, offset + k] = getattr(side, name)
    fv = np.empty((n, 12))
    for j in range(12):
        fv[:, j] = normalize_array(SIGNAL_NAMES[j % 6], raw[:, j], norm_config)
    return fv


def classify_missingness(pair: PairSample) -> MissingnessClass:
    n = int(pair.side_a.recognizer_available) + int(pair.side_b.recognizer_available)
    return (MissingnessClass.NEITHER, MissingnessClass.EITHER, MissingnessClass.BOTH)[n]


def write_jsonl(samples, path) -> None:
    with open(path, "w") as f:
        for s in samples:
            f.write(json.dumps(s.to_dict(), sort_keys=True))
            f.write("\n")


def read_jsonl(path) -> list[PairSample]:
    samples = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                samples.append(PairSample.from_dict(json.loads(line)))
    return samples
