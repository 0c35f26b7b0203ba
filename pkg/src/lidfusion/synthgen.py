"""Synthetic pairwise corpus generator.

Produces labeled language pairs with the production missingness structure:
~11.7% of samples carry recognizer signals on both sides, ~52.9% on exactly
one side, ~35.4% on neither, and within the one-sided slice the recognizer
side matches the correct language ~60% of the time. Signals are drawn from
a planted generative model in which the correct language gets higher
probability-like scores and lower costs, so recognizer signals add real
information on top of the acoustic score alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, field, replace

import numpy as np

from .errors import ConfigurationError, DegenerateSliceError, InputError
from .signals import (
    LOG_SIGNALS,
    MissingnessClass,
    NormConfig,
    PairSample,
    SignalNorm,
    SignalVector,
    classify_missingness,
)

LANGUAGE_TAGS = (
    "en", "es", "fr", "de", "it", "pt", "ru", "ja", "ko", "zh",
    "hi", "ar", "nl", "pl", "tr", "sv", "th", "vi", "id", "el",
)


@dataclass(frozen=True)
class GeneratorConfig:
    utterance_count: int = 100_000
    pairs_per_utterance: int = 1
    language_count: int = 20
    missingness_probs: tuple[float, float, float] = (0.117, 0.529, 0.354)
    either_match_bias: float = 0.60
    rng_seed: int = 42

    # Acoustic langid: correct/incorrect logits are +-margin/2 plus noise;
    # the margin shrinks with a per-sample difficulty latent.
    langid_margin_mean: float = 2.2
    langid_margin_jitter: float = 1.5
    langid_noise: float = 1.0

    # Recognizer signals, conditional on correctness. Logit-normal for the
    # bounded scores, log-normal for the costs and entropy.
    conf_logit_correct: float = 0.9
    conf_logit_incorrect: float = -0.9
    conf_logit_sd: float = 1.4
    am_log_correct: float = 2.0
    am_log_incorrect: float = 2.35
    am_log_sd: float = 0.5
    lm_log_correct: float = 1.5
    lm_log_incorrect: float = 1.85
    lm_log_sd: float = 0.5
    entropy_log_correct: float = -0.6
    entropy_log_incorrect: float = -0.25
    entropy_log_sd: float = 0.45
    text_logit_correct: float = 0.8
    text_logit_incorrect: float = -0.8
    text_logit_sd: float = 1.4
    difficulty_coupling: float = 0.5

    def __post_init__(self):
        if abs(sum(self.missingness_probs) - 1.0) > 1e-12:
            raise ConfigurationError("missingness_probs must sum to 1")
        if not 0.0 < self.either_match_bias < 1.0:
            raise ConfigurationError("either_match_bias must be in (0,1)")
        if not 2 <= self.language_count <= len(LANGUAGE_TAGS):
            raise ConfigurationError(f"language_count must be in [2, {len(LANGUAGE_TAGS)}]")
        if self.utterance_count <= 0 or self.pairs_per_utterance <= 0:
            raise ConfigurationError("utterance_count and pairs_per_utterance must be positive")

    def hash(self) -> str:
        return hashlib.sha256(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()[:16]


@dataclass
class Corpus:
    samples: list[PairSample]
    norm_config: NormConfig
    metadata: dict = field(default_factory=dict)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def generate(config: GeneratorConfig) -> Corpus:
    """Draw a corpus. Deterministic given config (all randomness from rng_seed).

    All random arrays come from one Philox stream in a fixed order, so the
    output is bit-stable across platforms and numpy releases that keep the
    Philox stream contract.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(config.rng_seed)))
    n_utt = config.utterance_count
    n = n_utt * config.pairs_per_utterance
    n_lang = config.language_count

    # Zipf-ish popularity so language-pair volumes differ (top-k metric).
    pop = 1.0 / np.arange(1, n_lang + 1)
    pop /= pop.sum()

    true_lang_utt = rng.choice(n_lang, size=n_utt, p=pop)
    true_lang = np.repeat(true_lang_utt, config.pairs_per_utterance)

    # Popularity-weighted distractor, redrawn where it collides with the
    # true language.
    wrong_lang = rng.choice(n_lang, size=n, p=pop)
    while True:
        clash = wrong_lang == true_lang
        if not clash.any():
            break
        wrong_lang[clash] = rng.choice(n_lang, size=int(clash.sum()), p=pop)

    label = (rng.random(n) < 0.5).astype(int)  # 1 => correct language on side a
    difficulty = rng.random(n)
    margin = config.langid_margin_mean + config.langid_margin_jitter * (0.5 - difficulty)

    z_noise = rng.standard_normal((n, 2)) * config.langid_noise
    langid_correct = _sigmoid(margin / 2.0 + z_noise[:, 0])
    langid_wrong = _sigmoid(-margin / 2.0 + z_noise[:, 1])

    shift = config.difficulty_coupling * (0.5 - difficulty)

    def logit_normal(mean, sd, sign):
        return _sigmoid(mean + sign * shift + sd * rng.standard_normal(n))

    def log_normal(mean, sd, sign):
        return np.exp(mean + sign * shift + sd * rng.standard_normal(n))

    sig = {}
    sig["confidence_score"] = (
        logit_normal(config.conf_logit_correct, config.conf_logit_sd, +1),
        logit_normal(config.conf_logit_incorrect, config.conf_logit_sd, -1),
    )
    sig["am_cost"] = (
        log_normal(config.am_log_correct, config.am_log_sd, -1),
        log_normal(config.am_log_incorrect, config.am_log_sd, +1),
    )
    sig["lm_cost"] = (
        log_normal(config.lm_log_correct, config.lm_log_sd, -1),
        log_normal(config.lm_log_incorrect, config.lm_log_sd, +1),
    )
    sig["entropy_score"] = (
        log_normal(config.entropy_log_correct, config.entropy_log_sd, -1),
        log_normal(config.entropy_log_incorrect, config.entropy_log_sd, +1),
    )
    sig["text_langid_score"] = (
        logit_normal(config.text_logit_correct, config.text_logit_sd, +1),
        logit_normal(config.text_logit_incorrect, config.text_logit_sd, -1),
    )

    probs = np.asarray(config.missingness_probs)
    u = rng.random(n)
    miss = np.digitize(u, np.cumsum(probs)[:2])  # 0=both, 1=either, 2=neither
    match_draw = rng.random(n) < config.either_match_bias

    # Side availability: in "either" samples the surviving recognizer is on
    # the correct side with probability either_match_bias.
    correct_avail = (miss == 0) | ((miss == 1) & match_draw)
    wrong_avail = (miss == 0) | ((miss == 1) & ~match_draw)
    a_avail = np.where(label == 1, correct_avail, wrong_avail)
    b_avail = np.where(label == 1, wrong_avail, correct_avail)

    lang_names = LANGUAGE_TAGS[:n_lang]
    samples = []
    for i in range(n):
        correct_sv = dict(langid_score=float(langid_correct[i]))
        wrong_sv = dict(langid_score=float(langid_wrong[i]))
        for name, (c_vals, w_vals) in sig.items():
            correct_sv[name] = float(c_vals[i])
            wrong_sv[name] = float(w_vals[i])
        a_sig, b_sig = (correct_sv, wrong_sv) if label[i] == 1 else (wrong_sv, correct_sv)
        side_a = _make_side(a_sig, bool(a_avail[i]))
        side_b = _make_side(b_sig, bool(b_avail[i]))
        t, d = int(true_lang[i]), int(wrong_lang[i])
        lang_pair = (lang_names[t], lang_names[d]) if label[i] == 1 else (lang_names[d], lang_names[t])
        samples.append(
            PairSample(
                side_a=side_a,
                side_b=side_b,
                lang_a=lang_pair[0],
                lang_b=lang_pair[1],
                label=int(label[i]),
                utterance_id=f"utt-{i // config.pairs_per_utterance:08d}",
            )
        )

    norm_config = fit_norm_config(samples)
    metadata = {"rng_seed": config.rng_seed, "config_hash": config.hash(), "samples": n}
    return Corpus(samples=samples, norm_config=norm_config, metadata=metadata)


def _make_side(values: dict, available: bool) -> SignalVector:
    if available:
        return SignalVector(recognizer_available=True, **values)
    return SignalVector(langid_score=values["langid_score"], recognizer_available=False)


def fit_norm_config(samples) -> NormConfig:
    """Normalization bounds from the corpus: 1st/99th percentile for the
    log-mapped cost signals; bounded signals use fixed [0,1]."""
    norm = dict(NormConfig.default().signals)
    for name in LOG_SIGNALS:
        vals = []
        for s in samples:
            for side in (s.side_a, s.side_b):
                if side.recognizer_available:
                    vals.append(getattr(side, name))
        if vals:
            lo, hi = np.percentile(vals, [1.0, 99.0])
            lo = max(float(lo), 1e-9)
            hi = max(float(hi), lo * 2.0)
            norm[name] = SignalNorm("log", lo, hi)
    return NormConfig(signals=norm)


def split_by_utterance(samples, ratio: float = 0.8, seed: int = 0):
    """Disjoint train/test partition over utterance ids."""
    if not 0.0 < ratio < 1.0:
        raise InputError(f"split ratio must be in (0,1), got {ratio}")
    seen = {}
    for s in samples:
        seen.setdefault(s.utterance_id, None)
    utts = list(seen)
    order = np.random.default_rng(seed).permutation(len(utts))
    n_train = int(round(ratio * len(utts)))
    train_ids = {utts[i] for i in order[:n_train]}
    train = [s for s in samples if s.utterance_id in train_ids]
    test = [s for s in samples if s.utterance_id not in train_ids]
    return train, test


def mirror(samples) -> list[PairSample]:
    """Append the side-swapped, label-flipped twin of every sample."""
    out = []
    for s in samples:
        out.append(s)
        out.append(s.swapped())
    return out


def _matches_recognizer_side(s: PairSample) -> bool:
    side = s.side_a if s.label == 1 else s.side_b
    return side.recognizer_available


def reweight_either(samples) -> list[PairSample]:
    """Neutralize the either-slice label bias by inverse-frequency weights.

    With p the fraction of either samples whose label matches the
    recognizer side, matching samples get weight 0.5/p and the rest
    0.5/(1-p), making the weighted match fraction exactly one half.
    """
    either = [s for s in samples if classify_missingness(s) == MissingnessClass.EITHER]
    if not either:
        return list(samples)
    n_match = sum(_matches_recognizer_side(s) for s in either)
    p = n_match / len(either)
    if p in (0.0, 1.0):
        raise DegenerateSliceError(f"either slice is one-sided (match fraction {p})")
    w_match, w_other = 0.5 / p, 0.5 / (1.0 - p)
    out = []
    for s in samples:
        if classify_missingness(s) == MissingnessClass.EITHER:
            out.append(s.reweighted(w_match if _matches_recognizer_side(s) else w_other))
        else:
            out.append(s)
    return out


def augment_mask_both(samples) -> list[PairSample]:
    """For each fully-observed sample add two one-sided copies (each side's
    recognizer signals masked in turn). Originals are kept."""
    out = []
    for s in samples:
        out.append(s)
        if classify_missingness(s) == MissingnessClass.BOTH:
            out.append(replace(s, side_a=s.side_a.masked()))
            out.append(replace(s, side_b=s.side_b.masked()))
    return out


def prepare_training_set(samples, mask_augment: bool = False) -> list[PairSample]:
    """Standard training pipeline: mirror, debias, optionally mask-augment."""
    out = reweight_either(mirror(samples))
    if mask_augment:
        out = augment_mask_both(out)
    return out
