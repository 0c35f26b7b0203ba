import numpy as np
import pytest

from lidfusion import synthgen
from lidfusion.signals import PairSample, SignalVector


@pytest.fixture(scope="session")
def small_corpus():
    """8k-utterance corpus shared by tests that only need realistic data."""
    return synthgen.generate(synthgen.GeneratorConfig(utterance_count=8000, rng_seed=7))


def make_side(langid=0.8, available=True, rng=None, **overrides):
    if not available:
        return SignalVector(langid_score=langid, recognizer_available=False)
    values = dict(
        langid_score=langid,
        am_cost=8.0,
        lm_cost=5.0,
        confidence_score=0.7,
        entropy_score=0.4,
        text_langid_score=0.6,
    )
    if rng is not None:
        values.update(
            langid_score=float(rng.random()),
            am_cost=float(np.exp(rng.normal(2, 0.5))),
            lm_cost=float(np.exp(rng.normal(1.5, 0.5))),
            confidence_score=float(rng.random()),
            entropy_score=float(np.exp(rng.normal(-0.5, 0.4))),
            text_langid_score=float(rng.random()),
        )
    values.update(overrides)
    return SignalVector(**values)


def make_pair(label=1, a_available=True, b_available=True, rng=None,
              lang_a="en", lang_b="es", utterance_id="u0", weight=1.0):
    return PairSample(
        side_a=make_side(available=a_available, rng=rng),
        side_b=make_side(langid=0.3, available=b_available, rng=rng),
        lang_a=lang_a,
        lang_b=lang_b,
        label=label,
        utterance_id=utterance_id,
        weight=weight,
    )
