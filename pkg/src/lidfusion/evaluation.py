"""Slice-wise evaluation, decision routing and multiway aggregation.

Samples with no recognizer signals on either side carry no information
beyond the two acoustic scores, so the router can bypass the model there
and compare the raw scores directly (the default). Reports break the
pairwise error rate down by missingness slice and additionally average
per-pair accuracy over the highest-volume language pairs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .signals import MissingnessClass, classify_missingness

SLICES = ("both", "either", "neither", "all")
DEFAULT_TOP_K = 15


@dataclass
class Router:
    backend: object
    neither_policy: str = "langid_compare"  # or "model"

    def __post_init__(self):
        if self.neither_policy not in ("langid_compare", "model"):
            raise InputError(f"unknown neither_policy {self.neither_policy!r}")


def decide(router: Router, sample) -> str:
    """Pick 'A' or 'B'. Ties resolve to side A."""
    return decide_batch(router, [sample])[0]


def decide_batch(router: Router, samples) -> list[str]:
    p = np.asarray(router.backend.pair_probability(samples), dtype=float)
    picks = np.where(p >= 0.5, "A", "B")
    if router.neither_policy == "langid_compare":
        for i, s in enumerate(samples):
            if classify_missingness(s) == MissingnessClass.NEITHER:
                picks[i] = "A" if s.side_a.langid_score >= s.side_b.langid_score else "B"
    return list(picks)


@dataclass
class EvalReport:
    backend: str
    dataset_hash: str
    slices: dict[str, dict] = field(default_factory=dict)
    pair_table: dict[str, dict] = field(default_factory=dict)
    top_k: int = DEFAULT_TOP_K
    top_k_pair_average: float | None = None

    def error_rate(self, slice_name: str) -> float | None:
        entry = self.slices.get(slice_name)
        return None if entry is None else entry["error_rate"]

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "dataset_hash": self.dataset_hash,
            "slices": self.slices,
            "pair_table": self.pair_table,
            "top_k": self.top_k,
            "top_k_pair_average": self.top_k_pair_average,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    def render_text(self) -> str:
        lines = [f"backend: {self.backend}"]
        header = f"{'slice':<9}{'error':>9}{'count':>9}{'weight':>11}"
        lines.append(header)
        for name in SLICES:
            entry = self.slices.get(name)
            if entry is None:
                lines.append(f"{name:<9}{'--':>9}")
            else:
                lines.append(
                    f"{name:<9}{entry['error_rate']:>9.4f}{entry['count']:>9}"
                    f"{entry['weight']:>11.2f}"
                )
        if self.top_k_pair_average is not None:
            lines.append(f"top-{self.top_k} pair accuracy: {self.top_k_pair_average:.4f}")
        return "\n".join(lines)


def dataset_hash(samples) -> str:
    h = hashlib.sha256()
    for s in samples:
        h.update(json.dumps(s.to_dict(), sort_keys=True).encode())
    return h.hexdigest()[:16]


def evaluate(router: Router, samples, top_k: int = DEFAULT_TOP_K) -> EvalReport:
    """Weighted error rates per missingness slice plus the top-volume
    pair-average accuracy. Deterministic and order-invariant."""
    if not samples:
        raise InputError("empty test set")
    picks = decide_batch(router, samples)
    correct = np.array(
        [(pick == "A") == (s.label == 1) for pick, s in zip(picks, samples)]
    )
    weights = np.array([s.weight for s in samples])
    miss = np.array([classify_missingness(s).value for s in samples])

    report = EvalReport(
        backend=getattr(router.backend, "name", "unknown"),
        dataset_hash=dataset_hash(samples),
        top_k=top_k,
    )
    for name in SLICES:
        sel = np.ones(len(samples), dtype=bool) if name == "all" else miss == name
        if not sel.any():
            continue
        wsum = weights[sel].sum()
        report.slices[name] = {
            "error_rate": float(weights[sel][~correct[sel]].sum() / wsum),
            "count": int(sel.sum()),
            "weight": float(wsum),
        }

    pair_stats: dict[str, list] = {}
    for s, ok in zip(samples, correct):
        key = "|".join(sorted((s.lang_a, s.lang_b)))
        stat = pair_stats.setdefault(key, [0, 0])
        stat[0] += 1
        stat[1] += int(not ok)
    for key, (count, errors) in sorted(pair_stats.items()):
        report.pair_table[key] = {"count": count, "error_rate": errors / count}
    by_volume = sorted(report.pair_table.items(), key=lambda kv: (-kv[1]["count"], kv[0]))
    top = by_volume[:top_k]
    if top:
        report.top_k_pair_average = float(
            np.mean([1.0 - entry["error_rate"] for _, entry in top])
        )
    return report


def aggregate_multiway(scores: dict[tuple[str, str], float]) -> list[tuple[str, float]]:
    """Rank n languages from all ordered pairwise scores.

    g(a) = sum over b != a of f(a,b); requires f(a,b) + f(b,a) = 1. Returns
    (language, g) sorted by g descending, ties by language id.
    """
    langs = sorted({lang for pair in scores for lang in pair})
    for a in langs:
        for b in langs:
            if a >= b:
                continue
            if (a, b) not in scores or (b, a) not in scores:
                raise InputError(f"missing score for pair ({a}, {b})")
            if abs(scores[(a, b)] + scores[(b, a)] - 1.0) > 1e-6:
                raise InputError(f"inconsistent scores for pair ({a}, {b})")
    g = {a: sum(scores[(a, b)] for b in langs if b != a) for a in langs}
    return sorted(g.items(), key=lambda kv: (-kv[1], kv[0]))


def compare_backends(reports: list[EvalReport], baseline: str = "baseline") -> dict:
    """Per-slice errors for every backend plus relative reductions vs the
    baseline report, computed as (base - new) / base."""
    hashes = {r.dataset_hash for r in reports}
    if len(hashes) != 1:
        raise InputError(f"reports computed on different test sets: {sorted(hashes)}")
    base = next((r for r in reports if r.backend == baseline), None)
    if base is None:
        raise InputError(f"no report from baseline backend {baseline!r}")
    rows = []
    for r in reports:
        row = {"backend": r.backend}
        for name in SLICES:
            err = r.error_rate(name)
            row[name] = err
            base_err = base.error_rate(name)
            if err is None or base_err in (None, 0.0):
                row[f"{name}_reduction"] = None
            else:
                row[f"{name}_reduction"] = (base_err - err) / base_err
        rows.append(row)
    return {"baseline": baseline, "dataset_hash": base.dataset_hash, "rows": rows}


def render_comparison(table: dict) -> str:
    lines = [f"{'backend':<10}" + "".join(f"{s:>10}{s + ' red.':>12}" for s in SLICES)]
    for row in table["rows"]:
        cells = [f"{row['backend']:<10}"]
        for s in SLICES:
            err = row[s]
            red = row[f"{s}_reduction"]
            cells.append("      --  " if err is None else f"{err:>9.4f} ")
            cells.append("        --  " if red is None else f"{red:>10.1%}  ")
        lines.append("".join(cells))
    return "\n".join(lines)
