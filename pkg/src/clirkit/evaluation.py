"""Retrieval effectiveness measures and significance testing.

Mean average precision over binary relevance (grade >= 1 counts as
relevant), a paired two-tailed t test whose p value comes from the
regularized incomplete beta function (continued fraction, no external
statistics package), a Bonferroni threshold for families of
comparisons, and the pooled histogram of within-document positions of
top-ranked parts.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import AbstractSet, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

Scored = tuple[str, float]

# comparisons folded into one Bonferroni family by default: one CLIR
# table row spans nine language pairs
DEFAULT_COMPARISONS = 9


def parse_qrels(path: str) -> dict[str, dict[str, int]]:
    """Read ``<query_id> 0 <doc_id> <grade>`` judgments.

    A repeated (query, document) pair keeps the last grade seen and
    logs a warning.
    """
    qrels: dict[str, dict[str, int]] = {}
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            fields = line.split()
            if len(fields) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields, "
                                 f"got {len(fields)}")
            query_id, _, doc_id, grade_text = fields
            try:
                grade = int(grade_text)
            except ValueError:
                raise ValueError(
                    f"{path}: line {lineno}: bad grade {grade_text!r}"
                ) from None
            if grade < 0:
                raise ValueError(
                    f"{path}: line {lineno}: negative grade {grade}")
            per_query = qrels.setdefault(query_id, {})
            if doc_id in per_query:
                log.warning("%s: line %d: duplicate judgment for (%s, %s), "
                            "keeping the later grade", path, lineno,
                            query_id, doc_id)
            per_query[doc_id] = grade
    return qrels


def relevant_docs(judgments: Mapping[str, int]) -> set[str]:
    """Documents judged relevant: grade 1 or higher."""
    return {doc for doc, grade in judgments.items() if grade >= 1}


def average_precision(ranked: Sequence[str],
                      relevant: AbstractSet[str]) -> float:
    """AP of one ranked document-id list against a relevant set.

    Relevant documents never retrieved contribute zero numerator terms
    but still count in the denominator. Unjudged documents in the
    ranking are simply non-relevant.
    """
    if not relevant:
        raise ValueError("no relevant documents")
    hits = 0
    precision_sum = 0.0
    for position, doc_id in enumerate(ranked, start=1):
        if doc_id in relevant:
            hits += 1
            precision_sum += hits / position
    return precision_sum / len(relevant)


def mean_average_precision(
        run: Mapping[str, Sequence[Scored]],
        qrels: Mapping[str, Mapping[str, int]],
) -> tuple[float, dict[str, float]]:
    """MAP over queries that have at least one relevant document.

    Judged queries missing from the run score 0.0; run queries without
    judgments are skipped with a warning; queries whose judgments hold
    no relevant document are excluded from the mean, with a warning.
    Returns the mean and the per-query AP values that entered it.
    """
    for query_id in run:
        if query_id not in qrels:
            log.warning("query %s has results but no judgments, skipping",
                        query_id)
    per_query: dict[str, float] = {}
    for query_id, judgments in qrels.items():
        relevant = relevant_docs(judgments)
        if not relevant:
            log.warning("query %s has no relevant documents, excluded "
                        "from the mean", query_id)
            continue
        ranked = [doc_id for doc_id, _ in run.get(query_id, [])]
        per_query[query_id] = average_precision(ranked, relevant)
    if not per_query:
        raise ValueError("no query with relevant judgments")
    mean = sum(per_query.values()) / len(per_query)
    return mean, per_query


def _beta_continued_fraction(a: float, b: float, x: float) -> float:
    """Lentz continued fraction for the incomplete beta integral."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise RuntimeError("incomplete beta did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to about 1e-10 over the unit interval."""
    if a <= 0 or b <= 0:
        raise ValueError("shape parameters must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    front = math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                     + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_continued_fraction(a, b, x) / a
    return 1.0 - front * _beta_continued_fraction(b, a, 1.0 - x) / b


def student_t_two_tailed(t: float, df: int) -> float:
    """P(|T| >= |t|) for a central t variable with df degrees of freedom."""
    if df < 1:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


@dataclass(frozen=True)
class SignificanceReport:
    t_statistic: float
    p_value: float
    corrected_alpha: float
    significant: bool
    num_comparisons: int
    df: int
    mean_difference: float
    degenerate: bool


def paired_ttest(ap_a: Sequence[float], ap_b: Sequence[float],
                 num_comparisons: int = DEFAULT_COMPARISONS,
                 alpha: float = 0.05) -> SignificanceReport:
    """Two-tailed paired t test; significant iff p <= alpha/num_comparisons.

    The standard deviation of the differences uses the n-1 denominator.
    All-zero differences mean the systems are identical: t=0, p=1, not
    significant. All differences identical but nonzero gives sd=0 with
    nonzero mean; the report flags that degenerate case and sets p=0.
    """
    if len(ap_a) != len(ap_b):
        raise ValueError("paired samples must have equal length")
    n = len(ap_a)
    if n < 2:
        raise ValueError("need at least two pairs")
    if num_comparisons < 1:
        raise ValueError("num_comparisons must be positive")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    diffs = np.asarray(ap_a, dtype=np.float64) - np.asarray(
        ap_b, dtype=np.float64)
    mean = float(diffs.mean())
    sd = float(diffs.std(ddof=1))
    df = n - 1
    corrected = alpha / num_comparisons
    if sd == 0.0:
        if mean == 0.0:
            return SignificanceReport(0.0, 1.0, corrected, False,
                                      num_comparisons, df, mean,
                                      degenerate=True)
        t = math.inf if mean > 0 else -math.inf
        return SignificanceReport(t, 0.0, corrected, True, num_comparisons,
                                  df, mean, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    p = student_t_two_tailed(t, df)
    return SignificanceReport(t, p, corrected, p <= corrected,
                              num_comparisons, df, mean, degenerate=False)


def position_histogram(per_query_top_parts: Sequence[Sequence],
                       top_n: int = 100) -> np.ndarray:
    """Pooled distribution of within-document part positions.

    Each inner sequence holds one query's parts ranked by score; the
    first ``top_n`` of each are pooled. Positions 1..10 get their own
    bin, everything beyond shares the 11th. Returns proportions that
    sum to one.
    """
    if top_n < 1:
        raise ValueError("top_n must be positive")
    counts = np.zeros(11, dtype=np.int64)
    for parts in per_query_top_parts:
        for part in list(parts)[:top_n]:
            position = getattr(part, "position", part)
            if position < 1:
                raise ValueError(f"positions are 1-based, got {position}")
            counts[min(position, 11) - 1] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError("no parts to pool")
    return counts / total


def format_histogram(proportions: np.ndarray) -> str:
    """Render the position histogram as an aligned two-column table."""
    if len(proportions) != 11:
        raise ValueError("expected 11 bins")
    labels = [str(i) for i in range(1, 11)] + [">10"]
    width = max(len(label) for label in labels)
    lines = [f"{'position':>{width + 5}}  proportion"]
    for label, value in zip(labels, proportions):
        lines.append(f"{label:>{width + 5}}  {value:.4f}")
    return "\n".join(lines)
