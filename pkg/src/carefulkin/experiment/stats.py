"""Rank statistics and the duration-based outlier-subject rule."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaincc

from ..errors import DegenerateDataError, ParameterError
from ..signal import median_and_mad

OUTLIER_MAD_FACTOR = 3.0


def average_ranks(values) -> tuple[np.ndarray, np.ndarray]:
    """1-based ranks with ties sharing their mean rank, plus the tie-group sizes."""
    x = np.asarray(values, dtype=float)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sizes = []
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        sizes.append(j - i + 1)
        i = j + 1
    return ranks, np.array(sizes)


def chi2_sf(x: float, df: int) -> float:
    return float(gammaincc(df / 2.0, x / 2.0))


def kruskal_wallis(groups) -> tuple[float, int, float]:
    """Tie-corrected Kruskal-Wallis H, degrees of freedom and chi-square p-value."""
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2:
        raise ParameterError("need at least two groups")
    if any(g.size == 0 for g in groups):
        raise ParameterError("every group must be non-empty")
    pooled = np.concatenate(groups)
    n = pooled.size
    ranks, ties = average_ranks(pooled)
    correction = 1.0 - float(np.sum(ties**3 - ties)) / (n**3 - n)
    if correction <= 0:
        raise DegenerateDataError("all values are identical")
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + g.size]
        h += r.sum() ** 2 / g.size
        start += g.size
    h = (12.0 / (n * (n + 1)) * h - 3.0 * (n + 1)) / correction
    df = len(groups) - 1
    return float(h), df, chi2_sf(h, df)


@dataclass
class OutlierReport:
    subjects: list
    medians: dict
    mads: dict
    reference: dict  # subject -> (median, mad) of every other subject pooled
    flagged: list
    H: float
    df: int
    p: float
    n: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "subjects": {
                str(s): {
                    "median": self.medians[s],
                    "mad": self.mads[s],
                    "rest_median": self.reference[s][0],
                    "rest_mad": self.reference[s][1],
                    "flagged": s in self.flagged,
                }
                for s in self.subjects
            },
            "kruskal_wallis": {"H": self.H, "df": self.df, "p": self.p, "N": self.n},
            "flagged": self.flagged,
        }


def _as_triplet(rec):
    if isinstance(rec, (tuple, list)):
        return int(rec[0]), rec[1], float(rec[2])
    return int(rec.subject_id), rec.carefulness_class, float(rec.duration)


def is_outlier(median: float, rest_median: float, rest_mad: float, factor: float = OUTLIER_MAD_FACTOR) -> bool:
    return abs(median - rest_median) > factor * rest_mad


def outlier_subject_report(records, factor: float = OUTLIER_MAD_FACTOR) -> OutlierReport:
    """Screen subjects by the median duration of their low-care transports.

    ``records`` yields ``(subject_id, carefulness_class, duration)`` triplets
    or objects with those attributes. A subject is flagged when its median
    lies more than ``factor`` MADs from the median of all other subjects pooled.
    """
    per: dict[int, list] = {}
    for rec in records:
        s, care, d = _as_triplet(rec)
        if care == "C1":
            per.setdefault(s, []).append(d)
    subjects = sorted(per)
    if len(subjects) < 2:
        raise ParameterError("need low-care trials from at least two subjects")
    medians, mads, reference, flagged = {}, {}, {}, []
    for s in subjects:
        medians[s], mads[s] = median_and_mad(per[s])
        rest = np.concatenate([per[o] for o in subjects if o != s])
        reference[s] = median_and_mad(rest)
        if is_outlier(medians[s], *reference[s], factor=factor):
            flagged.append(s)
    h, df, p = kruskal_wallis([per[s] for s in subjects])
    return OutlierReport(subjects, medians, mads, reference, flagged, h, df, p, sum(len(v) for v in per.values()))
