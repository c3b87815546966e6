"""Replicate-level aggregation: mean, sd and a normal CI of the mean."""
from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from ..exceptions import HeritabilityError

Z95 = 1.96
SUMMARY_COLUMNS = (
    "scenario", "estimator", "quantity", "replicates", "mean", "sd", "ci_low", "ci_high",
    "truth_mean", "bias_mean", "bias_sd", "bias_ci_low", "bias_ci_high",
)


def mean_sd_ci(values):
    """``(mean, sd, (lo, hi))`` with ``sd`` using ``ddof=1`` and ``mean +- 1.96 sd / sqrt(R)``."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise HeritabilityError(f"need at least 2 values to summarize, got {v.size}")
    mean = math.fsum(v) / v.size
    sd = float(np.sqrt(math.fsum((v - mean) ** 2) / (v.size - 1)))
    half = Z95 * sd / math.sqrt(v.size)
    return mean, sd, (mean - half, mean + half)


def summarize(rows, by=("scenario", "estimator", "quantity")):
    """Group long-format rows and summarize ``estimate`` (and ``estimate - truth``).

    Raises :class:`HeritabilityError` when any group has fewer than two rows.
    """
    groups = OrderedDict()
    for row in rows:
        groups.setdefault(tuple(row[k] for k in by), []).append(row)
    if not groups:
        raise HeritabilityError("no rows to summarize")
    out = []
    for key, grp in groups.items():
        est = [float(r["estimate"]) for r in grp]
        mean, sd, (lo, hi) = mean_sd_ci(est)
        rec = dict(zip(by, key))
        rec.update(replicates=len(grp), mean=mean, sd=sd, ci_low=lo, ci_high=hi)
        truth = [r.get("truth") for r in grp]
        if all(t is not None and t == t for t in truth):
            t = np.asarray(truth, dtype=float)
            bmean, bsd, (blo, bhi) = mean_sd_ci(np.asarray(est) - t)
            rec.update(
                truth_mean=math.fsum(t) / t.size,
                bias_mean=bmean,
                bias_sd=bsd,
                bias_ci_low=blo,
                bias_ci_high=bhi,
            )
        else:
            rec.update(
                truth_mean=None, bias_mean=None, bias_sd=None, bias_ci_low=None, bias_ci_high=None
            )
        out.append(rec)
    return out
