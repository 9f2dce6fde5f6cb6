"""Statistical oracles shared by the test modules."""
import numpy as np
from scipy import stats


def poisson_gof_pvalue(counts, mean, min_expected=5.0):
    """Chi-square goodness-of-fit p-value of integer counts against Poisson(mean).

    Upper bins are pooled until every bin expects at least ``min_expected``.
    """
    counts = np.asarray(counts)
    n = len(counts)
    kmax = int(counts.max()) if n else 0
    probs = stats.poisson.pmf(np.arange(kmax + 1), mean)
    edges = []
    acc = 0.0
    for k, pk in enumerate(probs):
        acc += pk
        if acc * n >= min_expected:
            edges.append(k)
            acc = 0.0
    if not edges:
        return 1.0
    # pool everything above the last closed bin into the tail
    observed, expected = [], []
    lo = 0
    for hi in edges:
        observed.append(np.sum((counts >= lo) & (counts <= hi)))
        expected.append(stats.poisson.cdf(hi, mean) - stats.poisson.cdf(lo - 1, mean))
        lo = hi + 1
    observed[-1] += np.sum(counts >= lo)
    expected[-1] += stats.poisson.sf(lo - 1, mean)
    observed = np.asarray(observed, float)
    expected = np.asarray(expected) * n
    if len(observed) < 2:
        return 1.0
    return float(stats.chisquare(observed, expected).pvalue)


def uniform_gof_pvalue(x, lo, hi, bins=20):
    hist, _ = np.histogram(x, bins=bins, range=(lo, hi))
    return float(stats.chisquare(hist).pvalue)
