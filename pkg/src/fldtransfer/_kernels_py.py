"""Pure numpy implementations of the hot loops, used when the compiled
extension is unavailable or ``FLDTRANSFER_PURE_PYTHON`` is set."""

import numpy as np
from scipy.special import ndtr


def projected_risks(W, nu, sigma):
    num = W @ nu
    quad = np.einsum("bi,ij,bj->b", W, sigma, W)
    return ndtr(-num / np.sqrt(quad))


def mean_projected_risk(W, nu, sigma):
    r = projected_risks(W, nu, sigma)
    return float(np.sum(r) / r.shape[0])


def rule_balanced_accuracy(X, y, W):
    positive = (X @ W.T) > 0.0
    is1 = y == 1
    n1 = np.count_nonzero(is1)
    n0 = y.shape[0] - n1
    tp = np.count_nonzero(positive & is1[:, None], axis=0)
    tn = np.count_nonzero(~positive & ~is1[:, None], axis=0)
    return 0.5 * (tp / n1 + tn / n0)


def signed_rank_null_counts(doubled_ranks):
    total = int(np.sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for rk in doubled_ranks:
        rk = int(rk)
        counts[rk:] = counts[rk:] + counts[: total + 1 - rk]
    return counts
