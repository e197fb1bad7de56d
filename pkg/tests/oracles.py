"""Independent brute-force calibration oracles: sort descending, take the m-th."""
import math


def mth_largest(scores, alpha):
    n = len(scores)
    m = math.floor(alpha * (n + 1))
    if m < 1:
        return None
    return sorted((float(s) for s in scores), reverse=True)[m - 1]


def oracle_cp(residuals, alpha):
    return mth_largest([abs(r) for r in residuals], alpha)


def oracle_ncp(residuals, gammas, alpha):
    return mth_largest([r / g for r, g in zip(residuals, gammas)], alpha)


def oracle_cqr(y, lo, hi, alpha):
    return mth_largest([max(a - t, t - b) for t, a, b in zip(y, lo, hi)], alpha)
