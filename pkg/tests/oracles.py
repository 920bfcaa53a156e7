"""Slow, literal reference implementations used as test oracles.

Each function is written for clarity over speed and shares no code with the
package, so agreement between the two is evidence for both.
"""

import math

import numpy as np


def selection_mask(query_outputs, cached, eps, need):
    """Triple loop: query v selects retained i iff >= need machines agree."""
    q, M = len(query_outputs), len(query_outputs[0])
    ell = len(cached)
    mask = np.zeros((q, ell), dtype=bool)
    for v in range(q):
        for i in range(ell):
            agree = 0
            for m in range(M):
                if abs(float(query_outputs[v][m]) - float(cached[i][m])) <= eps:
                    agree += 1
            mask[v, i] = agree >= need
    return mask


def unanimity_mask(query_outputs, cached, eps):
    """Product of per-machine indicators (the alpha = 1 form)."""
    q, ell = len(query_outputs), len(cached)
    mask = np.zeros((q, ell), dtype=bool)
    for v in range(q):
        for i in range(ell):
            ind = 1
            for a, b in zip(query_outputs[v], cached[i]):
                ind *= int(abs(a - b) <= eps)
            mask[v, i] = bool(ind)
    return mask


def weights_from_mask(row):
    count = int(sum(row))
    return [1.0 / count if s else 0.0 for s in row] if count else [0.0] * len(row)


def local_average(row, y):
    total, count = 0.0, 0
    for s, yi in zip(row, y):
        if s:
            total += yi
            count += 1
    return total / count if count else 0.0


def calibration_risks(ret_outputs, ret_y, val_outputs, val_y, epsilons, needs):
    risks = np.zeros((len(epsilons), len(needs)))
    for a, eps in enumerate(epsilons):
        for b, need in enumerate(needs):
            mask = selection_mask(val_outputs, ret_outputs, eps, need)
            sq = 0.0
            for v in range(len(val_y)):
                sq += (local_average(mask[v], ret_y) - val_y[v]) ** 2
            risks[a, b] = sq / len(val_y)
    return risks


def ols_with_intercept(X, y):
    A = np.column_stack([np.ones(len(y)), X])
    sol, *_ = np.linalg.lstsq(A, y, rcond=None)
    return sol[0], sol[1:]


def softmax_neg(risks, beta):
    e = [math.exp(-beta * r) for r in risks]
    s = sum(e)
    return [v / s for v in e]


def model4_scalar(x):
    s = math.sin(2 * math.pi * x[2])
    t = 2 * math.pi * x[3]
    return (x[0] + (2 * x[1] - 1) ** 2 + s / (2 - s) + math.sin(t) + 2 * math.cos(t)
            + 3 * math.sin(t) ** 2 + 4 * math.cos(t) ** 2)
