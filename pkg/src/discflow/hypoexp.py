"""Sums of independent exponentials: survival and CDF.

Distinct rates use the classical partial-fraction form; ties collapse to
the Erlang branch when all rates agree to relative 1e-8, and mixed
near-ties fall back to the phase-type matrix exponential, which is robust
but slower.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaincc

TIE_RTOL = 1e-8


def _classify(rates: np.ndarray) -> str:
    if rates.size <= 1:
        return "distinct"
    span = rates.max() - rates.min()
    if span <= TIE_RTOL * rates.max():
        return "erlang"
    diffs = np.abs(rates[:, None] - rates[None, :])
    np.fill_diagonal(diffs, np.inf)
    if diffs.min() <= TIE_RTOL * rates.max():
        return "phase"
    return "distinct"


def survival(rates, u):
    """P(W_1 + ... + W_k >= u) for independent W_i ~ Exp(rates[i]).

    The >= convention makes an empty sum survive u = 0, so a kernel built
    from these survivals is right-continuous at a deterministic front.
    """
    rates = np.asarray(rates, dtype=float)
    u = np.asarray(u, dtype=float)
    if rates.size == 0:
        return np.where(u <= 0.0, 1.0, 0.0)
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    kind = _classify(rates)
    pos = np.maximum(u, 0.0)
    if kind == "erlang":
        k = rates.size
        lam = float(rates.mean())
        out = gammaincc(k, lam * pos)
    elif kind == "distinct":
        lam = rates[:, None]
        weights = np.ones(rates.size)
        for i in range(rates.size):
            others = np.delete(rates, i)
            weights[i] = np.prod(others / (others - rates[i]))
        out = np.clip(np.sum(weights[:, None] * np.exp(-lam * pos.ravel()[None, :]),
                             axis=0).reshape(pos.shape), 0.0, 1.0)
    else:
        out = _phase_survival(rates, pos)
    return np.where(u <= 0.0, 1.0, out)


def cdf(rates, u):
    """P(sum <= u); an empty sum is 0, so this is 1 whenever u >= 0."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        return np.where(np.asarray(u, dtype=float) >= 0.0, 1.0, 0.0)
    return 1.0 - survival(rates, u)


def _phase_survival(rates: np.ndarray, u: np.ndarray) -> np.ndarray:
    k = rates.size
    Q = np.zeros((k, k))
    for i in range(k):
        Q[i, i] = -rates[i]
        if i + 1 < k:
            Q[i, i + 1] = rates[i]
    flat = np.atleast_1d(u).ravel()
    out = np.empty(flat.size)
    for j, t in enumerate(flat):
        out[j] = expm(Q * t)[0, :].sum()
    return np.clip(out.reshape(np.shape(u)), 0.0, 1.0)
