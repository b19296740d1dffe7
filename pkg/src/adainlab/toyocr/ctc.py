"""CTC loss (log-space forward-backward) and greedy decoding.

The loss of a (T, A+1) table of per-frame log-distributions against a label
is the negative log of the total probability of all frame alignments that
collapse to the label (repeats merged, blanks removed).  Symbol index
``blank`` (default 0) is the blank.  All internal arithmetic is float64
regardless of the input dtype; the analytic gradient with respect to the
log-probabilities is returned alongside the loss.
"""

from __future__ import annotations

import warnings

import numpy as np

__all__ = ["ctc_loss", "greedy_decode", "min_frames"]

NEG_INF = -np.inf


def min_frames(label) -> int:
    """Fewest frames that can realize the label (blanks between repeats)."""
    label = list(label)
    repeats = sum(1 for i in range(1, len(label)) if label[i] == label[i - 1])
    return len(label) + repeats


def _extended(label, blank):
    ext = np.full(2 * len(label) + 1, blank, dtype=np.int64)
    ext[1::2] = label
    return ext


def _logsumexp2(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    m = a if a > b else b
    return m + np.log(np.exp(a - m) + np.exp(b - m))


def _lse3(a, b, c):
    """Elementwise log(exp(a)+exp(b)+exp(c)) tolerating -inf entries."""
    m = np.maximum(np.maximum(a, b), c)
    safe = np.where(m == NEG_INF, 0.0, m)
    total = np.exp(a - safe) + np.exp(b - safe) + np.exp(c - safe)
    with np.errstate(divide="ignore"):
        return np.where(m == NEG_INF, NEG_INF, safe + np.log(total))


def ctc_loss(logprobs: np.ndarray, label, blank: int = 0):
    """Loss and gradient w.r.t. ``logprobs`` for one label.

    ``logprobs`` is (T, A+1); rows are expected to be log-distributions
    (caller's responsibility; the recursion itself is well-defined for any
    finite table).  Labels that cannot be realized in T frames yield
    ``(inf, zeros)`` and a warning.
    """
    lp = np.asarray(logprobs, dtype=np.float64)
    if lp.ndim != 2:
        raise ValueError(f"logprobs must be (T, A+1), got shape {lp.shape}")
    t_len, a1 = lp.shape
    label = [int(s) for s in label]
    for s in label:
        if not 0 <= s < a1 or s == blank:
            raise ValueError(f"label symbol {s} out of range or equal to blank")

    if min_frames(label) > t_len:
        warnings.warn(
            f"label of length {len(label)} unreachable in {t_len} frames",
            stacklevel=2,
        )
        return np.inf, np.zeros_like(lp)

    ext = _extended(label, blank)
    s_len = ext.size

    # skip[s]: transition s-2 -> s allowed (target non-blank, differs from s-2)
    skip = np.zeros(s_len, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    emit = lp[:, ext]  # (T, S) per-frame log-prob of each extended state

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, : min(2, s_len)] = emit[0, : min(2, s_len)]
    pad1 = np.full(1, NEG_INF)
    pad2 = np.full(2, NEG_INF)
    # to2_ok[s]: transition s -> s+2 exists and is allowed
    to2_ok = np.zeros(s_len, dtype=bool)
    if s_len > 2:
        to2_ok[:-2] = skip[2:]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        from1 = np.concatenate([pad1, prev[:-1]])
        from2 = np.where(skip, np.concatenate([pad2, prev[:-2]])[:s_len], NEG_INF)
        alpha[t] = _lse3(prev, from1, from2) + emit[t]

    log_p = alpha[t_len - 1, s_len - 1]
    if s_len > 1:
        log_p = _logsumexp2(log_p, alpha[t_len - 1, s_len - 2])
    if log_p == NEG_INF:
        warnings.warn(
            "label has zero probability under the given table", stacklevel=2
        )
        return np.inf, np.zeros_like(lp)

    # beta[t, s]: log-probability of emissions t+1..T from state s at time t
    beta = np.full((t_len, s_len), NEG_INF)
    beta[t_len - 1, s_len - 1] = 0.0
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = 0.0
    for t in range(t_len - 2, -1, -1):
        q = beta[t + 1] + emit[t + 1]
        to1 = np.concatenate([q[1:], pad1])
        to2 = np.where(to2_ok, np.concatenate([q[2:], pad2])[:s_len], NEG_INF)
        beta[t] = _lse3(q, to1, to2)

    # d(-log P)/d logp[t,k] = -exp(logsumexp_{s: ext[s]=k}(alpha+beta) - logP)
    grad = np.zeros_like(lp)
    occupancy = np.exp(alpha + beta - log_p)  # exp(-inf) contributes 0
    for t in range(t_len):
        np.add.at(grad[t], ext, occupancy[t])
    return float(-log_p), -grad


def greedy_decode(logprobs: np.ndarray, blank: int = 0) -> list[int]:
    """Per-frame argmax, collapse repeats, drop blanks."""
    lp = np.asarray(logprobs)
    if lp.ndim != 2:
        raise ValueError(f"logprobs must be (T, A+1), got shape {lp.shape}")
    best = lp.argmax(axis=1)
    out: list[int] = []
    prev = -1
    for k in best:
        k = int(k)
        if k != prev and k != blank:
            out.append(k)
        prev = k
    return out
