"""Linear-chain CRF: log-partition, negative log-likelihood and Viterbi.

Scores use a (K+2)x(K+2) transition matrix over K real tags plus two
virtual positions, START = K and STOP = K+1:

    score(y) = T[START, y_0] + sum_i E[i, y_i]
             + sum_{i>0} T[y_{i-1}, y_i] + T[y_{L-1}, STOP]

Entries may be -inf to forbid transitions outright; all log-sum-exp
reductions subtract the per-slice maximum so scores stay finite.
"""

from __future__ import annotations

import numpy as np

from emrkg.errors import DataError


class EmptySentence(DataError):
    """Zero-length input where at least one character is required."""


class InvalidGoldTag(DataError):
    """Gold tag sequence indexes outside the tag set or has the wrong length."""


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted log-sum-exp; slices that are all -inf stay -inf."""
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isneginf(m), 0.0, m)
    s = np.sum(np.exp(a - safe), axis=axis)
    with np.errstate(divide="ignore"):
        return np.log(s) + np.squeeze(safe, axis=axis)


def _check(emissions: np.ndarray, transitions: np.ndarray) -> tuple[int, int]:
    length, num_tags = emissions.shape
    if length == 0:
        raise EmptySentence("emission matrix has zero rows")
    if transitions.shape != (num_tags + 2, num_tags + 2):
        raise ValueError(
            f"transitions shape {transitions.shape} does not match {num_tags} tags (+2 virtual)"
        )
    return length, num_tags


def log_partition(emissions: np.ndarray, transitions: np.ndarray) -> float:
    """log sum over all tag paths of exp(score(path)), by the forward algorithm."""
    length, num_tags = _check(emissions, transitions)
    start, stop = num_tags, num_tags + 1
    alpha = transitions[start, :num_tags] + emissions[0]
    for i in range(1, length):
        alpha = emissions[i] + logsumexp(
            alpha[:, None] + transitions[:num_tags, :num_tags], axis=0
        )
    return float(logsumexp(alpha + transitions[:num_tags, stop], axis=0))


def gold_score(emissions: np.ndarray, transitions: np.ndarray, tags: np.ndarray) -> float:
    length, num_tags = _check(emissions, transitions)
    tags = np.asarray(tags, dtype=np.intp)
    if tags.shape != (length,) or tags.min() < 0 or tags.max() >= num_tags:
        raise InvalidGoldTag(f"gold tags invalid for length {length}, {num_tags} tags")
    start, stop = num_tags, num_tags + 1
    score = transitions[start, tags[0]] + emissions[np.arange(length), tags].sum()
    score += transitions[tags[:-1], tags[1:]].sum()
    score += transitions[tags[-1], stop]
    return float(score)


def nll(emissions: np.ndarray, transitions: np.ndarray, tags: np.ndarray) -> float:
    """Negative log-likelihood of the gold path: log_partition - gold_score."""
    return log_partition(emissions, transitions) - gold_score(emissions, transitions, tags)


def nll_with_grad(
    emissions: np.ndarray, transitions: np.ndarray, tags: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """NLL plus analytic gradients w.r.t. emissions and transitions.

    d nll / d E[i,k] = P(y_i = k) - 1{gold_i = k}
    d nll / d T[j,k] = expected transition count - gold transition count,
    including the virtual START row and STOP column. Forbidden (-inf)
    entries receive zero gradient.
    """
    length, num_tags = _check(emissions, transitions)
    tags = np.asarray(tags, dtype=np.intp)
    if tags.shape != (length,) or tags.min() < 0 or tags.max() >= num_tags:
        raise InvalidGoldTag(f"gold tags invalid for length {length}, {num_tags} tags")
    start, stop = num_tags, num_tags + 1
    inner = transitions[:num_tags, :num_tags]

    alpha = np.empty((length, num_tags))
    alpha[0] = transitions[start, :num_tags] + emissions[0]
    for i in range(1, length):
        alpha[i] = emissions[i] + logsumexp(alpha[i - 1][:, None] + inner, axis=0)
    log_z = float(logsumexp(alpha[-1] + transitions[:num_tags, stop], axis=0))

    beta = np.empty((length, num_tags))
    beta[-1] = transitions[:num_tags, stop]
    for i in range(length - 2, -1, -1):
        beta[i] = logsumexp(inner + (emissions[i + 1] + beta[i + 1])[None, :], axis=1)

    with np.errstate(invalid="ignore"):
        marginals = np.exp(alpha + beta - log_z)
    marginals[~np.isfinite(marginals)] = 0.0

    d_emissions = marginals.copy()
    d_emissions[np.arange(length), tags] -= 1.0

    d_transitions = np.zeros_like(transitions)
    for i in range(length - 1):
        pair = alpha[i][:, None] + inner + (emissions[i + 1] + beta[i + 1])[None, :] - log_z
        with np.errstate(invalid="ignore"):
            expected = np.exp(pair)
        expected[~np.isfinite(expected)] = 0.0
        d_transitions[:num_tags, :num_tags] += expected
    d_transitions[start, :num_tags] += marginals[0]
    d_transitions[:num_tags, stop] += marginals[-1]

    d_transitions[start, tags[0]] -= 1.0
    np.add.at(d_transitions, (tags[:-1], tags[1:]), -1.0)
    d_transitions[tags[-1], stop] -= 1.0

    value = log_z - gold_score(emissions, transitions, tags)
    return value, d_emissions, d_transitions


def viterbi(emissions: np.ndarray, transitions: np.ndarray) -> np.ndarray:
    """Highest-scoring tag path (argmax ties resolve to the lowest index)."""
    length, num_tags = _check(emissions, transitions)
    start, stop = num_tags, num_tags + 1
    inner = transitions[:num_tags, :num_tags]

    score = transitions[start, :num_tags] + emissions[0]
    backptr = np.empty((length, num_tags), dtype=np.intp)
    for i in range(1, length):
        candidates = score[:, None] + inner
        backptr[i] = np.argmax(candidates, axis=0)
        score = emissions[i] + np.max(candidates, axis=0)
    score = score + transitions[:num_tags, stop]

    path = np.empty(length, dtype=np.intp)
    path[-1] = int(np.argmax(score))
    for i in range(length - 1, 0, -1):
        path[i - 1] = backptr[i, path[i]]
    return path
