"""Independent reference implementations used to cross-check the package.

Everything here is written the slow, obvious way: explicit path
enumeration, dictionary-backed vectors, linear scans. The optimized code
under test must agree with these, not the other way round, so nothing in
this module may import from the modules it checks (except plain data
types and the name normalizer, which has its own direct tests).
"""

from __future__ import annotations

import itertools
import math
from collections import Counter

import numpy as np

from emrkg.graph import KnowledgeGraph, Node, normalize_name


# -- CRF ---------------------------------------------------------------


def enumerate_paths(
    emissions: np.ndarray, transitions: np.ndarray
) -> tuple[float, float, tuple[int, ...]]:
    """Score every tag path explicitly.

    ``transitions`` is (K+2, K+2) with the virtual start row at index K and
    stop column at K+1. Returns (log-partition, best score, best path);
    ties on the best score keep the first path in lexicographic order.
    """
    length, k = emissions.shape
    start, stop = k, k + 1
    scores = []
    paths = []
    for path in itertools.product(range(k), repeat=length):
        score = transitions[start, path[0]] + emissions[0, path[0]]
        for t in range(1, length):
            score += transitions[path[t - 1], path[t]] + emissions[t, path[t]]
        score += transitions[path[-1], stop]
        scores.append(score)
        paths.append(path)
    arr = np.asarray(scores)
    log_z = float(np.logaddexp.reduce(arr))
    best = int(np.argmax(arr))
    return log_z, float(arr[best]), paths[best]


def path_score(emissions: np.ndarray, transitions: np.ndarray, path) -> float:
    """Score of one explicit tag path, start and stop transitions included."""
    k = emissions.shape[1]
    score = transitions[k, path[0]] + emissions[0, path[0]]
    for t in range(1, len(path)):
        score += transitions[path[t - 1], path[t]] + emissions[t, path[t]]
    return float(score + transitions[path[-1], k + 1])


# -- TF-IDF --------------------------------------------------------------


def char_ngrams(name: str, orders: tuple[int, ...] = (1, 2)) -> list[str]:
    terms = []
    for n in orders:
        for i in range(len(name) - n + 1):
            terms.append(name[i : i + n])
    return terms


def _weight_fn(docs: list[list[str]]):
    """IDF weighting over a document list: log(N/df) when the term occurs,
    the smoothed log(N/1)+1 when it does not, all-ones when every defined
    IDF is zero (degenerate corpus)."""
    n_docs = len(docs)
    df = Counter()
    for doc in docs:
        df.update(set(doc))
    uniform = all(math.log(n_docs / count) == 0.0 for count in df.values())

    def weight(term: str) -> float:
        if uniform:
            return 1.0
        count = df.get(term, 0)
        if count == 0:
            return math.log(n_docs / 1) + 1.0
        return math.log(n_docs / count)

    return weight


def _vector(terms: list[str], weight) -> dict[str, float]:
    counts = Counter(terms)
    vec = {t: (c / len(terms)) * weight(t) for t, c in counts.items()}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    if norm > 0.0:
        vec = {t: v / norm for t, v in vec.items()}
    return vec


def tfidf_vectors(
    names: list[str], orders: tuple[int, ...] = (1, 2)
) -> list[dict[str, float]]:
    """L2-normalized TF-IDF vector per name, as plain term->weight dicts."""
    docs = [char_ngrams(name, orders) for name in names]
    weight = _weight_fn(docs)
    return [_vector(doc, weight) for doc in docs]


def cosine_align(
    query: str,
    names: list[str],
    orders: tuple[int, ...] = (1, 2),
    threshold: float = 0.8,
) -> tuple[str | None, float]:
    """Exhaustive cosine argmax with a lexicographic tie-break; the match is
    kept only when similarity >= threshold."""
    docs = [char_ngrams(name, orders) for name in names]
    weight = _weight_fn(docs)
    doc_vectors = [_vector(doc, weight) for doc in docs]
    q_terms = char_ngrams(query, orders)
    if not q_terms:
        return None, 0.0
    q_vec = _vector(q_terms, weight)
    if not any(q_vec.values()):
        return None, 0.0
    best_sim = -math.inf
    best_names: list[str] = []
    for name, vec in zip(names, doc_vectors):
        sim = sum(q_vec.get(term, 0.0) * value for term, value in vec.items())
        if sim > best_sim:
            best_sim, best_names = sim, [name]
        elif sim == best_sim:
            best_names.append(name)
    best_sim = min(1.0, max(0.0, best_sim))
    name = min(best_names)
    return (name if best_sim >= threshold else None), best_sim


# -- graph ---------------------------------------------------------------


def pattern_scan(
    graph: KnowledgeGraph, head_label: str, head_name: str, relation: str
) -> list[Node]:
    """Brute-force pattern query: linear scan over nodes and triples."""
    wanted = normalize_name(head_name)
    heads = {
        node.id
        for node in graph.nodes.values()
        if node.label == head_label and normalize_name(node.name) == wanted
    }
    tails = {t.tail for t in graph.triples if t.relation == relation and t.head in heads}
    return sorted((graph.nodes[i] for i in tails), key=lambda n: (n.name, n.id))
