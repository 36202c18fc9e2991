"""Character-embedding BiLSTM-CRF tagger model.

The model owns a character embedding table, one LSTM per direction, a
linear projection to per-tag emission scores, and a CRF transition matrix
whose structurally illegal entries (I-t after anything but B-t/I-t) are
pinned to -inf so decoded sequences are always well-formed BIO.

Serialization is a flat little-endian binary container (magic, format
version, JSON metadata, raw float64 arrays). Writing the same model twice
produces byte-identical files, and a load/save round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from emrkg.corpus import BioSentence
from emrkg.errors import DataError
from emrkg.schema import EntitySchema
from emrkg.tagger.crf import EmptySentence, nll, nll_with_grad, viterbi
from emrkg.tagger.lstm import LstmParams, lstm_backward, lstm_forward
from emrkg.tagger.vocab import TagSet, Vocabulary

MAGIC = b"EMRKGMD1"
FORMAT_VERSION = 1


class ModelFormatError(DataError):
    """Model file is truncated, corrupt, or has an unsupported version."""


@dataclass
class TaggerModel:
    vocab: Vocabulary
    tagset: TagSet
    embedding: np.ndarray  # (V, d_emb)
    fw: LstmParams
    bw: LstmParams
    proj_w: np.ndarray  # (2h, K)
    proj_b: np.ndarray  # (K,)
    transitions: np.ndarray  # (K+2, K+2), -inf at forbidden entries
    allowed: np.ndarray  # bool (K+2, K+2)

    @property
    def d_emb(self) -> int:
        return self.embedding.shape[1]

    @property
    def hidden(self) -> int:
        return self.fw.hidden


def init_model(
    vocab: Vocabulary,
    tagset: TagSet,
    d_emb: int,
    hidden: int,
    rng: np.random.Generator,
) -> TaggerModel:
    """Uniform(-0.1, 0.1) weights, zero biases except forget gate at 1."""

    def uniform(*shape: int) -> np.ndarray:
        return rng.uniform(-0.1, 0.1, size=shape)

    def lstm(d_in: int) -> LstmParams:
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        return LstmParams(uniform(4 * hidden, d_in), uniform(4 * hidden, hidden), b)

    k = len(tagset)
    allowed = tagset.allowed_transitions()
    transitions = uniform(k + 2, k + 2)
    transitions[~allowed] = -np.inf
    return TaggerModel(
        vocab=vocab,
        tagset=tagset,
        embedding=uniform(len(vocab), d_emb),
        fw=lstm(d_emb),
        bw=lstm(d_emb),
        proj_w=uniform(2 * hidden, k),
        proj_b=np.zeros(k),
        transitions=transitions,
        allowed=allowed,
    )


def param_arrays(model: TaggerModel) -> list[tuple[str, np.ndarray]]:
    """Named learnable arrays, in a fixed order."""
    return [
        ("embedding", model.embedding),
        ("fw.w", model.fw.w),
        ("fw.u", model.fw.u),
        ("fw.b", model.fw.b),
        ("bw.w", model.bw.w),
        ("bw.u", model.bw.u),
        ("bw.b", model.bw.b),
        ("proj_w", model.proj_w),
        ("proj_b", model.proj_b),
        ("transitions", model.transitions),
    ]


def _bilstm_states(model: TaggerModel, indices: np.ndarray) -> tuple[LstmCache, LstmCache, np.ndarray]:
    inputs = model.embedding[indices]
    fw_cache = lstm_forward(model.fw, inputs)
    bw_cache = lstm_forward(model.bw, inputs[::-1])
    states = np.concatenate([fw_cache.hidden_states, bw_cache.hidden_states[::-1]], axis=1)
    return fw_cache, bw_cache, states


def encode(model: TaggerModel, chars: str) -> np.ndarray:
    """Per-character emission scores, shape (len(chars), |tags|)."""
    if len(chars) == 0:
        raise EmptySentence("cannot encode an empty sentence")
    indices = model.vocab.encode(chars)
    _, _, states = _bilstm_states(model, indices)
    return states @ model.proj_w + model.proj_b


def sentence_loss_and_grads(
    model: TaggerModel, indices: np.ndarray, tag_indices: np.ndarray
) -> tuple[float, dict[str, np.ndarray]]:
    """CRF negative log-likelihood of one sentence plus gradients for every
    parameter array (forbidden transition entries get zero gradient)."""
    if len(indices) == 0:
        raise EmptySentence("cannot score an empty sentence")
    fw_cache, bw_cache, states = _bilstm_states(model, indices)
    emissions = states @ model.proj_w + model.proj_b

    loss, d_emissions, d_transitions = nll_with_grad(emissions, model.transitions, tag_indices)
    d_transitions[~model.allowed] = 0.0

    d_proj_w = states.T @ d_emissions
    d_proj_b = d_emissions.sum(axis=0)
    d_states = d_emissions @ model.proj_w.T

    h = model.hidden
    d_fw, d_in_fw = lstm_backward(model.fw, fw_cache, d_states[:, :h])
    d_bw, d_in_bw = lstm_backward(model.bw, bw_cache, d_states[::-1, h:])
    d_inputs = d_in_fw + d_in_bw[::-1]

    d_embedding = np.zeros_like(model.embedding)
    np.add.at(d_embedding, indices, d_inputs)

    grads = {
        "embedding": d_embedding,
        "fw.w": d_fw.w,
        "fw.u": d_fw.u,
        "fw.b": d_fw.b,
        "bw.w": d_bw.w,
        "bw.u": d_bw.u,
        "bw.b": d_bw.b,
        "proj_w": d_proj_w,
        "proj_b": d_proj_b,
        "transitions": d_transitions,
    }
    return loss, grads


def sentence_loss(model: TaggerModel, indices: np.ndarray, tag_indices: np.ndarray) -> float:
    """NLL only; used by finite-difference checks."""
    if len(indices) == 0:
        raise EmptySentence("cannot score an empty sentence")
    _, _, states = _bilstm_states(model, indices)
    emissions = states @ model.proj_w + model.proj_b
    return nll(emissions, model.transitions, tag_indices)


def gradient_check(
    model: TaggerModel,
    encoded: list[tuple[np.ndarray, np.ndarray]],
    epsilon: float = 1e-4,
) -> float:
    """Max deviation between analytic and central finite-difference
    gradients of the summed loss over ``encoded`` (index, tag-index) pairs.

    Deviation is |analytic - numeric| / max(1, |analytic|, |numeric|), so
    large gradients are compared relatively and near-zero ones absolutely
    (a pure ratio would amplify finite-difference roundoff). Entries fixed
    at -inf (forbidden transitions) are skipped.
    """
    analytic = {name: np.zeros_like(arr) for name, arr in param_arrays(model)}
    for indices, tag_indices in encoded:
        _, grads = sentence_loss_and_grads(model, indices, tag_indices)
        for name in analytic:
            analytic[name] += grads[name]

    def total_loss() -> float:
        return sum(sentence_loss(model, i, t) for i, t in encoded)

    worst = 0.0
    for name, arr in param_arrays(model):
        grad = analytic[name]
        iterator = np.nditer(arr, flags=["multi_index"])
        while not iterator.finished:
            index = iterator.multi_index
            if name == "transitions" and not model.allowed[index]:
                iterator.iternext()
                continue
            original = arr[index]
            arr[index] = original + epsilon
            plus = total_loss()
            arr[index] = original - epsilon
            minus = total_loss()
            arr[index] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            deviation = abs(numeric - grad[index]) / max(1.0, abs(numeric), abs(grad[index]))
            worst = max(worst, deviation)
            iterator.iternext()
    return worst


def predict(model: TaggerModel, sentences: list[BioSentence]) -> list[BioSentence]:
    """Tag sentences with constrained Viterbi; output is well-formed BIO."""
    out = []
    for sentence in sentences:
        emissions = encode(model, sentence.chars)
        path = viterbi(emissions, model.transitions)
        out.append(BioSentence(sentence.chars, model.tagset.decode(path)))
    return out


def _write_array(handle, name: str, array: np.ndarray) -> None:
    data = np.ascontiguousarray(array, dtype="<f8")
    name_b = name.encode("utf-8")
    handle.write(struct.pack("<H", len(name_b)))
    handle.write(name_b)
    handle.write(struct.pack("<B", data.ndim))
    for dim in data.shape:
        handle.write(struct.pack("<Q", dim))
    handle.write(data.tobytes())


def save_model(model: TaggerModel, path: str | Path) -> None:
    meta = {
        "entity_types": list(model.tagset.schema.entity_types),
        "vocab": list(model.vocab.tokens),
        "d_emb": model.d_emb,
        "hidden": model.hidden,
    }
    meta_b = json.dumps(meta, ensure_ascii=False, sort_keys=True).encode("utf-8")
    arrays = param_arrays(model)
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<I", FORMAT_VERSION))
        handle.write(struct.pack("<Q", len(meta_b)))
        handle.write(meta_b)
        handle.write(struct.pack("<I", len(arrays)))
        for name, array in arrays:
            _write_array(handle, name, array)


def _read_exact(handle, n: int, what: str) -> bytes:
    data = handle.read(n)
    if len(data) != n:
        raise ModelFormatError(f"truncated model file while reading {what}")
    return data


def load_model(path: str | Path) -> TaggerModel:
    with open(path, "rb") as handle:
        if _read_exact(handle, len(MAGIC), "magic") != MAGIC:
            raise ModelFormatError(f"{path} is not a tagger model file")
        (version,) = struct.unpack("<I", _read_exact(handle, 4, "version"))
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"unsupported model format version {version}")
        (meta_len,) = struct.unpack("<Q", _read_exact(handle, 8, "metadata length"))
        meta = json.loads(_read_exact(handle, meta_len, "metadata").decode("utf-8"))
        (count,) = struct.unpack("<I", _read_exact(handle, 4, "array count"))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(handle, 2, "array name length"))
            name = _read_exact(handle, name_len, "array name").decode("utf-8")
            (ndim,) = struct.unpack("<B", _read_exact(handle, 1, "array rank"))
            shape = tuple(
                struct.unpack("<Q", _read_exact(handle, 8, "array dim"))[0] for _ in range(ndim)
            )
            n_bytes = 8 * int(np.prod(shape, dtype=np.int64)) if shape else 8
            raw = _read_exact(handle, n_bytes, f"array {name} data")
            arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    vocab = Vocabulary(tuple(meta["vocab"]))
    tagset = TagSet(EntitySchema(tuple(meta["entity_types"])))
    expected = {
        "embedding",
        "fw.w", "fw.u", "fw.b",
        "bw.w", "bw.u", "bw.b",
        "proj_w", "proj_b", "transitions",
    }
    if set(arrays) != expected:
        raise ModelFormatError(f"model file arrays {sorted(arrays)} != expected set")
    model = TaggerModel(
        vocab=vocab,
        tagset=tagset,
        embedding=arrays["embedding"],
        fw=LstmParams(arrays["fw.w"], arrays["fw.u"], arrays["fw.b"]),
        bw=LstmParams(arrays["bw.w"], arrays["bw.u"], arrays["bw.b"]),
        proj_w=arrays["proj_w"],
        proj_b=arrays["proj_b"],
        transitions=arrays["transitions"],
        allowed=tagset.allowed_transitions(),
    )
    k = len(tagset)
    if model.transitions.shape != (k + 2, k + 2) or model.proj_w.shape[1] != k:
        raise ModelFormatError("model arrays inconsistent with tag set")
    if model.embedding.shape[0] != len(vocab):
        raise ModelFormatError("embedding rows inconsistent with vocabulary")
    return model
