"""Affiliation-string -> country classifier used to fill missing countries.

Hashed bag of tokens, one ReLU hidden layer, softmax output, trained with
seeded mini-batch SGD on the cross-entropy loss.  Hashing uses CRC-32 of
the token's UTF-8 bytes modulo the vocabulary dimension.
"""

from __future__ import annotations

import json
import re
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .ingest import AuthorshipRecord, Corpus
from .textnorm import fold

MAGIC = b"SMCOUNTRY"
FORMAT_VERSION = 1
_TOKEN_RE = re.compile(r"[a-z0-9]+")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TokenizedAffiliation:
    tokens: tuple[str, ...]
    feature_vector: dict[int, int]


def hash_token(token: str, dim: int) -> int:
    return zlib.crc32(token.encode("utf-8")) % dim


def tokenize_affiliation(text: str, dim: int = 1 << 16) -> TokenizedAffiliation:
    tokens = tuple(_TOKEN_RE.findall(fold(text.lower()).lower()))
    vec: dict[int, int] = {}
    for t in tokens:
        i = hash_token(t, dim)
        vec[i] = vec.get(i, 0) + 1
    return TokenizedAffiliation(tokens, vec)


@dataclass(frozen=True)
class TrainConfig:
    dim: int = 1 << 16
    hidden: int = 64
    epochs: int = 5
    batch_size: int = 256
    learning_rate: float = 0.1
    seed: int = 0
    train_fraction: float = 0.8
    min_labeled: int = 10
    max_records: int | None = None
    stratify: bool = False


@dataclass
class TrainingMeta:
    epochs: int
    learning_rate: float
    seed: int
    split_ratio: float
    held_out_accuracy: float
    batch_size: int = 256
    epoch_losses: list[float] = field(default_factory=list)
    held_out_ids: list[str] = field(default_factory=list)


@dataclass
class CountryModel:
    dim: int
    classes: list[str]
    w1: np.ndarray  # (dim, hidden)
    b1: np.ndarray
    w2: np.ndarray  # (hidden, n_classes)
    b2: np.ndarray
    meta: TrainingMeta | None = None

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2]

    def save(self, path: str | Path) -> None:
        header = {
            "dim": self.dim,
            "hidden": self.hidden,
            "classes": self.classes,
            "training_meta": None if self.meta is None else self.meta.__dict__,
        }
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
            fh.write(blob)
            for p in self.params():
                fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "CountryModel":
        with open(path, "rb") as fh:
            if fh.read(len(MAGIC)) != MAGIC:
                raise ModelError(f"{path}: not a country model file")
            version, n = struct.unpack("<II", fh.read(8))
            if version != FORMAT_VERSION:
                raise ModelError(f"{path}: unsupported model version {version}")
            header = json.loads(fh.read(n))
            d, h, c = header["dim"], header["hidden"], len(header["classes"])
            arrays = []
            for shape in ((d, h), (h,), (h, c), (c,)):
                size = int(np.prod(shape))
                buf = fh.read(8 * size)
                if len(buf) != 8 * size:
                    raise ModelError(f"{path}: truncated weights")
                arrays.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
        meta = header.get("training_meta")
        return cls(d, list(header["classes"]), *arrays,
                   meta=TrainingMeta(**meta) if meta else None)


# ---------------------------------------------------------------- math

def featurize(texts: Sequence[str], dim: int) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for t in texts:
        vec = tokenize_affiliation(t, dim).feature_vector
        for i in sorted(vec):
            indices.append(i)
            data.append(float(vec[i]))
        indptr.append(len(indices))
    return sp.csr_matrix((np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64),
                          np.array(indptr, dtype=np.int64)), shape=(len(texts), dim))


def _forward(model: CountryModel, x: sp.csr_matrix):
    pre = x @ model.w1 + model.b1
    hid = np.maximum(pre, 0.0)
    logits = hid @ model.w2 + model.b2
    logits -= logits.max(axis=1, keepdims=True)
    expl = np.exp(logits)
    probs = expl / expl.sum(axis=1, keepdims=True)
    return pre, hid, probs


def loss_and_grads(model: CountryModel, x: sp.csr_matrix, y: np.ndarray):
    """Mean cross-entropy and its gradients.

    The first-layer gradient is returned only for the columns of ``x``
    that are non-zero in the batch, as ``(cols, grad_rows)``.
    """
    n = x.shape[0]
    pre, hid, probs = _forward(model, x)
    loss = -np.log(np.clip(probs[np.arange(n), y], 1e-300, None)).mean()
    dlogits = probs
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gw2 = hid.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhid = dlogits @ model.w2.T
    dhid[pre <= 0] = 0.0
    gb1 = dhid.sum(axis=0)
    cols = np.unique(x.indices)
    sub = x[:, cols]
    gw1_rows = np.asarray(sub.T @ dhid)
    return loss, (cols, gw1_rows), gb1, gw2, gb2


def _init_model(dim: int, hidden: int, classes: list[str], rng: np.random.Generator) -> CountryModel:
    # Hashed rows of tokens never seen in training keep their initial values,
    # so the first layer starts near zero; the wide output layer keeps early
    # gradients into it from vanishing.
    w1 = rng.normal(0.0, 0.01, size=(dim, hidden))
    w2 = rng.normal(0.0, 2.0, size=(hidden, len(classes)))
    return CountryModel(dim, classes, w1, np.zeros(hidden), w2, np.zeros(len(classes)))


def _labeled(corpus: Corpus) -> list[AuthorshipRecord]:
    return [r for r in corpus.records if r.country is not None and r.affiliation_text.strip()]


def _split(labels: list[str], cfg: TrainConfig, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n = len(labels)
    if not cfg.stratify:
        perm = rng.permutation(n)
        k = int(round(cfg.train_fraction * n))
        return np.sort(perm[:k]), np.sort(perm[k:])
    train, test = [], []
    by_class: dict[str, list[int]] = {}
    for i, lab in enumerate(labels):
        by_class.setdefault(lab, []).append(i)
    for lab in sorted(by_class):
        idx = np.array(by_class[lab])[rng.permutation(len(by_class[lab]))]
        k = int(round(cfg.train_fraction * len(idx)))
        train.extend(idx[:k])
        test.extend(idx[k:])
    return np.sort(np.array(train, dtype=np.int64)), np.sort(np.array(test, dtype=np.int64))


def train_country_model(corpus: Corpus, cfg: TrainConfig = TrainConfig()) -> CountryModel:
    labeled = _labeled(corpus)
    if len(labeled) < cfg.min_labeled:
        raise ModelError(f"need at least {cfg.min_labeled} labeled records, got {len(labeled)}")
    rng = np.random.default_rng(cfg.seed)
    if cfg.max_records is not None and len(labeled) > cfg.max_records:
        keep = np.sort(rng.choice(len(labeled), cfg.max_records, replace=False))
        labeled = [labeled[i] for i in keep]
    classes = sorted({r.country for r in labeled})
    if len(classes) < 2:
        raise ModelError("training data contains a single country")
    cls_index = {c: i for i, c in enumerate(classes)}

    x_all = featurize([r.affiliation_text for r in labeled], cfg.dim)
    y_all = np.array([cls_index[r.country] for r in labeled], dtype=np.int64)
    train_idx, test_idx = _split([r.country for r in labeled], cfg, rng)

    model = _init_model(cfg.dim, cfg.hidden, classes, rng)
    x_tr, y_tr = x_all[train_idx], y_all[train_idx]
    losses = []
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train_idx))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            loss, (cols, gw1), gb1, gw2, gb2 = loss_and_grads(model, x_tr[b], y_tr[b])
            total += loss * len(b)
            model.w1[cols] -= cfg.learning_rate * gw1
            model.b1 -= cfg.learning_rate * gb1
            model.w2 -= cfg.learning_rate * gw2
            model.b2 -= cfg.learning_rate * gb2
        losses.append(total / max(len(order), 1))

    acc = 1.0
    if len(test_idx):
        pred = predict_proba(model, x_all[test_idx]).argmax(axis=1)
        acc = float((pred == y_all[test_idx]).mean())
    model.meta = TrainingMeta(
        epochs=cfg.epochs, learning_rate=cfg.learning_rate, seed=cfg.seed,
        split_ratio=cfg.train_fraction, held_out_accuracy=acc, batch_size=cfg.batch_size,
        epoch_losses=[float(v) for v in losses],
        held_out_ids=[labeled[i].record_id for i in test_idx],
    )
    return model


def dataset_loss(model: CountryModel, texts: Sequence[str], labels: Sequence[str]) -> float:
    idx = {c: i for i, c in enumerate(model.classes)}
    x = featurize(texts, model.dim)
    y = np.array([idx[c] for c in labels])
    return float(loss_and_grads(model, x, y)[0])


def predict_proba(model: CountryModel, x: sp.csr_matrix) -> np.ndarray:
    return _forward(model, x)[2]


def predict_country(model: CountryModel, text: str) -> tuple[str, float]:
    if not model.classes or model.w1.size == 0:
        raise ModelError("model is empty")
    probs = predict_proba(model, featurize([text], model.dim))[0]
    k = int(np.argmax(probs))
    return model.classes[k], float(probs[k])


@dataclass(frozen=True)
class FillReport:
    filled: int
    unfillable: int
    present: int

    def to_dict(self) -> dict:
        return {"filled": self.filled, "unfillable": self.unfillable, "present": self.present}


def fill_missing_countries(corpus: Corpus, model: CountryModel,
                           batch_size: int = 4096) -> tuple[Corpus, FillReport]:
    todo = [i for i, r in enumerate(corpus.records)
            if r.country is None and r.affiliation_text.strip()]
    unfillable = sum(1 for r in corpus.records if r.country is None and not r.affiliation_text.strip())
    records = list(corpus.records)
    for start in range(0, len(todo), batch_size):
        chunk = todo[start:start + batch_size]
        probs = predict_proba(model, featurize([records[i].affiliation_text for i in chunk], model.dim))
        for i, k in zip(chunk, probs.argmax(axis=1)):
            records[i] = replace(records[i], country=model.classes[int(k)], country_imputed=True)
    report = FillReport(len(todo), unfillable, len(records) - len(todo) - unfillable)
    return corpus.replace_records(records), report
