"""Corpus loading in UCI bag-of-words format, train/test splits and synthetic corpora."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


class CorpusFormatError(ValueError):
    pass


class MalformedHeaderError(CorpusFormatError):
    pass


class IndexOutOfRangeError(CorpusFormatError):
    pass


class CountMismatchError(CorpusFormatError):
    pass


@dataclass(frozen=True)
class Corpus:
    """Expanded token sequences; ``train[i][l]`` flags token ``l`` of document ``i``."""

    W: int
    docs: tuple[np.ndarray, ...]
    vocab: tuple[str, ...] = ()
    train: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        for d in self.docs:
            if d.size and (d.min() < 0 or d.max() >= self.W):
                raise IndexOutOfRangeError("token index outside vocabulary")
        if self.vocab and len(self.vocab) != self.W:
            raise CorpusFormatError(f"vocabulary has {len(self.vocab)} words, expected {self.W}")
        if self.train is not None:
            if len(self.train) != len(self.docs) or any(
                    t.shape != d.shape for t, d in zip(self.train, self.docs)):
                raise CorpusFormatError("split flags do not match documents")

    @property
    def D(self) -> int:
        return len(self.docs)

    @property
    def n_tokens(self) -> int:
        return int(sum(d.size for d in self.docs))

    def words(self) -> tuple[str, ...]:
        return self.vocab or tuple(f"w{w}" for w in range(self.W))

    def flags(self) -> tuple[np.ndarray, ...]:
        if self.train is None:
            return tuple(np.ones(d.size, dtype=bool) for d in self.docs)
        return self.train

    def triples(self) -> list[tuple[int, int, int]]:
        """1-indexed ``(doc, word, count)`` triples sorted by doc then word."""
        out = []
        for i, d in enumerate(self.docs):
            c = np.bincount(d, minlength=self.W)
            for w in np.flatnonzero(c):
                out.append((i + 1, int(w) + 1, int(c[w])))
        return out

    def test_tokens(self) -> tuple[np.ndarray, np.ndarray]:
        """Document ids and words of the test tokens."""
        ids, ws = [], []
        for i, (d, f) in enumerate(zip(self.docs, self.flags())):
            ws.append(d[~f])
            ids.append(np.full(int((~f).sum()), i, dtype=np.int64))
        if not ids:
            return np.empty(0, np.int64), np.empty(0, np.int64)
        return np.concatenate(ids), np.concatenate(ws)

    def train_words(self) -> np.ndarray:
        parts = [d[f] for d, f in zip(self.docs, self.flags())]
        return np.concatenate(parts) if parts else np.empty(0, np.int64)


def _parse_int(tok: str, what: str, exc=CorpusFormatError) -> int:
    try:
        return int(tok)
    except ValueError:
        raise exc(f"{what}: expected an integer, got {tok!r}") from None


def load_uci_bow(docword: str | Path, vocab: str | Path | None = None) -> Corpus:
    """Read a UCI ``docword`` file (and optional ``vocab`` file).

    The header is three lines D, W, NNZ followed by NNZ ``doc word count``
    triples, all 1-indexed.  Tokens are expanded one entry per occurrence, in
    file order.
    """
    lines = [ln for ln in Path(docword).read_text().splitlines() if ln.strip()]
    if len(lines) < 3:
        raise MalformedHeaderError("header needs three lines: D, W, NNZ")
    header = []
    for name, ln in zip(("D", "W", "NNZ"), lines[:3]):
        parts = ln.split()
        if len(parts) != 1:
            raise MalformedHeaderError(f"header line {name} must hold one integer, got {ln!r}")
        v = _parse_int(parts[0], f"header {name}", MalformedHeaderError)
        if v < 0:
            raise MalformedHeaderError(f"header {name} must be nonnegative")
        header.append(v)
    D, W, nnz = header
    body = lines[3:]
    if len(body) != nnz:
        raise CountMismatchError(f"header promises {nnz} triples, file has {len(body)}")
    per_doc: list[list[int]] = [[] for _ in range(D)]
    for ln in body:
        parts = ln.split()
        if len(parts) != 3:
            raise CorpusFormatError(f"expected 'doc word count', got {ln!r}")
        d, w, c = (_parse_int(p, "triple") for p in parts)
        if not 1 <= d <= D:
            raise IndexOutOfRangeError(f"document id {d} outside 1..{D}")
        if not 1 <= w <= W:
            raise IndexOutOfRangeError(f"word id {w} outside 1..{W}")
        if c < 1:
            raise CorpusFormatError(f"count must be positive, got {c}")
        per_doc[d - 1].extend([w - 1] * c)
    words: tuple[str, ...] = ()
    if vocab is not None:
        words = tuple(ln.strip() for ln in
                      Path(vocab).read_text(encoding="utf-8").splitlines() if ln.strip())
    return Corpus(W, tuple(np.asarray(p, dtype=np.int64) for p in per_doc), words)


def save_uci_bow(corpus: Corpus, docword: str | Path, vocab: str | Path | None = None) -> None:
    trip = corpus.triples()
    lines = [str(corpus.D), str(corpus.W), str(len(trip))]
    lines += [f"{d} {w} {c}" for d, w, c in trip]
    Path(docword).write_text("\n".join(lines) + "\n")
    if vocab is not None:
        Path(vocab).write_text("\n".join(corpus.words()) + "\n", encoding="utf-8")


def split_train_test(corpus: Corpus, p_train: float, seed: int) -> Corpus:
    """Flag each token as training with probability ``p_train``, independently."""
    if not 0.0 <= p_train <= 1.0:
        raise ValueError("p_train must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    flags = tuple(rng.random(d.size) < p_train for d in corpus.docs)
    return replace(corpus, train=flags)


@dataclass(frozen=True)
class SyntheticTruth:
    tau: np.ndarray
    theta: np.ndarray

    def predictive(self) -> np.ndarray:
        return self.theta @ self.tau


def synth_corpus(K: int, W: int, n_docs: int, doc_len: int, alpha: float = 0.5,
                 eta: float = 0.5, seed: int = 0) -> tuple[Corpus, SyntheticTruth]:
    """Admixture corpus: Dirichlet(alpha) topic weights, Dirichlet(eta) topics."""
    if K > W:
        raise ValueError("need K <= W")
    rng = np.random.default_rng(seed)
    tau = rng.dirichlet(np.full(W, eta), size=K)
    theta = rng.dirichlet(np.full(K, alpha), size=n_docs)
    docs = []
    for i in range(n_docs):
        z = rng.choice(K, size=doc_len, p=theta[i])
        u = rng.random(doc_len)
        cdf = np.cumsum(tau[z], axis=1)
        w = (u[:, None] >= cdf).sum(axis=1)
        docs.append(np.minimum(w, W - 1).astype(np.int64))
    return Corpus(W, tuple(docs)), SyntheticTruth(tau, theta)
