"""Plain-text word vector tables.

File format: one line per word, the token followed by whitespace-separated
decimal components. Used both for retrieval distances and for the
pretrained word embedding column of the tagger.
"""

from __future__ import annotations

import numpy as np


class WordVectors:
    def __init__(self, words: list[str], matrix: np.ndarray):
        if len(words) != matrix.shape[0]:
            raise ValueError("word list and matrix row count differ")
        if len(words) == 0:
            raise ValueError("empty embedding table")
        self._index = {w: i for i, w in enumerate(words)}
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.dim = self.matrix.shape[1]

    def __contains__(self, word: str) -> bool:
        return word in self._index

    def __len__(self) -> int:
        return len(self._index)

    def get(self, word: str) -> np.ndarray | None:
        i = self._index.get(word)
        return self.matrix[i] if i is not None else None

    @classmethod
    def load(cls, path: str) -> "WordVectors":
        words: list[str] = []
        rows: list[list[float]] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) < 2:
                    raise ValueError(f"{path}:{lineno}: no vector components")
                words.append(parts[0])
                rows.append([float(x) for x in parts[1:]])
        if not rows:
            raise ValueError(f"{path}: empty embedding table")
        width = len(rows[0])
        for lineno, r in enumerate(rows, start=1):
            if len(r) != width:
                raise ValueError(f"{path}: inconsistent vector width at entry {lineno}")
        return cls(words, np.array(rows, dtype=np.float64))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for w, i in self._index.items():
                comps = " ".join(repr(float(x)) for x in self.matrix[i])
                fh.write(f"{w} {comps}\n")
