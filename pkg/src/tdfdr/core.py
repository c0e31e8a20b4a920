"""Shared domain types: labels, competition results and seeded RNG streams."""
from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InputError

__all__ = [
    "Label",
    "ScoredVariable",
    "CompetitionResult",
    "RngHandle",
    "make_rng",
    "parallel_map",
    "format_float",
]

_UINT64_MAX = 2**64 - 1


class Label(enum.Enum):
    TARGET = "T"
    DECOY = "D"

    @classmethod
    def parse(cls, text: str) -> "Label":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise InputError(f"label must be 'T' or 'D', got {text!r}") from None


@dataclass(frozen=True)
class ScoredVariable:
    index: int
    label: Label
    final_score: float

    def __post_init__(self):
        if not math.isfinite(self.final_score):
            raise InputError(f"variable {self.index}: final score must be finite")


@dataclass(frozen=True, eq=False)
class CompetitionResult:
    """Labels and final scores of a competition procedure.

    Stored column-wise; ``variables`` yields the row view.

    Parameters
    ----------
    indices : ndarray of int
        Variable ids, unique.
    is_target : ndarray of bool
        ``True`` for Target, ``False`` for Decoy.
    scores : ndarray of float
        Final scores, larger is more significant.
    meta : dict
        Provenance strings (procedure, permutation count, seed, ...).
    """

    indices: np.ndarray
    is_target: np.ndarray
    scores: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        tgt = np.asarray(self.is_target, dtype=bool).ravel()
        sc = np.asarray(self.scores, dtype=np.float64).ravel()
        if not (idx.shape == tgt.shape == sc.shape):
            raise InputError("indices, labels and scores must have equal length")
        if not np.all(np.isfinite(sc)):
            bad = idx[~np.isfinite(sc)][0]
            raise InputError(f"variable {bad}: final score must be finite")
        if np.unique(idx).size != idx.size:
            raise InputError("variable indices must be unique")
        for arr in (idx, tgt, sc):
            arr.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "is_target", tgt)
        object.__setattr__(self, "scores", sc)
        object.__setattr__(self, "meta", dict(self.meta))

    @classmethod
    def from_variables(cls, variables, meta=None) -> "CompetitionResult":
        variables = list(variables)
        return cls(
            np.array([v.index for v in variables], dtype=np.int64),
            np.array([v.label is Label.TARGET for v in variables], dtype=bool),
            np.array([v.final_score for v in variables], dtype=np.float64),
            meta or {},
        )

    def __len__(self):
        return self.indices.size

    @property
    def variables(self) -> list[ScoredVariable]:
        return [
            ScoredVariable(int(i), Label.TARGET if t else Label.DECOY, float(s))
            for i, t, s in zip(self.indices, self.is_target, self.scores)
        ]

    @property
    def n_target(self) -> int:
        return int(np.count_nonzero(self.is_target))

    @property
    def n_decoy(self) -> int:
        return int(self.is_target.size - np.count_nonzero(self.is_target))

    @property
    def target_scores(self) -> np.ndarray:
        return self.scores[self.is_target]

    @property
    def decoy_scores(self) -> np.ndarray:
        return self.scores[~self.is_target]

    @property
    def target_indices(self) -> np.ndarray:
        return self.indices[self.is_target]

    # -- CSV ``index,label,score`` ------------------------------------------

    def to_csv(self, fh=None):
        """Write ``index,label,score``; returns the text when ``fh`` is None."""
        out = io.StringIO() if fh is None else fh
        out.write("index,label,score\n")
        for i, t, s in zip(self.indices, self.is_target, self.scores):
            out.write(f"{i},{'T' if t else 'D'},{format_float(s)}\n")
        if fh is None:
            return out.getvalue()
        return None

    @classmethod
    def from_csv(cls, fh, meta=None) -> "CompetitionResult":
        """Parse ``index,label,score`` rows. Errors carry the line number."""
        if isinstance(fh, str):
            fh = io.StringIO(fh)
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError("line 1: empty file, expected header 'index,label,score'") from None
        cols = [h.strip().lower() for h in header]
        try:
            pos = [cols.index(c) for c in ("index", "label", "score")]
        except ValueError:
            raise InputError(
                f"line 1: header must contain index,label,score, got {','.join(header)}"
            ) from None
        idx, tgt, sc = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < len(cols):
                raise InputError(f"line {lineno}: expected {len(cols)} fields, got {len(row)}")
            try:
                i = int(row[pos[0]])
            except ValueError:
                raise InputError(f"line {lineno}: bad index {row[pos[0]]!r}") from None
            try:
                lab = Label.parse(row[pos[1]])
            except InputError as exc:
                raise InputError(f"line {lineno}: {exc}") from None
            try:
                s = float(row[pos[2]])
            except ValueError:
                raise InputError(f"line {lineno}: bad score {row[pos[2]]!r}") from None
            if not math.isfinite(s):
                raise InputError(f"line {lineno}: score must be finite")
            idx.append(i)
            tgt.append(lab is Label.TARGET)
            sc.append(s)
        return cls(np.array(idx, dtype=np.int64), np.array(tgt, dtype=bool),
                   np.array(sc, dtype=np.float64), meta or {})


def format_float(x) -> str:
    """17 significant digits: enough for an exact double round trip."""
    return f"{float(x):.17g}"


class RngHandle:
    """A reproducible random stream identified by ``(seed, stream, *path)``.

    The generator is derived from the key alone, never from another stream's
    state, so children can be created in any order or on any thread and
    still produce the same draws.
    """

    __slots__ = ("seed", "stream", "path", "generator")

    def __init__(self, seed: int, stream: int = 0, path: tuple = ()):
        seed = int(seed)
        if not 0 <= seed <= _UINT64_MAX:
            raise InputError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if int(stream) < 0:
            raise InputError("stream id must be non-negative")
        self.seed = seed
        self.stream = int(stream)
        self.path = tuple(int(p) for p in path)
        ss = np.random.SeedSequence(seed, spawn_key=(self.stream,) + self.path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def child(self, key: int) -> "RngHandle":
        """Independent sub-stream, e.g. one per variable or repetition."""
        return RngHandle(self.seed, self.stream, self.path + (int(key),))

    def __repr__(self):
        return f"RngHandle(seed={self.seed}, stream={self.stream}, path={self.path})"


def make_rng(seed: int, stream: int = 0) -> RngHandle:
    return RngHandle(seed, stream)


def parallel_map(func, items, threads=None):
    """Ordered map over ``items`` on up to ``threads`` worker threads.

    Results come back in input order, so any reduction over them is
    independent of the schedule.
    """
    items = list(items)
    if threads is None:
        import os

        threads = os.cpu_count() or 1
    threads = max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(func, items))
