"""Blocks dictionaries over the rows of an orthogonal operator, and support models."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import linops
from .linops import DENSE_CAP, LevelPartition, OrthoOperator, is_power_of_two


class DictionaryError(ValueError):
    pass


class InfeasibleSupportError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BlockDictionary:
    """A family of row groups ``I_k`` of ``base`` with per-row multiplicities.

    Block ``k`` is the matrix with rows ``a_i^* / sqrt(alpha_i)`` for
    ``i in groups[k]`` where ``a_i^*`` are the rows of ``base``. In cover
    mode the multiplicities are counted from the groups, never supplied.
    """

    base: OrthoOperator
    groups: tuple
    mode: str = "partition"
    label: str = "custom"
    multiplicities: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.base.dim
        groups = tuple(np.asarray(g, dtype=int).ravel() for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if self.mode not in ("partition", "cover"):
            raise DictionaryError(f"unknown mode {self.mode!r}")
        counts = np.zeros(n, dtype=int)
        for k, g in enumerate(groups):
            if g.size == 0:
                raise DictionaryError(f"block {k} is empty")
            if g.min() < 0 or g.max() >= n:
                raise DictionaryError(f"block {k} has indices outside 0..{n - 1}")
            if np.unique(g).size != g.size:
                raise DictionaryError(f"block {k} repeats a row")
            counts[g] += 1
        missing = np.flatnonzero(counts == 0)
        if missing.size:
            raise DictionaryError(f"rows not covered by any block: {missing.tolist()}")
        if self.mode == "partition" and counts.max() > 1:
            dup = np.flatnonzero(counts > 1)
            raise DictionaryError(f"rows in several blocks of a partition: {dup.tolist()}")
        counts.setflags(write=False)
        object.__setattr__(self, "multiplicities", counts)

    @property
    def n(self) -> int:
        return self.base.dim

    @property
    def M(self) -> int:
        return len(self.groups)

    @property
    def block_sizes(self) -> np.ndarray:
        return np.array([g.size for g in self.groups])

    def row_weights(self, k: int) -> np.ndarray:
        return 1.0 / np.sqrt(self.multiplicities[self.groups[k]])

    @cached_property
    def dense_base(self) -> np.ndarray:
        return self.base.materialize()

    def block(self, k: int) -> np.ndarray:
        """Dense ``B_k`` of shape ``(|I_k|, n)``."""
        return self.dense_base[self.groups[k]] * self.row_weights(k)[:, None]

    def blocks(self):
        return (self.block(k) for k in range(self.M))

    def describe(self) -> dict:
        return {
            "label": self.label,
            "mode": self.mode,
            "M": self.M,
            "base": self.base.describe(),
        }


def isolated_dictionary(base: OrthoOperator) -> BlockDictionary:
    return BlockDictionary(base, tuple([k] for k in range(base.dim)), "partition", "isolated")


def _kron_side(base2d):
    if not isinstance(base2d, linops.Kron) or not base2d.is_square_kron:
        raise DictionaryError("line blocks need a square Kronecker base kron(phi, phi)")
    return base2d.left.dim


def line_groups(side: int, direction: str) -> list:
    grid = np.arange(side * side).reshape(side, side)
    if direction == "horizontal":
        return [grid[k] for k in range(side)]
    if direction == "vertical":
        return [grid[:, k] for k in range(side)]
    raise DictionaryError(f"unknown line direction {direction!r}")


def line_dictionary(base2d: OrthoOperator, direction: str = "horizontal") -> BlockDictionary:
    """Blocks made of the ``sqrt(n)`` lines of the 2D acquisition plane.

    Row ``r * side + c`` of ``kron(phi, phi)`` is acquisition point ``(r, c)``;
    horizontal block ``k`` collects ``r = k``, vertical block ``k`` collects ``c = k``.
    """
    side = _kron_side(base2d)
    return BlockDictionary(base2d, tuple(line_groups(side, direction)), "partition", f"lines-{direction}")


def horizontal_vertical_cover(base2d: OrthoOperator) -> BlockDictionary:
    side = _kron_side(base2d)
    groups = line_groups(side, "horizontal") + line_groups(side, "vertical")
    return BlockDictionary(base2d, tuple(groups), "cover", "lines-both")


def custom_dictionary(base: OrthoOperator, groups: Sequence, mode: str = "partition") -> BlockDictionary:
    return BlockDictionary(base, tuple(groups), mode, "custom")


def block_gram_sum(d: BlockDictionary) -> np.ndarray:
    A = d.dense_base
    w = np.zeros(d.n)
    for g in d.groups:
        w[g] += 1.0
    # sum_k B_k^* B_k = A^* diag(sum_k 1[i in I_k] / alpha_i) A
    scale = w / d.multiplicities
    return A.conj().T @ (scale[:, None] * A)


def verify_isotropy(d: BlockDictionary) -> float:
    """``max |sum_k B_k^* B_k - Id|``."""
    G = block_gram_sum(d)
    return float(np.abs(G - np.eye(d.n)).max())


def verify_isotropy_unweighted(d: BlockDictionary) -> float:
    """Isotropy deviation when multiplicities are (wrongly) ignored."""
    A = d.dense_base
    G = sum(A[g].conj().T @ A[g] for g in d.groups)
    return float(np.abs(G - np.eye(d.n)).max())


# supports ------------------------------------------------------------------

def _grid_side(n):
    side = int(round(np.sqrt(n)))
    if side * side != n:
        raise InfeasibleSupportError(f"n={n} is not a perfect square")
    return side


@dataclass(frozen=True)
class SupportModel:
    """Deterministic or structured random support generator.

    kind is one of ``explicit`` (``indices``), ``uniform_random`` (``s``),
    ``by_levels`` (``level_counts``, one per dyadic level of ``range(n)``),
    ``row_concentrated`` (``q`` rows of the ``sqrt(n) x sqrt(n)`` grid, full
    rows unless ``s`` is given), ``column_capped`` (``caps`` per horizontal
    level, with per-column fill probability ``fill``).
    """

    kind: str
    n: int
    indices: tuple = ()
    s: int | None = None
    level_counts: tuple = ()
    q: int | None = None
    caps: tuple = ()
    fill: float = 0.5

    @classmethod
    def explicit(cls, n, indices):
        return cls("explicit", n, indices=tuple(int(i) for i in indices))

    @classmethod
    def uniform_random(cls, n, s):
        return cls("uniform_random", n, s=int(s))

    @classmethod
    def by_levels(cls, n, level_counts):
        return cls("by_levels", n, level_counts=tuple(int(c) for c in level_counts))

    @classmethod
    def row_concentrated(cls, n, q, s=None):
        return cls("row_concentrated", n, q=int(q), s=None if s is None else int(s))

    @classmethod
    def column_capped(cls, n, caps, fill=0.5):
        return cls("column_capped", n, caps=tuple(int(c) for c in caps), fill=float(fill))

    def describe(self) -> dict:
        out = {"kind": self.kind, "n": self.n}
        for key in ("indices", "s", "level_counts", "q", "caps"):
            val = getattr(self, key)
            if val not in ((), None):
                out[key] = list(val) if isinstance(val, tuple) else val
        if self.kind == "column_capped":
            out["fill"] = self.fill
        return out


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    from .sampling import stream

    return stream(seed)


def draw_support(model: SupportModel, seed=0) -> np.ndarray:
    """Draw a sorted index array satisfying ``model`` exactly.

    ``seed`` is an integer (mapped through the package stream derivation) or
    a ready ``numpy.random.Generator``.
    """
    n = model.n
    kind = model.kind
    if kind == "explicit":
        S = np.unique(np.asarray(model.indices, dtype=int))
        if S.size and (S[0] < 0 or S[-1] >= n):
            raise InfeasibleSupportError("explicit support has indices outside range(n)")
        return S
    rng = _rng(seed)
    if kind == "uniform_random":
        if model.s is None or not 0 <= model.s <= n:
            raise InfeasibleSupportError(f"cannot draw s={model.s} indices out of n={n}")
        return np.sort(rng.choice(n, size=model.s, replace=False))
    if kind == "by_levels":
        if not is_power_of_two(n):
            raise InfeasibleSupportError(f"by_levels needs a power-of-two n, got {n}")
        lp = LevelPartition(n)
        counts = model.level_counts
        if len(counts) != lp.n_levels:
            raise InfeasibleSupportError(f"need {lp.n_levels} level counts, got {len(counts)}")
        parts = []
        for j, (c, idx) in enumerate(zip(counts, lp)):
            if not 0 <= c <= idx.size:
                raise InfeasibleSupportError(f"level {j} holds {idx.size} indices, asked for {c}")
            parts.append(rng.choice(idx, size=c, replace=False))
        return np.sort(np.concatenate(parts)).astype(int)
    if kind == "row_concentrated":
        side = _grid_side(n)
        q = model.q
        if q is None or not 1 <= q <= side:
            raise InfeasibleSupportError(f"q={q} rows requested on a {side}x{side} grid")
        rows = rng.choice(side, size=q, replace=False)
        cells = (rows[:, None] * side + np.arange(side)[None, :])
        if model.s is None:
            return np.sort(cells.ravel())
        s = model.s
        if not q <= s <= q * side:
            raise InfeasibleSupportError(f"s={s} cannot occupy exactly {q} rows of length {side}")
        # one point per row guarantees exactly q occupied rows
        first = cells[np.arange(q), rng.integers(0, side, size=q)]
        rest = np.setdiff1d(cells.ravel(), first)
        extra = rng.choice(rest, size=s - q, replace=False)
        return np.sort(np.concatenate([first, extra]))
    if kind == "column_capped":
        side = _grid_side(n)
        if not is_power_of_two(side):
            raise InfeasibleSupportError(f"grid side {side} is not a power of two")
        lp = LevelPartition(side)
        caps = model.caps
        if len(caps) != lp.n_levels:
            raise InfeasibleSupportError(f"need {lp.n_levels} caps, got {len(caps)}")
        chosen = []
        for j, (cap, rows) in enumerate(zip(caps, lp)):
            if not 0 <= cap <= rows.size:
                raise InfeasibleSupportError(f"cap {cap} at level {j} exceeds level size {rows.size}")
            if cap == 0:
                continue
            counts = rng.binomial(cap, model.fill, size=side)
            counts[rng.integers(0, side)] = cap
            for col in range(side):
                r = rng.choice(rows, size=counts[col], replace=False)
                chosen.append(r * side + col)
        if not chosen:
            return np.array([], dtype=int)
        return np.sort(np.concatenate(chosen)).astype(int)
    raise InfeasibleSupportError(f"unknown support model {kind!r}")


def occupied_rows(S, n) -> np.ndarray:
    side = _grid_side(n)
    return np.unique(np.asarray(S, dtype=int) // side)


def level_counts(S, n) -> np.ndarray:
    lp = LevelPartition(n)
    return np.bincount(lp.labels[np.asarray(S, dtype=int)], minlength=lp.n_levels)
