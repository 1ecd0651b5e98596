"""Random block drawing and the resulting sensing matrices.

Random streams come from numpy's counter-based Philox generator keyed by a
``SeedSequence`` of ``(seed, *keys)``, so a trial's draws depend only on its
own key tuple and replay identically across runs and platforms.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockDictionary
from .linops import DENSE_CAP

PI_RTOL = 1e-12


class SamplingError(ValueError):
    pass


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed) & ((1 << 64) - 1), *[int(k) for k in keys]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class DrawRecord:
    mode: str
    seed: int
    drawn: np.ndarray
    pi: np.ndarray
    m: int
    keys: tuple = ()

    def to_json(self) -> str:
        return json.dumps(
            {
                "mode": self.mode,
                "seed": self.seed,
                "keys": list(self.keys),
                "m": self.m,
                "drawn": [int(k) for k in self.drawn],
                "pi": [float(p) for p in self.pi],
            },
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "DrawRecord":
        obj = json.loads(text)
        return cls(
            mode=obj["mode"],
            seed=obj["seed"],
            drawn=np.asarray(obj["drawn"], dtype=int),
            pi=np.asarray(obj["pi"], dtype=float),
            m=obj["m"],
            keys=tuple(obj.get("keys", ())),
        )


def _check_iid_pi(pi, M):
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.size != M:
        raise SamplingError(f"expected {M} probabilities, got {pi.size}")
    if np.any(pi < 0):
        raise SamplingError("probabilities must be nonnegative")
    if abs(pi.sum() - 1.0) > 1e-9:
        raise SamplingError(f"i.i.d. probabilities must sum to 1 (sum={pi.sum():.12g})")
    return pi


def draw_iid(d: BlockDictionary, pi, m: int, seed: int, keys: tuple = ()) -> DrawRecord:
    """Draw ``m`` block indices i.i.d. from ``pi`` by inverse CDF.

    Bins are left-closed, ``[c_{k-1}, c_k)``, so zero-probability blocks are
    never selected.
    """
    if m <= 0:
        raise SamplingError("number of draws m must be positive")
    pi = _check_iid_pi(pi, d.M)
    cdf = np.cumsum(pi)
    cdf /= cdf[-1]
    u = stream(seed, *keys).random(m)
    idx = np.searchsorted(cdf, u, side="right")
    # guard the top edge against rounding in the cumulative sum
    last = int(np.flatnonzero(pi > 0)[-1])
    idx = np.minimum(idx, last)
    return DrawRecord("iid", int(seed), idx.astype(int), pi.copy(), int(m), tuple(keys))


def draw_bernoulli(d: BlockDictionary, pi, seed: int, keys: tuple = ()) -> DrawRecord:
    """Include block ``k`` independently with probability ``pi_k``; ``sum pi`` is the expected count."""
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.size != d.M:
        raise SamplingError(f"expected {d.M} inclusion probabilities, got {pi.size}")
    if np.any(pi < 0) or np.any(pi > 1):
        bad = np.flatnonzero((pi < 0) | (pi > 1))
        raise SamplingError(f"inclusion probabilities must lie in [0, 1] (blocks {bad.tolist()})")
    u = stream(seed, *keys).random(d.M)
    drawn = np.flatnonzero(u < pi)
    return DrawRecord("bernoulli", int(seed), drawn.astype(int), pi.copy(), int(round(pi.sum())), tuple(keys))


@dataclass(eq=False)
class SensingMatrix:
    """Rows ``scale_r * a_{row_ids[r]}^*`` of the base operator, stacked in draw order.

    The matrix is kept implicit: ``matvec`` applies the base operator and
    gathers rows, ``rmatvec`` scatters and applies the adjoint.
    """

    dictionary: BlockDictionary
    row_ids: np.ndarray
    scale: np.ndarray
    row_block: np.ndarray
    row_within: np.ndarray
    draw_bounds: np.ndarray
    record: DrawRecord | None = None
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.dictionary.n

    @property
    def shape(self):
        return (self.row_ids.size, self.n)

    @property
    def n_draws(self) -> int:
        return self.draw_bounds.size - 1

    @property
    def is_complex(self) -> bool:
        return self.dictionary.base.is_complex

    @property
    def row_origin(self):
        return list(zip(self.row_block.tolist(), self.row_within.tolist()))

    def matvec(self, x):
        z = self.dictionary.base.apply(x)
        return self.scale.reshape((-1,) + (1,) * (z.ndim - 1)) * z[self.row_ids]

    def rmatvec(self, r):
        r = np.asarray(r)
        w = self.scale.reshape((-1,) + (1,) * (r.ndim - 1)) * r
        dtype = np.result_type(w.dtype, np.float64)
        z = np.zeros((self.n,) + r.shape[1:], dtype=dtype)
        np.add.at(z, self.row_ids, w)
        return self.dictionary.base.adjoint_apply(z)

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self._dense is None:
            A0 = self.dictionary.base.materialize(cap)
            self._dense = self.scale[:, None] * A0[self.row_ids]
        return self._dense

    def columns(self, S) -> np.ndarray:
        """Dense ``A[:, S]`` without materializing the whole matrix."""
        S = np.asarray(S, dtype=int)
        E = np.zeros((self.n, S.size))
        E[S, np.arange(S.size)] = 1.0
        return self.matvec(E)

    def draw_slice(self, start: int, stop: int) -> slice:
        return slice(int(self.draw_bounds[start]), int(self.draw_bounds[stop]))


def _stack(d: BlockDictionary, blocks, factors, record):
    blocks = np.asarray(blocks, dtype=int)
    if blocks.size == 0:
        raise SamplingError("empty draw: no block was selected")
    flat, starts, sizes = _flat_groups(d)
    lens = sizes[blocks]
    bounds = np.concatenate([[0], np.cumsum(lens)])
    # row r of the stack is entry (r - bounds[draw]) of the drawn block
    draw_of_row = np.repeat(np.arange(blocks.size), lens)
    within = np.arange(bounds[-1]) - bounds[draw_of_row]
    ids = flat[starts[blocks][draw_of_row] + within]
    scale = np.asarray(factors, dtype=float)[draw_of_row] / np.sqrt(d.multiplicities[ids])
    return SensingMatrix(
        dictionary=d,
        row_ids=ids,
        scale=scale,
        row_block=blocks[draw_of_row],
        row_within=within,
        draw_bounds=bounds,
        record=record,
    )


def _flat_groups(d):
    cached = getattr(d, "_flat_cache", None)
    if cached is None:
        sizes = np.array([g.size for g in d.groups])
        starts = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        cached = (np.concatenate(d.groups).astype(int), starts, sizes)
        object.__setattr__(d, "_flat_cache", cached)  # frozen dataclass, cache only
    return cached


def assemble(d: BlockDictionary, record: DrawRecord) -> SensingMatrix:
    """Stack the drawn blocks with scaling ``1/sqrt(m pi_k)`` (iid) or ``1/sqrt(pi_k)`` (Bernoulli)."""
    drawn = np.asarray(record.drawn, dtype=int)
    if drawn.size == 0:
        raise SamplingError("empty draw: no block was selected")
    if drawn.min() < 0 or drawn.max() >= d.M:
        raise SamplingError("draw record does not match the dictionary")
    pi = record.pi[drawn]
    if np.any(pi <= 0):
        raise AssertionError("a zero-probability block was drawn")
    if record.mode == "iid":
        factors = 1.0 / np.sqrt(record.m * pi)
    elif record.mode == "bernoulli":
        factors = 1.0 / np.sqrt(pi)
    else:
        raise SamplingError(f"unknown draw mode {record.mode!r}")
    return _stack(d, drawn, factors, record)


def equal_sizes(m: int, L: int) -> list:
    base, extra = divmod(m, L)
    return [base + (1 if l < extra else 0) for l in range(L)]


def partition_for_golfing(A: SensingMatrix, L: int, sizes=None) -> list:
    """Split an i.i.d. sensing matrix into ``L`` consecutive groups of draws.

    View ``l`` holds draws ``m_1 + ... + m_{l-1}`` onward and is rescaled by
    ``sqrt(m/m_l)``, i.e. it is itself an i.i.d. sensing matrix over its
    ``m_l`` draws.
    """
    rec = A.record
    if rec is None or rec.mode != "iid":
        raise SamplingError("golfing partitions need an i.i.d. draw record")
    m = A.n_draws
    sizes = equal_sizes(m, L) if sizes is None else [int(x) for x in sizes]
    if len(sizes) != L or sum(sizes) != m or min(sizes) <= 0:
        raise SamplingError(f"sizes {sizes} do not split m={m} draws into {L} nonempty parts")
    views, start = [], 0
    for ml in sizes:
        rows = A.draw_slice(start, start + ml)
        sub_bounds = A.draw_bounds[start:start + ml + 1] - A.draw_bounds[start]
        sub_record = DrawRecord("iid", rec.seed, rec.drawn[start:start + ml], rec.pi, ml, rec.keys)
        views.append(
            SensingMatrix(
                dictionary=A.dictionary,
                row_ids=A.row_ids[rows],
                scale=A.scale[rows] * np.sqrt(m / ml),
                row_block=A.row_block[rows],
                row_within=A.row_within[rows],
                draw_bounds=sub_bounds,
                record=sub_record,
            )
        )
        start += ml
    return views


def full_draw(d: BlockDictionary) -> SensingMatrix:
    """Every block once with Bernoulli weight 1, i.e. the whole base operator."""
    rec = DrawRecord("bernoulli", 0, np.arange(d.M), np.ones(d.M), d.M)
    return assemble(d, rec)
