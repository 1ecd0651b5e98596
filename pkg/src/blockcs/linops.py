"""Orthogonal linear operators used as full acquisition matrices.

Every operator is square and unitary. Operators can be applied matrix-free
(``apply``/``adjoint_apply``) or materialized as dense arrays for small
dimensions. Indices are 0-based throughout the package.

Conventions
-----------
* DFT: unitary normalization ``1/sqrt(n)``, forward sign ``exp(-2 pi i k t / n)``.
  Rows can be kept in natural order (frequency ``0..n-1``) or reordered as
  ``0, 1, -1, 2, -2, ..., n/2`` (``order="interleaved"``) so that the dyadic
  levels of :class:`LevelPartition` follow increasing ``|frequency|``.
* Haar: analysis matrix at maximal depth, rows ordered scaling function first,
  then details from coarsest to finest. Row ``i`` therefore belongs to the
  dyadic level ``level_of(i)``.
* Kronecker: ``kron(L, R)`` acts on row-major vectors, i.e. on ``X.ravel()``
  with ``X`` of shape ``(L.dim, R.dim)``, as ``L @ X @ R.T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

DENSE_CAP = 4096


class DimensionError(ValueError):
    pass


class CapExceededError(ValueError):
    pass


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _require_power_of_two(n, what):
    if not is_power_of_two(int(n)):
        raise DimensionError(f"{what} requires a power-of-two dimension, got {n}")


def level_of(i):
    """Dyadic level of 0-based index ``i``: 0 for ``i=0``, else ``floor(log2 i) + 1``."""
    i = np.asarray(i)
    out = np.zeros(i.shape, dtype=int)
    pos = i > 0
    out[pos] = np.floor(np.log2(i[pos])).astype(int) + 1
    return out if out.ndim else int(out)


@dataclass(frozen=True)
class LevelPartition:
    """Dyadic partition ``{0}, {1}, {2,3}, {4..7}, ..., {n/2..n-1}`` of ``range(n)``."""

    dim: int

    def __post_init__(self):
        _require_power_of_two(self.dim, "LevelPartition")

    @property
    def n_levels(self) -> int:
        return int(np.log2(self.dim)) + 1

    @property
    def top(self) -> int:
        """Index of the finest level (``log2(dim)``)."""
        return self.n_levels - 1

    def level(self, j: int) -> np.ndarray:
        if j == 0:
            return np.array([0])
        return np.arange(2 ** (j - 1), 2**j)

    def sizes(self) -> np.ndarray:
        return np.array([1] + [2 ** (j - 1) for j in range(1, self.n_levels)])

    def level_of(self, i):
        return level_of(i)

    @cached_property
    def labels(self) -> np.ndarray:
        return level_of(np.arange(self.dim))

    def __iter__(self):
        return (self.level(j) for j in range(self.n_levels))


class OrthoOperator:
    """Base class for square unitary operators.

    Subclasses implement ``_matmat`` and ``_rmatmat`` on ``(dim, k)`` arrays.
    """

    kind = "abstract"

    def __init__(self, dim: int, is_complex: bool):
        if dim < 1:
            raise DimensionError("dimension must be positive")
        self.dim = int(dim)
        self.is_complex = bool(is_complex)

    @property
    def field(self) -> str:
        return "complex" if self.is_complex else "real"

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    def _check(self, x):
        x = np.asarray(x)
        if x.shape[0] != self.dim:
            raise DimensionError(f"expected leading dimension {self.dim}, got {x.shape[0]}")
        return x

    def apply(self, v):
        v = self._check(v)
        if v.ndim == 1:
            return self._matmat(v[:, None])[:, 0]
        return self._matmat(v)

    def adjoint_apply(self, v):
        v = self._check(v)
        if v.ndim == 1:
            return self._rmatmat(v[:, None])[:, 0]
        return self._rmatmat(v)

    def materialize(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.dim > cap:
            raise CapExceededError(f"dimension {self.dim} exceeds dense cap {cap}")
        return self._matmat(np.eye(self.dim, dtype=self.dtype))

    @property
    def H(self) -> "OrthoOperator":
        return Adjoint(self)

    def describe(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class Identity(OrthoOperator):
    kind = "identity"

    def __init__(self, dim: int):
        super().__init__(dim, is_complex=False)

    def _matmat(self, X):
        return np.array(X, copy=True)

    _rmatmat = _matmat


class Dense(OrthoOperator):
    """Explicit unitary matrix. Unitarity is checked at construction."""

    kind = "dense"

    def __init__(self, matrix, atol: float = 1e-10):
        M = np.asarray(matrix)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise DimensionError("dense operator needs a square matrix")
        super().__init__(M.shape[0], np.iscomplexobj(M))
        dev = np.abs(M.conj().T @ M - np.eye(self.dim)).max()
        if dev > atol:
            raise ValueError(f"matrix is not unitary (max deviation {dev:.3e})")
        self.matrix = M.astype(self.dtype)
        self.matrix.setflags(write=False)

    def _matmat(self, X):
        return self.matrix @ X

    def _rmatmat(self, X):
        return self.matrix.conj().T @ X


def interleaved_frequencies(n: int) -> np.ndarray:
    """Frequencies ``0, 1, -1, 2, -2, ..., n/2`` (reduced mod n) for row reordering."""
    u = np.arange(1, n + 1)
    f = np.where(u % 2 == 0, u // 2, -((u - 1) // 2))
    return f % n


class DFT1D(OrthoOperator):
    kind = "dft1d"

    def __init__(self, dim: int, order: str = "natural"):
        super().__init__(dim, is_complex=True)
        if order not in ("natural", "interleaved"):
            raise ValueError(f"unknown DFT row order {order!r}")
        self.order = order
        if order == "interleaved":
            self._rows = interleaved_frequencies(dim)
            self._inv = np.argsort(self._rows)
        else:
            self._rows = None

    def _matmat(self, X):
        Y = np.fft.fft(X, axis=0, norm="ortho")
        return Y if self._rows is None else Y[self._rows]

    def _rmatmat(self, X):
        if self._rows is not None:
            X = X[self._inv]
        return np.fft.ifft(X, axis=0, norm="ortho")

    def describe(self):
        return {"kind": self.kind, "dim": self.dim, "order": self.order}


def _haar_forward(X):
    n = X.shape[0]
    out = np.array(X, dtype=np.result_type(X, np.float64), copy=True)
    length = n
    while length > 1:
        half = length // 2
        a = out[:length:2].copy()
        b = out[1:length:2].copy()
        out[:half] = (a + b) / np.sqrt(2.0)
        out[half:length] = (a - b) / np.sqrt(2.0)
        length = half
    return out


def _haar_inverse(X):
    n = X.shape[0]
    out = np.array(X, dtype=np.result_type(X, np.float64), copy=True)
    length = 2
    while length <= n:
        half = length // 2
        s = out[:half].copy()
        d = out[half:length].copy()
        out[:length:2] = (s + d) / np.sqrt(2.0)
        out[1:length:2] = (s - d) / np.sqrt(2.0)
        length *= 2
    return out


class Haar1D(OrthoOperator):
    kind = "haar1d"

    def __init__(self, dim: int):
        _require_power_of_two(dim, "haar1d")
        super().__init__(dim, is_complex=False)

    def _matmat(self, X):
        return _haar_forward(X)

    def _rmatmat(self, X):
        return _haar_inverse(X)


class ShannonFW1D(OrthoOperator):
    """Block-diagonal Fourier-Shannon system.

    One unitary DFT block per dyadic level, so that every nonzero entry in a
    row of level ``j`` has modulus ``1/sqrt(|level j|)``. Only the moduli and
    the block structure are meaningful; the DFT phases are a fixed choice.
    """

    kind = "shannon_fw1d"

    def __init__(self, dim: int):
        _require_power_of_two(dim, "shannon_fw1d")
        super().__init__(dim, is_complex=True)
        self.levels = LevelPartition(dim)

    def _matmat(self, X):
        out = np.empty(X.shape, dtype=np.complex128)
        for idx in self.levels:
            out[idx] = np.fft.fft(X[idx], axis=0, norm="ortho")
        return out

    def _rmatmat(self, X):
        out = np.empty(X.shape, dtype=np.complex128)
        for idx in self.levels:
            out[idx] = np.fft.ifft(X[idx], axis=0, norm="ortho")
        return out


class Adjoint(OrthoOperator):
    kind = "adjoint"

    def __init__(self, op: OrthoOperator):
        super().__init__(op.dim, op.is_complex)
        self.op = op

    def _matmat(self, X):
        return self.op._rmatmat(X)

    def _rmatmat(self, X):
        return self.op._matmat(X)

    @property
    def H(self):
        return self.op

    def describe(self):
        return {"kind": self.kind, "op": self.op.describe()}


class Compose(OrthoOperator):
    """``outer @ inner``."""

    kind = "compose"

    def __init__(self, outer: OrthoOperator, inner: OrthoOperator):
        if outer.dim != inner.dim:
            raise DimensionError(f"cannot compose dims {outer.dim} and {inner.dim}")
        super().__init__(outer.dim, outer.is_complex or inner.is_complex)
        self.outer = outer
        self.inner = inner

    def _matmat(self, X):
        return self.outer._matmat(self.inner._matmat(X))

    def _rmatmat(self, X):
        return self.inner._rmatmat(self.outer._rmatmat(X))

    def describe(self):
        return {"kind": self.kind, "outer": self.outer.describe(), "inner": self.inner.describe()}


class Kron(OrthoOperator):
    """Kronecker product ``left (x) right`` acting on row-major vectors."""

    kind = "kron"

    def __init__(self, left: OrthoOperator, right: OrthoOperator):
        super().__init__(left.dim * right.dim, left.is_complex or right.is_complex)
        self.left = left
        self.right = right

    def _via(self, X, fl, fr):
        k = X.shape[1]
        dl, dr = self.left.dim, self.right.dim
        T = X.reshape(dl, dr, k)
        # right factor on axis 1
        T = np.moveaxis(T, 1, 0).reshape(dr, dl * k)
        T = fr(T).reshape(dr, dl, k)
        T = np.moveaxis(T, 0, 1).reshape(dl, dr * k)
        T = fl(T)
        return T.reshape(dl * dr, k)

    def _matmat(self, X):
        return self._via(X, self.left._matmat, self.right._matmat)

    def _rmatmat(self, X):
        return self._via(X, self.left._rmatmat, self.right._rmatmat)

    @property
    def is_square_kron(self) -> bool:
        return self.left.dim == self.right.dim

    def describe(self):
        return {"kind": self.kind, "left": self.left.describe(), "right": self.right.describe()}


# constructors -------------------------------------------------------------

def identity(n: int) -> Identity:
    return Identity(n)


def dense(matrix) -> Dense:
    return Dense(matrix)


def dft1d(n: int, order: str = "natural") -> DFT1D:
    return DFT1D(n, order=order)


def haar1d(n: int) -> Haar1D:
    return Haar1D(n)


def shannon_fw1d(n: int) -> ShannonFW1D:
    return ShannonFW1D(n)


def kron(left: OrthoOperator, right: OrthoOperator) -> Kron:
    return Kron(left, right)


def compose(outer: OrthoOperator, inner: OrthoOperator) -> Compose:
    return Compose(outer, inner)


def adjoint(op: OrthoOperator) -> OrthoOperator:
    return op.H


def apply(op: OrthoOperator, v):
    return op.apply(v)


def materialize(op: OrthoOperator, cap: int = DENSE_CAP) -> np.ndarray:
    return op.materialize(cap)


def fourier_haar1d(n: int) -> Compose:
    """``F @ haar*`` with frequency rows interleaved by increasing ``|frequency|``."""
    return compose(dft1d(n, order="interleaved"), adjoint(haar1d(n)))


def dft2d(side: int) -> Kron:
    f = dft1d(side)
    return kron(f, f)


def fourier_haar2d(side: int) -> Kron:
    phi = fourier_haar1d(side)
    return kron(phi, phi)


def shannon2d(side: int) -> Kron:
    phi = shannon_fw1d(side)
    return kron(phi, phi)


def haar2d(side: int) -> Kron:
    h = haar1d(side)
    return kron(h, h)


@dataclass
class DecayTable:
    """Squared block sup-norms of a Fourier-Haar matrix against the dyadic model."""

    n: int
    table: np.ndarray
    model: np.ndarray
    ratio: np.ndarray = field(init=False)

    def __post_init__(self):
        self.ratio = self.table / self.model

    @property
    def max_ratio(self) -> float:
        return float(self.ratio.max())


def fourier_haar_levels(n: int, cap: int = DENSE_CAP) -> DecayTable:
    """Table of ``max |A0[level j, level l]|^2`` for ``A0 = F haar*``.

    The model value is ``2**-j * 2**-|j-l|``; with interleaved frequency
    ordering the ratio stays bounded by 4 for every ``n`` we have checked.
    """
    _require_power_of_two(n, "fourier_haar_levels")
    A = fourier_haar1d(n).materialize(cap)
    lp = LevelPartition(n)
    L = lp.n_levels
    table = np.empty((L, L))
    for j, rows in enumerate(lp):
        sub = np.abs(A[rows])
        for l, cols in enumerate(lp):
            table[j, l] = sub[:, cols].max() ** 2
    jj, ll = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
    model = 2.0 ** (-jj) * 2.0 ** (-np.abs(jj - ll))
    return DecayTable(n=n, table=table, model=model)
