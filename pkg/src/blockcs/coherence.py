"""Support- and drawing-dependent coherence quantities of a blocks dictionary.

For a dictionary ``(B_k)``, a support ``S`` and weights ``pi`` the module
computes

* ``theta``   ``max_k (1/pi_k) ||B_k^* B_{k,S}||_{inf->inf}``
* ``upsilon`` ``max_i sup_{||v||_inf <= 1} sum_k (1/pi_k) |e_i^* B_k^* B_{k,S} v|^2``
* ``lam``     ``max_k (1/pi_k) ||B_{k,S}^* B_{k,S}||_{2->2}``
* ``gamma``   ``max(theta, upsilon)``

``B_{k,S}`` keeps the columns of ``B_k`` indexed by ``S``. Weights may be a
probability vector (i.i.d. drawing) or Bernoulli inclusion probabilities;
nothing here assumes a particular normalization.

The supremum in ``upsilon`` is taken over real ``v`` by default, where the
objective is a convex quadratic maximized at a sign vertex and can be
enumerated exactly. Over complex ``v`` only a bracket is available: a phase
grid search gives a lower bound and :func:`upsilon_upper` an upper bound.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .blocks import BlockDictionary
from .linops import LevelPartition, is_power_of_two

EXACT_CAP = 16
PHASE_GRID = 8
_ZERO_RTOL = 1e-12


class CoherenceError(ValueError):
    pass


def _support(S, n):
    S = np.unique(np.asarray(S, dtype=int).ravel())
    if S.size and (S[0] < 0 or S[-1] >= n):
        raise CoherenceError(f"support indices must lie in range({n})")
    return S


def _weights(pi, M):
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.size != M:
        raise CoherenceError(f"expected {M} drawing weights, got {pi.size}")
    if np.any(pi < 0) or not np.all(np.isfinite(pi)):
        raise CoherenceError("drawing weights must be finite and nonnegative")
    return pi


class _Interactions:
    """Per-block matrices ``G_k = B_k^* B_{k,S}`` (shape ``(M, n, s)``)."""

    def __init__(self, d: BlockDictionary, S):
        self.d = d
        self.S = _support(S, d.n)
        A = d.dense_base
        G = np.empty((d.M, d.n, self.S.size), dtype=A.dtype)
        self.sub = []
        for k in range(d.M):
            B = d.block(k)
            BS = B[:, self.S]
            G[k] = B.conj().T @ BS
            self.sub.append(BS)
        self.G = G
        # ||G_k||_{inf->inf} is the largest row l1 norm
        self.row_l1 = np.abs(G).sum(axis=2)
        self.block_norm = self.row_l1.max(axis=1) if self.S.size else np.zeros(d.M)
        scale = self.block_norm.max() if d.M else 0.0
        self.active = self.block_norm > _ZERO_RTOL * max(scale, 1e-300)

    def inverse_weights(self, pi):
        """``1/pi_k`` on active blocks, 0 on inactive ones, ``inf`` where pi_k=0 but active."""
        pi = _weights(pi, self.d.M)
        inv = np.zeros_like(pi)
        pos = pi > 0
        inv[pos] = 1.0 / pi[pos]
        inv[~self.active] = 0.0
        inv[self.active & ~pos] = np.inf
        return inv


@dataclass
class ThetaResult:
    value: float
    block: int
    row: int
    infinite: bool = False


@dataclass
class UpsilonResult:
    value: float
    row: int
    v: np.ndarray | None
    status: str
    field: str = "real"


@dataclass
class CoherenceReport:
    theta: float
    upsilon_exact: float | None
    upsilon_upper: float
    lam: float
    gamma: float
    upsilon_status: str
    theta_witness: tuple
    upsilon_witness: tuple | None
    s: int
    n: int
    M: int
    upsilon_complex_lower: float | None = None
    flags: list = field(default_factory=list)

    @property
    def upsilon(self) -> float:
        return self.upsilon_exact if self.upsilon_exact is not None else self.upsilon_upper

    def to_record(self) -> str:
        def fmt(x):
            if x is None:
                return "skipped"
            if isinstance(x, float):
                return repr(x)
            return str(x)

        k, i = self.theta_witness
        lines = [
            f"n={self.n}",
            f"M={self.M}",
            f"s={self.s}",
            f"theta={fmt(self.theta)}",
            f"theta_block={k}",
            f"theta_row={i}",
            f"upsilon_exact={fmt(self.upsilon_exact)}",
            f"upsilon_status={self.upsilon_status}",
            f"upsilon_upper={fmt(self.upsilon_upper)}",
        ]
        if self.upsilon_complex_lower is not None:
            lines.append(f"upsilon_complex_lower={fmt(self.upsilon_complex_lower)}")
        if self.upsilon_witness is not None:
            row, v = self.upsilon_witness
            lines.append(f"upsilon_row={row}")
            lines.append("upsilon_signs=" + ",".join(str(int(x)) for x in np.real(v)))
        lines += [
            f"lambda={fmt(self.lam)}",
            f"gamma={fmt(self.gamma)}",
            "flags=" + (",".join(self.flags) if self.flags else "none"),
        ]
        return "\n".join(lines) + "\n"


def theta(d: BlockDictionary, S, pi, _inter=None) -> ThetaResult:
    inter = _inter or _Interactions(d, S)
    if inter.S.size == 0:
        return ThetaResult(0.0, -1, -1)
    inv = inter.inverse_weights(pi)
    with np.errstate(invalid="ignore"):
        scores = np.where(inv > 0, inter.block_norm * inv, 0.0)
    k = int(np.argmax(scores))
    i = int(np.argmax(inter.row_l1[k]))
    value = float(scores[k])
    return ThetaResult(value, k, i, infinite=math.isinf(value))


def upsilon_upper(d: BlockDictionary, S, pi, _inter=None) -> float:
    """``sum_k (1/pi_k) ||B_k^* B_{k,S}||_{inf->inf}^2`` (sum and sup swapped)."""
    inter = _inter or _Interactions(d, S)
    inv = inter.inverse_weights(pi)
    with np.errstate(invalid="ignore"):
        terms = np.where(inv > 0, inter.block_norm**2 * inv, 0.0)
    return float(terms.sum())


def _row_forms(inter, inv):
    """Hermitian ``Q_i = sum_k inv_k G_k[i]^H G_k[i]`` for every row i, shape (n, s, s)."""
    act = inv > 0
    G = inter.G[act]
    w = inv[act]
    return np.einsum("k,kia,kib->iab", w, G.conj(), G, optimize=True)


def _sign_vertices(s):
    # first coordinate pinned to +1: the objective is even in v
    if s == 0:
        return np.zeros((1, 0))
    tail = np.array(list(itertools.product((1.0, -1.0), repeat=s - 1)), dtype=float).reshape(2 ** (s - 1), s - 1)
    return np.hstack([np.ones((tail.shape[0], 1)), tail])


def upsilon_exact(d: BlockDictionary, S, pi, cap: int = EXACT_CAP, _inter=None) -> UpsilonResult:
    """Exact real-field ``upsilon`` by sign-vertex enumeration.

    Rows are visited in decreasing order of the cheap bound ``sum |Re Q_i|``
    and skipped once that bound cannot beat the incumbent. Returns a result
    with ``status='skipped'`` and the upper bound when ``|S| > cap``.
    """
    inter = _inter or _Interactions(d, S)
    s = inter.S.size
    if s == 0:
        return UpsilonResult(0.0, -1, np.zeros(0), "exact")
    inv = inter.inverse_weights(pi)
    if np.isinf(inv).any():
        return UpsilonResult(math.inf, -1, None, "infinite")
    if s > cap:
        return UpsilonResult(upsilon_upper(d, S, pi, inter), -1, None, "skipped")
    Q = _row_forms(inter, inv).real
    bounds = np.abs(Q).sum(axis=(1, 2))
    V = _sign_vertices(s)
    best, best_i, best_v = -1.0, -1, None
    for i in np.argsort(-bounds, kind="stable"):
        if bounds[i] <= best:
            break
        vals = np.einsum("va,ab,vb->v", V, Q[i], V, optimize=True)
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, best_i, best_v = float(vals[j]), int(i), V[j].copy()
    return UpsilonResult(max(best, 0.0), best_i, best_v, "exact")


def _phase_ascent(Q, v, phases, sweeps=50):
    s = v.size
    val = float(np.real(v.conj() @ Q @ v))
    for _ in range(sweeps):
        improved = False
        for a in range(s):
            r = Q[a] @ v - Q[a, a] * v[a]
            # objective as a function of v_a: Q_aa + 2 Re(conj(v_a) r)
            cand = 2 * np.real(phases.conj() * r)
            b = int(np.argmax(cand))
            old = 2 * np.real(np.conj(v[a]) * r)
            if cand[b] > old + 1e-14 * max(1.0, abs(val)):
                v[a] = phases[b]
                val += cand[b] - old
                improved = True
        if not improved:
            break
    return float(np.real(v.conj() @ Q @ v)), v


def upsilon_complex_bracket(d: BlockDictionary, S, pi, grid: int = PHASE_GRID,
                            enum_cap: int = 65536, _inter=None):
    """Lower and upper bounds for ``upsilon`` with the supremum over complex ``v``.

    The lower bound is the best value found over ``grid`` equispaced phases per
    coordinate: exhaustively when ``grid**(s-1) <= enum_cap``, otherwise by
    coordinate ascent started from every row's best real vertex.
    """
    inter = _inter or _Interactions(d, S)
    s = inter.S.size
    upper = upsilon_upper(d, S, pi, inter)
    if s == 0:
        return 0.0, upper
    inv = inter.inverse_weights(pi)
    if np.isinf(inv).any():
        return math.inf, math.inf
    phases = np.exp(2j * np.pi * np.arange(grid) / grid)
    Q = _row_forms(inter, inv)
    best = 0.0
    if grid ** (s - 1) <= enum_cap:
        tail = np.array(list(itertools.product(phases, repeat=s - 1))).reshape(-1, s - 1)
        V = np.hstack([np.ones((tail.shape[0], 1), dtype=complex), tail])
        for i in range(Q.shape[0]):
            vals = np.real(np.einsum("va,ab,vb->v", V.conj(), Q[i], V, optimize=True))
            best = max(best, float(vals.max()))
        return best, upper
    bounds = np.abs(Q).sum(axis=(1, 2))
    V = _sign_vertices(s) if s <= EXACT_CAP else None
    for i in np.argsort(-bounds, kind="stable"):
        if bounds[i] <= best:
            break
        if V is not None:
            vals = np.einsum("va,ab,vb->v", V, Q[i].real, V, optimize=True)
            v0 = V[int(np.argmax(vals))].astype(complex)
        else:
            v0 = np.ones(s, dtype=complex)
        val, _ = _phase_ascent(Q[i], v0, phases)
        best = max(best, val)
    return best, upper


def lam(d: BlockDictionary, S, pi, _inter=None) -> float:
    inter = _inter or _Interactions(d, S)
    if inter.S.size == 0:
        return 0.0
    inv = inter.inverse_weights(pi)
    best = 0.0
    for k in range(d.M):
        if inv[k] == 0:
            continue
        sig = np.linalg.norm(inter.sub[k], 2) ** 2
        best = max(best, sig * inv[k])
    return float(best)


def gamma(d: BlockDictionary, S, pi, cap: int = EXACT_CAP, complex_bracket: bool = False) -> CoherenceReport:
    """Assemble the full report; ``gamma`` uses the exact real ``upsilon`` when available."""
    inter = _Interactions(d, S)
    th = theta(d, S, pi, inter)
    up = upsilon_upper(d, S, pi, inter)
    ue = upsilon_exact(d, S, pi, cap, inter)
    lm = lam(d, S, pi, inter)
    flags = []
    if th.infinite:
        flags.append("theta_infinite")
    if ue.status == "skipped":
        flags.append("upsilon_upper_substituted")
    exact = ue.value if ue.status in ("exact", "infinite") else None
    ups = exact if exact is not None else up
    lower = None
    if complex_bracket:
        lower, _ = upsilon_complex_bracket(d, S, pi, _inter=inter)
        flags.append("complex_bracket")
    witness = (ue.row, ue.v) if ue.v is not None else None
    return CoherenceReport(
        theta=th.value,
        upsilon_exact=exact,
        upsilon_upper=up,
        lam=lm,
        gamma=max(th.value, ups),
        upsilon_status=ue.status,
        theta_witness=(th.block, th.row),
        upsilon_witness=witness,
        s=int(inter.S.size),
        n=d.n,
        M=d.M,
        upsilon_complex_lower=lower,
        flags=flags,
    )


def block_norms(d: BlockDictionary, S) -> np.ndarray:
    """``||B_k^* B_{k,S}||_{inf->inf}`` for every block."""
    return _Interactions(d, S).block_norm


def optimal_pi_theta(d: BlockDictionary, S) -> np.ndarray:
    """Drawing distribution minimizing ``theta``: proportional to the block norms."""
    norms = block_norms(d, S)
    total = norms.sum()
    if total <= 0:
        raise CoherenceError("support does not interact with any block (empty support?)")
    pi = np.where(norms > _ZERO_RTOL * norms.max(), norms, 0.0)
    return pi / pi.sum()


def uniform_pi(M: int) -> np.ndarray:
    return np.full(M, 1.0 / M)


# level-structured distributions -------------------------------------------

def _mixing(counts):
    """``T_j = sum_p 2^{-|j-p|/2} counts_p``."""
    c = np.asarray(counts, dtype=float)
    L = c.size
    j = np.arange(L)
    W = 2.0 ** (-np.abs(j[:, None] - j[None, :]) / 2.0)
    return W @ c


def _level_weights(counts):
    c = np.asarray(counts, dtype=float)
    if c.ndim != 1 or c.size == 0 or np.any(c < 0):
        raise CoherenceError("level counts must be a nonnegative vector")
    if c.sum() == 0:
        raise CoherenceError("all level counts are zero")
    return 2.0 ** (-np.arange(c.size)) * _mixing(c)


def _spread_levels(per_level, n_levels):
    lp = LevelPartition(2 ** (n_levels - 1))
    return per_level[lp.labels]


def level_pi_fourier_haar(s_levels) -> np.ndarray:
    """Level-constant distribution over ``n = 2**(len(s_levels)-1)`` Fourier rows.

    Weight of level ``j`` is ``2^{-j} sum_p 2^{-|j-p|/2} s_p``, normalized over
    all rows (each row of level ``j`` receives that weight).
    """
    w = _level_weights(s_levels)
    pi = _spread_levels(w, len(w))
    return pi / pi.sum()


def level_pi_scol(s_col) -> np.ndarray:
    """Level-constant line distribution ``~ s^c_j 2^{-j}`` (block-diagonal Shannon case)."""
    c = np.asarray(s_col, dtype=float)
    if c.sum() <= 0:
        raise CoherenceError("all column sparsities are zero")
    w = c * 2.0 ** (-np.arange(c.size))
    pi = _spread_levels(w, c.size)
    return pi / pi.sum()


def level_bound(counts, pi_levels) -> float:
    """``max_j (2^{-j}/pi_j) sum_p 2^{-|j-p|/2} counts_p`` over levels with weight."""
    w = _level_weights(counts)
    p = np.asarray(pi_levels, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, w / p, 0.0)
    return float(terms.max())


@dataclass
class LineBound:
    value: float
    pi_levels: np.ndarray
    optimal_value: float
    reduced: float


def haar_line_bound(s_col, pi_levels=None) -> LineBound:
    """Line-sampling bound for the 2D Fourier-Haar system.

    ``value`` evaluates ``max_j (2^{-j}/pi_j) T_j`` with ``T_j = sum_r
    2^{-|j-r|/2} s^c_r`` at the given per-line level probabilities (or at the
    optimum when omitted). ``optimal_value`` is the exact minimum over
    level-constant distributions, ``sum_j |tau_j| 2^{-j} T_j``; ``reduced`` is
    ``sum_j T_j``, the same quantity with ``|tau_j|`` replaced by ``2^j``.
    """
    w = _level_weights(s_col)
    sizes = LevelPartition(2 ** (w.size - 1)).sizes()
    opt_levels = w / (sizes * w).sum()
    optimal = float((sizes * w).sum())
    levels = opt_levels if pi_levels is None else np.asarray(pi_levels, dtype=float)
    return LineBound(
        value=level_bound(s_col, levels),
        pi_levels=opt_levels,
        optimal_value=optimal,
        reduced=float(_mixing(s_col).sum()),
    )


def column_sparsities(S, n: int) -> np.ndarray:
    """``s^c_l``: max over grid columns of the support points in horizontal level ``l``."""
    side = int(round(math.sqrt(n)))
    if side * side != n or not is_power_of_two(side):
        raise CoherenceError(f"n={n} must be a square of a power of two")
    lp = LevelPartition(side)
    mask = np.zeros((side, side), dtype=bool)
    S = np.asarray(S, dtype=int).ravel()
    if S.size:
        mask.flat[S] = True
    out = np.zeros(lp.n_levels, dtype=int)
    for j, rows in enumerate(lp):
        out[j] = mask[rows].sum(axis=0).max()
    return out


# sample complexity -----------------------------------------------------------

@dataclass
class SufficientM:
    m: int
    value: float
    within_hypotheses: bool
    reason: str = ""


def sufficient_m_value(gamma_value, s, n, eps) -> float:
    ls = math.log(64 * s)
    return 73.0 * gamma_value * ls * (math.log(9 * n / eps) + math.log(ls))


def sufficient_m(gamma_value: float, s: int, n: int, eps: float) -> SufficientM:
    """Smallest ``m`` with ``m >= 73 Gamma ln(64 s) (ln(9n/eps) + ln ln(64 s))``.

    Outside ``s >= 16``, ``Gamma >= 1`` the value is still computed and flagged.
    """
    if not 0 < eps < 1:
        raise CoherenceError("eps must lie in (0, 1)")
    if s < 1:
        raise CoherenceError("s must be positive")
    value = sufficient_m_value(gamma_value, s, n, eps)
    reasons = []
    if s < 16:
        reasons.append("s<16")
    if gamma_value < 1:
        reasons.append("gamma<1")
    return SufficientM(
        m=int(math.ceil(value)),
        value=value,
        within_hypotheses=not reasons,
        reason="outside the validity range of the bound: " + ",".join(reasons) if reasons else "",
    )


def empirical_m(gamma_value: float, s: int, n: int, eps: float = 1.0, constant: float = 4.0) -> int:
    """Grid-centering rule ``constant * Gamma ln(s) ln(n/eps)``."""
    return int(math.ceil(constant * gamma_value * math.log(s) * math.log(n / eps)))
