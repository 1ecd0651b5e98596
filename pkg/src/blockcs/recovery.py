"""Equality-constrained l1 recovery, exact-recovery decisions and dual certificates.

The solver is Douglas-Rachford splitting between the l1 norm and the affine
set ``{x : A x = y}``. The affine projection is exact: for sensing matrices
built from rows of a unitary base it costs two transforms, otherwise an SVD
of ``A`` is computed once. Every few hundred iterations the iterate is
polished by least squares on its estimated support, and stopping is decided
by a duality gap rather than by iterate movement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .sampling import SensingMatrix

ROWSPACE_TOL = 1e-8


class RecoveryError(ValueError):
    pass


class RankDeficientError(RecoveryError):
    pass


def sign(x):
    """Complex sign with ``sign(0) = 0``."""
    x = np.asarray(x)
    a = np.abs(x)
    out = np.zeros_like(x, dtype=np.result_type(x.dtype, np.float64))
    nz = a > 0
    out[nz] = x[nz] / a[nz]
    return out


def soft_threshold(z, t):
    """Prox of ``t * ||.||_1``; shrinks the modulus for complex entries."""
    a = np.abs(z)
    scale = np.maximum(1.0 - t / np.maximum(a, 1e-300), 0.0)
    return scale * z


# measurement systems ---------------------------------------------------------

class _System:
    n: int
    rows: int
    is_complex: bool

    def matvec(self, x): ...
    def rmatvec(self, r): ...
    def columns(self, T): ...
    def project(self, z): ...
    def rowspace(self, v): ...


class _UnitaryRows(_System):
    """Rows ``s_r a_{i_r}^*`` of a unitary ``A0``; duplicates allowed."""

    def __init__(self, A: SensingMatrix, y):
        self.A = A
        self.base = A.dictionary.base
        self.n = A.n
        self.rows = A.shape[0]
        self.is_complex = A.is_complex or np.iscomplexobj(y)
        ids, s = A.row_ids, A.scale
        self.y = y
        self.omega = np.unique(ids)
        num = np.zeros(self.n, dtype=np.result_type(y, np.float64))
        den = np.zeros(self.n)
        np.add.at(num, ids, s * y)
        np.add.at(den, ids, s ** 2)
        self.mask = den > 0
        self.b = np.zeros_like(num)
        self.b[self.mask] = num[self.mask] / den[self.mask]
        misfit = np.linalg.norm(y - s * self.b[ids])
        if misfit > 1e-9 * max(1.0, np.linalg.norm(y)):
            raise RankDeficientError(
                f"measurements disagree on repeated rows (misfit {misfit:.3g}); "
                "no exact solution exists, use a regularized projection"
            )

    def matvec(self, x):
        return self.A.matvec(x)

    def rmatvec(self, r):
        return self.A.rmatvec(r)

    def columns(self, T):
        return self.A.columns(T)

    def project(self, z):
        c = self.base.apply(z)
        c[self.mask] = self.b[self.mask]
        return self.base.adjoint_apply(c)

    def rowspace(self, v):
        c = self.base.apply(v)
        c[~self.mask] = 0
        return self.base.adjoint_apply(c)


class _DenseRows(_System):
    def __init__(self, A, y, real_field: bool = False):
        A = np.asarray(A)
        y = np.asarray(y)
        self.n = A.shape[1]
        self.rows = A.shape[0]
        self.is_complex = not real_field and (np.iscomplexobj(A) or np.iscomplexobj(y))
        if real_field and (np.iscomplexobj(A) or np.iscomplexobj(y)):
            # x real: stack real and imaginary parts into a real system
            A = np.vstack([A.real, A.imag])
            y = np.concatenate([y.real, y.imag])
        self.M, self.y = A, y
        U, sv, Vh = np.linalg.svd(A, full_matrices=False)
        tol = sv.max(initial=0.0) * max(A.shape) * np.finfo(float).eps
        r = int((sv > tol).sum())
        self.U, self.sv, self.Vh = U[:, :r], sv[:r], Vh[:r]
        self.rank = r
        self.x_min = self.Vh.conj().T @ ((self.U.conj().T @ y) / self.sv)
        res = np.linalg.norm(A @ self.x_min - y)
        if res > 1e-9 * max(1.0, np.linalg.norm(y)):
            raise RankDeficientError(
                f"A x = y has no solution (residual {res:.3g}); A has rank {r} < {A.shape[0]} rows, "
                "use a regularized projection"
            )

    def matvec(self, x):
        return self.M @ x

    def rmatvec(self, r):
        return self.M.conj().T @ r

    def columns(self, T):
        return self.M[:, T]

    def project(self, z):
        return z - self.Vh.conj().T @ (self.Vh @ z) + self.x_min

    def rowspace(self, v):
        return self.Vh.conj().T @ (self.Vh @ v)


# problems and results -------------------------------------------------------------

@dataclass
class RecoveryProblem:
    """``min ||x||_1`` subject to ``A x = y``.

    ``A`` is a :class:`SensingMatrix` or a dense array. ``field="real"``
    restricts ``x`` to real vectors; by default the field follows ``A``
    and ``y``.
    """

    A: object
    y: np.ndarray
    x_true: np.ndarray | None = None
    field: str | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y)
        rows = self.A.shape[0]
        if self.y.shape != (rows,):
            raise RecoveryError(f"y has shape {self.y.shape}, A has {rows} rows")
        if self.field is None:
            cplx = np.iscomplexobj(self.y) or (
                self.A.is_complex if isinstance(self.A, SensingMatrix) else np.iscomplexobj(self.A)
            )
            self.field = "complex" if cplx else "real"
        if self.field not in ("real", "complex"):
            raise RecoveryError(f"unknown field {self.field!r}")

    @classmethod
    def synthetic(cls, A, x_true, field=None):
        y = A.matvec(x_true) if isinstance(A, SensingMatrix) else np.asarray(A) @ x_true
        return cls(A, y, np.asarray(x_true), field)

    @property
    def n(self) -> int:
        return self.A.shape[1]

    def system(self) -> _System:
        if isinstance(self.A, SensingMatrix):
            real_op = not self.A.is_complex
            if self.field == "complex" or (real_op and not np.iscomplexobj(self.y)):
                return _UnitaryRows(self.A, self.y)
            return _DenseRows(self.A.to_dense(), self.y, real_field=True)
        return _DenseRows(self.A, self.y, real_field=self.field == "real")


@dataclass
class BPResult:
    x: np.ndarray
    converged: bool
    status: str
    iterations: int
    residual: float
    objective: float
    gap: float
    polished: bool = False
    trace: list = field(default_factory=list)


def _gap(sysm, x, u):
    # any u in the row space with ||u||_inf <= 1 lower-bounds the optimum by Re<u, x>
    un = np.abs(u).max(initial=0.0)
    if un > 1:
        u = u / un
    return float(np.abs(x).sum() - np.real(np.vdot(u, x)))


def _polish(sysm, x, y, real):
    """Least squares on the estimated support plus the matching dual candidate."""
    a = np.abs(x)
    top = a.max(initial=0.0)
    if top == 0:
        return None
    best = None
    for thresh in (1e-3, 1e-5, 1e-7):
        T = np.flatnonzero(a > thresh * top)
        if T.size == 0 or T.size > sysm.rows:
            continue
        AT = sysm.columns(T)
        if real and np.iscomplexobj(AT):
            ATr = np.vstack([AT.real, AT.imag])
            yr = np.concatenate([y.real, y.imag])
            c, *_ = np.linalg.lstsq(ATr, yr, rcond=None)
        else:
            c, *_ = np.linalg.lstsq(AT, y, rcond=None)
        xp = np.zeros(sysm.n, dtype=x.dtype)
        xp[T] = c.real if not np.iscomplexobj(xp) else c
        res = np.linalg.norm(sysm.matvec(xp) - y)
        if res > 1e-9 * max(1.0, np.linalg.norm(y)):
            continue
        # least-norm lambda with A_T^* lambda = sign(x_T)
        sg = sign(xp[T])
        lam, *_ = np.linalg.lstsq(AT.conj().T, sg, rcond=None)
        u = sysm.rmatvec(lam)
        if real:
            u = u.real
        best = (xp, u, res)
        break
    return best


def basis_pursuit(p: RecoveryProblem, tol: float = 1e-9, max_iter: int = 20000,
                  gap_tol: float = 1e-9, polish_every: int = 200, step: float | None = None,
                  record_every: int = 0) -> BPResult:
    """Solve ``min ||x||_1 s.t. A x = y`` by Douglas-Rachford splitting.

    Parameters
    ----------
    tol : feasibility tolerance, relative to ``max(1, ||y||)``.
    gap_tol : stop once the certified duality gap is below
        ``gap_tol * max(1, ||x||_1)``.
    polish_every : iterations between support polishing attempts (0 disables).
    step : prox step; defaults to a tenth of the largest minimum-norm entry.

    Returns
    -------
    BPResult
        ``status`` is ``"optimal"`` or ``"unconverged"``; in the latter case
        ``x`` is the last feasible iterate.
    """
    y = p.y
    real = p.field == "real"
    dtype = float if real else complex
    if p.A.shape[0] == 0 or not np.any(y):
        # no information, or y = 0: x = 0 is optimal
        return BPResult(np.zeros(p.n, dtype=dtype), True, "optimal", 0, 0.0, 0.0, 0.0)
    sysm = p.system()
    y = sysm.y
    ynorm = max(1.0, float(np.linalg.norm(y)))

    z = sysm.project(np.zeros(p.n, dtype=dtype))
    if real:
        z = z.real
    gamma = step if step is not None else 0.1 * float(np.abs(z).max())
    trace = []
    best_x, best_obj, best_gap, polished = None, np.inf, np.inf, False
    it = 0
    for it in range(1, max_iter + 1):
        x = sysm.project(z)
        if real:
            x = x.real
        z = z + soft_threshold(2 * x - z, gamma) - x
        check = it % 50 == 0 or it == max_iter
        if polish_every and it % polish_every == 0:
            cand = _polish(sysm, x, y, real)
            if cand is not None:
                xp, u, _ = cand
                g = _gap(sysm, xp, u)
                obj = float(np.abs(xp).sum())
                if obj <= float(np.abs(x).sum()) + 1e-12 * max(1.0, obj) and g < best_gap:
                    best_x, best_obj, best_gap, polished = xp, obj, g, True
                    if g <= gap_tol * max(1.0, obj):
                        break
        if check:
            xf = sysm.project(z)
            if real:
                xf = xf.real
            u = sysm.rowspace((xf - z) / gamma)
            if real:
                u = u.real
            g = _gap(sysm, xf, u)
            obj = float(np.abs(xf).sum())
            if record_every and it % record_every == 0:
                trace.append((it, obj, g))
            if g < best_gap:
                best_x, best_obj, best_gap, polished = xf, obj, g, False
            if g <= gap_tol * max(1.0, obj):
                break

    x = best_x
    res = float(np.linalg.norm(sysm.matvec(x) - y))
    ok = best_gap <= gap_tol * max(1.0, best_obj) and res <= tol * ynorm * 1e3
    status = "optimal" if ok else "unconverged"
    return BPResult(x, ok, status, it, res, best_obj, best_gap, polished, trace)


def exact_recovery(x_true, xhat, tol: float = 1e-5) -> bool:
    x_true = np.asarray(x_true)
    xhat = np.asarray(xhat)
    if x_true.shape != xhat.shape:
        raise RecoveryError("vectors differ in length")
    return bool(np.linalg.norm(xhat - x_true) <= tol * max(1.0, np.linalg.norm(x_true)))


# certificates ----------------------------------------------------------------

GOLF_RATIO = 0.5
GOLF_T = 0.2
GOLF_TPRIME = 0.2


def golfing_levels(s: int) -> int:
    """Number of golfing steps for support size ``s``: ``2 + ceil(ln s / (2 ln 2))``."""
    if s <= 0:
        raise RecoveryError("empty support")
    return 2 + int(np.ceil(np.log(s) / (2 * np.log(2)) - 1e-12))


@dataclass
class CertificateReport:
    inv_norm: float
    offsupp_max: float
    v: np.ndarray
    dist_sign: float
    offsupp_v: float
    L: int = 0
    sizes: tuple = ()
    w_norms: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    complex_extension: bool = False
    reason: str = ""

    @property
    def conditions(self) -> dict:
        return {
            "inv_norm": self.inv_norm <= 2,
            "offsupp_max": self.offsupp_max <= 1,
            "dist_sign": self.dist_sign <= 0.25,
            "offsupp_v": self.offsupp_v <= 0.25,
        }

    @property
    def passed(self) -> bool:
        return all(self.conditions.values())

    @property
    def contraction_held(self) -> bool:
        return all(st["C1"] for st in self.steps)

    def to_record(self) -> str:
        lines = [
            f"inv_norm={self.inv_norm:.12g}",
            f"offsupp_max={self.offsupp_max:.12g}",
            f"dist_sign={self.dist_sign:.12g}",
            f"offsupp_v={self.offsupp_v:.12g}",
            f"L={self.L}",
            f"sizes={','.join(str(s) for s in self.sizes)}",
        ]
        for name, ok in self.conditions.items():
            lines.append(f"pass_{name}={int(ok)}")
        for l, st in enumerate(self.steps, 1):
            lines.append(
                f"step{l}=w2:{st['w2']:.6g} ratio:{st['ratio']:.6g} "
                f"C1:{int(st['C1'])} C2:{int(st['C2'])} C3:{int(st['C3'])}"
            )
        lines.append(f"complex_extension={int(self.complex_extension)}")
        lines.append(f"pass={int(self.passed)}")
        if self.reason:
            lines.append(f"reason={self.reason}")
        return "\n".join(lines) + "\n"


def _as_dense(A):
    return A.to_dense() if isinstance(A, SensingMatrix) else np.asarray(A)


def _columns(A, S):
    return A.columns(S) if isinstance(A, SensingMatrix) else np.asarray(A)[:, S]


def _adjoint(A, r):
    return A.rmatvec(r) if isinstance(A, SensingMatrix) else np.asarray(A).conj().T @ r


def _gram_quantities(A, S, n):
    AS = _columns(A, S)
    sv = np.linalg.svd(AS, compute_uv=False)
    smin = sv.min() if sv.size else 0.0
    tol = max(AS.shape) * np.finfo(float).eps * max(sv.max(initial=0.0), 1.0)
    inv = np.inf if smin <= tol else 1.0 / smin ** 2
    # column i of A^* A_S is A^* A e_i restricted to S, read along rows
    G = _adjoint(A, AS)
    Sc = np.setdiff1d(np.arange(n), S)
    off = float(np.linalg.norm(G[Sc], axis=1).max(initial=0.0))
    return inv, off


def golfing_certificate(views, S, signs) -> CertificateReport:
    """Build the inexact dual certificate by golfing over the partition ``views``.

    With ``B_l`` the renormalized view, step ``l`` applies
    ``w_l = (P_S - B_{l,S}^* B_{l,S}) w_{l-1}`` and accumulates
    ``v += B_l^* B_{l,S} w_{l-1}``, starting from ``w_0 = signs``.
    Per step it records whether the 2-norm contraction (factor 1/2), the
    off-support sup-norm bound (1/5) and the on-support sup-norm bound (1/5)
    held.
    """
    S = np.asarray(S, dtype=int)
    if S.size == 0:
        raise RecoveryError("empty support")
    signs = np.asarray(signs)
    if signs.shape != S.shape:
        raise RecoveryError("need one sign per support index")
    if np.any(np.abs(np.abs(signs) - 1) > 1e-12):
        raise RecoveryError("signs must have unit modulus")
    n = views[0].shape[1]
    cplx = np.iscomplexobj(signs) or any(
        (v.is_complex if isinstance(v, SensingMatrix) else np.iscomplexobj(v)) for v in views
    )
    dtype = complex if cplx else float
    w = signs.astype(dtype)
    v = np.zeros(n, dtype=dtype)
    Sc = np.setdiff1d(np.arange(n), S)
    steps, norms, ratios = [], [float(np.linalg.norm(w))], []
    for B in views:
        BS = _columns(B, S)
        full = _adjoint(B, BS @ w)
        if not cplx:
            full = full.real
        v = v + full
        w_new = w - full[S]
        winf = np.abs(w).max()
        ratio = np.linalg.norm(w_new) / max(np.linalg.norm(w), 1e-300)
        steps.append(
            {
                "w2": float(np.linalg.norm(w_new)),
                "ratio": float(ratio),
                "C1": bool(ratio <= GOLF_RATIO),
                "C2": bool(np.abs(full[Sc]).max(initial=0.0) <= GOLF_T * winf),
                "C3": bool(np.abs(w_new).max() <= GOLF_TPRIME * winf),
            }
        )
        norms.append(float(np.linalg.norm(w_new)))
        ratios.append(float(ratio))
        w = w_new

    # the parent matrix stacks the views scaled back by sqrt(m_l / m)
    draws = np.array([B.n_draws if isinstance(B, SensingMatrix) else B.shape[0] for B in views], float)
    m = draws.sum()
    parent = np.vstack([_as_dense(B) * np.sqrt(ml / m) for B, ml in zip(views, draws)])
    inv, off = _gram_quantities(parent, S, n)
    dist = float(np.linalg.norm(v[S] - signs))
    offv = float(np.abs(v[Sc]).max(initial=0.0))
    return CertificateReport(
        inv_norm=inv,
        offsupp_max=off,
        v=v,
        dist_sign=dist,
        offsupp_v=offv,
        L=len(views),
        sizes=tuple(int(d) for d in draws),
        w_norms=norms,
        ratios=ratios,
        steps=steps,
        complex_extension=cplx,
    )


def _rowspace_residual(A, v):
    M = _as_dense(A)
    U, sv, Vh = np.linalg.svd(M, full_matrices=False)
    r = int((sv > sv.max(initial=0.0) * max(M.shape) * np.finfo(float).eps).sum())
    V = Vh[:r]
    return float(np.linalg.norm(v - V.conj().T @ (V @ v)))


def check_inexact_duality(A, S, x, v) -> CertificateReport:
    """Evaluate the four inexact-duality conditions for ``x`` supported on ``S``.

    Raises if ``v`` is not in the row space of ``A`` (residual above 1e-8).
    A rank-deficient ``A_S`` gives ``inv_norm = inf`` and a failing report.
    """
    S = np.asarray(S, dtype=int)
    x = np.asarray(x)
    v = np.asarray(v)
    n = x.size
    resid = _rowspace_residual(A, v)
    if resid > ROWSPACE_TOL * max(1.0, np.linalg.norm(v)):
        raise RecoveryError(f"v is not in the row space of A (residual {resid:.3g})")
    inv, off = _gram_quantities(A, S, n)
    Sc = np.setdiff1d(np.arange(n), S)
    dist = float(np.linalg.norm(v[S] - sign(x[S])))
    offv = float(np.abs(v[Sc]).max(initial=0.0))
    cplx = np.iscomplexobj(x) or np.iscomplexobj(v) or np.iscomplexobj(_as_dense(A))
    rep = CertificateReport(inv, off, v, dist, offv, complex_extension=bool(cplx))
    if not np.isfinite(inv):
        rep.reason = "A_S is rank deficient"
    elif not rep.passed:
        rep.reason = "failed: " + ",".join(k for k, ok in rep.conditions.items() if not ok)
    return rep
