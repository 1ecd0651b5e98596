"""Monte-Carlo sweeps, line-sampling comparisons and image reconstructions."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import blocks, coherence, linops, recovery, sampling
from ..blocks import InfeasibleSupportError
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

# stream keys, so that supports, amplitudes and draws never share randomness
KEY_SUPPORT = 1
KEY_DRAW = 2
KEY_IMAGE = 3

GAMMA_DENSE_LIMIT = 1024


def amplitudes(rng, k, law):
    if law == "gaussian":
        return rng.standard_normal(k)
    if law == "complex_gaussian":
        return (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2)
    if law == "sign":
        return rng.choice([-1.0, 1.0], size=k)
    if law == "phase":
        return np.exp(2j * np.pi * rng.random(k))
    raise ConfigError(f"unknown amplitude law {law!r}")


def signal(cfg: ExperimentConfig, S, rng):
    law = cfg.amplitudes
    x = np.zeros(cfg.n, dtype=complex if law in ("complex_gaussian", "phase") else float)
    x[S] = amplitudes(rng, len(S), law)
    return x


def draw(cfg: ExperimentConfig, d, pi, m, seed, keys=()):
    if cfg.draw == "full":
        return sampling.DrawRecord("bernoulli", seed, np.arange(d.M), np.ones(d.M), d.M, tuple(keys))
    if cfg.draw == "bernoulli":
        # turn the probability vector into inclusion weights summing to m
        w = np.minimum(pi * m, 1.0)
        return sampling.draw_bernoulli(d, w, seed, keys)
    return sampling.draw_iid(d, pi, m, seed, keys)


def trial_gamma(cfg, d, S, pi) -> float:
    mode = cfg.gamma
    if mode == "none" or (mode == "auto" and d.n > GAMMA_DENSE_LIMIT):
        return math.nan
    if mode == "upper":
        th = coherence.theta(d, S, pi).value
        return max(th, coherence.upsilon_upper(d, S, pi))
    return coherence.gamma(d, S, pi).gamma


@dataclass
class Trial:
    seed: int
    m: int
    success: bool | None
    gamma: float
    status: str = ""
    error: str = ""


def run_trial(cfg: ExperimentConfig, d, m: int, seed: int, support=None) -> Trial:
    """One draw / solve / compare cycle. Infeasible supports come back as skipped."""
    rng = sampling.stream(seed, KEY_SUPPORT)
    try:
        model = support if support is not None else cfg.support_model()
        S = blocks.draw_support(model, rng)
    except InfeasibleSupportError as exc:
        return Trial(seed, m, None, math.nan, "skipped", str(exc))
    x = signal(cfg, S, rng)
    pi = cfg.build_pi(d, S)
    g = trial_gamma(cfg, d, S, pi)
    rec = draw(cfg, d, pi, m, seed, (KEY_DRAW, m))
    if rec.drawn.size == 0:
        xhat = np.zeros_like(x)
        status = "empty"
    else:
        A = sampling.assemble(d, rec)
        p = recovery.RecoveryProblem.synthetic(A, x, field=cfg.signal_field)
        res = recovery.basis_pursuit(p, **cfg.solver)
        xhat, status = res.x, res.status
    ok = recovery.exact_recovery(x, xhat, cfg.recovery_tol)
    return Trial(seed, m, ok, g, status)


@dataclass
class SweepResult:
    rows: list
    skipped: dict = field(default_factory=dict)
    unconverged: dict = field(default_factory=dict)
    trials: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "skipped": {str(k): v for k, v in self.skipped.items()},
            "unconverged": {str(k): v for k, v in self.unconverged.items()},
        }


def _aggregate(cfg, m, trials):
    done = [t for t in trials if t.success is not None]
    succ = sum(bool(t.success) for t in done)
    gam = [t.gamma for t in done if not math.isnan(t.gamma)]
    seeds = cfg.trial_seeds()
    return {
        "m": m,
        "trials": len(done),
        "successes": succ,
        "rate": succ / len(done) if done else math.nan,
        "gamma_mean": float(np.mean(gam)) if gam else math.nan,
        "seed0": seeds[0],
        "config_hash": cfg.hash(),
    }


def run_phase_transition(cfg: ExperimentConfig, support=None) -> SweepResult:
    """Empirical recovery rate at every m of the grid.

    Trials at different m reuse the same supports and amplitudes (the
    support stream depends only on the trial seed), which keeps the curve
    free of support-to-support noise.
    """
    if not cfg.m_grid:
        raise ConfigError("phase transition needs a nonempty m grid")
    d = cfg.build_dictionary()
    out = SweepResult([])
    for m in cfg.m_grid:
        trials = [run_trial(cfg, d, m, seed, support) for seed in cfg.trial_seeds()]
        out.trials.extend(trials)
        out.skipped[m] = sum(t.success is None for t in trials)
        out.unconverged[m] = sum(t.status == "unconverged" for t in trials)
        out.rows.append(_aggregate(cfg, m, trials))
        log.info("m=%d rate=%s", m, out.rows[-1]["rate"])
    return out


@dataclass
class LineComparison:
    structured: SweepResult
    arbitrary: SweepResult
    s: int

    def rates(self):
        return (
            [r["rate"] for r in self.structured.rows],
            [r["rate"] for r in self.arbitrary.rows],
        )

    def to_record(self) -> str:
        lines = [f"s={self.s}"]
        for a, b in zip(self.structured.rows, self.arbitrary.rows):
            lines.append(
                f"m={a['m']} structured_rate={a['rate']!r} arbitrary_rate={b['rate']!r} "
                f"structured_gamma={a['gamma_mean']!r} arbitrary_gamma={b['gamma_mean']!r}"
            )
        return "\n".join(lines) + "\n"


def run_line_sampling_comparison(cfg: ExperimentConfig) -> LineComparison:
    """Row-concentrated support against a uniform support of the same size, paired seeds."""
    if not cfg.is_2d:
        raise ConfigError("line comparison needs a 2D transform")
    desc = dict(cfg.support or {"kind": "row_concentrated", "q": 2})
    if desc.get("kind") != "row_concentrated":
        raise ConfigError("line comparison expects a row_concentrated support")
    side = cfg.transform["side"]
    structured = cfg.support_model()
    s = desc.get("s") or desc["q"] * side
    arbitrary = blocks.SupportModel.uniform_random(cfg.n, s)
    return LineComparison(
        run_phase_transition(cfg, structured),
        run_phase_transition(cfg, arbitrary),
        int(s),
    )


# images ----------------------------------------------------------------

def snr_db(ref, rec) -> float:
    ref = np.asarray(ref)
    err = np.linalg.norm(ref - rec)
    if err == 0:
        return math.inf
    return float(20 * np.log10(np.linalg.norm(ref) / err))


def piecewise_profile(side, rng, jumps, low=0.2, high=1.0):
    """Piecewise-constant 1D profile with ``jumps`` breakpoints at random positions."""
    pos = np.sort(rng.choice(np.arange(1, side), size=jumps, replace=False))
    edges = np.r_[0, pos, side]
    vals = rng.uniform(low, high, size=jumps + 1)
    return np.repeat(vals, np.diff(edges))


def stripe_pair(side: int, seed: int, jumps=(2, 8)):
    """A separable stripe image and its transpose.

    The image is ``h(r) f(c)``: ``f`` carries most of the edges, so the
    stripes run vertically and the Haar support is spread along few rows and
    many columns. Both images have the same number of Haar coefficients but
    the column sparsities ``s^c`` of the first are much lower.
    """
    rng = sampling.stream(seed, KEY_IMAGE)
    h = piecewise_profile(side, rng, jumps[0])
    f = piecewise_profile(side, rng, jumps[1])
    img = np.outer(h, f)
    return img, img.T.copy()


@dataclass
class Reconstruction:
    image: np.ndarray
    coefficients: np.ndarray
    snr: float
    record: sampling.DrawRecord | None
    status: str
    s: int
    s_col: np.ndarray
    metadata: dict = field(default_factory=dict)


def _check_image(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ConfigError(f"need a square image, got shape {img.shape}")
    side = img.shape[0]
    if not linops.is_power_of_two(side) or side > 128:
        raise ConfigError(f"image side must be a power of two <= 128, got {side}")
    return img, side


def reconstruct_image(cfg: ExperimentConfig, image, seed: int | None = None, m: int | None = None,
                      record: sampling.DrawRecord | None = None) -> Reconstruction:
    """Sense the Haar coefficients of ``image`` along Fourier lines and solve basis pursuit.

    The sensing base is ``F2D Phi^*`` with ``Phi`` the 2D Haar transform; the
    reconstruction is ``Phi^* x_hat``. ``m = 0`` means no measurement and
    returns a zero image. ``record`` replays an existing mask.
    """
    img, side = _check_image(image)
    if cfg.transform.get("side", side) != side:
        raise ConfigError("image side does not match the configured transform")
    c2 = _with_side(cfg, side)
    d = c2.build_dictionary()
    phi = linops.haar2d(side)
    x = phi.apply(img.ravel())
    support = np.flatnonzero(np.abs(x) > 1e-12 * np.abs(x).max(initial=1.0))
    s_col = coherence.column_sparsities(support, side * side)
    seed = c2.seed if seed is None else seed
    m = (c2.m_grid[0] if c2.m_grid else 0) if m is None else m
    meta = {"wavelet": "haar", "transform": "fourier_haar2d", "side": side, "seed": seed, "m": m,
            "blocks": c2.blocks}
    if record is None and (m == 0 and c2.draw != "full"):
        rec_img = np.zeros_like(img)
        return Reconstruction(rec_img, np.zeros_like(x), snr_db(img, rec_img), None, "empty",
                              support.size, s_col, meta)
    if record is None:
        pi = c2.build_pi(d, support)
        record = draw(c2, d, pi, m, seed, (KEY_DRAW, m))
    if record.drawn.size == 0:
        rec_img = np.zeros_like(img)
        return Reconstruction(rec_img, np.zeros_like(x), snr_db(img, rec_img), record, "empty",
                              support.size, s_col, meta)
    A = sampling.assemble(d, record)
    p = recovery.RecoveryProblem.synthetic(A, x.astype(complex), field=cfg.signal_field or "complex")
    res = recovery.basis_pursuit(p, **c2.solver)
    xr = res.x.real
    rec_img = phi.adjoint_apply(xr).reshape(side, side)
    return Reconstruction(rec_img, xr, snr_db(img, rec_img), record, res.status, support.size, s_col, meta)


def _with_side(cfg, side):
    t = dict(cfg.transform)
    if t.get("name") != "fourier_haar2d":
        t = {"name": "fourier_haar2d", "side": side}
    t["side"] = side
    return cfg.override(transform=t)


def mask_image(d: blocks.BlockDictionary, record: sampling.DrawRecord) -> np.ndarray:
    """Boolean acquisition-plane mask of the drawn blocks."""
    base = d.base
    if not isinstance(base, linops.Kron) or not base.is_square_kron:
        raise ConfigError("masks need a 2D scheme")
    side = base.left.dim
    mask = np.zeros(d.n, dtype=bool)
    for k in np.unique(record.drawn):
        mask[d.groups[k]] = True
    return mask.reshape(side, side)


def emit_mask(d: blocks.BlockDictionary, record: sampling.DrawRecord, path) -> np.ndarray:
    from .io import write_pgm

    mask = mask_image(d, record)
    write_pgm(path, mask)
    return mask
