"""``blockcs`` command line.

Every subcommand takes one JSON config; ``--seed``, ``--trials`` and
``--out`` override the corresponding fields. Exit status is 0 on success,
2 for configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .. import blocks, coherence, linops, recovery, sampling
from . import io, runners
from .config import ConfigError, ExperimentConfig

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

CONFIG_ERRORS = (ConfigError, blocks.DictionaryError, blocks.InfeasibleSupportError,
                 sampling.SamplingError, linops.DimensionError)
NUMERIC_ERRORS = (recovery.RecoveryError, coherence.CoherenceError, linops.CapExceededError,
                  np.linalg.LinAlgError, FloatingPointError)


def _out(cfg, name):
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _write_text(path, text):
    with open(path, "w", newline="") as fh:
        fh.write(text)


def cmd_coherence(cfg, args):
    d = cfg.build_dictionary()
    S = blocks.draw_support(cfg.support_model(), sampling.stream(cfg.seed, runners.KEY_SUPPORT))
    pi = cfg.build_pi(d, S)
    rep = coherence.gamma(d, S, pi, complex_bracket=args.complex_bracket)
    text = rep.to_record()
    if S.size:
        suff = coherence.sufficient_m(rep.gamma, S.size, d.n, args.eps)
        text += f"sufficient_m={suff.m}\n"
        if suff.reason:
            text += f"sufficient_m_note={suff.reason}\n"
        if S.size > 1:
            text += f"empirical_m={coherence.empirical_m(rep.gamma, S.size, d.n)}\n"
    _write_text(_out(cfg, "coherence.txt"), text)
    sys.stdout.write(text)


def cmd_phase(cfg, args):
    res = runners.run_phase_transition(cfg)
    io.write_csv(_out(cfg, "phase.csv"), res.rows)
    _write_text(_out(cfg, "phase_summary.json"), json.dumps(res.summary(), sort_keys=True) + "\n")
    sys.stdout.write(io.csv_text(res.rows))


def cmd_lines(cfg, args):
    cmp = runners.run_line_sampling_comparison(cfg)
    io.write_csv(_out(cfg, "lines_structured.csv"), cmp.structured.rows)
    io.write_csv(_out(cfg, "lines_arbitrary.csv"), cmp.arbitrary.rows)
    text = cmp.to_record()
    _write_text(_out(cfg, "lines_report.txt"), text)
    sys.stdout.write(text)


def _load_image(cfg):
    desc = cfg.image or {"kind": "stripes", "orientation": "low"}
    if "path" in desc:
        return io.read_pgm(desc["path"]).astype(float) / 255.0
    if desc.get("kind") != "stripes":
        raise ConfigError(f"unknown image desc {desc}")
    side = cfg.transform.get("side")
    if side is None:
        raise ConfigError("stripe images need transform.side")
    low, high = runners.stripe_pair(side, cfg.seed, tuple(desc.get("jumps", (2, 8))))
    orient = desc.get("orientation", "low")
    if orient not in ("low", "high"):
        raise ConfigError("orientation is 'low' or 'high'")
    return low if orient == "low" else high


def cmd_reconstruct(cfg, args):
    img = _load_image(cfg)
    rec = runners.reconstruct_image(cfg, img)
    io.write_pgm(_out(cfg, "reference.pgm"), img / max(img.max(), 1e-300))
    io.write_pgm(_out(cfg, "reconstruction.pgm"), rec.image / max(img.max(), 1e-300))
    io.write_raw(_out(cfg, "reconstruction.f32"), rec.image)
    if rec.record is not None:
        d = runners._with_side(cfg, img.shape[0]).build_dictionary()
        runners.emit_mask(d, rec.record, _out(cfg, "mask.pgm"))
    meta = dict(rec.metadata, snr_db=rec.snr, status=rec.status, s=rec.s, s_col=rec.s_col.tolist())
    _write_text(_out(cfg, "reconstruction.json"), json.dumps(meta, sort_keys=True) + "\n")
    sys.stdout.write(f"snr_db={rec.snr!r}\nstatus={rec.status}\ns={rec.s}\n")


def cmd_certify(cfg, args):
    d = cfg.build_dictionary()
    chunks, passes = [], 0
    seeds = cfg.trial_seeds()
    for seed in seeds:
        rng = sampling.stream(seed, runners.KEY_SUPPORT)
        S = blocks.draw_support(cfg.support_model(), rng)
        x = runners.signal(cfg, S, rng)
        pi = cfg.build_pi(d, S)
        m = cfg.m_grid[0] if cfg.m_grid else coherence.empirical_m(S.size, S.size, d.n)
        A = sampling.assemble(d, sampling.draw_iid(d, pi, m, seed, (runners.KEY_DRAW, m)))
        L = recovery.golfing_levels(S.size)
        rep = recovery.golfing_certificate(sampling.partition_for_golfing(A, L), S, recovery.sign(x[S]))
        passes += rep.passed
        chunks.append(f"seed={seed}\nm={m}\n" + rep.to_record())
    text = "".join(chunks) + f"passes={passes}\ntrials={len(seeds)}\n"
    _write_text(_out(cfg, "certify.txt"), text)
    sys.stdout.write(f"passes={passes}\ntrials={len(seeds)}\n")


def cmd_mask(cfg, args):
    d = cfg.build_dictionary()
    if cfg.support:
        S = blocks.draw_support(cfg.support_model(), sampling.stream(cfg.seed, runners.KEY_SUPPORT))
    else:
        S = np.array([], dtype=int)
    if not S.size and cfg.pi not in ("uniform", "level_flat") and isinstance(cfg.pi, str):
        raise ConfigError(f"pi strategy {cfg.pi!r} needs a support model")
    pi = cfg.build_pi(d, S)
    m = cfg.m_grid[0] if cfg.m_grid else d.M // 2
    rec = runners.draw(cfg, d, pi, m, cfg.seed, (runners.KEY_DRAW, m))
    mask = runners.emit_mask(d, rec, _out(cfg, "mask.pgm"))
    _write_text(_out(cfg, "mask_draw.json"), rec.to_json() + "\n")
    sys.stdout.write(f"sampled_fraction={float(mask.mean())!r}\n")


COMMANDS = {
    "coherence": cmd_coherence,
    "phase": cmd_phase,
    "lines": cmd_lines,
    "reconstruct": cmd_reconstruct,
    "certify": cmd_certify,
    "mask": cmd_mask,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="blockcs", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out")
        if name == "coherence":
            p.add_argument("--eps", type=float, default=0.1)
            p.add_argument("--complex-bracket", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = ExperimentConfig.load(args.config).override(seed=args.seed, trials=args.trials, out=args.out)
        COMMANDS[args.command](cfg, args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
