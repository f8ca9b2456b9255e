"""Command line entry point: ``steinblock <command> ...``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import denoise as dn
from . import io
from . import sequence_lab as sl
from . import transforms as tr
from .core_model import BLOCK_ENERGY, curvelet_2d, wavelet_1d, wavelet_2d
from .errors import InvalidParameterError, SteinBlockError


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _common(p, transforms=("dwt2", "udwt2", "external")):
    p.add_argument("--transform", choices=transforms, default="dwt2")
    p.add_argument("--levels", type=_positive_int, help="decomposition depth (default log2(min side) - 4)")
    p.add_argument("--delta", type=float, default=0.0, help="noise growth exponent per scale")
    p.add_argument("--block-energy", choices=BLOCK_ENERGY, default=dn.IMAGE_BLOCK_ENERGY,
                   help="block energy normalisation (default %(default)s)")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="steinblock", description="Stein block thresholding denoiser.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="denoise one image (or an SBC1 coefficient file)")
    p.add_argument("input", help="PGM/PNG image, or SBC1 file with --transform external")
    p.add_argument("--out", required=True)
    _common(p)
    p.add_argument("--sigma", type=_positive_float, help="noise std (omit to estimate by MAD)")
    p.add_argument("--block-size", type=_positive_int, help="block side L (omit for theoretical)")
    p.add_argument("--lambda", dest="lam", type=_positive_float, help="threshold (omit for 4.50524)")
    p.add_argument("--noise", choices=("exact", "monte-carlo"), default="exact",
                   help="per-subband noise scales")
    p.add_argument("--add-noise", type=_positive_float, metavar="SIGMA",
                   help="contaminate the input with N(0, SIGMA^2) first (uses --seed)")
    p.add_argument("--reference", help="clean image for reporting PSNR")
    p.add_argument("--n", type=_positive_int, help="sample size for external coefficients")

    p = sub.add_parser("sweep", help="PSNR over block sizes, thresholds, noise levels and seeds")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _common(p, ("dwt2", "udwt2"))
    p.add_argument("--transforms", nargs="+", choices=tr.KINDS, help="several transforms at once")
    p.add_argument("--sigma", type=_positive_float, nargs="+", default=list(dn.DEFAULT_SIGMAS))
    p.add_argument("--block-size", type=_positive_int, nargs="+", default=list(dn.DEFAULT_BLOCK_SIZES))
    p.add_argument("--lambda", dest="lam", type=_positive_float, nargs="+",
                   default=list(dn.DEFAULT_LAMBDAS))
    p.add_argument("--reps", type=_positive_int, default=10, help="seeds seed..seed+reps-1")
    p.add_argument("--timing", action="store_true", help="add a wall_time column")

    p = sub.add_parser("compare", help="block vs term-by-term thresholding for dwt2 and udwt2")
    p.add_argument("input")
    p.add_argument("--out", required=True)
    _common(p, ("dwt2", "udwt2"))
    p.add_argument("--sigma", type=_positive_float, nargs="+", default=list(dn.DEFAULT_SIGMAS))
    p.add_argument("--reps", type=_positive_int, default=10)

    p = sub.add_parser("seqlab", help="Monte Carlo MISE rate on a smoothness ball (1D sequence model)")
    p.add_argument("--out", required=True)
    p.add_argument("--s", type=_positive_float, default=1.0)
    p.add_argument("--p", type=_positive_float, default=2.0)
    p.add_argument("--q", type=_positive_float, default=2.0)
    p.add_argument("--radius", type=float, default=100.0)
    p.add_argument("--log2n", type=int, nargs=2, default=(10, 16), metavar=("MIN", "MAX"))
    p.add_argument("--reps", type=_positive_int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--block-size", type=_positive_int)
    p.add_argument("--lambda", dest="lam", type=_positive_float)

    p = sub.add_parser("check-lemmas", help="fuzz the deterministic oracle inequality and the risk bound")
    p.add_argument("--out", help="CSV of the risk-bound grid")
    p.add_argument("--instances", type=_positive_int, default=100_000)
    p.add_argument("--trials", type=_positive_int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _image_spec(args):
    return wavelet_2d(args.delta)


def cmd_denoise(args) -> int:
    if args.transform == "external":
        if args.sigma is None or args.n is None:
            raise InvalidParameterError("--transform external needs --sigma and --n")
        spec = curvelet_2d(args.delta)
        c = io.load_external_coefficients(args.input, spec)
        unit = {key: 1.0 for key in c}
        (est, report), config = dn.denoise_coefficients(c, spec, args.n, args.sigma, unit,
                                                        args.block_size, args.lam, args.block_energy)
        io.save_coefficients(args.out, est)
        print(f"L={config.L} lambda={config.lam:.6g} j0={config.j0} J*={config.J_star} "
              f"blocks={report.blocks_total} killed={report.blocks_killed}")
        return 0
    img = io.read_image(args.input)
    clean = io.read_image(args.reference) if args.reference else None
    if args.add_noise:
        clean = img if clean is None else clean
        img = dn.add_noise(img, args.add_noise, args.seed)
    t = tr.TransformHandle(args.transform, args.levels or tr.default_levels(img.shape))
    out, rec = dn.denoise_image(img, t, _image_spec(args), args.block_size, args.lam, args.sigma,
                                reference=clean, image_id=Path(args.input).stem, seed=args.seed,
                                noise=args.noise, block_energy=args.block_energy)
    io.write_image(args.out, out)
    line = f"L={rec.L} lambda={rec.lam:.6g} sigma={rec.sigma:.6g}"
    if clean is not None:
        line += f" psnr_in={dn.psnr(clean, img):.4f} psnr_out={rec.psnr_out:.4f}"
    print(line)
    return 0


def cmd_sweep(args) -> int:
    img = io.read_image(args.input)
    grid = dn.SweepGrid(sigmas=tuple(args.sigma), block_sizes=tuple(args.block_size),
                        lambdas=tuple(args.lam), seeds=tuple(range(args.seed, args.seed + args.reps)),
                        transforms=tuple(args.transforms or (args.transform,)), levels=args.levels,
                        block_energy=args.block_energy)
    records, out, mean = dn.run_sweep(img, grid, args.out, _image_spec(args), Path(args.input).stem,
                                      timing=args.timing)
    print(f"{len(records)} rows -> {out}; means -> {mean}")
    return 0


def cmd_compare(args) -> int:
    img = io.read_image(args.input)
    rows, out = dn.run_block_vs_term(img, args.sigma, range(args.seed, args.seed + args.reps),
                                     args.out, args.levels, Path(args.input).stem,
                                     block_energy=args.block_energy)
    for row in rows:
        print(",".join(dn.fmt(v) for v in row))
    print(f"-> {out}")
    return 0


def cmd_seqlab(args) -> int:
    lo, hi = args.log2n
    if hi - lo < 2:
        raise InvalidParameterError("need at least three sample sizes")
    ball = sl.SmoothnessBall(args.s, args.p, args.q, args.radius, wavelet_1d())
    fit = sl.simulate_mise(ball, [2 ** k for k in range(lo, hi + 1)], args.reps, args.seed,
                           L=args.block_size, lam=args.lam)
    out, summary = sl.write_rate_csv(fit, args.out)
    target = -2 * args.s / (2 * args.s + 1)
    print(f"slope={fit.slope:.4f} (minimax {target:.4f}) r2={fit.r2:.4f} -> {out}, {summary}")
    return 0


def cmd_check_lemmas(args) -> int:
    fuzz = sl.fuzz_lemma_mal(args.instances, args.seed)
    print(f"deterministic inequality: {fuzz.count} instances, {fuzz.violations} violations, "
          f"max lhs/rhs {fuzz.worst_ratio:.4f}")
    grid = sl.bp_grid(args.trials, args.seed)
    failed = 0
    rows = []
    for (m, gamma, ratio), res in grid:
        failed += not res.holds
        rows.append((m, gamma, ratio, res.estimate, res.ci_halfwidth, res.bound, int(res.holds)))
        print(f"m={m:<3d} gamma={gamma:<8.5g} |v|/(sigma sqrt m)={ratio:<4g} "
              f"risk={res.estimate:.5g}+-{res.ci_halfwidth:.2g} bound={res.bound:.5g} "
              f"{'ok' if res.holds else 'VIOLATED'}")
    if args.out:
        dn.write_csv(args.out, ("m", "gamma", "signal_ratio", "risk", "ci_halfwidth", "bound", "holds"),
                     rows)
    return 1 if (fuzz.violations or failed) else 0


COMMANDS = {"denoise": cmd_denoise, "sweep": cmd_sweep, "compare": cmd_compare,
            "seqlab": cmd_seqlab, "check-lemmas": cmd_check_lemmas}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (SteinBlockError, OSError) as exc:
        print(f"steinblock: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
