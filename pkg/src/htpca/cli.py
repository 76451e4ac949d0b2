"""Command-line entry point ``htpca``.

Exit status: 0 on success, 2 for configuration or input errors, 3 for
numerical failures.
"""

import argparse
import logging
from pathlib import Path
import sys
import time

import numpy as np

from . import io
from .errors import ConfigError, NumericalError
from .robust import MODES, location_vector, marginal_scale_rows
from .sampling import GaussianSpec, RngSeed, Subordinator, sample_superstatistical
from .shape import METHODS

EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _subordinator(args, prefix=""):
    model = getattr(args, prefix + "model")
    if model == "stable":
        return Subordinator.stable(args.alpha)
    if model == "student":
        if args.nu is None:
            raise ConfigError("--nu is required for the student model")
        return Subordinator.student(args.nu)
    return Subordinator.degenerate(1.0)


def _methods(text):
    out = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in out if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; choose from {METHODS}")
    return out


def _outdir(path):
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _log_resources(args, need):
    if not need:
        return None, None
    lut = io.read_lut(args.lut) if getattr(args, "lut", None) else None
    lm = io.read_log_moments(args.logmoments) if getattr(args, "logmoments", None) else None
    return lut, lm


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args):
    from .experiments import sweep_sigma

    if args.sigma:
        sigma = io.read_matrix(args.sigma)
    elif args.rho is not None:
        sigma = sweep_sigma(args.rho)
    else:
        sigma = np.eye(args.dim)
    x = sample_superstatistical(GaussianSpec(sigma), _subordinator(args), args.n, RngSeed(args.seed))
    io.write_matrix(args.out, x)


def cmd_estimate(args):
    x = io.read_matrix(args.input)
    if args.what:
        v = location_vector(x, args.mode) if args.what == "location" else marginal_scale_rows(x, args.mode)
        io.write_vector_csv(args.out, v)
        return
    from .shape import estimate_shape

    lut, lm = _log_resources(args, args.method == "m2")
    if args.method == "m2":
        if lm is None:
            raise ConfigError("method m2 needs --logmoments FILE (see the log-moments subcommand)")
        if lut is None:
            from .logcorr import build_log_lut
            lut = build_log_lut()
    est = estimate_shape(x, args.method, args.mode, lut=lut, log_moments=lm)
    io.write_matrix_csv(args.out, est.matrix)


def cmd_pca(args):
    from .pca import fit_pca

    t0 = time.perf_counter()
    x = io.read_matrix(args.input)
    lut, lm = _log_resources(args, args.method == "m2")
    if args.method == "m2" and lut is None:
        from .logcorr import build_log_lut
        lut = build_log_lut()
    model = fit_pca(x, args.method, args.m, args.mode, lut=lut, log_moments=lm)
    out = _outdir(args.out)
    io.write_pca_model(out, model)
    io.write_manifest(out, {"method": args.method, "m": args.m, "mode": args.mode, "input": args.input},
                      None, time.perf_counter() - t0)


def _experiment_config(args, kind):
    from .experiments import ExperimentConfig

    kw = dict(kind=kind, subordinator=_subordinator(args), n=args.n, n_runs=args.runs, methods=_methods(args.methods),
              mode=args.mode, seed=args.seed, out=args.out, threads=args.threads)
    if getattr(args, "rhos", None):
        kw["rhos"] = tuple(float(r) for r in args.rhos.split(","))
    if getattr(args, "sigma", None):
        kw["sigma"] = io.read_matrix(args.sigma)
    return ExperimentConfig(**kw)


def _aux_inputs(args, cfg):
    lut, lm = _log_resources(args, "m2" in cfg.methods)
    return dict(lut=lut, log_moments=lm)


def cmd_rho_sweep(args):
    from .experiments import SWEEP_HEADER, run_rho_sweep

    t0 = time.perf_counter()
    cfg = _experiment_config(args, "rho-sweep")
    res = run_rho_sweep(cfg, **_aux_inputs(args, cfg))
    out = _outdir(args.out)
    io.write_rows_csv(out / "sweep.csv", SWEEP_HEADER, res.table())
    io.write_manifest(out, cfg, cfg.seed, time.perf_counter() - t0)


def cmd_pc_recovery(args):
    from .experiments import PC_HEADER, PC_SUMMARY_HEADER, run_pc_recovery

    t0 = time.perf_counter()
    cfg = _experiment_config(args, "pc-recovery")
    res = run_pc_recovery(cfg, **_aux_inputs(args, cfg))
    out = _outdir(args.out)
    io.write_rows_csv(out / "pc_recovery.csv", PC_HEADER, res.table())
    io.write_rows_csv(out / "pc_summary.csv", PC_SUMMARY_HEADER, res.summary())
    io.write_manifest(out, cfg, cfg.seed, time.perf_counter() - t0)


def cmd_bias_rmse(args):
    from .experiments import BIAS_HEADER, run_bias_rmse

    t0 = time.perf_counter()
    cfg = _experiment_config(args, "bias-rmse")
    res = run_bias_rmse(cfg, **_aux_inputs(args, cfg))
    out = _outdir(args.out)
    io.write_rows_csv(out / "bias_rmse.csv", BIAS_HEADER, res.table())
    io.write_manifest(out, cfg, cfg.seed, time.perf_counter() - t0,
                      {"method": res.method, "scale_constant": repr(res.scale_constant)})


def _load_stack(args):
    from .denoise import ImageStack, synthetic_digit_stack

    if not args.input:
        return synthetic_digit_stack(seed=args.seed)
    if len(args.input) == 1 and not args.input[0].endswith(".pgm"):
        if not (args.height and args.width):
            raise ConfigError("a matrix image stack needs --height and --width")
        return ImageStack(io.read_matrix(args.input[0]), args.height, args.width)
    return ImageStack.from_images([io.read_pgm(p)[0] for p in args.input])


def cmd_denoise(args):
    from .denoise import DENOISE_HEADER, NOISE_PRESETS, run_denoise, write_stack_pgms

    t0 = time.perf_counter()
    stack = _load_stack(args)
    scale = args.noise_scale if args.noise_scale is not None else NOISE_PRESETS[args.preset]
    noise = _subordinator(args)
    if args.method == "empirical":
        raise ConfigError("choose a heavy-tailed method; the classical baseline is always run")
    rows, first = run_denoise(stack, noise, scale, args.runs, args.seed, args.method, args.k, args.mode,
                              args.threads)
    out = _outdir(args.out)
    io.write_rows_csv(out / "metrics.csv", DENOISE_HEADER, rows)
    io.write_rows_csv(out / "psnr_run0.csv", ("image",) + tuple(first),
                      [(i,) + tuple(float(r.psnr[i]) for r in first.values()) for i in range(stack.count)])
    some = next(iter(first.values()))
    write_stack_pgms(out / "images", some.clean, "clean")
    write_stack_pgms(out / "images", some.noisy, "noisy")
    for name, r in first.items():
        write_stack_pgms(out / "images", r.reconstructed, f"recon_{name}")
    cfg = {"noise": noise.describe(), "noise_scale": scale, "method": args.method, "k": args.k, "mode": args.mode,
           "runs": args.runs, "threads": args.threads, "input": args.input or "synthetic"}
    io.write_manifest(out, cfg, args.seed, time.perf_counter() - t0)


def cmd_build_lut(args):
    from .logcorr import build_log_lut

    io.write_lut(args.out, build_log_lut(args.step, args.order))


def cmd_log_moments(args):
    from .logcorr import subordinator_log_moments

    lm = subordinator_log_moments(_subordinator(args), args.n_mc, RngSeed(args.seed), analytic=not args.mc)
    io.write_log_moments(args.out, lm)


# ---------------------------------------------------------------------------
# parser


def _add_model(p):
    p.add_argument("--model", choices=("stable", "student", "gauss"), default="stable")
    p.add_argument("--alpha", type=float, default=1.0, help="stable index in (0, 2)")
    p.add_argument("--nu", type=float, help="Student degrees of freedom")


def _add_experiment(p, methods, n, runs, model_alpha=1.0):
    _add_model(p)
    p.set_defaults(alpha=model_alpha)
    p.add_argument("--methods", "--method", default=methods)
    p.add_argument("--n", type=int, default=n)
    p.add_argument("--runs", type=int, default=runs)
    p.add_argument("--mode", choices=MODES, default="ml")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--sigma", help="matrix file overriding the built-in sigma")
    p.add_argument("--lut")
    p.add_argument("--logmoments")
    p.add_argument("--out", required=True, help="output directory")


def build_parser():
    ap = argparse.ArgumentParser(prog="htpca", description="Heavy-tailed PCA toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample superstatistical data")
    _add_model(p)
    p.add_argument("--sigma", help="covariance matrix file")
    p.add_argument("--rho", type=float, help="use [[16, 8 rho], [8 rho, 4]]")
    p.add_argument("--dim", type=int, default=2, help="identity covariance dimension if no sigma is given")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output file (.bin for binary, otherwise CSV)")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", help="location/scale per row or a shape matrix")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--method", choices=METHODS)
    g.add_argument("--what", choices=("location", "scale"))
    p.add_argument("--mode", choices=MODES, default="ml")
    p.add_argument("--lut")
    p.add_argument("--logmoments")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("pca", help="fit a principal subspace")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True, help="output directory for the model bundle")
    p.add_argument("--method", choices=METHODS, default="m1c")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--mode", choices=MODES, default="ml")
    p.add_argument("--lut")
    p.add_argument("--logmoments")
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("rho-sweep", help="correlation-error sweep")
    _add_experiment(p, "m1c,tyler,empirical", 800, 200)
    p.add_argument("--rhos", help="comma-separated grid (default 0.1..0.9)")
    p.set_defaults(func=cmd_rho_sweep)

    p = sub.add_parser("pc-recovery", help="first principal direction recovery")
    _add_experiment(p, "m1c,empirical", 800, 100, model_alpha=0.7)
    p.set_defaults(func=cmd_pc_recovery)

    p = sub.add_parser("bias-rmse", help="entrywise bias and RMSE of the shape matrix")
    _add_experiment(p, "m1c", 1000, 400)
    p.set_defaults(func=cmd_bias_rmse)

    p = sub.add_parser("denoise", help="rank-k image denoising")
    _add_model(p)
    p.add_argument("--in", dest="input", nargs="*", help="PGM files, or one matrix file (images as rows)")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--preset", choices=("digits", "frames"), default="digits")
    p.add_argument("--noise-scale", type=float, help="noise covariance c * I; overrides --preset")
    p.add_argument("--method", choices=[m for m in METHODS if m != "m2"], default="m1c")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=MODES, default="ml")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("build-lut", help="tabulate the Gaussian log-correlation")
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--order", type=int, default=64)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_lut)

    p = sub.add_parser("log-moments", help="E[log A] and E[(log A)^2] of a subordinator")
    _add_model(p)
    p.add_argument("--n-mc", type=int, default=10**6)
    p.add_argument("--mc", action="store_true", help="Monte Carlo even where a closed form exists")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_log_moments)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"htpca: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"htpca: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"htpca: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
