"""Command-line front end.

Subcommands: estimate-psf, deblur, synth, eval, trace-plot. A JSON config
file supplies pipeline settings; individual flags override its keys. Exit
codes: 0 success, 2 bad input or config, 3 numerical failure (partial
artifacts are still written when they exist).
"""
import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from . import ar, cns, fixtures, pipeline, schemas
from .image import (Image, load_image, load_kernel, luminance, save_image,
                    save_kernel)

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NUMERICAL = 3

_CONFIG_FLAGS = [
    ("ar_p", int), ("ar_q", int), ("psf_l", int), ("psf_m", int),
    ("ar_reg", None), ("ar_reg_lambda", float),
    ("ipsf_q", int), ("ipsf_theta", float), ("ipsf_eps", float),
    ("ipsf_max_iters", int),
    ("schema", str), ("dt", float), ("lambda0", float),
    ("regularizer", str), ("tv_beta", float),
    ("schema_q", int), ("schema_theta", float), ("schema_eps", float),
    ("schema_max_iters", int), ("zero_guard", float),
    ("enforce_dt_bounds", None),
    ("denoise_stages", int), ("denoise_p", int), ("denoise_q", int),
    ("denoise_l", int), ("denoise_m", int),
    ("rgb_policy", str), ("no_blur_eig_ratio", float),
]


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except pipeline.ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (pipeline.PipelineStageError, schemas.SchemaDivergenceError,
            np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ardeblur",
        description="Blind image deblurring: stencil-based kernel "
                    "estimation, inverse-kernel search, iterative "
                    "refinement.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-psf",
                       help="estimate the blur kernel from one image")
    p.add_argument("image")
    p.add_argument("--out", default=None, help="kernel text output path")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_estimate_psf)

    p = sub.add_parser("deblur", help="run the full blind pipeline")
    p.add_argument("image")
    p.add_argument("--out", default=None, help="deblurred image path")
    p.add_argument("--out-dir", default=None,
                   help="artifact directory (kernels, traces, primary)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_deblur)

    p = sub.add_parser("synth", help="generate a synthetic blur fixture")
    p.add_argument("--texture", default="multiscale",
                   choices=("white", "smooth", "multiscale"))
    p.add_argument("--input", default=None,
                   help="use this image instead of a texture")
    p.add_argument("--size", type=int, default=512)
    p.add_argument("--texture-seed", type=int, default=11)
    p.add_argument("--psf-kind", default="gaussian",
                   choices=("gaussian", "motion_h", "motion_diag"))
    p.add_argument("--param", type=float, default=None,
                   help="sigma for gaussian, streak length for motion")
    p.add_argument("--angle", type=float, default=45.0)
    p.add_argument("--psf-l", type=int, default=7)
    p.add_argument("--psf-m", type=int, default=7)
    p.add_argument("--noise-kind", default="none",
                   choices=("none", "gaussian", "impulsive"))
    p.add_argument("--noise-level", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="score a result against a fixture")
    p.add_argument("--clean", required=True)
    p.add_argument("--blurred", required=True)
    p.add_argument("--result", required=True)
    p.add_argument("--true-psf", default=None)
    p.add_argument("--est-psf", default=None)
    p.add_argument("--out", default=None, help="report JSON path (default stdout)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("trace-plot",
                       help="convert a trace JSON to per-channel CSV")
    p.add_argument("trace")
    p.add_argument("--out-prefix", default=None,
                   help="default: trace path without extension")
    p.set_defaults(func=_cmd_trace_plot)
    return parser


def _add_config_flags(p):
    p.add_argument("--config", default=None, help="pipeline config JSON")
    for name, typ in _CONFIG_FLAGS:
        flag = "--" + name.replace("_", "-")
        if typ is None:
            grp = p.add_mutually_exclusive_group()
            grp.add_argument(flag, dest=name, action="store_true",
                             default=None)
            grp.add_argument("--no-" + name.replace("_", "-"), dest=name,
                             action="store_false", default=None)
        else:
            p.add_argument(flag, dest=name, type=typ, default=None)


def _config_from_args(args):
    merged = {}
    if args.config is not None:
        with open(args.config, "r", encoding="ascii") as f:
            base = pipeline.config_from_json(f.read())
        merged.update(dataclasses.asdict(base))
    for name, _typ in _CONFIG_FLAGS:
        v = getattr(args, name, None)
        if v is not None:
            merged[name] = v
    merged.pop("out_dir", None)
    return pipeline.PipelineConfig(**merged)


def _cmd_estimate_psf(args):
    cfg = _config_from_args(args)
    img = load_image(args.image)
    lum = luminance(img)
    patch = ar.select_patch(lum, cfg.ar_p, cfg.ar_q)
    model = ar.estimate_ar(patch, cfg.ar_p, cfg.ar_q,
                           reg=cfg.ar_reg_config())
    h, diag, no_blur = cns.estimate_psf(model, cfg.psf_l, cfg.psf_m,
                                        no_blur_eig_ratio=cfg.no_blur_eig_ratio)
    out = args.out or _sibling(args.image, "_psf.txt")
    save_kernel(h, out)
    info = {"psf_path": out, "no_blur_fallback": no_blur,
            "shape_report": cns.psf_shape_report(h)}
    if diag is not None:
        info["null_depth"] = diag.null_depth
        info["eigenvalues"] = [diag.eig_min, diag.eig_second, diag.eig_max]
    print(json.dumps(info, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_deblur(args):
    cfg = _config_from_args(args)
    img = load_image(args.image)
    out_img = args.out or _sibling(args.image, "_deblur.png")
    out_dir = args.out_dir or (os.path.dirname(out_img) or ".")
    os.makedirs(out_dir, exist_ok=True)
    result = pipeline.blind_deblur(img, cfg)
    save_kernel(result.psf, os.path.join(out_dir, "psf.txt"))
    save_kernel(result.ipsf, os.path.join(out_dir, "ipsf.txt"))
    save_image(result.primary, os.path.join(out_dir, "primary.png"))
    save_image(result.s_hat, out_img)
    tr = pipeline.trace_json_obj(cfg, result.traces)
    with open(os.path.join(out_dir, "trace.json"), "w", encoding="ascii") as f:
        json.dump(tr, f, indent=2, sort_keys=True)
        f.write("\n")
    for i, t in enumerate(result.traces):
        with open(os.path.join(out_dir, f"trace_ch{i}.csv"), "w",
                  encoding="ascii") as f:
            f.write(t.to_csv_text())
    summary = {"out": out_img, "out_dir": out_dir,
               "no_blur_fallback": result.no_blur,
               "ipsf_lambda": result.ipsf_report.lambda_used,
               "ipsf_fallback_ls": result.ipsf_report.fallback_ls,
               "stop_reasons": [t.stop_reason for t in result.traces]}
    if result.schema_error is not None:
        summary["schema_error"] = result.schema_error
        print(json.dumps(summary, indent=2, sort_keys=True))
        print(f"numerical failure: {result.schema_error}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_synth(args):
    if args.input is not None:
        clean = load_image(args.input)
    elif args.texture == "white":
        clean = Image.from_plane(fixtures.texture_white(args.size,
                                                        args.texture_seed))
    elif args.texture == "smooth":
        clean = Image.from_plane(fixtures.texture_smooth(args.size,
                                                         args.texture_seed))
    else:
        clean = Image.from_plane(fixtures.texture_multiscale(args.size,
                                                             args.texture_seed))
    noise = fixtures.NoiseSpec(kind=args.noise_kind, level=args.noise_level)
    fx = fixtures.make_fixture(clean, args.psf_kind,
                               (args.psf_l, args.psf_m), param=args.param,
                               angle_deg=args.angle, noise=noise,
                               seed=args.seed)
    prefix = args.out_prefix
    d = os.path.dirname(prefix)
    if d:
        os.makedirs(d, exist_ok=True)
    save_image(fx.clean, prefix + "_clean.png")
    save_image(fx.blurred, prefix + "_blurred.png")
    save_kernel(fx.true_psf, prefix + "_psf.txt")
    print(json.dumps({"clean": prefix + "_clean.png",
                      "blurred": prefix + "_blurred.png",
                      "psf": prefix + "_psf.txt",
                      "seed": args.seed}, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args):
    clean = load_image(args.clean)
    blurred = load_image(args.blurred)
    result = load_image(args.result)
    true_psf = load_kernel(args.true_psf) if args.true_psf else None
    est_psf = load_kernel(args.est_psf) if args.est_psf else None
    if true_psf is None:
        # kernel score needs the reference; keep PSNR-only scoring
        true_psf = np.zeros((1, 1))
        est_psf = None
    fx = fixtures.SyntheticFixture(clean=clean, true_psf=true_psf,
                                   blurred=blurred,
                                   noise=fixtures.NoiseSpec(), seed=0)
    report = pipeline.evaluate(fx, result, psf=est_psf)
    text = json.dumps(dataclasses.asdict(report), indent=2, sort_keys=True)
    if args.out:
        with open(args.out, "w", encoding="ascii") as f:
            f.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _cmd_trace_plot(args):
    with open(args.trace, "r", encoding="ascii") as f:
        obj = json.load(f)
    if not isinstance(obj, dict) or "channels" not in obj:
        raise ValueError("trace file lacks a channels list")
    prefix = args.out_prefix or os.path.splitext(args.trace)[0]
    cols = ("k", "residual_msq", "lambda_k", "theta_k", "dt_lower",
            "dt_upper_metric")
    paths = []
    for i, records in enumerate(obj["channels"]):
        lines = ["k,residual_msq,lambda,theta,dt_lower,dt_upper_metric"]
        for r in records:
            lines.append(",".join(_fmt(r.get(c)) for c in cols))
        path = f"{prefix}_ch{i}.csv"
        with open(path, "w", encoding="ascii") as f:
            f.write("\n".join(lines) + "\n")
        paths.append(path)
    print(json.dumps({"csv": paths}, indent=2, sort_keys=True))
    return EXIT_OK


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, int):
        return str(v)
    return f"{float(v):.17g}"


def _sibling(path, suffix):
    stem, _ext = os.path.splitext(path)
    return stem + suffix


if __name__ == "__main__":
    sys.exit(main())
