"""Command-line interface: volume generation, segmentation, evaluation.

Exit codes: 0 success, 1 usage error, 2 I/O or file-format error,
3 numerical failure (label collapse or singular covariance).
"""

from __future__ import annotations

import argparse
import sys
from contextlib import nullcontext

import numpy as np

from . import io
from .emission import SingularCovarianceError
from .gmm_fit import FitConfig
from .hmrf import EmConfig, LabelCollapseError, run_hmrf_em
from .icm import MapConfig
from .lattice import Lattice
from .synth import SynthSpec, generate

__all__ = ["cli_main", "main"]

TRACE_COMMENT = (
    "energies recorded after the MAP step of each iteration, "
    "under the models that step used (before they are refit)"
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on bad usage; we reserve 2 for I/O errors
    def error(self, message):
        raise UsageError(message)


def _thread_limit(n: int | None):
    if n is None:
        return nullcontext()
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return nullcontext()
    return threadpool_limits(limits=n)


def _add_segment_flags(sub, neighborhoods, default_nb):
    sub.add_argument("--in", dest="input", required=True, help="input file")
    sub.add_argument("--out", dest="output", required=True, help="output label file")
    sub.add_argument("--k", type=int, required=True, help="number of labels (>= 2)")
    sub.add_argument("--g", type=int, default=1, help="mixture components per label")
    sub.add_argument("--beta", type=float, default=0.5, help="pairwise penalty coefficient")
    sub.add_argument("--em-iters", type=int, default=10)
    sub.add_argument("--map-iters", type=int, default=10)
    sub.add_argument("--neighborhood", choices=neighborhoods, default=default_nb)
    sub.add_argument("--trace", default=None, help="write a per-iteration energy CSV here")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--threads", type=int, default=None, help="bound BLAS threads (best effort)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hmrfseg", description=__doc__)
    subs = parser.add_subparsers(dest="command")

    gen = subs.add_parser("gen-volume", help="write a synthetic noisy-sphere volume")
    gen.add_argument("--out", dest="output", required=True, help="output .raw path")
    gen.add_argument("--extent", type=int, default=50)
    gen.add_argument("--radius", type=float, default=20.0)
    gen.add_argument("--fg", type=float, default=100.0)
    gen.add_argument("--bg", type=float, default=0.0)
    gen.add_argument("--noise-high", type=float, default=120.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.set_defaults(func=_cmd_gen_volume)

    seg_img = subs.add_parser("segment-image", help="segment a PPM/PGM image")
    _add_segment_flags(seg_img, ("n4", "n8"), "n4")
    seg_img.add_argument("--blur-sigma", type=float, default=None, help="pre-blur the image")
    seg_img.set_defaults(func=_cmd_segment_image)

    seg_vol = subs.add_parser("segment-volume", help="segment a raw volume")
    _add_segment_flags(seg_vol, ("n6", "n26"), "n6")
    seg_vol.set_defaults(func=_cmd_segment_volume)

    ev = subs.add_parser("eval", help="Dice overlap between two label fields")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--label", type=int, default=1)
    ev.set_defaults(func=_cmd_eval)
    return parser


def _check_segment_args(args):
    if args.k < 2:
        raise UsageError(f"--k must be >= 2, got {args.k}")
    if args.g < 1:
        raise UsageError(f"--g must be >= 1, got {args.g}")
    if args.beta < 0:
        raise UsageError(f"--beta must be >= 0, got {args.beta}")
    if args.em_iters < 1 or args.map_iters < 1:
        raise UsageError("--em-iters and --map-iters must be >= 1")
    if getattr(args, "blur_sigma", None) is not None and not args.blur_sigma > 0:
        raise UsageError(f"--blur-sigma must be positive, got {args.blur_sigma}")


def _em_config(args) -> EmConfig:
    return EmConfig(
        n_labels=args.k,
        em_iters=args.em_iters,
        map_config=MapConfig(max_map_iters=args.map_iters, beta=args.beta),
        fit_config=FitConfig(g=args.g),
    )


def _cmd_gen_volume(args) -> int:
    if args.extent < 1:
        raise UsageError(f"--extent must be >= 1, got {args.extent}")
    spec = SynthSpec(
        extent=args.extent,
        radius=args.radius,
        fg_intensity=args.fg,
        bg_intensity=args.bg,
        noise_high=args.noise_high,
        seed=args.seed,
    )
    volume, truth = generate(spec)
    io.write_raw_volume(args.output, volume, element="float32")
    truth_path = args.output + ".truth"
    io.write_label_map(truth_path, truth, n_labels=2)
    print(f"wrote {args.output} ({args.extent}^3 float32) and {truth_path}")
    return 0


def _cmd_segment_image(args) -> int:
    _check_segment_args(args)
    image = io.load_image(args.input)
    if args.blur_sigma is not None:
        image = io.gaussian_blur(image, args.blur_sigma)
    lattice = Lattice(image.shape[:2], args.neighborhood)
    with _thread_limit(args.threads):
        result = run_hmrf_em(image, lattice, _em_config(args), seed=args.seed)
    io.write_ppm(args.output, io.render_label_map(result.labels, args.k))
    if args.trace:
        result.trace.to_csv(args.trace, comment=TRACE_COMMENT)
    print(f"wrote {args.output}")
    return 0


def _cmd_segment_volume(args) -> int:
    _check_segment_args(args)
    volume = io.read_raw_volume(args.input).astype(float)
    lattice = Lattice(volume.shape, args.neighborhood)
    with _thread_limit(args.threads):
        result = run_hmrf_em(volume, lattice, _em_config(args), seed=args.seed)
    io.write_label_map(args.output, result.labels.astype(np.uint8), n_labels=args.k)
    if args.trace:
        result.trace.to_csv(args.trace, comment=TRACE_COMMENT)
    print(f"wrote {args.output}")
    return 0


def _cmd_eval(args) -> int:
    pred, pred_k = io.read_label_field(args.pred)
    truth, truth_k = io.read_label_field(args.truth)
    score = io.dice(pred, truth, label=args.label)
    print(f"dice {score:.6f}")
    print("label pred_count truth_count")
    for l in range(max(pred_k, truth_k)):
        print(f"{l} {int(np.count_nonzero(pred == l))} {int(np.count_nonzero(truth == l))}")
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise UsageError("a subcommand is required (gen-volume, segment-image, segment-volume, eval)")
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except io.IoFormatError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except LabelCollapseError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except SingularCovarianceError as exc:
        print(f"numerical failure: singular covariance: {exc}", file=sys.stderr)
        return 3


def main():
    sys.exit(cli_main(sys.argv[1:]))
