"""Command-line front end for photon-limited deblurring experiments.

Subcommands: degrade (blur + peak-scaled Poisson counts), restore (run one
solver), eval (PSNR between two files), bench (Table-style CSV over images
and methods), check-theorem (convergence certificate).

Files hold intensities in [0, 1]; the photon peak rescales them on the way
in and out. Exit codes: 0 success, 1 usage error, 2 solver abort, 3 I/O
error.
"""

import argparse
import csv
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from .denoisers import (
    IdentityDenoiser,
    LinearSmoother,
    MedianFilter,
    ScaledContraction,
)
from .errors import BregpnpError, DomainError, SafeguardExhaustedError
from .fidelity import PoissonFidelity
from .geometry import burg_entropy, quadratic, shannon_entropy
from .images import (
    ConvolutionOperator,
    Image,
    Kernel,
    circular_convolve2d,
    load_image,
    make_kernel,
    psnr,
    save_image,
)
from .phantoms import get_phantom
from .solvers import RunReport, SolverConfig, default_x0, solve, theorem_gate

__all__ = ["degrade", "restore", "evaluate", "bench", "main"]

_BREGMAN_ALGOS = ("bpgm", "pnp-bpgm", "red-bsd")


class _IOFailure(Exception):
    """Internal marker so main() can map file problems to exit code 3."""


def degrade(clean: Image, kernel: Kernel, peak: float, seed) -> Image:
    """Blur a [0, 1] image, scale it to the photon peak, and draw counts."""
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    arr = clean.as_2d()
    if arr.min() < 0.0 or arr.max() > 1.0 + 1e-12:
        raise DomainError("clean image intensities must lie in [0, 1]")
    blurred = circular_convolve2d(arr * peak, kernel.taps)
    if blurred.min() < -1e-9:
        raise AssertionError("blur produced negative intensities")
    rng = np.random.default_rng(seed)
    counts = rng.poisson(np.maximum(blurred, 0.0)).astype(np.float64)
    return Image.from_2d(counts, nonneg=True)


def _reference_for(href: str, peak: float):
    box = (1e-4, max(float(peak), 1e-3))
    if href == "quadratic":
        return quadratic()
    if href == "burg":
        return burg_entropy(box)
    if href == "shannon":
        return shannon_entropy(box)
    raise ValueError(f"unknown reference function {href!r}")


def make_denoiser(spec: str):
    """Parse a denoiser spec: identity | smooth:A | contract:R | median:W."""
    spec = spec.strip()
    if spec == "identity":
        return IdentityDenoiser()
    if spec.startswith("smooth:"):
        return LinearSmoother(alpha=float(spec.split(":", 1)[1]))
    if spec.startswith("contract:"):
        return ScaledContraction(rho=float(spec.split(":", 1)[1]))
    if spec.startswith("median:"):
        return MedianFilter(window=int(spec.split(":", 1)[1]))
    raise ValueError(f"unrecognized denoiser spec {spec!r}")


def restore(y: Image, kernel: Kernel, peak: float, *, algo: str = "pnp-bpgm",
            href: str = None, denoiser: str = "smooth:0.5", gamma: float = 0.5,
            tau: float = 1e-3, iters: int = 100, tol: float = 1e-8,
            seed=0, safeguard: bool = True, ground_truth: Image = None):
    """Run one restoration on count measurements.

    Returns the restored image rescaled to [0, 1] (for file output) and the
    run report, whose ``final`` stays on the count scale.
    """
    if peak <= 0:
        raise ValueError(f"peak must be positive, got {peak}")
    if href is None:
        href = "burg" if algo in _BREGMAN_ALGOS else "quadratic"
    h = _reference_for(href, peak)
    op = ConvolutionOperator(kernel, y.shape)
    fid = PoissonFidelity(y.as_2d(), op)
    rng = np.random.default_rng(seed)
    clamp = fid.eps_pos if h.kind in ("burg", "shannon") else None
    x0 = default_x0(fid, peak, rng, clamp=clamp)
    gt = None if ground_truth is None else ground_truth.as_2d() * peak
    cfg = SolverConfig(
        algorithm=algo,
        fidelity=fid,
        x0=x0,
        h=h,
        denoiser=make_denoiser(denoiser),
        gamma=gamma,
        tau=tau,
        max_iters=iters,
        tol=tol,
        safeguard=safeguard,
        ground_truth=gt,
        peak=peak if gt is not None else None,
    )
    report = solve(cfg)
    restored = Image.from_2d(np.clip(report.final / peak, 0.0, 1.0), nonneg=True)
    return restored, report


def evaluate(gt: Image, test: Image, peak: float) -> float:
    """PSNR between two [0, 1] images on the [0, peak] experiment scale."""
    return psnr(gt.as_2d() * peak, test.as_2d() * peak, peak)


# ---------------------------------------------------------------------------
# Benchmark tables
# ---------------------------------------------------------------------------


def _load_input(spec: str) -> Image:
    if spec.startswith("phantom:"):
        parts = spec.split(":")
        size = int(parts[2]) if len(parts) > 2 else 64
        return get_phantom(parts[1], size)
    try:
        return load_image(spec)
    except (OSError, ValueError) as exc:
        raise _IOFailure(f"cannot load {spec!r}: {exc}") from exc


def _input_label(spec: str) -> str:
    if spec.startswith("phantom:"):
        parts = spec.split(":")
        return parts[1] if len(parts) < 3 else f"{parts[1]}{parts[2]}"
    return Path(spec).stem


def _safe_name(label: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", label)


def _fmt(value) -> str:
    if value is None:
        return "NA"
    return f"{value:.2f}"


def _mean(values) -> float:
    finite = [v for v in values if v is not None]
    return sum(finite) / len(finite) if finite else None


_METHOD_DEFAULTS = {
    "href": None,
    "denoiser": "smooth:0.5",
    "gamma": 0.5,
    "tau": 1e-3,
    "iters": 100,
    "tol": 1e-8,
}


def bench(spec: dict, csv_path=None, report_dir=None):
    """Run every (image, method) cell and tabulate PSNR in dB.

    Columns are the image label, one column per method with "Corrupted"
    always first, and a per-row Average; a closing "Average" row carries the
    per-method column means. Failed cells record NA without aborting the
    batch. Returns the table as a list of string rows (header included).
    """
    peak = float(spec.get("peak", 8.0))
    seed = int(spec.get("seed", 0))
    kernel = make_kernel(spec.get("kernel", "uniform9"))
    images = spec.get("images", [])
    if not images:
        raise ValueError("bench spec needs a nonempty 'images' list")
    methods = spec.get("methods", [])
    for m in methods:
        if "algo" not in m:
            raise ValueError(f"bench method entry missing 'algo': {m}")
    names = [m.get("name", m["algo"]) for m in methods]

    header = ["image", "Corrupted", *names, "Average"]
    table = [header]
    columns = [[] for _ in range(1 + len(methods))]
    reports = {}

    for i, image_spec in enumerate(images):
        label = _input_label(image_spec)
        clean = _load_input(image_spec)
        y = degrade(clean, kernel, peak, seed=[seed, i])
        gt_scaled = clean.as_2d() * peak
        cells = [psnr(gt_scaled, y.as_2d(), peak)]
        for j, method in enumerate(methods):
            opts = {**_METHOD_DEFAULTS, **{k: v for k, v in method.items()
                                           if k not in ("name", "algo")}}
            try:
                _, report = restore(
                    y, kernel, peak,
                    algo=method["algo"],
                    href=opts["href"],
                    denoiser=opts["denoiser"],
                    gamma=float(opts["gamma"]),
                    tau=float(opts["tau"]),
                    iters=int(opts["iters"]),
                    tol=float(opts["tol"]),
                    seed=[seed, i, 1 + j],
                    ground_truth=clean,
                )
            except (BregpnpError, ValueError):
                cells.append(None)
                continue
            cells.append(psnr(gt_scaled, report.final, peak))
            reports[f"{_safe_name(label)}__{_safe_name(names[j])}.json"] = report
        for col, value in zip(columns, cells):
            col.append(value)
        table.append([label, *map(_fmt, cells), _fmt(_mean(cells))])

    column_means = [_mean(col) for col in columns]
    table.append(
        ["Average", *map(_fmt, column_means), _fmt(_mean(column_means))]
    )

    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(table)
    if report_dir is not None:
        directory = Path(report_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for filename, report in sorted(reports.items()):
            (directory / filename).write_text(report.to_json(), encoding="utf-8")
    return table


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser):
    parser.add_argument("--spec", help="JSON file with defaults; flags override it")
    parser.add_argument("--kernel", help="uniform9 | gauss9=SIGMA | file:PATH")
    parser.add_argument("--peak", type=float, help="photon peak (Poisson scale)")
    parser.add_argument("--seed", type=int, help="random seed")


def _add_solver_flags(parser):
    parser.add_argument("--algo", choices=[
        "pgm", "bpgm", "pnp-pgm", "pnp-bpgm", "red-sd", "red-bsd"])
    parser.add_argument("--href", choices=["quadratic", "burg", "shannon"])
    parser.add_argument(
        "--denoiser", help="identity | smooth:ALPHA | contract:RHO | median:W")
    parser.add_argument("--gamma", type=float, help="step size")
    parser.add_argument("--tau", type=float, help="denoiser-residual weight")
    parser.add_argument("--iters", type=int, help="iteration budget")
    parser.add_argument("--tol", type=float, help="relative residual tolerance")


def _build_parser():
    parser = _Parser(prog="bregpnp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("degrade", parents=[], help="blur + Poisson-count corruption")
    p.add_argument("--input", required=True, help="clean image (file or phantom:NAME)")
    p.add_argument("--output", required=True, help="output image path (.pgm/.png)")
    _add_common(p)

    p = sub.add_parser("restore", help="run one restoration")
    p.add_argument("--input", required=True, help="measurement image")
    p.add_argument("--output", required=True, help="restored image path")
    p.add_argument("--report", help="write the run report JSON here")
    _add_common(p)
    _add_solver_flags(p)

    p = sub.add_parser("eval", help="PSNR between two [0, 1] images")
    p.add_argument("reference", help="ground-truth image")
    p.add_argument("test", help="image under test")
    p.add_argument("--peak", type=float, default=1.0)

    p = sub.add_parser("bench", help="PSNR table over images and methods")
    p.add_argument("--output", required=True, help="CSV output path")
    p.add_argument("--report", help="directory for per-cell report JSON files")
    _add_common(p)

    p = sub.add_parser("check-theorem", help="fixed-point convergence certificate")
    p.add_argument("--mu-h", type=float, required=True)
    p.add_argument("--l-h", type=float, required=True)
    p.add_argument("--mu-f", type=float, required=True)
    p.add_argument("--l-f", type=float, required=True)
    p.add_argument("--m", type=float, required=True,
                   help="denoiser Lipschitz constant")
    p.add_argument("--gamma", type=float, help="also test this step size")
    p.add_argument("--report", help="write the certificate JSON here")
    return parser


def _merge(args, keys_defaults: dict) -> dict:
    """Resolve options as: explicit flag > spec-file entry > built-in default."""
    from_file = {}
    if getattr(args, "spec", None):
        try:
            from_file = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except OSError as exc:
            raise _IOFailure(f"cannot read spec file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"bad JSON in spec file: {exc}") from exc
    merged = {}
    for key, default in keys_defaults.items():
        flag = getattr(args, key, None)
        merged[key] = flag if flag is not None else from_file.get(key, default)
    merged["_file"] = from_file
    return merged


def _save_output(image: Image, path: str, bits: int) -> None:
    try:
        save_image(image, path, bits=bits)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path!r}: {exc}") from exc


def _cmd_degrade(args) -> int:
    opts = _merge(args, {"kernel": "uniform9", "peak": 8.0, "seed": 0})
    clean = _load_input(args.input)
    y = degrade(clean, make_kernel(opts["kernel"]), float(opts["peak"]),
                int(opts["seed"]))
    scaled = Image.from_2d(np.clip(y.as_2d() / float(opts["peak"]), 0.0, 1.0))
    _save_output(scaled, args.output, bits=16)
    print(f"wrote {args.output} (counts rescaled by peak={opts['peak']})")
    return 0


def _cmd_restore(args) -> int:
    opts = _merge(args, {
        "kernel": "uniform9", "peak": 8.0, "seed": 0, "algo": "pnp-bpgm",
        "href": None, "denoiser": "smooth:0.5", "gamma": 0.5, "tau": 1e-3,
        "iters": 100, "tol": 1e-8,
    })
    peak = float(opts["peak"])
    measured = _load_input(args.input)
    y = Image.from_2d(measured.as_2d() * peak, nonneg=True)
    restored, report = restore(
        y, make_kernel(opts["kernel"]), peak,
        algo=opts["algo"], href=opts["href"], denoiser=opts["denoiser"],
        gamma=float(opts["gamma"]), tau=float(opts["tau"]),
        iters=int(opts["iters"]), tol=float(opts["tol"]),
        seed=int(opts["seed"]),
    )
    _save_output(restored, args.output, bits=16)
    if args.report:
        Path(args.report).write_text(report.to_json(), encoding="utf-8")
    last = report.residuals[-1] if report.iterations_used else math.nan
    print(
        f"{opts['algo']}: {report.iterations_used} iterations, "
        f"final residual {last:.3e}, backtracks {report.backtracks}"
    )
    return 0


def _cmd_eval(args) -> int:
    ref = _load_input(args.reference)
    test = _load_input(args.test)
    print(f"{evaluate(ref, test, args.peak):.2f}")
    return 0


def _cmd_bench(args) -> int:
    opts = _merge(args, {"kernel": None, "peak": None, "seed": None})
    spec = dict(opts["_file"])
    for key in ("kernel", "peak", "seed"):
        if opts[key] is not None:
            spec[key] = opts[key]
    if not spec.get("images"):
        raise ValueError("bench needs a spec file with an 'images' list")
    table = bench(spec, csv_path=args.output, report_dir=args.report)
    print(f"wrote {args.output} ({len(table) - 2} image rows)")
    return 0


def _cmd_check_theorem(args) -> int:
    cert = theorem_gate(args.mu_h, args.l_h, args.mu_f, args.l_f, args.m)
    lo, hi = cert.gamma_interval
    bound = "unbounded" if math.isinf(cert.m_bound) else f"{cert.m_bound:.6g}"
    print(f"m_bound: {bound}")
    print(f"gamma_interval: ({lo:.6g}, {hi:.6g})"
          + (" [empty]" if cert.interval_empty else ""))
    print(f"satisfied: {str(cert.satisfied).lower()}")
    if args.gamma is not None:
        inside = cert.satisfied and lo < args.gamma < hi
        print(f"gamma {args.gamma:.6g} admissible: {str(inside).lower()}")
    if args.report:
        Path(args.report).write_text(
            json.dumps(cert.to_dict(), indent=2), encoding="utf-8")
    return 0


_COMMANDS = {
    "degrade": _cmd_degrade,
    "restore": _cmd_restore,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
    "check-theorem": _cmd_check_theorem,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SafeguardExhaustedError as exc:
        print(f"solver abort: {exc}", file=sys.stderr)
        return 2
    except _IOFailure as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    except (BregpnpError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
