"""Command-line interface: ``mixent {fit,entropy,mi,tree,simulate,image}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
Every JSON output carries ``tool_version``, ``seed`` and ``config`` and is
written with sorted keys, so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .benchmarks import (
    ENTROPY_METHODS,
    MI_METHODS,
    Gaussian,
    IndepChiSquared,
    LogNormal,
    MixedGaussian,
    run_simulation,
)
from .entropy import BoundedTransform, BoundViolation, DensityUnderflow, EntropyMethod, estimate_entropy
from .gaussian import DimensionError, NotPositiveDefinite
from .image import PGMError, TooFewLevels, entropy_curve, quantize, read_pgm, write_pgm
from .info import MissingCellError, max_spanning_tree, mi_matrix, mutual_information, tree_to_dict, tree_to_dot
from .mixture import (
    DEFAULT_SEED,
    AllInitsFailed,
    CovarianceFamily,
    DegenerateComponent,
    EmptyComponent,
    FitConfig,
    NonFiniteDataError,
    select_model,
)

log = logging.getLogger("mixent")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class DataError(ValueError):
    """Bad input file contents (reported with exit code 3)."""


class UsageError(ValueError):
    """Semantically invalid arguments (reported with exit code 2)."""


# ---------------------------------------------------------------- CSV


def _is_number(cell: str) -> bool:
    try:
        float(cell)
    except ValueError:
        return False
    return True


def parse_csv(text: str) -> tuple[list[str] | None, np.ndarray]:
    """Numeric CSV with an optional header (detected when any first-row cell is non-numeric)."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    header = None
    if rows and not all(_is_number(c.strip()) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError("no data rows")
    width = len(header) if header else len(rows[0])
    offset = 2 if header else 1
    values = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"row {i + offset}: expected {width} columns, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                values[i, j] = float(cell.strip())
            except ValueError:
                raise DataError(f"non-numeric cell at row {i + offset}, column {j + 1}: {cell!r}") from None
    return header, values


def format_csv(values, header: list[str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(header)
    for row in np.atleast_2d(values):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def read_csv(path: str) -> tuple[list[str] | None, np.ndarray]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return parse_csv(text)


# ---------------------------------------------------------------- helpers


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def dumps(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_json_default) + "\n"


def with_provenance(payload: dict, seed: int, config: dict) -> dict:
    return {"tool_version": __version__, "seed": seed, "config": config, **payload}


def _write(path: Path, text: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(text, bytes):
        path.write_bytes(text)
    else:
        path.write_text(text, encoding="utf-8")


def _k_range(s: str) -> tuple[int, int]:
    try:
        if ":" in s:
            lo, hi = s.split(":")
            return int(lo), int(hi)
        return int(s), int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid k range {s!r}; use LO:HI") from None


def _families(s: str) -> tuple[CovarianceFamily, ...]:
    try:
        return tuple(CovarianceFamily.parse(f) for f in s.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _positive_int(s: str) -> int:
    try:
        v = int(s)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {s!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def _int_list(s: str) -> list[int]:
    try:
        return [int(v) for v in s.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def _config(args) -> FitConfig:
    try:
        return FitConfig(
            k_range=args.k_range,
            families=args.families,
            tol=args.tol,
            max_iter=args.max_iter,
            n_init=args.n_init,
            seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _transform(arg: str | None, p: int, lower: float) -> BoundedTransform | None:
    if arg is None:
        return None
    if arg == "all":
        return BoundedTransform.all_bounded(p, lower)
    try:
        cols = [int(c) for c in arg.split(",")]
    except ValueError:
        raise UsageError(f"--bounded takes 'all' or comma-separated column indices, got {arg!r}") from None
    if any(c < 0 or c >= p for c in cols):
        raise UsageError(f"--bounded column out of range for {p} columns: {arg}")
    return BoundedTransform.columns(p, cols, lower)


# ---------------------------------------------------------------- subcommands


def cmd_fit(args) -> int:
    _, x = read_csv(args.data)
    config = _config(args)
    model = select_model(x, config)
    payload = model.to_dict()
    payload["bic_table"] = model.diagnostics.get("bic_table", [])
    out = dumps(with_provenance(payload, args.seed, config.to_dict()))
    _write(Path(args.output), out)
    print(f"selected K={model.k} family={model.family.value} bic={model.bic:.6f} -> {args.output}")
    return EXIT_OK


def cmd_entropy(args) -> int:
    _, x = read_csv(args.data)
    config = _config(args)
    tr = _transform(args.bounded, x.shape[1], args.lower)
    est, _ = estimate_entropy(x, args.method, config, tr, mc_samples=args.mc_samples)
    report = est.to_dict(bits=args.bits)
    cfg = config.to_dict() | {"method": args.method, "bounded": args.bounded, "lower": args.lower}
    if args.method == "mc":
        cfg["mc_samples"] = args.mc_samples
    line = f"entropy = {report['value']:.6f} {report['unit']} (method {args.method}"
    if "se" in report:
        line += f", se {report['se']:.6f}"
    if "model" in report:
        line += f", K={report['model']['k']} {report['model']['family']}"
    print(line + f", seed {args.seed})")
    if args.json:
        _write(Path(args.json), dumps(with_provenance({"entropy": report}, args.seed, cfg)))
    return EXIT_OK


def cmd_mi(args) -> int:
    header, x = read_csv(args.data)
    config = _config(args)
    i, j = args.cols
    p = x.shape[1]
    if p < 2:
        raise DataError("need at least two columns")
    if not (0 <= i < p and 0 <= j < p) or i == j:
        raise UsageError(f"--cols must name two distinct columns in 0..{p - 1}")
    tr = _transform(args.bounded, p, args.lower)
    if tr is not None:
        tr = tr.subset([i, j])
    value = mutual_information(x[:, [i, j]], config, tr, labels=(i, j))
    unit = "bits" if args.bits else "nats"
    if args.bits:
        value /= math.log(2.0)
    names = header or [f"X{c + 1}" for c in range(p)]
    print(f"MI({names[i]}, {names[j]}) = {value:.6f} {unit}")
    if args.json:
        cfg = config.to_dict() | {"cols": [i, j], "bounded": args.bounded, "lower": args.lower}
        _write(Path(args.json), dumps(with_provenance({"mi": value, "unit": unit}, args.seed, cfg)))
    return EXIT_OK


def cmd_tree(args) -> int:
    header, x = read_csv(args.data)
    config = _config(args)
    p = x.shape[1]
    if p < 2:
        raise DataError("need at least two columns")
    bounded = args.bounded or ("all" if args.mode == "bounded" else None)
    tr = _transform(bounded, p, args.lower) if args.mode == "bounded" else None
    labels = header or [f"X{c + 1}" for c in range(p)]
    m = mi_matrix(x, config, tr, args.mode, labels)
    out = Path(args.out_dir)
    _write(out / "mi_matrix.csv", format_csv(m.values, labels))
    tree = max_spanning_tree(m)
    cfg = config.to_dict() | {"mode": args.mode, "bounded": bounded, "lower": args.lower}
    _write(out / "tree.json", dumps(with_provenance(tree_to_dict(tree), args.seed, cfg)))
    _write(out / "tree.dot", tree_to_dot(tree))
    for a, b, w in tree.edges:
        print(f"{labels[a]} -- {labels[b]}  {w:.4f}")
    return EXIT_OK


def _parse_params(s: str | None) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    if not s:
        return out
    for item in s.split(","):
        key, sep, val = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"malformed parameter {item!r}; expected key=value")
        try:
            out[key.strip()] = [float(v) for v in val.split(":")]
        except ValueError:
            raise UsageError(f"non-numeric value in parameter {item!r}") from None
    return out


def _scalar(params, key, default):
    v = params.pop(key, None)
    if v is None:
        return default
    if len(v) != 1:
        raise UsageError(f"parameter {key} takes a single value")
    return v[0]


def make_distribution(name: str, params: dict[str, list[float]]):
    """Build a benchmark distribution from ``--dist``/``--params``.

    List values use ``:`` separators; covariances are flattened row-major.
    """
    params = dict(params)
    try:
        if name == "gaussian":
            mean = params.pop("mean", None)
            cov = params.pop("cov", None)
            d = Gaussian()
            if mean is not None:
                p = len(mean)
                cov = cov if cov is not None else list(np.eye(p).ravel())
            elif cov is not None:
                p = math.isqrt(len(cov))
                mean = [0.0] * p
            if mean is not None:
                if len(cov) != p * p:
                    raise UsageError(f"cov needs {p * p} values for dimension {p}")
                d = Gaussian(tuple(mean), tuple(tuple(r) for r in np.reshape(cov, (p, p)).tolist()))
        elif name == "mixed-gaussian":
            d = MixedGaussian(_scalar(params, "mu", 0.0), _scalar(params, "sigma", 1.0))
        elif name == "chi-squared":
            d = IndepChiSquared(_scalar(params, "df", 5.0), int(_scalar(params, "dim", 10)))
        elif name == "log-normal":
            d = LogNormal.bivariate(
                _scalar(params, "mu1", 0.0),
                _scalar(params, "mu2", 0.0),
                _scalar(params, "var1", 1.0),
                _scalar(params, "var2", 0.25),
                _scalar(params, "rho", 0.5),
            )
        else:
            raise UsageError(f"unknown distribution {name!r}; expected gaussian, mixed-gaussian, chi-squared or log-normal")
    except (ValueError, TypeError) as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"invalid parameters for {name}: {exc}") from exc
    if params:
        raise UsageError(f"unknown parameters for {name}: {sorted(params)}")
    return d


def cmd_simulate(args) -> int:
    dist = make_distribution(args.dist, _parse_params(args.params))
    config = _config(args)
    methods = args.methods.split(",")
    allowed = MI_METHODS if args.quantity == "mi" else ENTROPY_METHODS
    bad = [m for m in methods if m not in allowed]
    if bad:
        raise UsageError(f"unknown methods {bad}; expected a subset of {list(allowed)}")
    if args.replicates < 2:
        raise UsageError("--replicates must be >= 2")
    res = run_simulation(
        dist,
        args.sizes,
        args.replicates,
        methods,
        seed=args.seed,
        config=config,
        quantity=args.quantity,
        mc_samples=args.mc_samples,
    )
    out = Path(args.out_dir)
    _write(out / "results.csv", res.to_csv())
    cfg = config.to_dict() | {"mc_samples": args.mc_samples}
    _write(out / "summary.json", dumps(with_provenance(res.summary_dict(), args.seed, cfg)))
    for row in res.summary():
        if row["count"]:
            print(f"{row['method']:>5} n={row['n']:<6} mean={row['mean']:.4f} bias={row['bias']:+.4f} mse={row['mse']:.5f}")
        else:
            print(f"{row['method']:>5} n={row['n']:<6} all replicates failed")
    return EXIT_OK


def cmd_image(args) -> int:
    try:
        data = Path(args.image).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {args.image}: {exc.strerror or exc}") from exc
    img = read_pgm(data)
    config = _config(args)
    out = Path(args.out_dir)
    cfg = config.to_dict() | {"k": args.k, "curve": args.curve}
    if args.k is not None:
        seg = quantize(img, args.k, config)
        _write(out / "segmented.pgm", write_pgm(seg.segmented))
        _write(out / "report.json", dumps(with_provenance(seg.report(), args.seed, cfg)))
        print(
            f"K={seg.k} entropy={seg.gmm_entropy:.6f} empirical={seg.empirical_entropy:.6f} "
            f"ssim={seg.ssim_vs_original:.4f} size={seg.size_kb:.2f}kb CR={seg.compression_rate:.2f}"
        )
    else:
        curve = entropy_curve(img, args.curve, config)
        lines = ["k,gmm_entropy"] + [
            f"{k},{'' if math.isnan(e) else repr(e)}" for k, e in zip(curve.ks, curve.entropies)
        ]
        _write(out / "curve.csv", "\n".join(lines) + "\n")
        _write(out / "report.json", dumps(with_provenance(curve.to_dict(), args.seed, cfg)))
        print(f"first local minimum K={curve.first_local_min}, global minimum K={curve.global_min}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_fit_options(p: argparse.ArgumentParser, k_range=(1, 9), n_init=5) -> None:
    g = p.add_argument_group("mixture fitting")
    g.add_argument("--k-range", type=_k_range, default=k_range, metavar="LO:HI")
    g.add_argument("--families", type=_families, default=tuple(CovarianceFamily), metavar="EII,VII,...")
    g.add_argument("--n-init", type=_positive_int, default=n_init)
    g.add_argument("--tol", type=float, default=1e-8)
    g.add_argument("--max-iter", type=_positive_int, default=500)
    g.add_argument("--seed", type=int, default=DEFAULT_SEED)


def _add_bounded(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bounded", metavar="COLS", help="'all' or comma-separated 0-based columns to log-transform")
    p.add_argument("--lower", type=float, default=0.0, help="lower bound of the bounded columns")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mixent", description="Entropy and mutual information via Gaussian mixtures.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="select a mixture by BIC and write it as JSON")
    p.add_argument("data")
    p.add_argument("-o", "--output", default="model.json")
    _add_fit_options(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("entropy", help="estimate differential entropy")
    p.add_argument("data")
    p.add_argument("--method", choices=[m.value for m in EntropyMethod], default="gmm")
    p.add_argument("--bits", action="store_true", help="report in bits instead of nats")
    p.add_argument("--mc-samples", type=_positive_int, default=100_000)
    p.add_argument("--json", metavar="PATH")
    _add_bounded(p)
    _add_fit_options(p)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("mi", help="mutual information between two columns")
    p.add_argument("data")
    p.add_argument("--cols", type=int, nargs=2, default=(0, 1), metavar=("I", "J"))
    p.add_argument("--bits", action="store_true")
    p.add_argument("--json", metavar="PATH")
    _add_bounded(p)
    _add_fit_options(p)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("tree", help="Chow-Liu tree from pairwise mutual information")
    p.add_argument("data")
    p.add_argument("--mode", choices=["gmm", "gaussian", "bounded"], default="gmm")
    p.add_argument("--out-dir", default=".")
    _add_bounded(p)
    _add_fit_options(p)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("simulate", help="replicated estimation on a benchmark distribution")
    p.add_argument("--dist", required=True)
    p.add_argument("--params", help="key=value pairs separated by commas; list values use ':'")
    p.add_argument("--sizes", type=_int_list, required=True)
    p.add_argument("--replicates", type=_positive_int, required=True)
    p.add_argument("--methods", default="gmm")
    p.add_argument("--quantity", choices=["entropy", "mi"], default="entropy")
    p.add_argument("--mc-samples", type=_positive_int, default=10_000)
    p.add_argument("--out-dir", default=".")
    _add_fit_options(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("image", help="grey-level quantisation of a PGM image")
    p.add_argument("image")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--k", type=_positive_int)
    mode.add_argument("--curve", type=_positive_int, metavar="KMAX")
    p.add_argument("--out-dir", default=".")
    _add_fit_options(p, n_init=1)
    p.set_defaults(func=cmd_image)
    return parser


DATA_ERRORS = (DataError, PGMError, BoundViolation, NonFiniteDataError, DimensionError, TooFewLevels)
NUMERIC_ERRORS = (
    AllInitsFailed,
    DegenerateComponent,
    EmptyComponent,
    NotPositiveDefinite,
    DensityUnderflow,
    MissingCellError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "curve", None) is not None and args.curve < 2:
        parser.error("--curve needs KMAX >= 2")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mixent: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"mixent: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NUMERIC_ERRORS as exc:
        print(f"mixent: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # remaining ValueErrors come from input checks (too few rows, n <= p, ...)
        print(f"mixent: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
