"""Shared plumbing for the experiment scripts: argument parsing and output."""

import argparse
import json
from pathlib import Path

from mixent import __version__
from mixent.mixture import FitConfig


def parser(description: str, replicates: int, sizes: str) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--replicates", type=int, default=replicates)
    p.add_argument("--sizes", default=sizes, help="comma-separated sample sizes")
    p.add_argument("--seed", type=int, default=20240101)
    p.add_argument("--k-max", type=int, default=9)
    p.add_argument("--n-init", type=int, default=5)
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: MIXENT_THREADS or 1)")
    p.add_argument("--out", default="results")
    return p


def config(args) -> FitConfig:
    return FitConfig(k_range=(1, args.k_max), n_init=args.n_init, seed=args.seed)


def sizes(args) -> list[int]:
    return [int(s) for s in args.sizes.split(",")]


def save(args, name: str, results: list) -> Path:
    out = Path(args.out) / name
    out.mkdir(parents=True, exist_ok=True)
    header = "dist,method,n,replicate,estimate,true_value\n"
    with open(out / "results.csv", "w") as fh:
        fh.write(header)
        for res in results:
            fh.write(res.to_csv()[len(header):])
    summary = {
        "tool_version": __version__,
        "seed": args.seed,
        "config": config(args).to_dict(),
        "runs": [r.summary_dict() for r in results],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return out


def report(res) -> None:
    print(f"{res.dist} {res.params}  truth = {res.true_value:.6f}")
    for row in res.summary():
        if row["count"]:
            print(
                f"  {row['method']:>5} n={row['n']:<6} mean={row['mean']:.4f} bias={row['bias']:+.4f} "
                f"95% [{row['q025']:.4f}, {row['q975']:.4f}] mse={row['mse']:.2e} failed={row['failed']}"
            )
