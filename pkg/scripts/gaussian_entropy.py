"""Bivariate Gaussian: GMM entropy against the closed form, several sample sizes."""

from _common import config, parser, report, save, sizes

from mixent.benchmarks import Gaussian, run_simulation

if __name__ == "__main__":
    args = parser(__doc__, replicates=100, sizes="100,1000,10000").parse_args()
    res = run_simulation(Gaussian(), sizes(args), args.replicates, ["gmm", "mle"], args.seed, config(args), n_jobs=args.jobs)
    report(res)
    print("written to", save(args, "gaussian", [res]))
