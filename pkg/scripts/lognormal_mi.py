"""Bivariate log-normal mutual information for both parameter settings and three correlations."""

from _common import config, parser, report, save, sizes

from mixent.benchmarks import LogNormal, run_simulation

SETTINGS = [(0.0, 0.0, 1.0, 0.25), (1.0, 1.0, 1.0, 2.0)]

if __name__ == "__main__":
    args = parser(__doc__, replicates=50, sizes="100,1000").parse_args()
    results = []
    for mu1, mu2, v1, v2 in SETTINGS:
        for rho in (0.1, 0.5, 0.9):
            dist = LogNormal.bivariate(mu1, mu2, v1, v2, rho)
            res = run_simulation(dist, sizes(args), args.replicates, ["gmm", "bgmm"], args.seed, config(args), quantity="mi", n_jobs=args.jobs)
            report(res)
            results.append(res)
    print("written to", save(args, "lognormal_mi", results))
