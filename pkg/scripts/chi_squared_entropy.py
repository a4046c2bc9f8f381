"""Ten independent chi-squared(5) coordinates: plain versus log-transformed (bounded) mixtures."""

from _common import config, parser, report, save, sizes

from mixent.benchmarks import IndepChiSquared, run_simulation

if __name__ == "__main__":
    args = parser(__doc__, replicates=20, sizes="1000,10000").parse_args()
    res = run_simulation(IndepChiSquared(5, 10), sizes(args), args.replicates, ["gmm", "bgmm", "mle"], args.seed, config(args), n_jobs=args.jobs)
    report(res)
    print("written to", save(args, "chi_squared", [res]))
