"""Two-component symmetric Gaussian mixture, mu = 0..3: mixture estimate and its approximations."""

from _common import config, parser, report, save, sizes

from mixent.benchmarks import MixedGaussian, run_simulation

METHODS = ["gmm", "mle", "ut", "var", "sote", "mc"]

if __name__ == "__main__":
    p = parser(__doc__, replicates=100, sizes="100,1000,10000")
    p.add_argument("--mu", default="0,1,2,3")
    args = p.parse_args()
    results = []
    for mu in (float(m) for m in args.mu.split(",")):
        res = run_simulation(MixedGaussian(mu, 1.0), sizes(args), args.replicates, METHODS, args.seed, config(args), n_jobs=args.jobs)
        report(res)
        results.append(res)
    print("written to", save(args, "mixed_gaussian", results))
