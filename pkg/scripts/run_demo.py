"""Combined discrete + continuous attention demo over a few seeds, both alphas."""

import argparse

from contattn.demo import DemoConfig, run_demo


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[42, 43, 44])
    ap.add_argument("--rbf-sigma", type=float, default=0.1)
    args = ap.parse_args()

    print(f"{'alpha':>5} {'seed':>5} {'mu':>8} {'sigma':>8} {'|grad - fd|':>12}  extras")
    for alpha in (1, 2):
        for seed in args.seeds:
            rep = run_demo(DemoConfig(alpha=alpha, seed=seed, rbf_sigma=args.rbf_sigma))
            print(f"{alpha:5d} {seed:5d} {rep.mu:8.4f} {rep.sigma2 ** 0.5:8.4f} "
                  f"{rep.grad_delta:12.3e}  {rep.extras or ''}")


if __name__ == "__main__":
    main()
