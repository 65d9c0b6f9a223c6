"""Error left along the slowest eigen-direction after k exact gradient steps.

With a theory-safe stepsize the block mean evolves as inexact gradient descent
on the averaged objective. Exact descent shrinks the error component along the
smallest eigenvector of the mean Hessian by (1 - alpha * lambda_min) per step,
and the consensus perturbation decays like beta^t(k), so this estimate is what
any schedule can hope for. It is printed for the quadratic instances used by
the acceptance suite.
"""

import argparse

import numpy as np

from neardgd import build_topology, generate_quadratic, max_stepsize, metropolis_weights, quadratic_optimum


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kappa", type=float, nargs="+", default=[1e2, 1e4])
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--iters", type=int, nargs="+", default=[500, 1000, 5000])
    parser.add_argument("--alpha-scale", type=float, default=0.9)
    args = parser.parse_args()
    W = metropolis_weights(build_topology("cyclic_k", 10, 4))
    for kappa in args.kappa:
        prob = generate_quadratic(10, 10, kappa, args.seed)
        truth = quadratic_optimum(prob)
        alpha = args.alpha_scale * max_stepsize("near_dgd", prob, W)
        lam, V = np.linalg.eigh(prob.hessian_sum() / prob.n)
        rate = 1 - alpha * lam[0]
        share = float((V[:, 0] @ truth.x_star) ** 2 / truth.norm_sq)
        need = np.log(1e-16 / share) / (2 * np.log(rate))
        print(f"kappa={kappa:g}: alpha={alpha:.4e}, per-step factor {rate:.7f}, slow-mode share {share:.3f}")
        for k in args.iters:
            print(f"  k={k:>6}: slow-mode relative error {share * rate ** (2 * k):.3e}")
        print(f"  steps needed for 1e-16: {need:.3e} (linear schedule comm rounds {need * (need + 1) / 2:.3e})")


if __name__ == "__main__":
    main()
