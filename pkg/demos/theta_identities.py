"""Evaluating the rescaled Riemann theta function.

The fast evaluator is compared with the brute-force box sum, then the
identities that every correct implementation must satisfy are checked on a
random 2x2 period matrix.  Run with ``python3 demos/theta_identities.py``.
"""

import numpy as np

from rtbm import theta as th


def main():
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, (2, 2))
    q = x @ x.T + np.eye(2)
    z = np.array([0.4 + 0.3j, -0.7 + 1.1j])
    print("Q =\n", q)

    fast = th.theta_tilde(z, q, derivs=[(0,), (0, 1)])
    naive = th.theta_tilde_naive(z, q, derivs=[(0,), (0, 1)], radius=25)
    print(f"theta~(z)            fast {fast.theta:.12f}  naive {naive.theta:.12f}")
    print(f"d theta~/dz_0        fast {fast.deriv((0,)):.12f}  naive {naive.deriv((0,)):.12f}")

    print("\nIdentities (each difference should be at rounding level):")
    print("  even:           ", abs(th.theta_tilde(-z, q).theta - fast.theta))
    print("  2 pi i periodic:", abs(th.theta_tilde(z + 2j * np.pi * np.array([1, -2]), q).theta - fast.theta))
    n = np.array([1, -1])
    shifted = th.log_theta_tilde(z - q @ n, q) + n @ z - 0.5 * n @ q @ n
    print("  quasi-periodic: ", abs(np.exp(shifted - th.log_theta_tilde(z, q)) - 1))

    # small eigenvalues make the direct sum slow to converge; the evaluator
    # switches to the Poisson-dual sum and still matches the reference
    small = np.diag([0.05, 0.2])
    y = np.array([0.3j, -1.2j])
    print("\nSmall Q, imaginary argument:",
          th.theta_tilde(y, small).theta, th.theta_tilde_naive(y, small, radius=50).theta)

    # log-domain evaluation avoids overflow for large arguments
    big = np.array([400.0, -250.0])
    print("log theta~ at a large real argument:", th.log_theta_tilde(big, q))


if __name__ == "__main__":
    main()
