"""Fitting RTBM densities by maximum likelihood.

A single three-hidden-unit RTBM and a two-component mixture are fitted to a
skewed gamma sample and to a bimodal sample.  The held-out negative
log-likelihood is compared with that of the true density, and the
normalisation of the fitted density is confirmed by quadrature.  Run with
``python3 demos/density_fitting.py`` (about two minutes).
"""

import numpy as np
from scipy import integrate, stats

from rtbm import core, mixture, training
from rtbm.training import TrainConfig


def held_out_gap(model, test, true_logpdf):
    return training.nll_cost(model, test) / len(test) + np.mean(true_logpdf(test))


def main():
    rng = np.random.default_rng(0)

    x = rng.gamma(7.5, 1.0, 1500)
    train, test = x[:1200], x[1200:]
    model = training.centre_on_data(core.init_random(1, 3, seed=0), train)
    fitted, rep = training.train_ml(model, train, TrainConfig(bound=50, max_iters=600, seed=0))
    mean, second = core.moments(fitted)
    print(f"gamma(7.5): {rep.iterations} CMA-ES iterations, "
          f"held-out NLL gap {held_out_gap(fitted, test, stats.gamma(7.5).logpdf):+.4f} nats")
    print(f"  model mean {mean[0]:.3f} (sample {train.mean():.3f}), "
          f"variance {second[0, 0] - mean[0] ** 2:.3f} (sample {train.var():.3f})")
    mass = integrate.quad(lambda v: core.density(fitted, v).p, -30, 30, limit=200)[0]
    print(f"  integral of the fitted density over [-30, 30]: {mass:.10f}")

    # two well-separated modes: a mixture assigns one component to each
    y = np.concatenate([rng.normal(-3, 0.7, 600), rng.normal(2, 1.2, 900)])
    rng.shuffle(y)
    train, test = y[:1200], y[1200:]

    def true_logpdf(v):
        return np.logaddexp(np.log(0.4) + stats.norm(-3, 0.7).logpdf(v), np.log(0.6) + stats.norm(2, 1.2).logpdf(v))

    mix = training.centre_on_data(mixture.random_mixture(2, 1, 1, seed=3), train)
    fitted, rep = training.train_ml(mix, train, TrainConfig(bound=30, max_iters=600, seed=3))
    print(f"\nbimodal: mixture weights {np.round(fitted.weights, 3)}, "
          f"held-out NLL gap {held_out_gap(fitted, test, true_logpdf):+.4f} nats")
    print("  component means:", [round(float(core.moments(c)[0][0]), 3) for c in fitted.components])


if __name__ == "__main__":
    main()
