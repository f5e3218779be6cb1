import uncoupled
from uncoupled.cli import RegressionSpec, generate_dataset

noise = uncoupled.make_noise("laplace", {"scale": 0.2})
regression = RegressionSpec("step", {"pieces": 4})
fit = uncoupled.estimator(noise=noise, V=1.0)


def errors(n: int, seed: int) -> dict:
    """l1 errors of deconvolution and naive sorting on one dataset"""
    design, y = generate_dataset(regression, n, noise, seed)
    truth = regression.function(design, 1.0)
    return {
        "deconv": uncoupled.empirical_lp(truth, fit(design, y).g_hat, 1),
        "naive_sorted": uncoupled.empirical_lp(
            truth, uncoupled.naive_sorted(design, y, 1.0), 1
        ),
    }
