"""Moment gaps and numerical checks of the moment-matching bounds

Besides the moment arithmetic itself, this module builds the objects the
bounds are about (the sinc-type smoothing kernel and pairs of measures
with matching moments) and checks the inequalities numerically.
:func:`diagnostics` runs every check.
"""
import logging
import math
import typing as t
from functools import lru_cache, partial, singledispatch

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize, special, stats

from ._base import _SlotsMixin
from .deconv import build_grid
from .errors import Error, InvalidInput, InvalidParameter, UnsupportedFamily
from .isotonic import DesignPoints, round_to_isotonic
from .measures import EmpiricalMeasure, GridMeasure, wasserstein_p
from .noise import NoiseModel, discretize, make_noise

__all__ = [
    "raw_moment",
    "convolved_moment",
    "delta_l",
    "orlicz_norm",
    "wasserstein_moment_surrogate",
    "w2_to_moments_rhs",
    "deconv_moment_rhs",
    "subexponential_moment_check",
    "sinc_normalizer",
    "sinc_density",
    "sinc_derivative_bound",
    "sinc_derivative_check",
    "sinc_base_derivative_check",
    "moment_matched_pair",
    "ChiSquareBound",
    "chi2_tv_bound",
    "Check",
    "diagnostics",
    "report",
]

logger = logging.getLogger(__name__)

# moments closer than this count as matched
MATCH_TOL = 1e-8
# slack on finite-difference derivative bounds
DERIVATIVE_SLACK = 0.05
SINC_PERIODS = 2000
Q_PANELS = 512
Q_NODES_PER_PANEL = 8
MIXTURE_MARGIN = 10.0
MIXTURE_TOL = 1e-10
SERIES_TERMS = 40


@singledispatch
def raw_moment(obj, l):
    """The raw moment :math:`E X^\\ell` of a measure or noise law

    Parameters
    ----------
    obj: EmpiricalMeasure or GridMeasure or NoiseModel
        the distribution
    l: int
        the order, at least 0

    Raises
    ------
    UnsupportedFamily
        if ``obj`` has no registered moments
    """
    raise UnsupportedFamily("no moments registered for {!r}".format(obj))


@raw_moment.register(EmpiricalMeasure)
@raw_moment.register(GridMeasure)
def _measure_moment(mu, l):
    return float(mu.weights @ mu.atoms**l)


@raw_moment.register(NoiseModel)
def _noise_moment(noise, l):
    return noise.moment(l)


def _check_order(l):
    if int(l) != l or l < 1:
        raise InvalidParameter(
            "moment order must be a positive integer, got {!r}".format(l)
        )
    return int(l)


def convolved_moment(mu, noise, m):
    """:math:`E(X + \\xi)^m`, expanded binomially with exact noise moments"""
    return math.fsum(
        special.comb(m, j, exact=True)
        * raw_moment(mu, j)
        * raw_moment(noise, m - j)
        for j in range(m + 1)
    )


def _moment_gap(mu, nu, l):
    return abs(raw_moment(mu, l) - raw_moment(nu, l))


def delta_l(mu, nu, l):
    """The moment gap :math:`\\Delta_\\ell = |E X^\\ell - E Y^\\ell|^{1/\\ell}`

    Parameters
    ----------
    mu: EmpiricalMeasure or GridMeasure
        the law of :math:`X`
    nu: EmpiricalMeasure or GridMeasure
        the law of :math:`Y`
    l: int
        the order, at least 1

    Returns
    -------
    float
        the gap
    """
    l = _check_order(l)
    return _moment_gap(mu, nu, l) ** (1.0 / l)


def orlicz_norm(mu):
    """The :math:`\\psi_1` norm of a discrete measure, by bisection"""
    size = np.abs(mu.atoms)
    top = size.max()
    if top == 0:
        return 0.0
    heaviest = mu.weights[size == top].sum()

    def excess(t):
        return mu.weights @ np.exp(size / t) - 2.0

    # excess(upper) < 0, also when all mass sits at the top
    lower = top / math.log(4.0 / heaviest)
    upper = top / math.log(2.0) * (1 + 1e-9)
    xtol = 1e-12 * top
    return optimize.bisect(excess, lower, upper, xtol=xtol) + xtol


def wasserstein_moment_surrogate(mu, nu, p, Lmax):
    """The moment bound on :math:`W_p` without its universal constant:
    :math:`p \\max_{\\ell \\le L} \\Delta_\\ell / \\ell`"""
    if int(Lmax) != Lmax or Lmax < 1:
        raise InvalidParameter("Lmax must be >= 1, got {!r}".format(Lmax))
    return p * max(delta_l(mu, nu, l) / l for l in range(1, int(Lmax) + 1))


def w2_to_moments_rhs(mu, nu, l, psi1_bound):
    """The bound :math:`(2\\ell)^\\ell K^{\\ell - 1} W_2(\\mu, \\nu)`
    on :math:`\\Delta_\\ell^\\ell`, for measures with
    :math:`\\psi_1` norms at most :math:`K`"""
    l = _check_order(l)
    return (2 * l) ** l * psi1_bound ** (l - 1) * wasserstein_p(mu, nu, 2)


def deconv_moment_rhs(mu, nu, noise, l):
    """The bound
    :math:`(4\\ell\\sigma)^\\ell \\max_{m \\le \\ell}
    \\Delta_m^m(\\mu * D, \\nu * D)` on :math:`\\Delta_\\ell^\\ell(\\mu, \\nu)`

    Parameters
    ----------
    mu: GridMeasure or EmpiricalMeasure
        the first measure
    nu: GridMeasure or EmpiricalMeasure
        the second measure
    noise: ~uncoupled.noise.NoiseModel
        the noise law :math:`D`, with :math:`\\sigma > 0`
    l: int
        the order

    Returns
    -------
    float
        the right side of the bound
    """
    l = _check_order(l)
    if not noise.sigma > 0:
        raise InvalidParameter(
            "the bound degenerates for {!r}: sigma must be positive".format(
                noise
            )
        )
    convolved_gap = max(
        abs(convolved_moment(mu, noise, m) - convolved_moment(nu, noise, m))
        for m in range(1, l + 1)
    )
    return (4 * l * noise.sigma) ** l * convolved_gap


def subexponential_moment_check(noise, p):
    """Whether :math:`(E|\\xi|^p)^{1/p} \\le p \\sigma`"""
    return noise.abs_moment(p) ** (1.0 / p) <= p * noise.sigma


@lru_cache(maxsize=None)
def _sinc_power_integral(m):
    """:math:`\\int_0^\\infty (\\sin u / u)^{2m} du`, period by period
    with an averaged tail"""

    def integrand(u):
        return np.sinc(u / np.pi) ** (2 * m)

    body = math.fsum(
        integrate.quad(
            integrand, k * np.pi, (k + 1) * np.pi, epsabs=1e-15, epsrel=1e-12
        )[0]
        for k in range(SINC_PERIODS)
    )
    cutoff = SINC_PERIODS * np.pi
    mean = special.comb(2 * m, m, exact=True) / 4**m
    return body + mean * cutoff ** (1 - 2 * m) / (2 * m - 1)


def sinc_normalizer(m):
    """The constant :math:`C_m` making :func:`sinc_density` a density"""
    m = _check_order(m)
    return 1.0 / (8 * math.e * m * _sinc_power_integral(m))


def sinc_density(m, t):
    """The density
    :math:`f_m(t) = C_m (\\sin(t/4em) / (t/4em))^{2m}`, with
    :math:`f_m(0) = C_m`"""
    u = np.asarray(t, dtype=float) / (4 * math.e * m)
    result = sinc_normalizer(m) * np.sinc(u / np.pi) ** (2 * m)
    return float(result) if result.ndim == 0 else result


def sinc_derivative_bound(m, n, t):
    """:math:`(8em)^{2m} / ((2e)^n (4em + |t|)^{2m})`"""
    scale = 4 * math.e * m
    return (2 * scale) ** (2 * m) / (
        (2 * math.e) ** n * (scale + abs(t)) ** (2 * m)
    )


def _central_difference(f, t, n, h):
    k = np.arange(n + 1)
    coefficients = (-1.0) ** k * special.comb(n, k)
    return coefficients @ f(t + (n / 2 - k) * h) / h**n


def _derivative(f, t, n, h):
    """The ``n``-th derivative by central differences, Richardson
    extrapolated"""
    if n == 0:
        return float(f(np.array([t]))[0])
    coarse = _central_difference(f, t, n, h)
    fine = _central_difference(f, t, n, h / 2)
    return (4 * fine - coarse) / 3


def _check_derivative_order(n):
    if int(n) != n or not 0 <= n <= 5:
        raise InvalidParameter(
            "derivative order must be in 0..5, got {!r}".format(n)
        )


def sinc_derivative_check(m, n, t):
    """Whether :math:`|f_m^{(n)}(t)|` respects :func:`sinc_derivative_bound`
    (with 5% slack)

    Parameters
    ----------
    m: int
        kernel order, 1 to 3
    n: int
        derivative order, 0 to 5
    t: float
        where to differentiate
    """
    _check_derivative_order(n)
    if int(m) != m or not 1 <= m <= 3:
        raise InvalidParameter("m must be in 1..3, got {!r}".format(m))
    value = _derivative(partial(sinc_density, m), t, n, math.e * m / 4)
    return abs(value) <= (1 + DERIVATIVE_SLACK) * sinc_derivative_bound(
        m, n, t
    )


def sinc_base_derivative_check(n, t):
    """Whether :math:`|\\frac{d^n}{dt^n} \\frac{\\sin t}{t}| \\le
    \\frac{2}{1 + |t|}` (with 5% slack)"""
    _check_derivative_order(n)
    value = _derivative(lambda s: np.sinc(s / np.pi), t, n, 0.1)
    return abs(value) <= (1 + DERIVATIVE_SLACK) * 2 / (1 + abs(t))


def moment_matched_pair(k, V):
    """Two centered measures on :math:`[-V, V]` whose first
    :math:`2k - 1` moments agree

    Parameters
    ----------
    k: int
        the number of Gauss-Legendre nodes of the first measure
    V: float
        half-width of the support

    Returns
    -------
    tuple[GridMeasure, GridMeasure]
        ``P``, the ``k``-node Gauss-Legendre rule for the uniform law on
        :math:`[-V, V]`, and ``Q``, the uniform law discretized on 4096
        atoms (512 equal panels of 8 Gauss-Legendre nodes)
    """
    k = _check_order(k)
    if not V > 0:
        raise InvalidParameter("V must be positive, got {!r}".format(V))
    nodes, weights = leggauss(k)
    P = GridMeasure(V * nodes, weights / weights.sum())
    inner, inner_weights = leggauss(Q_NODES_PER_PANEL)
    edges = np.linspace(-V, V, Q_PANELS + 1)
    mids, halves = (edges[1:] + edges[:-1]) / 2, (edges[1:] - edges[:-1]) / 2
    atoms = (mids[:, None] + halves[:, None] * inner[None, :]).ravel()
    mass = np.tile(inner_weights, Q_PANELS)
    Q = GridMeasure(atoms, mass / mass.sum())
    return P, Q


class ChiSquareBound(_SlotsMixin):
    """Numerical and bounding values of the chi-square comparison of two
    gaussian mixtures

    Parameters
    ----------
    tv_sq: float
        squared total variation of one sample
    chi_sq: float
        the chi-square divergence of one sample, with the tails beyond
        the integration range bounded from above
    chi_sq_series: float
        :math:`e^{V^2/2} \\sum_\\ell \\Delta_\\ell^{2\\ell} / \\ell!`
    chi_sq_bound: float
        :math:`e^{5V^2/2} (2V^2)^k / k!`
    tv_sq_bound: float
        :math:`\\min((1 + \\text{chi_sq_bound})^n - 1, 1)`, the bound
        for ``n`` samples
    """

    __slots__ = (
        "tv_sq",
        "chi_sq",
        "chi_sq_series",
        "chi_sq_bound",
        "tv_sq_bound",
    )

    def __init__(
        self, tv_sq, chi_sq, chi_sq_series, chi_sq_bound, tv_sq_bound
    ):
        self.tv_sq = tv_sq
        self.chi_sq = chi_sq
        self.chi_sq_series = chi_sq_series
        self.chi_sq_bound = chi_sq_bound
        self.tv_sq_bound = tv_sq_bound

    @property
    def holds(self):
        return self.chi_sq <= self.chi_sq_bound

    def __repr__(self):
        return "ChiSquareBound(chi_sq={:.4g} <= {:.4g}: {})".format(
            self.chi_sq, self.chi_sq_bound, self.holds
        )


def _mixture_density(mu):
    def density(y):
        return stats.norm.pdf(y - mu.atoms) @ mu.weights

    return density


def chi2_tv_bound(P, Q, n, V, k):
    """Compare :math:`P * N(0, 1)` and :math:`Q * N(0, 1)`
    with the chi-square bound for moment-matched priors

    Parameters
    ----------
    P: GridMeasure
        centered, on :math:`[-V, V]`
    Q: GridMeasure
        centered, on :math:`[-V, V]`, matching the first ``k - 1``
        moments of ``P``
    n: int
        number of samples for the tensorized bound
    V: float
        half-width of the support
    k: int
        number of matched moments plus one

    Returns
    -------
    ChiSquareBound
        numerical divergences and their bounds

    Raises
    ------
    InvalidInput
        if the measures violate the preconditions
    """
    k = _check_order(k)
    for name, mu in (("P", P), ("Q", Q)):
        if np.abs(mu.atoms[mu.weights > 0]).max() > V * (1 + 1e-12):
            raise InvalidInput("{} is not supported in [-V, V]".format(name))
        if abs(raw_moment(mu, 1)) > MATCH_TOL:
            raise InvalidInput("{} is not centered".format(name))
    for l in range(1, k):
        if _moment_gap(P, Q, l) > MATCH_TOL:
            raise InvalidInput(
                "moment {} of P and Q differ by {!r}".format(
                    l, _moment_gap(P, Q, l)
                )
            )
    p, q = _mixture_density(P), _mixture_density(Q)
    bounds = (-V - MIXTURE_MARGIN, V + MIXTURE_MARGIN)
    options = dict(epsabs=MIXTURE_TOL, epsrel=MIXTURE_TOL, limit=200)
    chi_sq = integrate.quad(
        lambda y: (p(y) - q(y)) ** 2 / q(y), *bounds, **options
    )[0]
    tv = integrate.quad(lambda y: abs(p(y) - q(y)), *bounds, **options)[0] / 2
    # beyond the margin (p - q)^2/q <= e^{4V^2} phi(|y| - 3V) + q and each
    # density has at most sf(margin) mass on either side
    tail = 2 * stats.norm.sf(MIXTURE_MARGIN)
    chi_sq += 2 * math.exp(4 * V**2) * stats.norm.sf(MIXTURE_MARGIN - 2 * V)
    chi_sq += tail
    tv += tail
    series = math.exp(V**2 / 2) * math.fsum(
        _moment_gap(P, Q, l) ** 2 / math.factorial(l)
        for l in range(1, SERIES_TERMS + 1)
    )
    bound = math.exp(5 * V**2 / 2) * (2 * V**2) ** k / math.factorial(k)
    # (1 + bound)^n - 1, capped at the trivial bound one
    tv_sq_bound = min(math.expm1(min(n * math.log1p(bound), 1.0)), 1.0)
    return ChiSquareBound(tv**2, chi_sq, series, bound, tv_sq_bound)


class Check(_SlotsMixin):
    """Outcome of one numerical check

    Parameters
    ----------
    name: str
        what was checked
    passed: bool
        whether the inequality held everywhere
    observed: float
        the worst observed value (a ratio, a constant or an error)
    """

    __slots__ = ("name", "passed", "observed")

    def __init__(self, name, passed, observed):
        self.name = name
        self.passed = bool(passed)
        self.observed = float(observed)

    def __repr__(self):
        return "Check({!r}, passed={}, observed={:.6g})".format(
            self.name, self.passed, self.observed
        )


def _random_bounded_measure(rng, V=1.0):
    size = rng.integers(2, 7)
    return GridMeasure.from_atoms(
        rng.uniform(-V, V, size), rng.dirichlet(np.ones(size))
    )


def _check_subexponential_moments(rng):
    ratios = [
        make_noise(family, params).abs_moment(p) ** (1.0 / p)
        / (p * make_noise(family, params).sigma)
        for family, params in [
            ("gaussian", {"sd": 1.0}),
            ("laplace", {"scale": 1.0}),
            ("uniform", {"half_width": 1.0}),
        ]
        for p in range(1, 9)
    ]
    return Check("subexponential_moments", max(ratios) <= 1, max(ratios))


def _check_sinc_normalizer(rng):
    errors, largest = [], 0.0
    for m in range(1, 7):
        n = 2 * m
        exact = (
            math.pi
            / (2**n * math.factorial(n - 1))
            * sum(
                (-1) ** j * math.comb(n, j) * (n - 2 * j) ** (n - 1)
                for j in range(m + 1)
            )
        )
        errors.append(abs(sinc_normalizer(m) * 8 * math.e * m * exact - 1))
        largest = max(largest, sinc_normalizer(m))
    passed = max(errors) <= 1e-6 and largest <= 1
    return Check("sinc_normalizer", passed, max(errors))


def _check_sinc_derivatives(rng):
    outcomes = [
        sinc_derivative_check(m, n, t)
        for m in (1, 2, 3)
        for n in range(5)
        for t in np.linspace(-50, 50, 41)
    ]
    return Check(
        "sinc_derivative_bound", all(outcomes), outcomes.count(False)
    )


def _check_sinc_base_derivatives(rng):
    outcomes = [
        sinc_base_derivative_check(n, t)
        for n in range(5)
        for t in np.linspace(-50, 50, 101)
    ]
    return Check(
        "sinc_base_derivative_bound", all(outcomes), outcomes.count(False)
    )


def _check_w2_to_moments(rng):
    worst = 0.0
    for _ in range(100):
        mu, nu = _random_bounded_measure(rng), _random_bounded_measure(rng)
        for l in range(1, 7):
            rhs = w2_to_moments_rhs(mu, nu, l, 2.0)
            worst = max(worst, _moment_gap(mu, nu, l) / (rhs * (1 + 1e-8)))
    return Check("w2_controls_moments", worst <= 1, worst)


def _check_deconvolution_moments(rng):
    noise = make_noise("gaussian", {"sd": 1.0})
    worst = 0.0
    for _ in range(100):
        mu, nu = _random_bounded_measure(rng), _random_bounded_measure(rng)
        for l in range(1, 7):
            rhs = deconv_moment_rhs(mu, nu, noise, l)
            worst = max(worst, _moment_gap(mu, nu, l) / (rhs * (1 + 1e-8)))
    return Check("deconvolution_moments", worst <= 1, worst)


def _check_moment_matched_priors(rng):
    scaled, matched = [], True
    for k in range(1, 9):
        P, Q = moment_matched_pair(k, 1.0)
        matched &= all(
            _moment_gap(P, Q, l) <= MATCH_TOL for l in range(1, 2 * k)
        )
        scaled.append(k * wasserstein_p(P, Q, 1))
    passed = matched and 0.05 <= min(scaled) and max(scaled) <= 4
    return Check("moment_matched_priors", passed, min(scaled))


def _check_chi_square(rng):
    worst = 0.0
    for k, V in [(2, 0.5), (3, 1.0), (4, 1.0)]:
        P, Q = moment_matched_pair(k, V)
        bound = chi2_tv_bound(P, Q, 1, V, k)
        worst = max(worst, bound.chi_sq / bound.chi_sq_bound)
    return Check("chi_square_bound", worst <= 1, worst)


def _check_moment_surrogate(rng):
    worst = 0.0
    for _ in range(100):
        mu, nu = _random_bounded_measure(rng), _random_bounded_measure(rng)
        for p in (1, 2):
            surrogate = wasserstein_moment_surrogate(mu, nu, p, 12)
            worst = max(worst, wasserstein_p(mu, nu, p) / surrogate)
    return Check("moment_surrogate_ratio", worst <= 10, worst)


def _check_empirical_w2(rng):
    noise = make_noise("gaussian", {"sd": 1.0})
    law = discretize(noise, 8192)
    worst = 0.0
    for n in (64, 256, 1024):
        mean = np.mean(
            [
                wasserstein_p(
                    law, EmpiricalMeasure.from_samples(noise.sample(n, rng)), 2
                )
                ** 2
                for _ in range(200)
            ]
        )
        worst = max(worst, mean / (16 * noise.sigma**2 / math.sqrt(n)))
    return Check("empirical_w2_rate", worst <= 1, worst)


def _check_projection_error(rng):
    noise, V, draws = make_noise("gaussian", {"sd": 0.5}), 1.0, 100_000
    worst = 0.0
    for n in (16, 256, 4096):
        grid = build_grid(V, noise.sigma, n)
        z = rng.uniform(-V, V, draws) + noise.sample(draws, rng)
        error = np.mean((grid.project(z) - z) ** 2)
        worst = max(worst, error * math.sqrt(n) / (V + noise.sigma) ** 2)
    return Check("projection_error", worst <= 8, worst)


def _check_grid_discretization(rng):
    worst = 0.0
    for n in (16, 256, 4096):
        grid = build_grid(1.0, 0.5, n)
        for _ in range(100):
            mu = _random_bounded_measure(rng)
            for p in (1, 2):
                distance = wasserstein_p(mu, grid.project_measure(mu), p)
                worst = max(worst, distance / grid.spacing)
    return Check("grid_discretization", worst <= 1, worst)


def _check_quantile_rounding(rng):
    worst = 0.0
    for n in (16, 256, 4096):
        design = DesignPoints.equispaced(n)
        for _ in range(100):
            mu = _random_bounded_measure(rng)
            g = round_to_isotonic(mu, design, 1.0)
            distance = wasserstein_p(mu, g.pushforward(), 2)
            worst = max(worst, distance * math.sqrt(n) / 2)
    return Check("quantile_rounding", worst <= 1, worst)


_CHECKS = [
    _check_subexponential_moments,
    _check_sinc_normalizer,
    _check_sinc_derivatives,
    _check_sinc_base_derivatives,
    _check_w2_to_moments,
    _check_deconvolution_moments,
    _check_moment_matched_priors,
    _check_chi_square,
    _check_moment_surrogate,
    _check_empirical_w2,
    _check_projection_error,
    _check_grid_discretization,
    _check_quantile_rounding,
]


def diagnostics(seed=0) -> t.Iterator[Check]:
    """Run every numerical check once, in a fixed order.

    A check raising one of this package's errors counts as failed.

    Parameters
    ----------
    seed: int
        seed of the random sweeps

    Returns
    -------
    ~typing.Iterator[Check]
        one outcome per check
    """
    rng = np.random.default_rng(seed)
    for run in _CHECKS:
        name = run.__name__[len("_check_") :]
        try:
            check = run(rng)
        except Error as e:
            logger.warning("check %s raised %r", name, e)
            check = Check(name, False, np.nan)
        log = logger.info if check.passed else logger.warning
        log("%r", check)
        yield check


def report(checks):
    """Format checks as a flat ``name status observed`` table"""
    return "".join(
        "{:<28} {:<4} {:.6g}\n".format(
            c.name, "pass" if c.passed else "FAIL", c.observed
        )
        for c in checks
    )
