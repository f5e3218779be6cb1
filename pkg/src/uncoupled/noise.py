"""Known noise laws and the projected-convolution kernel on the grid

Noise is described by a named family and one scale parameter:

- ``gaussian(sd)``, sigma is ``sd / u`` with ``u`` the root of
  ``u**2 / 2 + log Phi(u) = 0``
- ``laplace(scale)``, sigma is ``2 * scale``
- ``uniform(half_width)``, sigma is ``2 * half_width``
- ``point-mass``, sigma is ``0``
"""
import logging
from functools import lru_cache

import numpy as np
from scipy import integrate, optimize, special, stats

from ._base import _SlotsMixin
from .errors import InvalidInput, InvalidParameter, UnsupportedFamily
from .isotonic import pushforward
from .measures import EmpiricalMeasure, GridMeasure, quantile, wasserstein_p

__all__ = [
    "NoiseModel",
    "Grid",
    "make_noise",
    "psi1_norm",
    "cell_probabilities",
    "convolve_pushforward",
    "discretize",
    "convolved_distance",
]

logger = logging.getLogger(__name__)

# quadrature tolerance inside the psi_1 bisection
PSI1_QUAD_TOL = 1e-10
PSI1_XTOL = 1e-9
PSI1_SLACK = 1e-12
# relative slack when matching atoms to the grid
GRID_TOL = 1e-9


class _Family(_SlotsMixin):
    """How one named noise family is built and what is known about it"""

    __slots__ = (
        "name",
        "param",
        "law",
        "raw_moment",
        "abs_moment",
        "sigma",
        "psi1_lower",
    )

    def __init__(
        self, name, param, law, raw_moment, abs_moment, sigma, psi1_lower
    ):
        self.name = name
        self.param = param
        self.law = law
        self.raw_moment = raw_moment
        self.abs_moment = abs_moment
        self.sigma = sigma
        self.psi1_lower = psi1_lower


def _gaussian_moment(sd, m):
    if m % 2:
        return 0.0
    return float(special.factorial2(m - 1, exact=True)) * sd**m if m else 1.0


def _gaussian_abs_moment(sd, p):
    return (
        sd**p * 2 ** (p / 2) * special.gamma((p + 1) / 2) / np.sqrt(np.pi)
    )


def _laplace_moment(b, m):
    if m % 2:
        return 0.0
    return float(special.factorial(m, exact=True)) * b**m


@lru_cache(maxsize=None)
def _gaussian_psi1_root():
    """The root ``u`` of :math:`u^2/2 + \\log\\Phi(u) = 0`

    For :math:`X \\sim N(0, s^2)`,
    :math:`E e^{|X|/t} = 2 e^{s^2/2t^2} \\Phi(s/t)`,
    which equals two at :math:`t = s / u`.
    """
    return optimize.brentq(
        lambda u: u**2 / 2 + special.log_ndtr(u), 0.1, 2.0, xtol=1e-15
    )


def _gaussian_sigma(sd):
    # nudged up to stay a bound
    return sd / _gaussian_psi1_root() * (1 + PSI1_SLACK)


def _point_mass_law(_):
    return stats.rv_discrete(values=([0], [1.0]))


_FAMILIES = {
    f.name: f
    for f in [
        _Family(
            "gaussian",
            "sd",
            law=lambda sd: stats.norm(scale=sd),
            raw_moment=_gaussian_moment,
            abs_moment=_gaussian_abs_moment,
            sigma=_gaussian_sigma,
            psi1_lower=0.25,
        ),
        _Family(
            "laplace",
            "scale",
            law=lambda b: stats.laplace(scale=b),
            raw_moment=_laplace_moment,
            abs_moment=lambda b, p: special.gamma(p + 1) * b**p,
            # E exp(|X|/t) = 1 / (1 - scale/t) for t > scale
            sigma=lambda b: 2.0 * b,
            psi1_lower=1.01,
        ),
        _Family(
            "uniform",
            "half_width",
            law=lambda a: stats.uniform(loc=-a, scale=2 * a),
            raw_moment=lambda a, m: 0.0 if m % 2 else a**m / (m + 1),
            abs_moment=lambda a, p: a**p / (p + 1),
            sigma=lambda a: 2.0 * a,
            psi1_lower=None,
        ),
        _Family(
            "point-mass",
            None,
            law=_point_mass_law,
            raw_moment=lambda _, m: 1.0 if m == 0 else 0.0,
            abs_moment=lambda _, p: 1.0 if p == 0 else 0.0,
            sigma=lambda _: 0.0,
            psi1_lower=None,
        ),
    ]
}


def _lookup(family):
    try:
        return _FAMILIES[family]
    except KeyError:
        raise UnsupportedFamily(
            "noise family {!r} not registered, choose from {}".format(
                family, sorted(_FAMILIES)
            )
        )


def _psi1_from_law(law, lower):
    """Bisection on ``t`` for :math:`E e^{|X|/t} = 2` (symmetric laws)

    The integrand is formed in log space so that
    :math:`e^{x/t}` never overflows against a vanishing density.
    """
    top = law.support()[1]

    def excess(t):
        half, _ = integrate.quad(
            lambda x: np.exp(x / t + law.logpdf(x)),
            0.0,
            top,
            epsabs=PSI1_QUAD_TOL,
            epsrel=PSI1_QUAD_TOL,
            limit=200,
        )
        return 2.0 * half - 2.0

    upper = 2.0 * lower
    while excess(upper) > 0:
        upper *= 2.0
    root = optimize.bisect(excess, lower, upper, xtol=PSI1_XTOL)
    # bisect is within xtol of the root: round up to stay a bound
    return root + PSI1_XTOL


class NoiseModel(_SlotsMixin):
    """A known, centered noise law

    Parameters
    ----------
    family: str
        one of ``gaussian``, ``laplace``, ``uniform``, ``point-mass``
    scale: float
        the family's parameter (ignored for ``point-mass``)
    sigma: float or None
        upper bound on the :math:`\\psi_1` norm.
        Computed from the family when not given.
    """

    __slots__ = ("family", "scale", "sigma")

    def __init__(self, family, scale=0.0, sigma=None):
        info = _lookup(family)
        if info.param is None:
            scale = 0.0
        elif not scale > 0:
            raise InvalidParameter(
                "{} noise needs {} > 0, got {!r}".format(
                    family, info.param, scale
                )
            )
        scale = float(scale)
        if sigma is None:
            sigma = info.sigma(scale)
        elif not sigma >= 0:
            raise InvalidParameter(
                "sigma must be nonnegative, got {!r}".format(sigma)
            )
        self.family = family
        self.scale = scale
        self.sigma = float(sigma)

    @property
    def law(self):
        """The frozen :mod:`scipy.stats` distribution"""
        return _lookup(self.family).law(self.scale)

    @property
    def is_point_mass(self):
        return _lookup(self.family).param is None

    def cdf(self, t):
        """:math:`P(\\xi \\le t)`"""
        return self.law.cdf(t)

    def cdf_left(self, t):
        """:math:`P(\\xi < t)`"""
        return self.law.cdf(np.nextafter(t, -np.inf))

    def density(self, t):
        if self.is_point_mass:
            raise UnsupportedFamily("point-mass noise has no density")
        return self.law.pdf(t)

    def quantile(self, u):
        return self.law.ppf(u)

    def sample(self, size, rng):
        """Draw ``size`` samples from the numpy generator ``rng``"""
        return np.asarray(
            self.law.rvs(size=size, random_state=rng), dtype=float
        )

    def moment(self, m):
        """The raw moment :math:`E\\xi^m`, exactly"""
        return _lookup(self.family).raw_moment(self.scale, int(m))

    def abs_moment(self, p):
        """The absolute moment :math:`E|\\xi|^p`, exactly"""
        return float(_lookup(self.family).abs_moment(self.scale, p))

    def to_dict(self):
        record = {"family": self.family}
        param = _lookup(self.family).param
        if param is not None:
            record[param] = self.scale
        return record

    @classmethod
    def from_dict(cls, record):
        """Build a model from a ``{"family": ..., <param>: ...}`` record"""
        record = dict(record)
        try:
            family = record.pop("family")
        except KeyError:
            raise InvalidInput(
                "noise record {!r} has no family".format(record)
            )
        return make_noise(family, record)

    def __repr__(self):
        param = _lookup(self.family).param
        if param is None:
            return "NoiseModel(point-mass)"
        return "NoiseModel({}, {}={}, sigma={:.6g})".format(
            self.family, param, self.scale, self.sigma
        )


def make_noise(family, params=None):
    """Build a noise model from a family name and its parameters

    Parameters
    ----------
    family: str
        the family name
    params: ~typing.Mapping[str, float] or None
        e.g. ``{"sd": 0.3}`` for the gaussian family

    Returns
    -------
    NoiseModel
        with its sigma bound computed

    Raises
    ------
    UnsupportedFamily
        if the family is unknown
    InvalidParameter
        if the parameter is missing or not positive
    """
    info = _lookup(family)
    params = dict(params or {})
    if info.param is None:
        if params:
            raise InvalidParameter(
                "point-mass noise takes no parameters, got {!r}".format(params)
            )
        return NoiseModel(family)
    if set(params) != {info.param}:
        raise InvalidParameter(
            "{} noise needs exactly the parameter {!r}, got {!r}".format(
                family, info.param, params
            )
        )
    return NoiseModel(family, params[info.param])


def psi1_norm(noise):
    """The :math:`\\psi_1` (Orlicz) norm of a noise law, numerically

    The norm is the root in ``t`` of :math:`E e^{|\\xi|/t} = 2`, found by
    bisection with the expectation computed by adaptive quadrature.
    The result is rounded up by the bisection tolerance.
    """
    info = _lookup(noise.family)
    if info.param is None:
        return 0.0
    lower = info.psi1_lower if info.psi1_lower is not None else 0.25
    norm = _psi1_from_law(noise.law, lower * noise.scale)
    logger.info("psi_1 norm of %r is %.9g", noise, norm)
    return norm


class Grid(_SlotsMixin):
    """The quantization :math:`\\alpha_i = \\alpha_0 + i \\cdot s`,
    :math:`0 \\le i \\le N`.

    Atoms are computed from ``(alpha0, spacing, N)`` on demand.

    Parameters
    ----------
    alpha0: float
        the first atom
    spacing: float
        distance between atoms
    N: int
        index of the last atom
    V: float
        the bound defining the feasible atoms
    """

    __slots__ = ("alpha0", "spacing", "N", "V")

    def __init__(self, alpha0, spacing, N, V=np.inf):
        if not spacing > 0:
            raise InvalidParameter(
                "spacing must be positive, got {!r}".format(spacing)
            )
        if N < 1:
            raise InvalidParameter("N must be >= 1, got {!r}".format(N))
        self.alpha0 = float(alpha0)
        self.spacing = float(spacing)
        self.N = int(N)
        self.V = V

    @property
    def atoms(self):
        return self.alpha0 + self.spacing * np.arange(self.N + 1)

    @property
    def feasible(self):
        """Indices of the atoms inside :math:`[-V, V]`"""
        bound = self.V + GRID_TOL * self.spacing
        return np.flatnonzero(np.abs(self.atoms) <= bound)

    def project(self, x):
        """:math:`\\Pi_A`: the largest atom at or below ``x``,
        or :math:`\\alpha_0` below the grid"""
        idx = np.searchsorted(self.atoms, x, side="right") - 1
        result = self.atoms[np.clip(idx, 0, self.N)]
        return float(result) if np.ndim(result) == 0 else result

    def project_feasible(self, x):
        """The nearest atom of :math:`A \\cap [-V, V]`"""
        support = self.atoms[self.feasible]
        if support.size == 0:
            raise InvalidInput("no grid atom lies in [-V, V]")
        idx = np.searchsorted(support, x)
        lo = support[np.clip(idx - 1, 0, support.size - 1)]
        hi = support[np.clip(idx, 0, support.size - 1)]
        result = np.where(np.abs(x - lo) <= np.abs(hi - x), lo, hi)
        return float(result) if np.ndim(result) == 0 else result

    def project_measure(self, mu):
        """:math:`(\\Pi_{A,V})_\\sharp\\mu`, a measure on the feasible atoms

        For ``mu`` on :math:`[-V, V]` every atom moves by at most one
        spacing, so the two measures are within one spacing in any
        :math:`W_p`.
        """
        return GridMeasure.from_atoms(
            self.project_feasible(mu.atoms), mu.weights
        )

    def index_of(self, atoms):
        """Grid indices of the given atoms

        Raises
        ------
        InvalidInput
            if an atom is not on the grid
        """
        atoms = np.asarray(atoms, dtype=float)
        idx = np.rint((atoms - self.alpha0) / self.spacing).astype(np.intp)
        off = (idx < 0) | (idx > self.N)
        off |= ~off & (
            np.abs(self.atoms[np.clip(idx, 0, self.N)] - atoms)
            > GRID_TOL * self.spacing
        )
        if off.any():
            raise InvalidInput(
                "atoms {!r} are not on the grid".format(atoms[off])
            )
        return idx

    def kernel(self, noise, columns=None):
        """Cell probabilities of the given grid atoms, as columns

        Parameters
        ----------
        noise: NoiseModel
            the noise law
        columns: ~numpy.ndarray or None
            grid indices; the feasible atoms by default

        Returns
        -------
        ~numpy.ndarray
            an ``(N + 1, len(columns))`` column-stochastic matrix
        """
        atoms = self.atoms
        columns = self.feasible if columns is None else columns
        inner = noise.cdf_left(atoms[1:, None] - atoms[None, columns])
        edges = np.ones((1, inner.shape[1]))
        return np.maximum(
            np.diff(np.vstack([0.0 * edges, inner, edges]), axis=0), 0.0
        )

    def __repr__(self):
        return "Grid(alpha0={:.6g}, spacing={:.6g}, N={}, V={})".format(
            self.alpha0, self.spacing, self.N, self.V
        )


def cell_probabilities(noise, a, grid):
    """The law of :math:`\\Pi_A(a + \\xi)` over the grid atoms

    Parameters
    ----------
    noise: NoiseModel
        the noise law
    a: float
        the shift
    grid: Grid
        the grid

    Returns
    -------
    ~numpy.ndarray
        ``N + 1`` weights summing to one
    """
    inner = noise.cdf_left(grid.atoms[1:] - a)
    return np.maximum(np.diff(np.concatenate([[0.0], inner, [1.0]])), 0.0)


def convolve_pushforward(mu, noise, grid):
    """The measure :math:`(\\Pi_A)_\\sharp(\\mu * D)`

    Parameters
    ----------
    mu: GridMeasure
        supported on grid atoms inside :math:`[-V, V]`
    noise: NoiseModel
        the noise law
    grid: Grid
        the grid

    Returns
    -------
    GridMeasure
        on all grid atoms
    """
    idx = grid.index_of(mu.atoms)
    if np.any(np.abs(grid.atoms[idx]) > grid.V + GRID_TOL * grid.spacing):
        raise InvalidInput(
            "{!r} has atoms outside [-{V}, {V}]".format(mu, V=grid.V)
        )
    weights = grid.kernel(noise, idx) @ mu.weights
    return GridMeasure(grid.atoms, weights / weights.sum())


def discretize(noise, size):
    """A ``size``-atom quantile discretization of a noise law

    Atom ``i`` is the quantile at level ``(i + 1/2) / size``.
    Tied quantiles (e.g. of the point mass) are merged.
    """
    if size < 1:
        raise InvalidParameter("size must be >= 1, got {!r}".format(size))
    levels = (np.arange(size) + 0.5) / size
    return GridMeasure.from_atoms(
        noise.quantile(levels), np.full(size, 1.0 / size)
    )


def convolved_distance(f, g, noise, draws, rng):
    """Monte Carlo estimate of :math:`W_2(\\pi_f * D, \\pi_g * D)`

    Both convolutions are sampled with common uniforms and noise draws,
    then compared through their empirical measures.

    Parameters
    ----------
    f: IsotonicFn
        the first function
    g: IsotonicFn
        the second function
    noise: NoiseModel
        the noise law
    draws: int
        number of Monte Carlo samples
    rng: ~numpy.random.Generator
        the random stream

    Returns
    -------
    float
        the estimated distance
    """
    levels = 1.0 - rng.random(draws)
    xi = noise.sample(draws, rng)
    return wasserstein_p(
        EmpiricalMeasure.from_samples(
            quantile(pushforward(f), levels) + xi
        ),
        EmpiricalMeasure.from_samples(
            quantile(pushforward(g), levels) + xi
        ),
        2,
    )
