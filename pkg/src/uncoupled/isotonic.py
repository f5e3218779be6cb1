"""Monotone regression functions, their pushforward measures and baselines"""
import numpy as np

from ._base import _frozen, _SlotsMixin
from .errors import InvalidInput, InvalidParameter
from .measures import EmpiricalMeasure, GridMeasure, _check_exponent, quantile

__all__ = [
    "DesignPoints",
    "IsotonicFn",
    "pushforward",
    "empirical_lp",
    "pava",
    "naive_sorted",
    "round_to_isotonic",
]

# slack on |f(x)| <= V for values produced by grid arithmetic
BOUND_TOL = 1e-9


class DesignPoints(_SlotsMixin):
    """Strictly increasing design points in :math:`[0, 1]`

    Parameters
    ----------
    x: ~numpy.ndarray
        the points
    """

    __slots__ = ("x",)

    def __init__(self, x):
        x = _frozen(x)
        if x.size == 0:
            raise InvalidInput("need at least one design point")
        if np.any(np.diff(x) <= 0):
            raise InvalidInput(
                "design points must be strictly increasing, got {!r}".format(x)
            )
        if x[0] < 0 or x[-1] > 1:
            raise InvalidInput(
                "design points must lie in [0, 1], got {!r}".format(x)
            )
        self.x = x

    @classmethod
    def equispaced(cls, n):
        """The points :math:`x_i = i/n` for :math:`i = 1, \\ldots, n`"""
        if n < 1:
            raise InvalidParameter("n must be >= 1, got {!r}".format(n))
        return cls(np.arange(1, n + 1) / n)

    @property
    def n(self):
        return self.x.size

    def __len__(self):
        return self.x.size

    def __repr__(self):
        return "DesignPoints(n={})".format(self.n)


class IsotonicFn(_SlotsMixin):
    """A nondecreasing function, known by its values at design points.

    Off the design points the function is extended piecewise-constant
    and right-continuous.

    Parameters
    ----------
    design: DesignPoints
        where the function is known
    values: ~numpy.ndarray
        nondecreasing values, one per design point
    V: float
        bound on the absolute values (``inf`` for unbounded)
    """

    __slots__ = ("design", "values", "V")

    def __init__(self, design, values, V=np.inf):
        values = _frozen(values)
        if not isinstance(design, DesignPoints):
            raise InvalidInput("not design points: {!r}".format(design))
        if values.shape != design.x.shape:
            raise InvalidInput(
                "got {} values for {} design points".format(
                    values.size, design.n
                )
            )
        if not V > 0:
            raise InvalidParameter(
                "bound V must be positive, got {!r}".format(V)
            )
        if np.any(np.diff(values) < 0):
            raise InvalidInput(
                "values must be nondecreasing, got {!r}".format(values)
            )
        if np.abs(values).max() > V + BOUND_TOL * max(1.0, V):
            raise InvalidInput(
                "values exceed the bound V={!r}: {!r}".format(V, values)
            )
        self.design = design
        self.values = values
        self.V = V

    def __call__(self, x):
        idx = np.searchsorted(self.design.x, x, side="right") - 1
        result = self.values[np.clip(idx, 0, self.values.size - 1)]
        return float(result) if np.ndim(result) == 0 else result

    def pushforward(self):
        """The empirical measure of the values, see :func:`pushforward`"""
        return EmpiricalMeasure(self.values)

    def __repr__(self):
        return "IsotonicFn(n={}, V={}, range=[{:.4g}, {:.4g}])".format(
            self.design.n, self.V, self.values[0], self.values[-1]
        )


def pushforward(f):
    """The pushforward measure :math:`\\frac1n\\sum_i \\delta_{f(x_i)}`

    Parameters
    ----------
    f: IsotonicFn
        the function

    Returns
    -------
    EmpiricalMeasure
        one atom per design point; sorted since ``f`` is nondecreasing
    """
    return f.pushforward()


def empirical_lp(f, g, p):
    """The empirical :math:`\\ell_p` distance of two functions

    Parameters
    ----------
    f: IsotonicFn
        the first function
    g: IsotonicFn
        the second function, on the same design points
    p: float
        the order, at least 1

    Returns
    -------
    float
        :math:`(\\frac1n \\sum_i |f(x_i) - g(x_i)|^p)^{1/p}`
    """
    _check_exponent(p)
    if f.design != g.design:
        raise InvalidInput(
            "design points differ: {!r} and {!r}".format(f.design, g.design)
        )
    return float(np.mean(np.abs(f.values - g.values) ** p)) ** (1.0 / p)


def _check_responses(x, y):
    y = np.asarray(y, dtype=float).ravel()
    if y.size != x.n:
        raise InvalidInput(
            "got {} responses for {} design points".format(y.size, x.n)
        )
    if not np.all(np.isfinite(y)):
        raise InvalidInput("responses must be finite")
    return y


def _bounded(x, values, V):
    if V is None:
        return IsotonicFn(x, values)
    return IsotonicFn(x, np.clip(values, -V, V), V)


def _pool_adjacent_violators(y):
    sums, counts = [], []
    for value in y:
        total, count = value, 1
        while sums and sums[-1] / counts[-1] > total / count:
            total += sums.pop()
            count += counts.pop()
        sums.append(total)
        counts.append(count)
    return np.repeat(np.array(sums) / np.array(counts), counts)


def pava(x, y, V=None):
    """Least-squares isotonic regression of coupled data

    Parameters
    ----------
    x: DesignPoints
        the design points
    y: ~numpy.ndarray
        responses, ``y[i]`` observed at ``x[i]``
    V: float or None
        if given, the fitted values are clipped to :math:`[-V, V]`

    Returns
    -------
    IsotonicFn
        the projection of ``y`` onto nondecreasing sequences
    """
    return _bounded(x, _pool_adjacent_violators(_check_responses(x, y)), V)


def naive_sorted(x, y_multiset, V=None):
    """Match the sorted responses to the sorted design points

    Parameters
    ----------
    x: DesignPoints
        the design points
    y_multiset: ~numpy.ndarray
        responses in any order
    V: float or None
        if given, the values are clipped to :math:`[-V, V]`

    Returns
    -------
    IsotonicFn
        :math:`\\hat g(x_{(i)}) = y_{(i)}`
    """
    y = _check_responses(x, y_multiset)
    return _bounded(x, np.sort(y, kind="stable"), V)


def round_to_isotonic(mu, design, V):
    """Round a measure to a function by evaluating its quantiles at
    :math:`i/n`.

    Parameters
    ----------
    mu: GridMeasure
        a measure supported in :math:`[-V, V]`
    design: DesignPoints
        the design points
    V: float
        the bound

    Returns
    -------
    IsotonicFn
        with values :math:`Q_\\mu(i/n)`
    """
    if not isinstance(mu, GridMeasure):
        raise InvalidInput("not a grid measure: {!r}".format(mu))
    support = mu.atoms[mu.weights > 0]
    if np.abs(support).max() > V + BOUND_TOL * max(1.0, V):
        raise InvalidInput(
            "measure {!r} is not supported in [-{V}, {V}]".format(mu, V=V)
        )
    levels = np.arange(1, design.n + 1) / design.n
    return IsotonicFn(design, np.clip(quantile(mu, levels), -V, V), V)
