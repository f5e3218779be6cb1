"""The minimum Wasserstein deconvolution estimator

Given the unordered responses of an isotonic regression with known noise,
the estimator searches the measures on a grid for the one whose
noisy version is closest (in :math:`W_2`) to the empirical measure
of the responses, and rounds it back to a monotone function.
"""
import logging
import math
import typing as t
from functools import partial

import numpy as np
from scipy import optimize

from ._base import _frozen, _SlotsMixin
from .errors import InvalidInput, InvalidParameter
from .isotonic import round_to_isotonic
from .measures import (
    MASS_TOL,
    EmpiricalMeasure,
    GridMeasure,
    monotone_coupling_with_potentials,
)
from .noise import Grid

__all__ = [
    "EstimatorConfig",
    "Kernel",
    "SolverTrace",
    "DeconvResult",
    "FrankWolfe",
    "build_grid",
    "objective_and_subgradient",
    "solve_simplex",
    "estimate",
    "estimator",
]

logger = logging.getLogger(__name__)

STEP_RULES = ("exact", "classic")
# tolerances below are relative to the squared scale (V + sigma)^2
DEFAULT_GAP_TOLERANCE = 1e-6
DECREASE_TOL = 1e-14
STATIONARY_TOL = 1e-12
SIMPLEX_TOL = 1e-9
LINE_SEARCH_XTOL = 1e-12
# half-widths, in cumulative mass, of the windows over which the descent
# slopes are taken; the last one gives the exact one-sided slopes
DESCENT_WINDOWS = (1e-4, 1e-6, 1e-8, 1e-10, MASS_TOL)


class EstimatorConfig(_SlotsMixin):
    """Settings of the simplex solver

    Parameters
    ----------
    max_iterations: int
        the maximum number of iterates to visit
    fw_gap_tolerance: float or None
        stop once the Frank-Wolfe gap is at most this.
        ``None`` means ``1e-6 * (V + sigma) ** 2``.
    step_rule: str
        ``"exact"`` (line search) or ``"classic"`` (``2 / (t + 2)``)
    """

    __slots__ = ("max_iterations", "fw_gap_tolerance", "step_rule")

    def __init__(
        self, max_iterations=2000, fw_gap_tolerance=None, step_rule="exact"
    ):
        if int(max_iterations) != max_iterations or max_iterations < 1:
            raise InvalidParameter(
                "max_iterations must be a positive integer, got {!r}".format(
                    max_iterations
                )
            )
        if fw_gap_tolerance is not None and not fw_gap_tolerance >= 0:
            raise InvalidParameter(
                "fw_gap_tolerance must be nonnegative, got {!r}".format(
                    fw_gap_tolerance
                )
            )
        if step_rule not in STEP_RULES:
            raise InvalidParameter(
                "step_rule must be one of {}, got {!r}".format(
                    STEP_RULES, step_rule
                )
            )
        self.max_iterations = int(max_iterations)
        self.fw_gap_tolerance = fw_gap_tolerance
        self.step_rule = step_rule

    def gap_tolerance(self, scale):
        """The gap tolerance for a problem of the given scale"""
        if self.fw_gap_tolerance is None:
            return DEFAULT_GAP_TOLERANCE * scale**2
        return self.fw_gap_tolerance

    def to_dict(self):
        return self._asdict()

    @classmethod
    def from_dict(cls, record):
        unknown = set(record) - set(cls.__slots__)
        if unknown:
            raise InvalidInput(
                "unknown estimator settings: {}".format(sorted(unknown))
            )
        return cls(**record)

    def __repr__(self):
        return "EstimatorConfig({})".format(
            ", ".join("{}={!r}".format(*i) for i in self._asdict().items())
        )


class Kernel(_SlotsMixin):
    """Cell probabilities of the feasible grid atoms under the noise

    Parameters
    ----------
    grid: ~uncoupled.noise.Grid
        the grid
    columns: ~numpy.ndarray
        grid indices of the feasible atoms
    matrix: ~numpy.ndarray
        ``(N + 1, len(columns))``; column ``j`` is the law of
        :math:`\\Pi_A(\\alpha_j + \\xi)`
    scale: float
        :math:`V + \\sigma`
    """

    __slots__ = ("grid", "columns", "matrix", "scale")

    def __init__(self, grid, columns, matrix, scale):
        columns = _frozen(columns, dtype=np.intp)
        matrix = np.array(matrix, dtype=float)
        if matrix.shape != (grid.N + 1, columns.size):
            raise InvalidInput(
                "kernel matrix of shape {} does not match {} columns "
                "on {!r}".format(matrix.shape, columns.size, grid)
            )
        matrix.setflags(write=False)
        self.grid = grid
        self.columns = columns
        self.matrix = matrix
        self.scale = scale

    @classmethod
    def from_noise(cls, grid, noise):
        """The kernel of the feasible atoms of ``grid``"""
        columns = grid.feasible
        return cls(
            grid, columns, grid.kernel(noise, columns), grid.V + noise.sigma
        )

    @property
    def atoms(self):
        """The feasible atoms"""
        return self.grid.atoms[self.columns]

    @property
    def m(self):
        return self.columns.size

    def measure(self, w):
        """The weights ``w`` as a measure on the feasible atoms"""
        return GridMeasure(self.atoms, _check_simplex(w, self.m))

    def push(self, w):
        """The measure :math:`(\\Pi_A)_\\sharp(\\mu_w * D)` on the grid"""
        v = self.matrix @ _check_simplex(w, self.m)
        return GridMeasure(self.grid.atoms, v / v.sum())

    def __repr__(self):
        return "Kernel(m={}, scale={:.6g}, {!r})".format(
            self.m, self.scale, self.grid
        )


class SolverTrace(_SlotsMixin):
    """What the solver saw at each iterate

    Parameters
    ----------
    objectives: ~numpy.ndarray
        objective per iterate
    gaps: ~numpy.ndarray
        Frank-Wolfe gap per iterate
    terminated_by: str
        ``"gap"``, ``"stationary"`` or ``"iterations"``
    """

    __slots__ = ("objectives", "gaps", "terminated_by")

    def __init__(self, objectives, gaps, terminated_by):
        self.objectives = _frozen(objectives)
        self.gaps = _frozen(gaps)
        self.terminated_by = terminated_by

    @property
    def iterations(self):
        return self.objectives.size

    @property
    def objective(self):
        return float(self.objectives.min())

    @property
    def final_gap(self):
        return float(self.gaps[-1])

    def __repr__(self):
        return (
            "SolverTrace(iterations={}, objective={:.6g}, gap={:.3g}, "
            "terminated_by={!r})"
        ).format(
            self.iterations,
            self.objective,
            self.final_gap,
            self.terminated_by,
        )


class DeconvResult(_SlotsMixin):
    """Outcome of :func:`estimate`

    Parameters
    ----------
    mu_hat: ~uncoupled.measures.GridMeasure
        the estimated measure, on the feasible atoms
    g_hat: ~uncoupled.isotonic.IsotonicFn
        the rounded monotone function
    trace: SolverTrace
        the solver's history
    grid: ~uncoupled.noise.Grid
        the grid the measure lives on
    """

    __slots__ = ("mu_hat", "g_hat", "trace", "grid")

    def __init__(self, mu_hat, g_hat, trace, grid):
        self.mu_hat = mu_hat
        self.g_hat = g_hat
        self.trace = trace
        self.grid = grid

    @property
    def terminated_by(self):
        return self.trace.terminated_by

    def __repr__(self):
        return "DeconvResult({!r}, {!r})".format(self.g_hat, self.trace)


def build_grid(V, sigma, n):
    """The grid for ``n`` observations

    Parameters
    ----------
    V: float
        bound on the regression function
    sigma: float
        bound on the :math:`\\psi_1` norm of the noise
    n: int
        number of observations, at least 3

    Returns
    -------
    ~uncoupled.noise.Grid
        with :math:`\\alpha_0 = -(V+\\sigma)\\log n`, spacing
        :math:`(V+\\sigma)/n^{1/4}` and
        :math:`N = \\lceil 2 n^{1/4} \\log n \\rceil`

    Raises
    ------
    InvalidParameter
        if ``n < 3`` or no atom falls in :math:`[-V, V]`
    """
    if n < 3:
        raise InvalidParameter("need n >= 3 observations, got {!r}".format(n))
    if not V > 0:
        raise InvalidParameter("V must be positive, got {!r}".format(V))
    if not sigma >= 0:
        raise InvalidParameter(
            "sigma must be nonnegative, got {!r}".format(sigma)
        )
    scale, root, log_n = V + sigma, n**0.25, math.log(n)
    grid = Grid(-scale * log_n, scale / root, math.ceil(2 * root * log_n), V)
    if grid.feasible.size == 0:
        raise InvalidParameter(
            "no atom of {!r} lies in [-{V}, {V}]; n={n} is too small".format(
                grid, V=V, n=n
            )
        )
    return grid


def _check_simplex(w, m):
    w = np.asarray(w, dtype=float)
    if w.shape != (m,):
        raise InvalidInput("expected {} weights, got {!r}".format(m, w))
    if np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
        raise InvalidInput("weights {!r} are off the simplex".format(w))
    w = np.maximum(w, 0.0)
    return w / w.sum()


def objective_and_subgradient(w, kernel, pi_hat):
    """The objective :math:`W_2^2(Kw, \\hat\\pi)` and a subgradient in ``w``

    Parameters
    ----------
    w: ~numpy.ndarray
        weights on the feasible atoms, in the probability simplex
    kernel: Kernel
        the cell probabilities
    pi_hat: ~uncoupled.measures.EmpiricalMeasure
        the empirical measure of the responses

    Returns
    -------
    tuple[float, ~numpy.ndarray]
        the objective and :math:`K^\\top \\varphi`, with :math:`\\varphi`
        the dual potential of the pushed measure
    """
    coupling = monotone_coupling_with_potentials(kernel.push(w), pi_hat, 2)
    return coupling.cost, kernel.matrix.T @ coupling.phi


class _Target(_SlotsMixin):
    """Prefix sums of a sorted sample, for fast :math:`W_2^2` against it"""

    __slots__ = ("atoms", "levels", "first", "second")

    def __init__(self, atoms):
        n = atoms.size
        self.atoms = atoms
        self.levels = np.arange(n + 1) / n
        self.first = np.concatenate([[0.0], np.cumsum(atoms)]) / n
        self.second = np.concatenate([[0.0], np.cumsum(atoms**2)]) / n

    def cost(self, atoms, weights):
        """:math:`W_2^2` between a weighted sorted sample and the target"""
        cum = np.concatenate([[0.0], np.cumsum(np.maximum(weights, 0.0))])
        cum /= cum[-1]
        first = np.diff(np.interp(cum, self.levels, self.first))
        second = np.diff(np.interp(cum, self.levels, self.second))
        value = np.sum(atoms**2 * np.diff(cum) - 2 * atoms * first + second)
        return max(float(value), 0.0)

    def quantiles(self, levels):
        """Target quantiles (left-continuous) at the given levels"""
        idx = np.searchsorted(self.levels[1:], levels, side="left")
        return self.atoms[np.clip(idx, 0, self.atoms.size - 1)]


class FrankWolfe(t.Iterator[t.Tuple[float, float]]):
    """Frank-Wolfe iterations over the simplex of feasible weights.

    Each step yields ``(objective, gap)`` of the current iterate
    and then moves to the next one.
    Iteration ends when the gap is within tolerance, the iteration
    budget is spent, or no feasible direction decreases the objective
    at its exact one-sided slopes; :attr:`terminated_by` then tells which.
    When a step cannot decrease the objective otherwise, a classic
    Frank-Wolfe step is taken.

    Parameters
    ----------
    kernel: Kernel
        the cell probabilities
    pi_hat: ~uncoupled.measures.EmpiricalMeasure
        the empirical measure of the responses
    config: EstimatorConfig
        the solver settings
    """

    __slots__ = (
        "_kernel",
        "_pi_hat",
        "_target",
        "_config",
        "_tolerance",
        "_iteration",
        "_cumulative",
        "weights",
        "best",
        "terminated_by",
    )

    def __init__(self, kernel, pi_hat, config):
        self._kernel, self._pi_hat, self._config = kernel, pi_hat, config
        self._target = _Target(pi_hat.atoms)
        self._tolerance = config.gap_tolerance(kernel.scale)
        self._iteration = 0
        self._cumulative = np.cumsum(kernel.matrix, axis=0)[:-1]
        self.weights = np.full(kernel.m, 1.0 / kernel.m)
        self.best = (np.inf, self.weights, np.inf)
        self.terminated_by = None

    def __iter__(self):
        return self

    def __next__(self):
        if self.terminated_by is not None:
            raise StopIteration()
        objective = self._objective(self.weights)
        _, g = objective_and_subgradient(
            self.weights, self._kernel, self._pi_hat
        )
        gap = max(float(g @ self.weights - g.min()), 0.0)
        if objective < self.best[0]:
            self.best = (objective, self.weights, gap)
        self._iteration += 1
        logger.debug(
            "iteration %d: objective %.10g, gap %.3g",
            self._iteration,
            objective,
            gap,
        )
        if gap <= self._tolerance:
            self.terminated_by = "gap"
        elif self._iteration >= self._config.max_iterations:
            self.terminated_by = "iterations"
        elif self._config.step_rule == "classic":
            self._classic_step(g)
        elif not self._exact_step(objective, g):
            self.terminated_by = "stationary"
        return objective, gap

    def _objective(self, w):
        return self._target.cost(
            self._kernel.grid.atoms, self._kernel.matrix @ w
        )

    def _classic_step(self, g):
        gamma = 2.0 / (self._iteration + 1)
        w = (1 - gamma) * self.weights
        w[np.argmin(g)] += gamma
        self.weights = w

    def _exact_step(self, objective, g):
        toward = -self.weights.copy()
        toward[np.argmin(g)] += 1.0
        if self._line_step(toward, 1.0, objective):
            return True
        for window in DESCENT_WINDOWS:
            direction = self._descent_direction(window)
            if direction is None:
                continue
            shrinking = direction < 0
            max_step = np.min(self.weights[shrinking] / -direction[shrinking])
            # within this step every level stays inside its window
            reach = window / max(
                np.abs(self._cumulative @ direction).max(), MASS_TOL
            )
            if self._line_step(
                direction, max_step, objective, min(reach, max_step)
            ):
                return True
        if direction is None:
            # the exact one-sided slopes admit no descent
            return False
        logger.debug(
            "iteration %d: no decrease along the descent directions, "
            "taking a classic step",
            self._iteration,
        )
        self._classic_step(g)
        return True

    def _line_step(self, direction, max_step, objective, inner=None):
        atoms, matrix = self._kernel.grid.atoms, self._kernel.matrix
        base, slope = matrix @ self.weights, matrix @ direction

        def along(gamma):
            return self._target.cost(atoms, base + gamma * slope)

        found = optimize.minimize_scalar(
            along,
            bounds=(0.0, max_step),
            method="bounded",
            options={"xatol": LINE_SEARCH_XTOL},
        )
        gamma, value = found.x, found.fun
        end = along(max_step)
        if end <= value:
            gamma, value = max_step, end
        if inner is not None:
            near = along(inner)
            if near < value:
                gamma, value = inner, near
        if not value < objective - DECREASE_TOL * self._kernel.scale**2:
            return False
        w = np.maximum(self.weights + gamma * direction, 0.0)
        self.weights = w / w.sum()
        return True

    def _descent_direction(self, window):
        """The feasible direction of steepest descent, or ``None``.

        The objective is piecewise linear in the cumulative weights
        :math:`A_k` of the pushed measure, with slopes increasing in
        :math:`A_k`. Taking each slope at :math:`A_k \\pm` ``window``
        bounds it from above over the whole window, so a direction
        found with a wide window keeps descending for a sizable step.
        The bounds enter a small linear program over directions of unit
        total variation. Cells without mass may not lose any.
        """
        atoms, matrix = self._kernel.grid.atoms, self._kernel.matrix
        v = matrix @ self.weights
        levels = (np.cumsum(v) / v.sum())[:-1]
        lower, upper = atoms[:-1], atoms[1:]

        def slope(q):
            return (lower - q) ** 2 - (upper - q) ** 2

        rising = slope(self._target.quantiles(levels + window))
        falling = slope(self._target.quantiles(levels - window))
        cumulative = self._cumulative
        rows, m = cumulative.shape
        empty = matrix[v <= MASS_TOL]
        result = optimize.linprog(
            np.concatenate([np.zeros(2 * m), rising, -falling]),
            A_ub=np.vstack(
                [
                    np.concatenate([np.ones(2 * m), np.zeros(2 * rows)]),
                    np.hstack(
                        [-empty, empty, np.zeros((len(empty), 2 * rows))]
                    ),
                ]
            ),
            b_ub=np.concatenate([[2.0], np.zeros(len(empty))]),
            A_eq=np.vstack(
                [
                    np.concatenate(
                        [np.ones(m), -np.ones(m), np.zeros(2 * rows)]
                    ),
                    np.hstack(
                        [cumulative, -cumulative, -np.eye(rows), np.eye(rows)]
                    ),
                ]
            ),
            b_eq=np.zeros(rows + 1),
            bounds=(
                [(0, None)] * m
                + [(0, None) if w > 0 else (0, 0) for w in self.weights]
                + [(0, None)] * (2 * rows)
            ),
            method="highs",
        )
        threshold = -STATIONARY_TOL * self._kernel.scale**2
        if result.status != 0 or result.fun >= threshold:
            return None
        direction = result.x[:m] - result.x[m : 2 * m]
        if not np.any(direction < 0):
            return None
        return direction


def solve_simplex(kernel, pi_hat, config=None):
    """Minimize :math:`W_2^2(K w, \\hat\\pi)` over the probability simplex

    Parameters
    ----------
    kernel: Kernel
        the cell probabilities
    pi_hat: ~uncoupled.measures.EmpiricalMeasure
        the empirical measure of the responses
    config: EstimatorConfig or None
        solver settings; the defaults if not given

    Returns
    -------
    tuple[~uncoupled.measures.GridMeasure, SolverTrace]
        the best iterate as a measure on the feasible atoms,
        and the solver history
    """
    config = EstimatorConfig() if config is None else config
    solver = FrankWolfe(kernel, pi_hat, config)
    objectives, gaps = zip(*solver)
    _, weights, _ = solver.best
    trace = SolverTrace(objectives, gaps, solver.terminated_by)
    logger.info("solver finished: %r", trace)
    return kernel.measure(weights), trace


def estimate(x, y_multiset, noise, V, config=None):
    """Estimate a monotone function from uncoupled data

    Parameters
    ----------
    x: ~uncoupled.isotonic.DesignPoints
        the design points
    y_multiset: ~numpy.ndarray
        the responses, in any order; their pairing with ``x`` is ignored
    noise: ~uncoupled.noise.NoiseModel
        the known noise law
    V: float
        bound on the absolute value of the regression function
    config: EstimatorConfig or None
        solver settings

    Returns
    -------
    DeconvResult
        the estimated measure, the rounded function and the solver trace
    """
    y = np.asarray(y_multiset, dtype=float).ravel()
    if y.size != x.n:
        raise InvalidInput(
            "got {} responses for {} design points".format(y.size, x.n)
        )
    grid = build_grid(V, noise.sigma, x.n)
    kernel = Kernel.from_noise(grid, noise)
    logger.info(
        "estimating from n=%d responses on %r with %d feasible atoms",
        x.n,
        grid,
        kernel.m,
    )
    mu_hat, trace = solve_simplex(
        kernel, EmpiricalMeasure.from_samples(y), config
    )
    return DeconvResult(
        mu_hat, round_to_isotonic(mu_hat, x, V), trace, grid
    )


def estimator(**kwargs):
    """Create a version of :func:`estimate` with bound arguments.

    Parameters
    ----------
    **kwargs
        arguments to pass to :func:`estimate`

    Returns
    -------
    ~typing.Callable[..., DeconvResult]
        an :func:`estimate`-like function
    """
    return partial(estimate, **kwargs)
