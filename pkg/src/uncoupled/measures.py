"""Univariate probability measures and exact one-dimensional transport

Every distance in this module is computed from the quantile representation

.. math::

    W_p^p(\\mu, \\nu) = \\int_0^1 |Q_\\mu(u) - Q_\\nu(u)|^p \\, du

by sweeping once over the merged partition of :math:`[0, 1]`
into cumulative weights of both measures.
"""
import numpy as np

from ._base import _frozen, _SlotsMixin
from .errors import InvalidInput, InvalidParameter

__all__ = [
    "EmpiricalMeasure",
    "GridMeasure",
    "CouplingWithPotentials",
    "wasserstein_p",
    "quantile",
    "monotone_coupling_with_potentials",
]

# cumulative weights closer than this are treated as one breakpoint
MASS_TOL = 1e-12


class EmpiricalMeasure(_SlotsMixin):
    """Uniform weights on a nondecreasing sequence of atoms.

    Parameters
    ----------
    atoms: ~numpy.ndarray
        Sorted (nondecreasing) atoms. Repeated values are allowed;
        each atom carries mass ``1/n``.
    """

    __slots__ = ("atoms",)

    def __init__(self, atoms):
        atoms = _frozen(atoms)
        if atoms.size == 0:
            raise InvalidInput("empirical measure needs at least one atom")
        if not np.all(np.isfinite(atoms)):
            raise InvalidInput("atoms must be finite, got {!r}".format(atoms))
        if np.any(np.diff(atoms) < 0):
            raise InvalidInput(
                "atoms must be sorted nondecreasing, got {!r}".format(atoms)
            )
        self.atoms = atoms

    @classmethod
    def from_samples(cls, values):
        """Build the empirical measure of unordered samples"""
        return cls(np.sort(np.asarray(values, dtype=float).ravel()))

    @property
    def n(self):
        return self.atoms.size

    size = n

    @property
    def weights(self):
        return np.full(self.n, 1.0 / self.n)

    def cdf(self, t):
        """Mass of the atoms at or below ``t``"""
        return np.searchsorted(self.atoms, t, side="right") / self.n

    def __repr__(self):
        return "EmpiricalMeasure(n={}, range=[{:.4g}, {:.4g}])".format(
            self.n, self.atoms[0], self.atoms[-1]
        )


class GridMeasure(_SlotsMixin):
    """Nonnegative weights on a strictly increasing set of atoms.

    Parameters
    ----------
    atoms: ~numpy.ndarray
        Strictly increasing atoms.
    weights: ~numpy.ndarray
        Nonnegative weights summing to one. Zero weights are allowed.
    """

    __slots__ = ("atoms", "weights")

    def __init__(self, atoms, weights):
        atoms, weights = _frozen(atoms), _frozen(weights)
        if atoms.size == 0:
            raise InvalidInput("grid measure needs at least one atom")
        if atoms.shape != weights.shape:
            raise InvalidInput(
                "got {} atoms but {} weights".format(atoms.size, weights.size)
            )
        if np.any(np.diff(atoms) <= 0):
            raise InvalidInput(
                "atoms must be strictly increasing, got {!r}".format(atoms)
            )
        if np.any(weights < 0):
            raise InvalidInput(
                "weights must be nonnegative, got {!r}".format(weights)
            )
        if abs(weights.sum() - 1.0) > MASS_TOL:
            raise InvalidInput(
                "weights must sum to 1, got {!r}".format(weights.sum())
            )
        self.atoms = atoms
        self.weights = weights

    @classmethod
    def from_atoms(cls, atoms, weights):
        """Build a measure from atoms in any order, summing tied weights"""
        support, inverse = np.unique(
            np.asarray(atoms, dtype=float), return_inverse=True
        )
        merged = np.bincount(
            inverse.ravel(), weights=np.asarray(weights, dtype=float).ravel()
        )
        return cls(support, merged)

    @classmethod
    def point_mass(cls, at):
        return cls([at], [1.0])

    @property
    def size(self):
        return self.atoms.size

    def cdf(self, t):
        """Mass of the atoms at or below ``t``"""
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        return cw[np.searchsorted(self.atoms, t, side="right")]

    def __repr__(self):
        return "GridMeasure(size={}, range=[{:.4g}, {:.4g}])".format(
            self.size, self.atoms[0], self.atoms[-1]
        )


class CouplingWithPotentials(_SlotsMixin):
    """A monotone transport plan together with Kantorovich potentials.

    Parameters
    ----------
    rows: ~numpy.ndarray
        Index into the first measure's atoms, per coupled pair.
    cols: ~numpy.ndarray
        Index into the second measure's atoms, per coupled pair.
    masses: ~numpy.ndarray
        Mass carried by each pair.
    phi: ~numpy.ndarray
        Potential per atom of the first measure (``phi[0] == 0``).
    psi: ~numpy.ndarray
        Potential per atom of the second measure.
    p: float
        The cost exponent of :math:`|a - b|^p`.
    cost: float
        The primal transport cost :math:`W_p^p`.
    """

    __slots__ = ("rows", "cols", "masses", "phi", "psi", "p", "cost")

    def __init__(self, rows, cols, masses, phi, psi, p, cost):
        self.rows = _frozen(rows, dtype=np.intp)
        self.cols = _frozen(cols, dtype=np.intp)
        self.masses = _frozen(masses)
        self.phi = _frozen(phi)
        self.psi = _frozen(psi)
        self.p = p
        self.cost = cost

    @property
    def pairs(self):
        """The coupling as ``(i, j, mass)`` triples in quantile order"""
        return [
            (int(i), int(j), float(m))
            for i, j, m in zip(self.rows, self.cols, self.masses)
        ]

    def __repr__(self):
        return "CouplingWithPotentials(pairs={}, p={}, cost={:.6g})".format(
            self.rows.size, self.p, self.cost
        )


def _check_measure(mu):
    if not isinstance(mu, (EmpiricalMeasure, GridMeasure)):
        raise InvalidInput("not a measure: {!r}".format(mu))


def _check_exponent(p):
    if not p >= 1:
        raise InvalidParameter("exponent p must be >= 1, got {!r}".format(p))


def _cumulative(weights):
    cw = np.cumsum(weights)
    cw /= cw[-1]
    cw[-1] = 1.0
    return cw


def _sweep(mu, nu):
    """Rows, columns and masses of the monotone coupling of two measures.

    Consecutive segments of the merged partition of [0, 1] differ
    in the row, the column, or both.
    """
    a_cw, b_cw = _cumulative(mu.weights), _cumulative(nu.weights)
    breaks = np.sort(np.concatenate([a_cw, b_cw]))
    breaks = breaks[np.diff(breaks, prepend=0.0) > MASS_TOL]
    breaks[-1] = 1.0
    rows = np.searchsorted(a_cw, breaks - MASS_TOL, side="left")
    cols = np.searchsorted(b_cw, breaks - MASS_TOL, side="left")
    return (
        np.minimum(rows, a_cw.size - 1),
        np.minimum(cols, b_cw.size - 1),
        np.diff(breaks, prepend=0.0),
    )


def wasserstein_p(mu, nu, p):
    """The Wasserstein-p distance between two discrete measures

    Parameters
    ----------
    mu: EmpiricalMeasure or GridMeasure
        The first measure
    nu: EmpiricalMeasure or GridMeasure
        The second measure
    p: float
        The order, at least 1

    Returns
    -------
    float
        :math:`W_p(\\mu, \\nu)`
    """
    _check_exponent(p)
    _check_measure(mu)
    _check_measure(nu)
    rows, cols, masses = _sweep(mu, nu)
    cost = masses @ np.abs(mu.atoms[rows] - nu.atoms[cols]) ** p
    return float(cost) ** (1.0 / p)


def quantile(mu, u):
    """The left-continuous quantile function
    :math:`Q(u) = \\inf\\{t : F(t) \\ge u\\}`

    Parameters
    ----------
    mu: EmpiricalMeasure or GridMeasure
        The measure
    u: float or ~numpy.ndarray
        Level(s) in ``(0, 1]``

    Returns
    -------
    float or ~numpy.ndarray
        The quantile(s), shaped like ``u``
    """
    _check_measure(mu)
    levels = np.asarray(u, dtype=float)
    if np.any(~(levels > 0)) or np.any(~(levels <= 1)):
        raise InvalidParameter(
            "quantile level must lie in (0, 1], got {!r}".format(u)
        )
    cw = _cumulative(mu.weights)
    idx = np.searchsorted(
        cw, np.maximum(levels - MASS_TOL, 0.5 * levels), side="left"
    )
    result = mu.atoms[np.minimum(idx, cw.size - 1)]
    return float(result) if result.ndim == 0 else result


def monotone_coupling_with_potentials(mu, nu, p):
    """The monotone coupling of two measures, with dual potentials.

    Potentials are built along the coupling in quantile order, so that
    :math:`\\varphi_i + \\psi_j = |a_i - b_j|^p` on every coupled pair.
    Where both partitions break at the same level the potential increment
    is placed at the midpoint of its feasible range.
    Atoms without mass get their c-transform potential.

    Parameters
    ----------
    mu: EmpiricalMeasure or GridMeasure
        The first measure (rows)
    nu: EmpiricalMeasure or GridMeasure
        The second measure (columns)
    p: float
        The cost exponent, at least 1

    Returns
    -------
    CouplingWithPotentials
        The plan and potentials, normalized to ``phi[0] == 0``
    """
    _check_exponent(p)
    _check_measure(mu)
    _check_measure(nu)
    a, b = mu.atoms, nu.atoms
    rows, cols, masses = _sweep(mu, nu)

    def cost(i, j):
        return np.abs(a[i] - b[j]) ** p

    prev_r, prev_c, next_r, next_c = rows[:-1], cols[:-1], rows[1:], cols[1:]
    # bounds on the row increment from the two neighbouring cells
    high = cost(next_r, prev_c) - cost(prev_r, prev_c)
    low = cost(next_r, next_c) - cost(prev_r, next_c)
    step = np.where(next_c != prev_c, 0.5 * (high + low), high)
    step = np.where(next_r != prev_r, step, 0.0)
    phi_path = np.concatenate([[0.0], np.cumsum(step)])

    phi = np.full(a.size, np.nan)
    psi = np.full(b.size, np.nan)
    phi[rows] = phi_path
    psi[cols] = cost(rows, cols) - phi_path

    visited = ~np.isnan(phi)
    empty_cols = np.isnan(psi)
    if empty_cols.any():
        psi[empty_cols] = np.min(
            np.abs(a[visited, None] - b[None, empty_cols]) ** p
            - phi[visited, None],
            axis=0,
        )
    empty_rows = ~visited
    if empty_rows.any():
        phi[empty_rows] = np.min(
            np.abs(a[empty_rows, None] - b[None, :]) ** p - psi[None, :],
            axis=1,
        )
    shift = phi[0]
    return CouplingWithPotentials(
        rows,
        cols,
        masses,
        phi - shift,
        psi + shift,
        p,
        float(masses @ cost(rows, cols)),
    )
