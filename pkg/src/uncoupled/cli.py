"""Command-line harness: synthetic data, benchmarks and diagnostics

Run ``uncoupled --help`` for the subcommands.
"""
import argparse
import csv
import json
import logging
import math
import sys
import time
import typing as t
from concurrent.futures import ProcessPoolExecutor
from contextlib import nullcontext
from itertools import groupby

import numpy as np

from ._base import _SlotsMixin
from .deconv import EstimatorConfig, estimate
from .errors import Error, InvalidInput, InvalidParameter
from .isotonic import (
    DesignPoints,
    IsotonicFn,
    empirical_lp,
    naive_sorted,
    pava,
)
from .moments import diagnostics, report
from .noise import NoiseModel, make_noise

__all__ = [
    "RegressionSpec",
    "ExperimentConfig",
    "BenchmarkRow",
    "generate_dataset",
    "run_benchmark",
    "emit",
    "read_rows",
    "diagnose",
    "main",
]

logger = logging.getLogger(__name__)

METHODS = ("deconv", "naive_sorted", "pava_coupled")
CSV_FIELDS = ("n", "method", "p", "rep", "error", "seconds", "seed")
EXIT_OK, EXIT_INVALID, EXIT_DIAGNOSTICS = 0, 1, 2


def _linear(x, V, low=None, high=None):
    low = -V if low is None else low
    high = V if high is None else high
    return low + (high - low) * x


def _step(x, V, pieces=4):
    if int(pieces) != pieces or pieces < 2:
        raise InvalidParameter(
            "a step function needs >= 2 pieces, got {!r}".format(pieces)
        )
    level = np.minimum(np.floor(pieces * x), pieces - 1)
    return -V + 2 * V * level / (pieces - 1)


def _clipped_exponential(x, V, rate=4.0):
    return np.expm1(rate * x) - V


_REGRESSIONS = {
    "constant": lambda x, V, value=0.0: np.full_like(x, value),
    "linear": _linear,
    "step": _step,
    "clipped-exponential": _clipped_exponential,
}


class RegressionSpec(_SlotsMixin):
    """A named nondecreasing regression function on :math:`[0, 1]`

    Values are clipped to :math:`[-V, V]`.

    Parameters
    ----------
    family: str
        one of ``constant`` (``value``), ``linear`` (``low``, ``high``;
        :math:`-V` to :math:`V` by default), ``step`` (``pieces``
        equal steps from :math:`-V` to :math:`V`) and
        ``clipped-exponential`` (:math:`e^{rate \\cdot x} - 1 - V`)
    params: ~typing.Mapping[str, float]
        the family's parameters
    """

    __slots__ = ("family", "params")

    def __init__(self, family="linear", params=None):
        if family not in _REGRESSIONS:
            raise InvalidParameter(
                "unknown regression family {!r}, choose from {}".format(
                    family, sorted(_REGRESSIONS)
                )
            )
        self.family = family
        self.params = dict(params or {})

    def function(self, design, V):
        """The function at the given design points"""
        try:
            values = _REGRESSIONS[self.family](design.x, V, **self.params)
        except TypeError:
            raise InvalidParameter(
                "bad parameters for {}: {!r}".format(self.family, self.params)
            )
        values = np.clip(values, -V, V)
        if np.any(np.diff(values) < 0):
            raise InvalidParameter("{!r} is not nondecreasing".format(self))
        return IsotonicFn(design, values, V)

    def to_dict(self):
        return {"family": self.family, **self.params}

    @classmethod
    def from_dict(cls, record):
        record = dict(record)
        return cls(record.pop("family", "linear"), record)

    def __repr__(self):
        return "RegressionSpec({!r}, {!r})".format(self.family, self.params)


class ExperimentConfig(_SlotsMixin):
    """Settings of a benchmark run

    Parameters
    ----------
    regression: RegressionSpec
        the true regression function
    V: float
        bound on the regression function, known to the estimator
    noise: ~uncoupled.noise.NoiseModel
        the noise law
    sizes: ~typing.Sequence[int]
        sample sizes, each at least 3
    replications: int
        datasets per sample size
    seed: int
        replication ``r`` draws from the stream seeded with ``seed + r``
    p_list: ~typing.Sequence[float]
        orders of the reported :math:`\\ell_p` errors
    estimator: ~uncoupled.deconv.EstimatorConfig
        solver settings
    """

    __slots__ = (
        "regression",
        "V",
        "noise",
        "sizes",
        "replications",
        "seed",
        "p_list",
        "estimator",
    )

    def __init__(
        self,
        regression=None,
        V=1.0,
        noise=None,
        sizes=(100, 1000),
        replications=5,
        seed=0,
        p_list=(1, 2),
        estimator=None,
    ):
        if not V > 0:
            raise InvalidParameter("V must be positive, got {!r}".format(V))
        if not sizes or min(sizes) < 3:
            raise InvalidParameter(
                "sample sizes must be >= 3, got {!r}".format(sizes)
            )
        if replications < 1:
            raise InvalidParameter(
                "replications must be >= 1, got {!r}".format(replications)
            )
        if not p_list or min(p_list) < 1:
            raise InvalidParameter(
                "error orders must be >= 1, got {!r}".format(p_list)
            )
        self.regression = (
            RegressionSpec() if regression is None else regression
        )
        self.V = float(V)
        self.noise = (
            make_noise("gaussian", {"sd": 0.3}) if noise is None else noise
        )
        self.sizes = tuple(int(n) for n in sizes)
        self.replications = int(replications)
        self.seed = int(seed)
        self.p_list = tuple(p_list)
        self.estimator = EstimatorConfig() if estimator is None else estimator

    def to_dict(self):
        return {
            "regression": self.regression.to_dict(),
            "V": self.V,
            "noise": self.noise.to_dict(),
            "sizes": list(self.sizes),
            "replications": self.replications,
            "seed": self.seed,
            "p_list": list(self.p_list),
            "estimator": self.estimator.to_dict(),
        }

    @classmethod
    def from_dict(cls, record):
        """Build a config from a flat record, such as a parsed JSON file

        Raises
        ------
        InvalidInput
            on unknown keys
        """
        record = dict(record)
        unknown = set(record) - set(cls.__slots__)
        if unknown:
            raise InvalidInput(
                "unknown experiment settings: {}".format(sorted(unknown))
            )
        nested = {
            "regression": RegressionSpec.from_dict,
            "noise": NoiseModel.from_dict,
            "estimator": EstimatorConfig.from_dict,
        }
        for key, load in nested.items():
            if key in record:
                record[key] = load(record[key])
        return cls(**record)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            try:
                return cls.from_dict(json.load(f))
            except json.JSONDecodeError as e:
                raise InvalidInput("{} is not JSON: {}".format(path, e))

    def __repr__(self):
        return "ExperimentConfig(sizes={}, replications={}, seed={})".format(
            self.sizes, self.replications, self.seed
        )


class BenchmarkRow(_SlotsMixin):
    """One error measurement

    Parameters
    ----------
    n: int
        sample size
    method: str
        ``deconv``, ``naive_sorted`` or ``pava_coupled``
    p: float
        order of the :math:`\\ell_p` error
    rep: int
        replication index
    error: float
        the error against the true function, ``nan`` if the method failed
    seconds: float
        wall time of the method
    seed: int
        the replication's seed
    """

    __slots__ = CSV_FIELDS

    def __init__(self, n, method, p, rep, error, seconds, seed):
        if method not in METHODS:
            raise InvalidInput("unknown method {!r}".format(method))
        if error < 0:
            raise InvalidInput("error must be >= 0, got {!r}".format(error))
        self.n = int(n)
        self.method = method
        self.p = p
        self.rep = int(rep)
        self.error = float(error)
        self.seconds = float(seconds)
        self.seed = int(seed)

    def __repr__(self):
        return "BenchmarkRow(n={}, method={!r}, p={}, error={:.4g})".format(
            self.n, self.method, self.p, self.error
        )


def _draw(regression, n, noise, V, rng):
    design = DesignPoints.equispaced(n)
    truth = regression.function(design, V)
    coupled = truth.values + noise.sample(n, rng)
    return design, truth, coupled, rng.permutation(coupled)


def generate_dataset(regression, n, noise, seed, V=1.0):
    """Draw an uncoupled dataset :math:`y_i = f(x_i) + \\xi_i`

    Parameters
    ----------
    regression: RegressionSpec
        the true function :math:`f`
    n: int
        the number of observations
    noise: ~uncoupled.noise.NoiseModel
        the law of :math:`\\xi`
    seed: int or ~typing.Sequence[int]
        seed of the random stream for the noise and the shuffle
    V: float
        bound on :math:`f`

    Returns
    -------
    tuple[~uncoupled.isotonic.DesignPoints, ~numpy.ndarray]
        the design points :math:`x_i = i/n` and the shuffled responses
    """
    design, _, _, shuffled = _draw(
        regression, n, noise, V, np.random.default_rng(seed)
    )
    return design, shuffled


def _replicate(config, n, rep):
    seed = config.seed + rep
    design, truth, coupled, shuffled = _draw(
        config.regression,
        n,
        config.noise,
        config.V,
        np.random.default_rng([seed, n]),
    )
    fits = {
        "deconv": lambda: estimate(
            design, shuffled, config.noise, config.V, config.estimator
        ).g_hat,
        "naive_sorted": lambda: naive_sorted(design, shuffled, config.V),
        "pava_coupled": lambda: pava(design, coupled, config.V),
    }
    rows = []
    for method in METHODS:
        start = time.perf_counter()
        try:
            fit = fits[method]()
        except Error as e:
            logger.warning(
                "%s failed at n=%d, rep=%d: %r", method, n, rep, e
            )
            fit = None
        seconds = time.perf_counter() - start
        rows.extend(
            BenchmarkRow(
                n,
                method,
                p,
                rep,
                math.nan if fit is None else empirical_lp(truth, fit, p),
                seconds,
                seed,
            )
            for p in config.p_list
        )
    logger.info("finished n=%d, rep=%d", n, rep)
    return rows


def _replicate_task(task):
    return _replicate(*task)


def _canonical(row):
    return row.n, row.method, row.p, row.rep


def run_benchmark(config, workers=1):
    """Run every method on every replication

    Parameters
    ----------
    config: ExperimentConfig
        what to run
    workers: int
        number of processes; replications are independent

    Returns
    -------
    list[BenchmarkRow]
        sorted by sample size, method, order and replication
    """
    tasks = [
        (config, n, rep)
        for n in config.sizes
        for rep in range(config.replications)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_replicate_task, tasks))
    else:
        chunks = [_replicate_task(task) for task in tasks]
    return sorted((row for chunk in chunks for row in chunk), key=_canonical)


def _write_csv(rows, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for row in rows:
            writer.writerow(
                [
                    row.n,
                    row.method,
                    repr(row.p),
                    row.rep,
                    repr(row.error),
                    repr(row.seconds),
                    row.seed,
                ]
            )


PLOT_COLORS = {
    "deconv": "#1b6ac9",
    "naive_sorted": "#d1495b",
    "pava_coupled": "#2e933c",
}
# log-scale floor for zero errors
PLOT_FLOOR = 1e-12


def _median_curves(rows):
    """Median error per method and sample size, at the smallest order"""
    p = min(row.p for row in rows)
    kept = sorted(
        (r for r in rows if r.p == p and not math.isnan(r.error)),
        key=lambda r: (r.method, r.n),
    )
    return {
        method: [
            (n, float(np.median([r.error for r in at_n])))
            for n, at_n in groupby(group, key=lambda r: r.n)
        ]
        for method, group in groupby(kept, key=lambda r: r.method)
    }


_WRITERS = {"csv": _write_csv}


try:
    from matplotlib.backends.backend_agg import FigureCanvasAgg
    from matplotlib.figure import Figure
except ImportError:  # pragma: no cover
    pass
else:

    def _plot(rows):
        """Log-log figure of the median error against ``n`` per method"""
        figure = Figure(figsize=(8, 5))
        FigureCanvasAgg(figure)
        axes = figure.add_subplot()
        for method, curve in _median_curves(rows).items():
            sizes, errors = zip(*curve)
            axes.plot(
                sizes,
                np.maximum(errors, PLOT_FLOOR),
                "o-",
                color=PLOT_COLORS[method],
                label=method,
            )
        axes.set_xscale("log")
        axes.set_yscale("log")
        axes.set_xlabel("sample size n")
        axes.set_ylabel("median error")
        axes.set_title("median error against sample size")
        axes.legend()
        axes.grid(True, linestyle="--", alpha=0.6)
        figure.tight_layout()
        return figure

    def _write_svg(rows, path):
        if not rows:
            raise InvalidInput("cannot plot an empty benchmark")
        _plot(rows).savefig(path, format="svg")

    _WRITERS["svg"] = _write_svg


def emit(rows, path, format="csv"):
    """Write benchmark rows to a file

    Parameters
    ----------
    rows: ~typing.Sequence[BenchmarkRow]
        the rows
    path: str or ~os.PathLike
        where to write
    format: str
        ``"csv"`` for the rows themselves, ``"svg"`` for a log-log plot
        of the median error against the sample size per method. Plots
        need matplotlib, from the ``plot`` extra.

    Raises
    ------
    OSError
        if the path is not writable
    """
    try:
        writer = _WRITERS[format]
    except KeyError:
        raise InvalidParameter("unknown format {!r}".format(format))
    writer(list(rows), path)


def read_rows(path):
    """Parse a CSV written by :func:`emit`"""
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise InvalidInput(
                "unexpected header in {}: {!r}".format(path, reader.fieldnames)
            )
        return [
            BenchmarkRow(
                int(r["n"]),
                r["method"],
                _number(r["p"]),
                int(r["rep"]),
                float(r["error"]),
                float(r["seconds"]),
                int(r["seed"]),
            )
            for r in reader
        ]


def _number(text):
    value = float(text)
    return int(value) if value.is_integer() and "." not in text else value


def diagnose(seed=0) -> t.Tuple[bool, str]:
    """Run every numerical check

    Returns
    -------
    tuple[bool, str]
        whether all checks passed, and the report
    """
    checks = list(diagnostics(seed))
    return all(c.passed for c in checks), report(checks)


def _read_xy(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if not {"x", "y"} <= set(reader.fieldnames or ()):
            raise InvalidInput("{} needs columns x and y".format(path))
        try:
            pairs = [(float(r["x"]), float(r["y"])) for r in reader]
        except ValueError as e:
            raise InvalidInput("{}: {}".format(path, e))
    if not pairs:
        raise InvalidInput("{} has no rows".format(path))
    x, y = map(np.array, zip(*pairs))
    return DesignPoints(np.sort(x)), y


def _write_columns(f, header, columns):
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(zip(*(map(repr, map(float, c)) for c in columns)))


def _open_out(path):
    return open(path, "w", newline="") if path else nullcontext(sys.stdout)


def _key_value(text):
    key, sep, value = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(
            "expected NAME=VALUE, got {!r}".format(text)
        )
    return key, float(value)


def _config(args):
    if args.config is None:
        return ExperimentConfig()
    return ExperimentConfig.load(args.config)


def _simulate(args):
    config = _config(args)
    n = config.sizes[0] if args.n is None else args.n
    seed = config.seed if args.seed is None else args.seed
    design, y = generate_dataset(
        config.regression, n, config.noise, seed, config.V
    )
    with _open_out(args.out) as f:
        _write_columns(f, ("x", "y"), (design.x, y))
    return EXIT_OK


def _estimate(args):
    design, y = _read_xy(args.data)
    noise = make_noise(args.noise_family, dict(args.noise_param or ()))
    config = EstimatorConfig(
        max_iterations=args.max_iter, fw_gap_tolerance=args.tol
    )
    result = estimate(design, y, noise, args.V, config)
    logger.info("%r", result)
    with _open_out(args.out) as f:
        _write_columns(f, ("x", "g_hat"), (design.x, result.g_hat.values))
    return EXIT_OK


def _bench(args):
    rows = run_benchmark(_config(args), workers=args.workers)
    emit(rows, args.out, "csv")
    if args.svg:
        emit(rows, args.svg, "svg")
    return EXIT_OK


def _diagnose(args):
    passed, text = diagnose(args.seed)
    sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_DIAGNOSTICS


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the invalid-input status"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, "{}: error: {}\n".format(self.prog, message))


def _parser():
    parser = _Parser(
        prog="uncoupled",
        description="Isotonic regression from uncoupled data.",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="log more (-v for progress, -vv for solver iterations)",
    )
    commands = parser.add_subparsers(
        dest="command", required=True, parser_class=_Parser
    )

    simulate = commands.add_parser(
        "simulate", help="write a synthetic uncoupled dataset as x,y CSV"
    )
    simulate.add_argument("--config", help="experiment config (JSON)")
    simulate.add_argument("--n", type=int, help="number of observations")
    simulate.add_argument("--seed", type=int, help="overrides the config")
    simulate.add_argument("--out", help="output CSV (default: stdout)")
    simulate.set_defaults(run=_simulate)

    estimate_ = commands.add_parser(
        "estimate",
        help="estimate a monotone function from uncoupled data",
        description=(
            "Reads a CSV with columns x and y. The pairing of x and y "
            "within a row is ignored: the responses are treated as an "
            "unordered multiset."
        ),
    )
    estimate_.add_argument("data", help="CSV with columns x and y")
    estimate_.add_argument("--noise-family", default="gaussian")
    estimate_.add_argument(
        "--noise-param",
        type=_key_value,
        action="append",
        metavar="NAME=VALUE",
        help="noise parameter, e.g. sd=0.3",
    )
    estimate_.add_argument("--V", type=float, default=1.0)
    estimate_.add_argument("--max-iter", type=int, default=2000)
    estimate_.add_argument("--tol", type=float, help="Frank-Wolfe gap")
    estimate_.add_argument(
        "--seed", type=int, help="ignored: the estimator is deterministic"
    )
    estimate_.add_argument("--out", help="output CSV (default: stdout)")
    estimate_.set_defaults(run=_estimate)

    bench = commands.add_parser(
        "bench", help="compare the estimators on synthetic data"
    )
    bench.add_argument("--config", help="experiment config (JSON)")
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--out", default="bench.csv", help="output CSV")
    bench.add_argument("--svg", help="also plot median errors here")
    bench.set_defaults(run=_bench)

    diagnose_ = commands.add_parser(
        "diagnose", help="check the moment and kernel bounds numerically"
    )
    diagnose_.add_argument("--seed", type=int, default=0)
    diagnose_.set_defaults(run=_diagnose)
    return parser


_LOG_LEVELS = [logging.WARNING, logging.INFO, logging.DEBUG]


def main(argv=None):
    """Entry point of the ``uncoupled`` command

    Returns
    -------
    int
        0 on success, 1 on invalid input, 2 if diagnostics fail
    """
    args = _parser().parse_args(argv)
    logging.basicConfig(
        level=_LOG_LEVELS[min(args.verbose, len(_LOG_LEVELS) - 1)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.run(args)
    except (Error, OSError) as e:
        logger.error("%s", e)
        return EXIT_INVALID
