"""
The entire public API is available at root level::

    from uncoupled import estimate, make_noise, DesignPoints, wasserstein_p
"""
import logging

from . import cli, deconv, errors, isotonic, measures, moments, noise
from .deconv import *  # noqa
from .errors import *  # noqa
from .isotonic import *  # noqa
from .measures import *  # noqa
from .moments import *  # noqa
from .noise import *  # noqa

# Single-sourcing the version number with poetry:
# https://github.com/python-poetry/poetry/pull/2366#issuecomment-652418094
__version__ = __import__("importlib.metadata").metadata.version(__name__)

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "cli",
    "deconv",
    "errors",
    "isotonic",
    "measures",
    "moments",
    "noise",
]
