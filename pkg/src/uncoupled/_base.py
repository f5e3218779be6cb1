"""Shared plumbing for the value types of this package"""
import numpy as np

__all__ = []


def _frozen(values, dtype=float):
    """A read-only 1-D copy of ``values``"""
    arr = np.array(values, dtype=dtype, ndmin=1)
    arr.setflags(write=False)
    return arr


def _field_equal(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return np.array_equal(a, b)
    return a == b


class _SlotsMixin(object):
    __slots__ = ()

    def _asdict(self):
        return {a: getattr(self, a) for a in self.__slots__}

    def __eq__(self, other):
        if isinstance(other, self.__class__):
            mine, theirs = self._asdict(), other._asdict()
            return all(_field_equal(mine[k], theirs[k]) for k in mine)
        return NotImplemented

    def __ne__(self, other):
        if isinstance(other, self.__class__):
            return not self == other
        return NotImplemented

    __hash__ = None

    def replace(self, **kwargs):
        """Create a (validated) copy with replaced fields

        Parameters
        ----------
        **kwargs
            fields and values to replace
        """
        return type(self)(**{**self._asdict(), **kwargs})
