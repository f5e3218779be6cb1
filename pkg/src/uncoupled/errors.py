"""Exceptions raised throughout the package"""

__all__ = ["Error", "InvalidParameter", "InvalidInput", "UnsupportedFamily"]


class Error(Exception):
    """Base class for all errors raised by this package"""


class InvalidParameter(Error, ValueError):
    """A scalar parameter lies outside its domain (e.g. ``p < 1``)"""


class InvalidInput(Error, ValueError):
    """A measure, function or data set violates its invariants"""


class UnsupportedFamily(Error, NotImplementedError):
    """The noise family (or object) has no registered implementation"""
