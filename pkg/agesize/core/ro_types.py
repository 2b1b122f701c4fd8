"""Read-only containers used for run configuration and the run context.

Mappings become ReadOnlyDict, sequences become ReadOnlyList, numpy arrays are
frozen (their writeable flag is cleared) and zero-argument callables are
wrapped in a lazy, memoising Callable.  Everything that can be encoded as JSON
is encoded canonically by canonical_json() so that configurations can be
hashed.
"""

import collections
import collections.abc
import json

import numpy as np

from agesize.core.utils import maybe_format_key


def resolve_value(value):
    """Wrap or freeze value for read-only use.

    numpy arrays come back as non-writeable views; classes, strings and
    scalars come back unchanged.
    """
    if isinstance(value, np.ndarray):
        frozen = value.view()
        frozen.flags.writeable = False
        return frozen
    if isinstance(value, type):
        return value
    if callable(value):
        return Callable(value)
    if isinstance(value, collections.abc.Mapping):
        return ReadOnlyDict(value)
    if isinstance(value, collections.abc.Sequence) and \
            not isinstance(value, str):
        return ReadOnlyList(value)
    return value


def maybe_resolve_callable(v):
    """v, or its value if v is a lazy Callable."""
    return v() if isinstance(v, Callable) else v


class _Frozen(object):
    """Rejects attribute and item assignment."""

    __slots__ = ()

    def _refuse(self, *args):
        raise TypeError("{} is read-only".format(type(self).__name__))

    __setattr__ = _refuse
    __setitem__ = _refuse
    __delattr__ = _refuse
    __delitem__ = _refuse


class Callable(_Frozen):
    """A lazily evaluated value.

    The wrapped function takes no arguments and runs on first access; a
    function that returns a function is followed until a value comes out,
    which is cached read-only.

    >>> x = Callable(lambda: 3)
    >>> x()
    3
    """

    __slots__ = ('_fn', '_done', '_value')

    def __init__(self, fn):
        """:raises AssertionError: if fn is not callable"""
        assert callable(fn)
        object.__setattr__(self, '_fn', fn)
        object.__setattr__(self, '_done', False)
        object.__setattr__(self, '_value', None)

    def __call__(self):
        if not self._done:
            value = self._fn
            while callable(value):
                value = value()
            object.__setattr__(self, '_value', resolve_value(value))
            object.__setattr__(self, '_done', True)
        return self._value

    @property
    def resolved(self):
        return self._done

    def __repr__(self):
        if self._done:
            return "Callable(lambda: {!r})".format(self._value)
        return "Callable({!r})".format(self._fn)

    def __str__(self):
        return str(self._value) if self._done else "<{!r}>".format(self)

    def __serialize__(self):
        return self()


class ReadOnlyWrapperDict(_Frozen, collections.abc.Mapping):
    """A read-only snapshot of a mapping (the values are shared, not copied)
    whose lazy values resolve on access."""

    __slots__ = ('_items', )

    def __init__(self, data):
        assert isinstance(data, collections.abc.Mapping)
        object.__setattr__(self, '_items', collections.OrderedDict(data))

    def __getitem__(self, key):
        try:
            value = self._items[key]
        except KeyError:
            raise KeyError("No '{}' in the context".format(key))
        return maybe_resolve_callable(value)

    def __getattr__(self, key):
        if key.startswith('__') or key not in self._items:
            raise AttributeError("No '{}' in the context".format(key))
        return maybe_resolve_callable(self._items[key])

    def __len__(self):
        return len(self._items)

    def __iter__(self):
        return iter(self._items)

    def __repr__(self):
        inner = ", ".join("{!r}: {!r}".format(k, v)
                          for k, v in self._items.items())
        return "{}({{{}}})".format(type(self).__name__, inner)

    def __serialize__(self):
        return {k: self[k] for k in self._items}


class ReadOnlyDict(collections.OrderedDict):
    """An ordered, immutable mapping with attribute access.

    Keys are formatted with maybe_format_key(), so that 'delta-lo' and
    'delta_lo' name the same entry and config.cycle.delta_lo works.
    """

    def __init__(self, data):
        assert isinstance(data, collections.abc.Mapping)
        store = super().__setitem__
        for k, v in data.items():
            store(maybe_format_key(k), resolve_value(v))

    def __getitem__(self, key):
        value = super().__getitem__(maybe_format_key(key))
        return maybe_resolve_callable(value)

    def __getattr__(self, key):
        if key.startswith('__'):
            raise AttributeError(key)
        try:
            return self[key]
        except KeyError:
            raise AttributeError("No key '{}'".format(key))

    _refuse = _Frozen._refuse
    __setattr__ = _refuse
    __setitem__ = _refuse
    __delitem__ = _refuse

    def __reduce__(self):
        return (type(self), (dict(self.items()), ))

    def lookup(self, dotted, default=None):
        """The value at a dotted path such as 'cycle.delta.kind', or default
        when any part of the path is missing."""
        node = self
        for part in dotted.split('.'):
            key = maybe_format_key(part)
            if not isinstance(node, ReadOnlyDict) or key not in node:
                return default
            node = node[key]
        return node

    def __serialize__(self):
        return dict(self.items())


class ReadOnlyList(tuple):
    """A tuple of read-only values; lazy items resolve on access."""

    def __new__(cls, data):
        return super().__new__(cls, map(resolve_value, data))

    def __getitem__(self, index):
        return maybe_resolve_callable(super().__getitem__(index))

    def __iter__(self):
        return map(maybe_resolve_callable, super().__iter__())

    __setattr__ = _Frozen._refuse

    def __repr__(self):
        return "{}(({}))".format(type(self).__name__,
                                 ", ".join(map(repr, self)))

    def __serialize__(self):
        return list(self)


def _plain(o):
    if hasattr(o, '__serialize__'):
        return o.__serialize__()
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError("Can't encode {!r} as JSON".format(o))


def canonical_json(value):
    """Compact JSON with sorted keys; NaN and infinities are rejected."""
    return json.dumps(value, default=_plain, sort_keys=True, allow_nan=False,
                      separators=(',', ':'))
