"""The run context: a write-once store for the values a run computes.

A command line run builds the growth law, the cycle model, the spectral
solution and so on exactly once, and every later step reads them from here.
Values are stored through resolve_value(), so configuration mappings become
ReadOnlyDict objects, arrays are frozen and zero-argument functions are
evaluated lazily on first read.

Keys have '-' replaced by '_' so that context().spectral_solution and
context()['spectral-solution'] are the same entry.
"""

import collections
import collections.abc

from agesize.core.exceptions import KeyExists
from agesize.core.ro_types import (
    ReadOnlyWrapperDict,
    canonical_json,
    resolve_value,
)
from agesize.core.utils import maybe_format_key

# the default context; runs normally pass their own via _context
__context__ = collections.OrderedDict()


def _store(_context):
    return __context__ if _context is None else _context


def new_context():
    """A fresh, empty context for a single run."""
    return collections.OrderedDict()


def context(keys=None, _context=None):
    """A read-only view of the context, optionally restricted to keys.

    :param keys: None, a key, or a sequence of keys
    :param _context: the context to read; defaults to the module's
    :returns: ReadOnlyWrapperDict
    :raises RuntimeError: if keys is neither a string nor a sequence
    :raises KeyError: if a requested key is missing
    """
    store = _store(_context)
    if keys is None:
        return ReadOnlyWrapperDict(store)
    if isinstance(keys, str):
        keys = [keys]
    if not isinstance(keys, collections.abc.Sequence):
        raise RuntimeError("context() keys must be a string or a sequence, "
                           "got {!r}".format(keys))
    wanted = [maybe_format_key(k) for k in keys]
    return ReadOnlyWrapperDict(
        collections.OrderedDict((k, store[k]) for k in wanted))


def key_exists(key, _context=None):
    return maybe_format_key(key) in _store(_context)


def serialize_key(key=None, _context=None):
    """Canonical JSON of the context, or of one top level entry (None when
    that entry is missing).  Only JSON-able entries can be serialised."""
    view = context(_context=_context)
    if key is None:
        return canonical_json(view)
    entry = view.get(maybe_format_key(key))
    return None if entry is None else canonical_json(entry)


def set_context(key, data, _context=None):
    """Store data under key; keys are write-once.

    :raises KeyExists: if the key is already set
    """
    store = _store(_context)
    key = maybe_format_key(key)
    if key in store:
        raise KeyExists("'{}' is already set in this run".format(key))
    store[key] = resolve_value(data)
