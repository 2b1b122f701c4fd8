import collections
import collections.abc
import keyword

from agesize.core.exceptions import ConfigError

T = str.maketrans({'-': '_', '/': "__", '\\': "__"})

FLOAT_FORMAT = '%.17g'


def maybe_format_key(name):
    """Format a name into a key that can be used as a Python attribute.

    A '-' becomes an '_'.
    A '/' or `\\` becomes '__'
    Any other characters are illegal and will raise an AttributeError

    :param name: maybe a string, if not, then it is just returned.
    :returns: string key
    :raises: AttributeError for illegal characters.
    """
    if not isinstance(name, str):
        return name
    key = name.strip().translate(T)
    if not key.isidentifier() or keyword.iskeyword(key):
        raise AttributeError("name: {}, to key:{} is not a valid identifier"
                             .format(name, key))
    return key


def split_dotted_key(name):
    """Split a dotted configuration key ('cycle.delta.kind') into formatted
    parts.

    :param name: str
    :returns: tuple of formatted keys
    :raises: ConfigError if any part is empty or not a valid identifier
    """
    parts = name.split('.')
    try:
        return tuple(maybe_format_key(p) for p in parts)
    except AttributeError as e:
        raise ConfigError("Bad configuration key '{}': {}".format(name, e))


def nest_dotted(flat):
    """Expand a flat mapping of dotted keys into nested OrderedDicts.

    >>> nest_dotted({'growth.kind': 'affine', 'growth.kappa': 1.0})
    OrderedDict([('growth', OrderedDict([('kind', 'affine'), ...

    Keys are processed in sorted order so that the result does not depend on
    the order of the source file.

    :param flat: Mapping of dotted keys to scalar values
    :returns: OrderedDict
    :raises: ConfigError if a key is both a value and a section
    """
    assert isinstance(flat, collections.abc.Mapping)
    nested = collections.OrderedDict()
    for name in sorted(flat.keys()):
        parts = split_dotted_key(name)
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, collections.OrderedDict())
            if not isinstance(child, collections.OrderedDict):
                raise ConfigError(
                    "Key '{}' is used both as a value and as a section"
                    .format(name))
            node = child
        if isinstance(node.get(parts[-1]), collections.OrderedDict):
            raise ConfigError(
                "Key '{}' is used both as a value and as a section"
                .format(name))
        node[parts[-1]] = flat[name]
    return nested


def flatten_nested(nested, prefix=''):
    """The inverse of nest_dotted(): turn nested mappings into dotted keys.

    :param nested: a Mapping, possibly containing Mappings
    :param prefix: the key prefix for recursion
    :returns: OrderedDict of dotted keys, sorted
    """
    flat = collections.OrderedDict()
    for key in sorted(nested.keys()):
        value = nested[key]
        name = "{}.{}".format(prefix, key) if prefix else key
        if isinstance(value, collections.abc.Mapping):
            flat.update(flatten_nested(value, name))
        else:
            flat[name] = value
    return flat


def format_float(value):
    """Format a float with 17 significant digits (round-trip exact)."""
    return FLOAT_FORMAT % value
