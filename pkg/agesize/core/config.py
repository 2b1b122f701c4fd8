"""Run configuration.

A configuration is a flat mapping of dotted keys, usually read from a YAML
file:

    preset: affine-delta
    growth.kind: affine
    growth.kappa: 1.0
    window.lo: 1.0

Nested YAML mappings are accepted as well and are flattened first.  Sources are
merged in order: preset, file, then command line overrides ('key=value').
The result is a nested ReadOnlyDict.
"""

import collections
import collections.abc
import hashlib
import logging
import math

import yaml

from agesize.core.exceptions import ConfigError
from agesize.core.ro_types import ReadOnlyDict, canonical_json
from agesize.core.utils import flatten_nested, nest_dotted

logger = logging.getLogger(__name__)

_MISSING = object()


def read_config_file(path):
    """Read a YAML configuration file into a flat dotted mapping.

    :raises ConfigError: if the file can't be read or isn't a mapping
    """
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError("Can't read configuration '{}': {}".format(path, e))
    if data is None:
        return collections.OrderedDict()
    if not isinstance(data, collections.abc.Mapping):
        raise ConfigError("Configuration '{}' is not a mapping".format(path))
    return flatten_nested(data)


def parse_override(text):
    """Parse a 'key=value' override; the value is typed by YAML rules.

    :raises ConfigError: if there is no '=' or the value doesn't parse
    """
    key, sep, value = text.partition('=')
    if not sep or not key.strip():
        raise ConfigError("Override '{}' is not of the form key=value"
                          .format(text))
    try:
        parsed = yaml.safe_load(value)
    except yaml.YAMLError as e:
        raise ConfigError("Bad value in override '{}': {}".format(text, e))
    return key.strip(), parsed


def load_config(path=None, preset=None, overrides=(), presets=None):
    """Build the run configuration.

    :param path: OPTIONAL YAML file
    :param preset: OPTIONAL preset name; a 'preset' key in the file is used
        if this is None
    :param overrides: iterable of 'key=value' strings
    :param presets: mapping of preset name -> flat mapping
    :returns: ReadOnlyDict
    :raises ConfigError: on any problem
    """
    presets = presets or {}
    from_file = read_config_file(path) if path else collections.OrderedDict()
    name = preset or from_file.pop('preset', None)
    flat = collections.OrderedDict()
    if name is not None:
        if name not in presets:
            raise ConfigError("Unknown preset '{}' (known: {})"
                              .format(name, ", ".join(sorted(presets))))
        flat.update(presets[name])
        flat['preset'] = name
    flat.update(from_file)
    for text in overrides:
        key, value = parse_override(text)
        flat[key] = value
    if not flat:
        raise ConfigError("Empty configuration: give a file or a preset")
    config = ReadOnlyDict(nest_dotted(flat))
    logger.info("Loaded configuration %s (hash %s)",
                name or path, config_hash(config))
    return config


def config_hash(config):
    """First 16 hex digits of the SHA-256 of the canonical JSON encoding."""
    try:
        encoded = canonical_json(config)
    except (TypeError, ValueError) as e:
        raise ConfigError("Configuration can't be encoded: {}".format(e))
    return hashlib.sha256(encoded.encode('utf-8')).hexdigest()[:16]


def get_value(config, dotted, default=_MISSING):
    value = config.lookup(dotted, _MISSING)
    if value is _MISSING:
        if default is _MISSING:
            raise ConfigError("Missing configuration key '{}'".format(dotted))
        return default
    return value


def get_float(config, dotted, default=_MISSING):
    value = get_value(config, dotted, default)
    if value is None and default is None:
        return None
    if isinstance(value, bool):
        raise ConfigError("Key '{}' must be a number, got {!r}"
                          .format(dotted, value))
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError("Key '{}' must be a number, got {!r}"
                          .format(dotted, value))
    if not math.isfinite(value):
        raise ConfigError("Key '{}' must be finite".format(dotted))
    return value


def get_int(config, dotted, default=_MISSING):
    value = get_float(config, dotted, default)
    if value is None:
        return None
    if value != int(value):
        raise ConfigError("Key '{}' must be an integer, got {!r}"
                          .format(dotted, value))
    return int(value)


def get_str(config, dotted, default=_MISSING, choices=None):
    value = get_value(config, dotted, default)
    if value is None and default is None:
        return None
    if not isinstance(value, str):
        raise ConfigError("Key '{}' must be a string, got {!r}"
                          .format(dotted, value))
    if choices is not None and value not in choices:
        raise ConfigError("Key '{}' must be one of {}, got '{}'"
                          .format(dotted, ", ".join(choices), value))
    return value


def get_bool(config, dotted, default=_MISSING):
    value = get_value(config, dotted, default)
    if not isinstance(value, bool):
        raise ConfigError("Key '{}' must be true or false, got {!r}"
                          .format(dotted, value))
    return value


def get_list(config, dotted, default=_MISSING):
    value = get_value(config, dotted, default)
    if isinstance(value, str) or not isinstance(
            value, collections.abc.Sequence):
        raise ConfigError("Key '{}' must be a list, got {!r}"
                          .format(dotted, value))
    return list(value)
