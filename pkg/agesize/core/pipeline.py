"""A small dependency pipeline that runs the steps of a command.

A pipeline is an ordered mapping of named cells:

    INPUT   a value (or a zero-argument function producing one)
    COMPUTE a function taking a read-only context restricted to its declared
            dependencies, whose result is stored in the run context
    OUTPUT  like COMPUTE, but the result is not stored (file writers)

run() resolves only the cells needed for the requested targets, each exactly
once and after its dependencies.

Errors: a cell can raise AbortFunction to skip itself and everything that
depends on it.  agesize errors propagate unchanged, so that the command line
can map them onto exit codes.  Anything else is logged and re-raised as
AbortExecution.
"""

import collections
import enum
import logging

from agesize.core.utils import (
    maybe_format_key,
)

from agesize.core.exceptions import (
    AgesizeError,
    KeyExists,
    AbortFunction,
    AbortExecution,
    PipelineError,
)

logger = logging.getLogger(__name__)

PipelineItem = collections.namedtuple(
    'PipelineItem', 'type_, key, name, item, dependencies, dependents')
Type = enum.Enum('Type', 'INPUT COMPUTE OUTPUT')


def new_pipeline():
    return collections.OrderedDict()


def add_input(pipeline, name, value):
    """Add an input cell.

    :param pipeline: the pipeline to add to
    :param name: the name of the cell (and of its context key)
    :param value: a value or a zero-argument function
    :raises PipelineError: if the name is already used
    """
    key = maybe_format_key(name)
    if key in pipeline:
        raise PipelineError("Cell '{}' is already defined".format(name))
    pipeline[key] = PipelineItem(Type.INPUT, key, name, value, [], set())


def add_compute(pipeline, name, function, dependencies):
    _add_compute_or_output(pipeline, Type.COMPUTE, name, function,
                           dependencies)


def add_output(pipeline, name, function, dependencies):
    _add_compute_or_output(pipeline, Type.OUTPUT, name, function,
                           dependencies)


def _add_compute_or_output(pipeline, type_, name, function, dependencies):
    """Add a compute or output cell.  Dependencies are not checked until
    run() is called.

    :raises AssertionError: if function isn't callable
    :raises KeyExists: if the cell depends on itself
    :raises PipelineError: if the name is already used
    """
    assert type_ in (Type.COMPUTE, Type.OUTPUT)
    assert callable(function), ("Param function must be callable for key '{}'"
                                .format(name))
    key = maybe_format_key(name)
    dependencies_keys = [maybe_format_key(d) for d in dependencies]
    if key in dependencies_keys:
        raise KeyExists(
            "The dependency '{}' is the name of the cell.".format(name))
    if key in pipeline:
        raise PipelineError("Cell '{}' is already defined".format(name))
    pipeline[key] = PipelineItem(type_, key, name, function,
                                 dependencies_keys, set())


def _calculate_dependents(pipeline):
    """Fill in the dependents sets from the dependency lists.

    :raises PipelineError: if a dependency names an unknown cell
    """
    errors = []
    for key, item in pipeline.items():
        for d in item.dependencies:
            try:
                pipeline[d].dependents.add(key)
            except KeyError:
                errors.append("'{}' (needed by '{}')".format(d, key))
    if errors:
        raise PipelineError("Unknown cells: {}".format(", ".join(errors)))


def _check_pipeline(pipeline):
    """Check that every dependency exists and that there are no cycles.

    :raises PipelineError: if there is a problem
    """
    _calculate_dependents(pipeline)
    errors = []
    for key in pipeline:
        _find_cycles(pipeline, [key], errors)
    if errors:
        raise PipelineError("Pipeline has circular dependencies: {}"
                            .format(", ".join(sorted(set(errors)))))


def _find_cycles(pipeline, path, errors):
    for key in pipeline[path[-1]].dependents:
        if key in path:
            errors.append("->".join(path[path.index(key):] + [key]))
            continue
        _find_cycles(pipeline, path + [key], errors)


def _closure(pipeline, targets):
    """Return the keys needed for targets in a dependency respecting order.

    :raises PipelineError: if a target is unknown
    """
    order = []
    seen = set()

    def visit(key):
        if key in seen:
            return
        if key not in pipeline:
            raise PipelineError("Unknown target '{}'".format(key))
        seen.add(key)
        for d in pipeline[key].dependencies:
            visit(d)
        order.append(key)

    for target in targets:
        visit(maybe_format_key(target))
    return order


def _process_item(item, context_fn):
    """Evaluate a cell.

    :param item: a PipelineItem
    :param context_fn: context_fn(dependencies) -> read-only context
    :returns: the value of the INPUT or the result of the function
    :raises AbortFunction: if the function raises that exception.
    :raises AgesizeError: unchanged
    :raises AbortExecution: if the function raises any other exception
    """
    try:
        if item.type_ == Type.INPUT:
            value = item.item
            while callable(value):
                value = value()
            return value
        return item.item(context_fn(item.dependencies))
    except (AbortFunction, AbortExecution, AgesizeError):
        raise
    except Exception as e:
        logger.exception("Cell '%s' failed", item.name)
        raise AbortExecution("Aborted: cell '{}' raised: {}"
                             .format(item.name, e)) from e


def run(pipeline, targets, get_context_fn, set_context_fn):
    """Run the cells needed for targets.

    :param pipeline: the pipeline to run
    :param targets: names of the cells wanted
    :param get_context_fn: get_context_fn(keys) -> read-only context
    :param set_context_fn: set_context_fn(key, value) -> None
    :returns: list of the keys that were run
    :raises PipelineError: if the pipeline is not properly formed.
    :raises AbortExecution: if a cell fails unexpectedly
    """
    _check_pipeline(pipeline)
    aborted = set()
    done = []
    for key in _closure(pipeline, targets):
        item = pipeline[key]
        if any(d in aborted for d in item.dependencies):
            logger.info("Skipping '%s': a dependency was aborted", item.name)
            aborted.add(key)
            continue
        logger.debug("Running cell '%s'", item.name)
        try:
            value = _process_item(item, get_context_fn)
        except AbortFunction as e:
            logger.info("Cell '%s' aborted: %s", item.name, e)
            aborted.add(key)
            continue
        if item.type_ != Type.OUTPUT:
            set_context_fn(item.name, value)
        done.append(key)
    return done
