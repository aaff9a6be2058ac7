"""
Utility functions, exceptions, and configuration helpers for listrx.
"""
import os
import sys
import json
import logging
from collections.abc import Iterable

import numpy as np
from ruamel.yaml import YAML

__author__ = "The listrx developers"

LOGGING_FORMAT = "%(asctime)s %(levelname)s %(message)s"
SCHEMA_DIR = os.path.join(os.path.dirname(os.path.realpath(__file__)),
                          "schemas")


class ListRxBaseException(BaseException):
    """Base exception for listrx exceptions."""
    pass


class DataValidationError(ListRxBaseException):
    """The input data violates the dataset contract."""
    pass


class MissingColumnError(DataValidationError):
    """A column named in the schema is not present in the file."""
    pass


class NonNumericError(DataValidationError):
    """A covariate or outcome cell could not be parsed as a real number."""
    pass


class MissingValueError(DataValidationError):
    """A required cell is empty.

    Args:
        row (int): Zero-based data row (header excluded).
        col (str): Column name.
    """

    def __init__(self, row, col):
        self.row = row
        self.col = col
        super(MissingValueError, self).__init__(
            "MissingValue{{row={}, col={}}}".format(row, col))


class UnknownTreatmentError(DataValidationError):
    """A treatment label was not seen when the treatment coding was fixed."""
    pass


class FitError(ListRxBaseException):
    """A nuisance model could not be fit."""
    pass


class PropensityFitError(FitError):
    """The propensity Newton iterations did not converge.

    Args:
        message (str): Description of the failure.
        grad_norm (float): Sup-norm of the gradient at the last iterate.
    """

    def __init__(self, message, grad_norm=float("nan")):
        self.grad_norm = grad_norm
        super(PropensityFitError, self).__init__(
            "{} (last gradient sup-norm {:.3e})".format(message, grad_norm))


class OutcomeFitError(FitError):
    """The outcome GLM or LASSO fit did not converge."""
    pass


class RankDeficiencyError(FitError):
    """A design matrix does not have full column rank."""
    pass


class SingularHessianError(FitError):
    """An averaged negative Hessian could not be inverted."""
    pass


class NoAdmissibleClauseError(ListRxBaseException):
    """Every candidate clause was filtered out of the clause search."""
    pass


class BootstrapError(ListRxBaseException):
    """Too many bootstrap replicates were dropped."""
    pass


class StudyError(ListRxBaseException):
    """A simulation study failed on too many replicates."""
    pass


def get_logger(name, stream_level="INFO", formatter=LOGGING_FORMAT):
    """
    Get a named logger which writes to standard error. Repeated calls with the
    same name reuse the existing handler rather than stacking new ones. This
    is FireWorks' get_fw_logger rebuilt on the logging module; the default
    format is the same "asctime levelname message" layout its stream
    handlers used, but nothing here depends on FireWorks.

    Args:
        name (str): The logger name, e.g. "listrx.search".
        stream_level (str): Level of the stream handler.
        formatter (str): The logging format string.

    Returns:
        (logging.Logger) The configured logger.
    """
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    level = getattr(logging, str(stream_level).upper())
    handlers = [h for h in logger.handlers
                if getattr(h, "_listrx_stream", False)]
    if handlers:
        handlers[0].setLevel(level)
    else:
        sh = logging.StreamHandler(stream=sys.stderr)
        sh.setLevel(level)
        sh.setFormatter(logging.Formatter(formatter))
        sh._listrx_stream = True
        logger.addHandler(sh)
    logger.propagate = False
    return logger


def set_log_level(stream_level):
    """
    Set the stream level of every listrx logger created so far.

    Args:
        stream_level (str): e.g. "DEBUG", "INFO", "WARNING".

    Returns:
        None
    """
    for name in list(logging.root.manager.loggerDict):
        if name == "listrx" or name.startswith("listrx."):
            get_logger(name, stream_level)


def get_default_config():
    """
    Get the default configuration for the listrx pipeline.

    Returns:
        conf_dict (dict): The defaults stored in defaults.yaml.
    """
    cwd = os.path.dirname(os.path.realpath(__file__))
    fname = os.path.join(cwd, "defaults.yaml")
    with open(fname, 'r') as config_raw:
        yaml = YAML()
        conf_dict = dict(yaml.load(config_raw))
    return conf_dict


def convert_native(a):
    """
    Convert iterables (possibly nested) or scalars of numpy types to native
    python types so they can be written as JSON.

    Args:
        a (iterable, dict or scalar): Input data.

    Returns:
        native: The data in a, converted to native types.
    """
    if isinstance(a, dict):
        return {str(k): convert_native(v) for k, v in a.items()}
    if isinstance(a, np.ndarray):
        return convert_native(a.tolist())
    if isinstance(a, (str, bytes)):
        return a
    if isinstance(a, Iterable):
        return [convert_native(v) for v in a]
    return convert_value_to_native(a)


def convert_value_to_native(val):
    """
    Convert a single value to the corresponding native datatype.

    Args:
        val (int/float/str/bool): Numpy or native scalar.

    Returns:
        native (int/float/str/bool/None): The native python value of val.
    """
    if val is None or isinstance(val, (bool, str)):
        return val
    if isinstance(val, np.bool_):
        return bool(val)
    if isinstance(val, (int, np.integer)):
        return int(val)
    if isinstance(val, (float, np.floating)):
        return float(val)
    if hasattr(val, "to_dict"):
        return convert_native(val.to_dict())
    raise TypeError("Dtype {} cannot be converted to a native type."
                    "".format(type(val)))


def dump_json(doc, path=None):
    """
    Serialize a document to JSON with stable key order.

    Args:
        doc (dict): The document.
        path (str): If given, write to this file; otherwise return the text.

    Returns:
        (str) The JSON text.
    """
    text = json.dumps(convert_native(doc), indent=2, sort_keys=True)
    if path is not None:
        with open(path, "w") as f:
            f.write(text + "\n")
    return text


def load_schema(name):
    """
    Load one of the shipped JSON schemas.

    Args:
        name (str): Schema name without suffix, e.g. "regime".

    Returns:
        (dict) The schema document.
    """
    with open(os.path.join(SCHEMA_DIR, name + ".schema.json")) as f:
        return json.load(f)


def validate_document(doc, name):
    """
    Validate a JSON document against a shipped schema.

    Args:
        doc (dict): The document (native types).
        name (str): Schema name, e.g. "regime", "trace", "report".

    Returns:
        None. Raises jsonschema.ValidationError on failure.
    """
    import jsonschema
    jsonschema.validate(instance=convert_native(doc), schema=load_schema(name))


def rng_stream(seed, *keys):
    """
    A numpy Generator keyed by (seed, *keys), independent of call order.

    Args:
        seed (int): The run seed.
        *keys (int): Stream identifiers, e.g. (stream_id, replicate).

    Returns:
        (numpy.random.Generator)
    """
    entropy = [int(seed)] + [int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
