"""Bias-variance decompositions for margin losses.

Thin layer over the compiled core: report-producing calls return parsed JSON
dictionaries, everything else returns floats.
"""

import json as _json

from . import _core
from ._core import (
    CatalogueError,
    ConfigError,
    Error,
    InapplicableError,
    ParameterError,
    centroid,
    conjugate,
    divergence,
    gradient_symmetry,
    link,
    loss_gradient,
    loss_names,
    loss_value,
    min_risk,
)

__version__ = _core.tool_version


def loss_info(loss):
    return _json.loads(_core.loss_info(loss))


def decompose(loss, margins, labels, posteriors=None, per_point=False):
    """Decompose the expected risk of M models (rows of `margins`) on N points."""
    margins = [[float(x) for x in row] for row in margins]
    labels = [int(y) for y in labels]
    if posteriors is not None:
        posteriors = [float(p) for p in posteriors]
    return _json.loads(_core.decompose(loss, margins, labels, posteriors, per_point))


def verify(loss, suite="all", tol=None, seed=0):
    code, text = _core.verify(loss, suite, tol, seed)
    return code, _json.loads(text)


def diagnose(data=None, synthetic=None, loss="logistic", models=50, seed=0, threads=1,
             iterations=500, learning_rate=0.1, l2=1e-4, per_point=False):
    code, text = _core.diagnose(data, synthetic, loss, models, seed, threads, iterations,
                                learning_rate, l2, per_point)
    return code, _json.loads(text)


def ensemble(members, loss="logistic", combiner="mean", per_point=False):
    code, text = _core.ensemble(str(members), loss, combiner, per_point)
    return code, _json.loads(text)
