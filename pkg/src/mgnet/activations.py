"""Activation families: a scalar potential s with its derivatives.

Each family bundles up to three scalar functions applied elementwise:

    potential  s(t)   convex, nonnegative (module potentials)
    first      s'(t)  the activation sigma itself, monotone increasing
    second     s''(t) its slope, nonnegative everywhere

Modular models need the full triple (prop2_eligible); the cascaded
architecture only consumes `first`/`second`, so the catalog also carries
*_only entries whose potential is not exposed. softplus as an activation
has no elementary antiderivative, hence softplus_only.

All forms are written against the dual-dispatch math so they evaluate on
plain arrays and dual numbers alike, and stay finite for |t| <= 700.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

from .dual import absolute, exp, log1p, tanh
from .errors import UnknownActivation

_LOG2 = math.log(2.0)


def log_cosh(t):
    """log cosh t, computed as |t| + log1p(e^(-2|t|)) - log 2."""
    a = absolute(t)
    return a + log1p(exp(-2.0 * a)) - _LOG2


def softplus(t):
    """log(1 + e^t) via the identity t/2 + log cosh(t/2) + log 2."""
    return 0.5 * t + log_cosh(0.5 * t) + _LOG2


def logistic(t):
    """Standard sigmoid written on tanh so it saturates instead of overflowing."""
    return 0.5 + 0.5 * tanh(0.5 * t)


def _tanh_slope(t):
    y = tanh(t)
    return 1.0 - y * y


def _logistic_slope(t):
    p = logistic(t)
    return p * (1.0 - p)


@dataclass(frozen=True)
class ActivationFamily:
    """Named triple (potential, first, second); potential may be absent."""

    name: str
    potential: Optional[Callable]
    first: Callable
    second: Callable
    prop2_eligible: bool


FAMILIES = {
    f.name: f
    for f in (
        ActivationFamily("logcosh_tanh", log_cosh, tanh, _tanh_slope, True),
        ActivationFamily("softplus_sigmoid", softplus, logistic, _logistic_slope, True),
        ActivationFamily("softplus_only", None, softplus, logistic, False),
        ActivationFamily("tanh_only", None, tanh, _tanh_slope, False),
        ActivationFamily("sigmoid_only", None, logistic, _logistic_slope, False),
    )
}


def get_family(name):
    try:
        return FAMILIES[name]
    except KeyError:
        raise UnknownActivation(name) from None


def apply_vec(family, vec, which):
    """Apply a family function to a vector (or batch of vectors).

    which: "first" / "second" elementwise, or "potential-sum" for the
    scalar sum of potentials over the last axis.
    """
    if which == "first":
        return family.first(vec)
    if which == "second":
        return family.second(vec)
    if which == "potential-sum":
        if family.potential is None:
            raise ValueError(f"family {family.name!r} exposes no potential")
        s = family.potential(vec)
        return s.sum(axis=-1) if hasattr(s, "sum") else s
    raise ValueError(f"unknown selector {which!r}")
