"""Central finite-difference verification of the analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .params import ModelParams

DEFAULT_EPSILON = 1e-5
REL_ERROR_FLOOR = 1e-8


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric),
                                         REL_ERROR_FLOOR)


def grad_check(params: ModelParams,
               loss_fn: Callable[[ModelParams], float],
               grads_fn: Callable[[ModelParams], dict],
               epsilon: float = DEFAULT_EPSILON,
               groups: list[str] | None = None) -> dict[str, float]:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be a deterministic pure function of the parameters;
    ``grads_fn`` returns the analytic gradient arrays keyed like the params.
    Every entry of every checked group is perturbed individually.
    """
    analytic = grads_fn(params)
    names = groups if groups is not None else sorted(params.arrays)
    errors: dict[str, float] = {}
    for name in names:
        array = params.arrays[name]
        grad = analytic[name]
        worst = 0.0
        it = np.nditer(array, flags=["multi_index"])
        while not it.finished:
            idx = it.multi_index
            original = array[idx]
            array[idx] = original + epsilon
            plus = loss_fn(params)
            array[idx] = original - epsilon
            minus = loss_fn(params)
            array[idx] = original
            numeric = (plus - minus) / (2.0 * epsilon)
            if not np.isfinite(numeric):
                raise FloatingPointError(
                    f"non-finite finite-difference value in group {name!r} "
                    f"at index {idx}")
            worst = max(worst, relative_error(float(grad[idx]), numeric))
            it.iternext()
        errors[name] = worst
    return errors
