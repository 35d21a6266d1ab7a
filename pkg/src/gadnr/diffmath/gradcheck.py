"""Central finite-difference check of tape gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import DTensor, backward, no_grad, zero_grad


def grad_check(
    build_loss: Callable[[], DTensor], params: Sequence[DTensor], eps: float = 1e-5
) -> float:
    """Max entrywise relative error between analytic and central-difference gradients.

    ``build_loss`` must rebuild the loss from the current values of ``params``
    and be deterministic; the relative error uses the denominator
    ``max(|analytic|, |numeric|, 1e-8)``.
    """
    with no_grad():
        base_a = build_loss().item()
        base_b = build_loss().item()
    if base_a != base_b:
        raise RuntimeError(
            f"loss builder is not deterministic: {base_a!r} != {base_b!r}"
        )

    zero_grad(params)
    backward(build_loss())
    analytic = [np.zeros_like(p.value) if p.grad is None else p.grad.copy() for p in params]

    worst = 0.0
    with no_grad():
        for p, ga in zip(params, analytic):
            flat = p.value.reshape(-1)
            ga = ga.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                up = build_loss().item()
                flat[i] = orig - eps
                down = build_loss().item()
                flat[i] = orig
                num = (up - down) / (2.0 * eps)
                denom = max(abs(ga[i]), abs(num), 1e-8)
                worst = max(worst, abs(ga[i] - num) / denom)
    zero_grad(params)
    return worst
