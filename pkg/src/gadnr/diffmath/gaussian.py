"""Empirical Gaussian moments and the closed-form Gaussian KL divergence."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .tensor import DTensor, as_tensor, custom_op, reshape


def empirical_moments(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row mean and unbiased (d-1) covariance of a d x p sample matrix.

    A single row yields a zero covariance. The result is plain numpy: targets
    built from it never carry gradient.
    """
    rows = np.asarray(rows.value if isinstance(rows, DTensor) else rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError(f"expected a 2-D sample matrix, got shape {rows.shape}")
    d, p = rows.shape
    if d == 0:
        raise ValueError("empirical_moments needs at least one row")
    mean = rows.mean(axis=0)
    if d == 1:
        return mean, np.zeros((p, p))
    c = rows - mean
    return mean, (c.T @ c) / (d - 1)


def _cholesky(mats: np.ndarray, which: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        bad = [i for i in range(mats.shape[0]) if np.linalg.eigvalsh(mats[i]).min() <= 0]
        raise NumericError(
            f"{which} covariance is not positive definite after regularization (rows {bad[:5]})"
        ) from None


def gaussian_kl_rows(
    mu1: np.ndarray, cov1: np.ndarray, mu2, cov2, c: float
) -> DTensor:
    """Row-wise KL(N(mu1_b, cov1_b + cI) || N(mu2_b, cov2_b + cI)) as a (B, 1) tensor.

    ``mu1`` (B, p) and ``cov1`` (B, p, p) are constants. ``mu2`` is a (B, p)
    tensor and ``cov2`` a (B, p*p) tensor of flattened covariances; gradient
    flows only into these two.
    """
    mu2, cov2 = as_tensor(mu2), as_tensor(cov2)
    mu1 = np.asarray(mu1.value if isinstance(mu1, DTensor) else mu1, dtype=np.float64)
    cov1 = np.asarray(cov1.value if isinstance(cov1, DTensor) else cov1, dtype=np.float64)
    if c < 0:
        raise ValueError("regularizer c must be >= 0")
    b, p = mu2.shape
    if mu1.shape != (b, p) or cov1.shape != (b, p, p) or cov2.shape != (b, p * p):
        raise ValueError(
            f"gaussian_kl: dimension mismatch mu1 {mu1.shape}, cov1 {cov1.shape}, "
            f"mu2 {mu2.shape}, cov2 {cov2.shape}"
        )
    eye = np.eye(p)
    s1 = 0.5 * (cov1 + np.swapaxes(cov1, 1, 2)) + c * eye
    raw2 = cov2.value.reshape(b, p, p)
    s2 = 0.5 * (raw2 + np.swapaxes(raw2, 1, 2)) + c * eye
    l1 = _cholesky(s1, "target")
    l2 = _cholesky(s2, "decoded")
    logdet1 = 2.0 * np.log(np.diagonal(l1, axis1=1, axis2=2)).sum(axis=1)
    logdet2 = 2.0 * np.log(np.diagonal(l2, axis1=1, axis2=2)).sum(axis=1)
    l2inv = np.linalg.inv(l2)
    s2inv = np.swapaxes(l2inv, 1, 2) @ l2inv
    delta = mu2.value - mu1
    a = (s2inv @ delta[:, :, None])[:, :, 0]
    trace = (s2inv * s1).sum(axis=(1, 2))
    quad = (delta * a).sum(axis=1)
    kl = 0.5 * (logdet2 - logdet1 - p + trace + quad)

    def bwd(g):
        g = g.reshape(b)
        g_mu2 = g[:, None] * a
        inner = s2inv - s2inv @ s1 @ s2inv - a[:, :, None] * a[:, None, :]
        g_cov2 = 0.5 * g[:, None, None] * inner
        return (g_mu2, g_cov2.reshape(b, p * p))

    return custom_op(kl.reshape(b, 1), (mu2, cov2), bwd, "gaussian_kl")


def gaussian_kl(mu1, cov1, mu2, cov2, c: float = 0.0) -> DTensor:
    """KL(N(mu1, cov1 + cI) || N(mu2, cov2 + cI)) for a single pair, as a 1x1 tensor.

    ``mu1``/``cov1`` are treated as constants. ``mu2`` may be a length-p vector
    or a 1 x p / p x 1 tensor; ``cov2`` a p x p tensor.
    """
    mu2, cov2 = as_tensor(mu2), as_tensor(cov2)
    p = mu2.value.size
    mu1 = np.asarray(mu1.value if isinstance(mu1, DTensor) else mu1, dtype=np.float64).reshape(1, p)
    cov1 = np.asarray(cov1.value if isinstance(cov1, DTensor) else cov1, dtype=np.float64)
    if cov1.shape != (p, p) or cov2.shape != (p, p):
        raise ValueError(f"gaussian_kl: covariances must be {p}x{p}")
    return gaussian_kl_rows(
        mu1, cov1.reshape(1, p, p), reshape(mu2, (1, p)), reshape(cov2, (1, p * p)), c
    )


def target_logdet(cov1: np.ndarray, c: float) -> np.ndarray:
    """``log det(cov1_b + cI)`` per row; constant across epochs, so callers may cache it."""
    cov1 = np.asarray(cov1, dtype=np.float64)
    s1 = 0.5 * (cov1 + np.swapaxes(cov1, 1, 2)) + c * np.eye(cov1.shape[-1])
    return 2.0 * np.log(np.diagonal(_cholesky(s1, "target"), axis1=1, axis2=2)).sum(axis=1)


def gaussian_kl_samples(
    mu1: np.ndarray,
    cov1: np.ndarray,
    samples,
    q: int,
    c: float,
    logdet1: np.ndarray | None = None,
) -> DTensor:
    """Row-wise KL(N(mu1_b, cov1_b + cI) || N(m_b, S_b + cI)) from raw samples, as (B, 1).

    ``m_b`` and ``S_b`` are the mean and (q-1)-denominator covariance of rows
    ``b*q .. b*q+q-1`` of ``samples`` (B*q, p). Same value as
    ``gaussian_kl_rows(mu1, cov1, group_mean(x), group_cov(x))`` but the decoded
    covariance is handled through its rank-q factor (Woodbury identity), so no
    p x p inverse is formed and the cost per row is O(p^2 q). Gradient flows
    into ``samples`` only. ``cov1`` must be symmetric.
    """
    samples = as_tensor(samples)
    mu1 = np.asarray(mu1, dtype=np.float64)
    cov1 = np.asarray(cov1, dtype=np.float64)
    rows, p = samples.shape
    if q < 2 or rows % q:
        raise ValueError(f"gaussian_kl_samples: need q >= 2 dividing {rows}, got {q}")
    b = rows // q
    if mu1.shape != (b, p) or cov1.shape != (b, p, p):
        raise ValueError(
            f"gaussian_kl_samples: dimension mismatch mu1 {mu1.shape}, cov1 {cov1.shape}, "
            f"samples {samples.shape} with q={q}"
        )
    if not c > 0:
        raise ValueError("gaussian_kl_samples needs c > 0")
    if logdet1 is None:
        logdet1 = target_logdet(cov1, c)
    x = samples.value.reshape(b, q, p)
    mu2 = x.mean(axis=1)
    v = np.swapaxes(x - mu2[:, None, :], 1, 2) / np.sqrt(q - 1)  # (B, p, q), S = v v^T
    vt = np.swapaxes(v, 1, 2)
    # cov1 is taken as symmetric; (cov1 + cI) y is evaluated without forming it
    def s1_mul(y):
        return cov1 @ y + c * y

    m = vt @ v + c * np.eye(q)  # (B, q, q)
    lm = _cholesky(m, "decoded")
    lm_inv = np.linalg.inv(lm)
    m_inv = np.swapaxes(lm_inv, 1, 2) @ lm_inv

    def s2inv(y):
        # (cI + v v^T)^{-1} y for y of shape (B, p, r)
        return (y - v @ (m_inv @ (vt @ y))) / c

    logdet2 = (p - q) * np.log(c) + 2.0 * np.log(np.diagonal(lm, axis1=1, axis2=2)).sum(axis=1)
    delta = mu2 - mu1
    a = s2inv(delta[:, :, None])[:, :, 0]
    trace1 = np.trace(cov1, axis1=1, axis2=2) + p * c
    trace = (trace1 - (m_inv * (vt @ s1_mul(v))).sum(axis=(1, 2))) / c
    quad = (delta * a).sum(axis=1)
    kl = 0.5 * (logdet2 - logdet1 - p + trace + quad)

    def bwd(g):
        g = g.reshape(b)
        w = s2inv(v)  # S2^{-1} v
        gv = w - s2inv(s1_mul(w)) - a[:, :, None] * (a[:, None, :] @ v)  # 2 G v
        gx = np.swapaxes(gv, 1, 2) / np.sqrt(q - 1) + a[:, None, :] / q
        return ((g[:, None, None] * gx).reshape(rows, p),)

    return custom_op(kl.reshape(b, 1), (samples,), bwd, "gaussian_kl_samples")
