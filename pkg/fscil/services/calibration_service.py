"""Set-to-set calibration of classifier columns and query embeddings."""

import math
from typing import Optional, Tuple

import numpy as np

from fscil.exceptions import DimensionError
from fscil.models import functional as F
from fscil.models.calibration import CalibrationParams
from fscil.models.network import Classifier
from fscil.models.tensor import Tensor


def _project(rows: Tensor, params: CalibrationParams) -> Tuple[Tensor, Tensor, Tensor]:
    """Queries, keys and values of k×d rows."""
    return (
        F.matmul(rows, params.w_q),
        F.matmul(rows, params.w_k),
        F.matmul(rows, params.w_v),
    )


def _attend(
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: CalibrationParams,
    train: bool,
    rng: Optional[np.random.Generator],
) -> Tensor:
    """Attention, output projection, residual, dropout and layer norm over b×m sets."""
    b, m, d = x.shape
    scores = F.scale(F.bmm(q, F.transpose(k)), 1.0 / math.sqrt(d))
    attended = F.bmm(F.softmax(scores, axis=-1), v)
    update = F.reshape(F.matmul(F.reshape(attended, (b * m, params.attn_dim)), params.w_fc), (b, m, d))

    p = params.dropout_p
    if params.dropout_position == "branch":
        return F.layer_norm(F.add(x, F.dropout(update, p, rng, train)), params.gamma, params.beta, params.eps)
    if params.dropout_position == "post_norm":
        return F.dropout(F.layer_norm(F.add(x, update), params.gamma, params.beta, params.eps), p, rng, train)
    return F.layer_norm(F.dropout(F.add(x, update), p, rng, train), params.gamma, params.beta, params.eps)


def self_attend(
    x: Tensor,
    params: CalibrationParams,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Apply single-head self-attention with a residual connection to a set or batch of sets.

    ``x`` is m×d (one set) or b×m×d (a batch of sets). Each set is calibrated
    independently and the output has the input's shape. Permuting the rows of
    a set permutes the output rows the same way.
    """
    single = x.ndim == 2
    if single:
        x = F.reshape(x, (1,) + x.shape)
    if x.ndim != 3 or x.shape[2] != params.dim:
        raise DimensionError(f"calibration expects sets of {params.dim}-d rows, got {x.shape}")
    b, m, d = x.shape

    projected = _project(F.reshape(x, (b * m, d)), params)
    q, k, v = (F.reshape(t, (b, m, params.attn_dim)) for t in projected)
    out = _attend(x, q, k, v, params, train, rng)
    if single:
        out = F.reshape(out, (m, d))
    return out


def calibrate(
    classifier: Classifier,
    embeddings: Tensor,
    params: CalibrationParams,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[Tensor, Tensor]:
    """Jointly adapt classifier columns and each query embedding.

    For every query row the set [w_1, …, w_n, φ(x)] is passed through the
    attention module. The columns are projected once and shared by all sets.
    Returns calibrated weights (b×n×d) and calibrated embeddings (b×d).
    """
    if embeddings.ndim != 2 or embeddings.shape[1] != params.dim:
        raise DimensionError(
            f"calibration expects {params.dim}-d embeddings, got shape {embeddings.shape}"
        )
    if classifier.dim != params.dim:
        raise DimensionError(
            f"classifier dimension {classifier.dim} does not match calibration {params.dim}"
        )
    b, d = embeddings.shape
    n = classifier.width
    d_attn = params.attn_dim
    columns = F.transpose(classifier.weights)

    def joined(shared: Tensor, own: Tensor, width: int) -> Tensor:
        return F.concat([F.repeat_batch(shared, b), F.reshape(own, (b, 1, width))], axis=1)

    sets = joined(columns, embeddings, d)
    q, k, v = (
        joined(shared, own, d_attn)
        for shared, own in zip(_project(columns, params), _project(embeddings, params))
    )
    out = _attend(sets, q, k, v, params, train, rng)
    weights = F.take(out, list(range(n)), axis=1)
    queries = F.reshape(F.take(out, [n], axis=1), (b, d))
    return weights, queries


def calibrated_logits(weights: Tensor, queries: Tensor) -> Tensor:
    """Per-instance logits from calibrated weights (b×n×d) and embeddings (b×d)."""
    b, n, d = weights.shape
    if queries.shape != (b, d):
        raise DimensionError(f"queries {queries.shape} do not match weights {weights.shape}")
    return F.reshape(F.bmm(weights, F.reshape(queries, (b, d, 1))), (b, n))


def calibrated_scores(
    classifier: Classifier,
    embeddings: Tensor,
    params: CalibrationParams,
    train: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Calibrate, then score every query against its own calibrated columns."""
    weights, queries = calibrate(classifier, embeddings, params, train=train, rng=rng)
    return calibrated_logits(weights, queries)
