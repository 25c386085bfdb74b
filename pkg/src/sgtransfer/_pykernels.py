"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` operation for operation so both backends
return bit-identical results.
"""

import numpy as np


def pairwise_iou(boxes):
    """IoU matrix for an ``(n, 4)`` array of ``x1, y1, x2, y2`` boxes."""
    boxes = np.ascontiguousarray(boxes, dtype=np.float64)
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValueError(f"expected (n, 4) boxes, got shape {boxes.shape}")
    x1, y1, x2, y2 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    area = (x2 - x1) * (y2 - y1)
    iw = np.minimum(x2[:, None], x2[None, :]) - np.maximum(x1[:, None], x1[None, :])
    ih = np.minimum(y2[:, None], y2[None, :]) - np.maximum(y1[:, None], y1[None, :])
    iw = np.maximum(iw, 0.0)
    ih = np.maximum(ih, 0.0)
    inter = iw * ih
    union = (area[:, None] + area[None, :]) - inter
    return inter / union


def label_ranks(scores, labels):
    """Zero-based rank of ``labels[i]`` among the non-NA columns of ``scores[i]``.

    Column 0 is NA and never competes. Equal scores rank the lower column
    first, so rank < k means the label is in the deterministic top-k.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if scores.ndim != 2 or labels.shape != (scores.shape[0],):
        raise ValueError("scores must be (m, d) and labels (m,)")
    m, d = scores.shape
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    if labels.min() < 1 or labels.max() >= d:
        raise ValueError("labels must index a non-NA column")
    rows = np.arange(m)
    own = scores[rows, labels][:, None]
    body = scores[:, 1:]
    cols = np.arange(1, d)[None, :]
    beats = (body > own) | ((body == own) & (cols < labels[:, None]))
    return beats.sum(axis=1).astype(np.int64)
