"""Temporal frequency spectrum and the motion-enhancing mean-removal residual.

The residual is the production path. The spectrum is kept as its oracle: the
sum of every non-DC band equals ``L`` times the residual's first frame.
"""

from __future__ import annotations

import numpy as np

from . import numcore as nc


def dct_spectrum(video, axis: int = 1) -> np.ndarray:
    """``T[k] = sum_i V(i) cos(2 pi k i / L)`` for ``k = 0 .. L-1`` along ``axis``.

    Uses the cosine kernel exactly as written, which is the real part of the
    DFT rather than a DCT-II.
    """
    v = np.asarray(video, dtype=np.float64)
    length = v.shape[axis]
    i = np.arange(length)
    basis = np.cos(2.0 * np.pi * np.outer(i, i) / length)  # [k, i]
    return np.moveaxis(np.tensordot(basis, np.moveaxis(v, axis, 0), axes=(1, 0)), 0, axis)


def stkd_residual(video, axis: int = -3) -> nc.Tensor:
    """Each frame minus the temporal mean. ``axis`` is the frame axis.

    The default fits ``C x L x H x W`` clips with any number of leading batch axes.
    Frames are first shifted by the (constant) first frame, which leaves the
    result unchanged but makes it exactly zero for a video of identical frames.
    """
    v = nc.as_tensor(video)
    first = np.take(v.data, [0], axis=axis)
    shifted = nc.sub(v, first) if v.data.size else v
    return nc.sub(shifted, nc.mean(shifted, axis=axis, keepdims=True))
