"""Voxel token reordering for 3D (time x height x width) token grids.

After reordering, every run of ``vt*vh*vw`` consecutive tokens is one voxel,
so a column-sparse chunk of that size covers spatially adjacent tokens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LayoutError
from .tensor import DTYPE


@dataclass(frozen=True)
class VoxelLayout:
    t: int
    h: int
    w: int
    vt: int = 1
    vh: int = 1
    vw: int = 1

    def __post_init__(self):
        for name in ("t", "h", "w", "vt", "vh", "vw"):
            if getattr(self, name) < 1:
                raise LayoutError(f"{name} must be >= 1, got {getattr(self, name)}")
        for grid, vox in (("t", "vt"), ("h", "vh"), ("w", "vw")):
            if getattr(self, grid) % getattr(self, vox):
                raise LayoutError(
                    f"voxel dim {vox}={getattr(self, vox)} does not divide grid dim {grid}={getattr(self, grid)}"
                )

    @property
    def n_tokens(self) -> int:
        return self.t * self.h * self.w

    @property
    def voxel_volume(self) -> int:
        return self.vt * self.vh * self.vw

    def permutation(self) -> np.ndarray:
        """New position -> original flat raster index."""
        ids = np.arange(self.n_tokens, dtype=np.int64).reshape(1, self.t, self.h, self.w, 1)
        return _to_voxel(ids, self).reshape(-1)


def _to_voxel(x: np.ndarray, lay: VoxelLayout) -> np.ndarray:
    b, d = x.shape[0], x.shape[-1]
    tc, hc, wc = lay.t // lay.vt, lay.h // lay.vh, lay.w // lay.vw
    y = x.reshape(b, tc, lay.vt, hc, lay.vh, wc, lay.vw, d)
    # b tc vt hc vh wc vw d -> b tc hc wc vt vh vw d
    y = y.transpose(0, 1, 3, 5, 2, 4, 6, 7)
    return np.ascontiguousarray(y.reshape(b, lay.n_tokens, d))


def _check_grid(x: np.ndarray, lay: VoxelLayout) -> None:
    if x.ndim != 5 or x.shape[1:4] != (lay.t, lay.h, lay.w):
        raise LayoutError(f"expected [B, {lay.t}, {lay.h}, {lay.w}, D] grid, got {x.shape}")


def voxel_order(x: np.ndarray, layout: VoxelLayout) -> tuple[np.ndarray, np.ndarray]:
    """Flatten a ``[B, T, H, W, D]`` grid into voxel-major ``[B, N, D]`` order.

    Returns the reordered tokens and the permutation (new position -> original
    raster position).
    """
    x = np.asarray(x, dtype=DTYPE)
    _check_grid(x, layout)
    return _to_voxel(x, layout), layout.permutation()


def reverse_voxel_order(x: np.ndarray, layout: VoxelLayout) -> np.ndarray:
    """Inverse of :func:`voxel_order`: ``[B, N, D]`` back to ``[B, T, H, W, D]``."""
    x = np.asarray(x, dtype=DTYPE)
    if x.ndim != 3 or x.shape[1] != layout.n_tokens:
        raise LayoutError(f"expected [B, {layout.n_tokens}, D] tokens, got {x.shape}")
    lay = layout
    b, d = x.shape[0], x.shape[-1]
    tc, hc, wc = lay.t // lay.vt, lay.h // lay.vh, lay.w // lay.vw
    y = x.reshape(b, tc, hc, wc, lay.vt, lay.vh, lay.vw, d)
    y = y.transpose(0, 1, 4, 2, 5, 3, 6, 7)
    return np.ascontiguousarray(y.reshape(b, lay.t, lay.h, lay.w, d))
