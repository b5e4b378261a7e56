import numpy as np
from scipy.ndimage import median_filter


def median_filter_3d(cube: np.ndarray, radius=(1, 1, 1)) -> np.ndarray:
    """Per-voxel median over a ``(2r+1)`` box with replicated borders.

    ``cube`` is ``(frames, rows, cols)``; ``radius`` is given as
    ``(r_rows, r_cols, r_frames)``.
    """
    cube = np.asarray(cube)
    if cube.ndim != 3:
        raise ValueError("median_filter_3d expects a (frames, rows, cols) cube")
    ry, rx, rt = radius
    return median_filter(cube, size=(2 * rt + 1, 2 * ry + 1, 2 * rx + 1), mode="nearest")
