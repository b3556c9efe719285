"""Input validation helpers shared by the estimator-style forecasters."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, DomainError

__all__ = ["check_frames_array", "check_dem", "check_fitted"]


def check_frames_array(x, name: str = "X", n_frames: int | None = None,
                       grid: tuple[int, int] | None = None) -> np.ndarray:
    """Validate a (n_samples, n_frames, H, W) stack of reflectivity frames.

    Returns a float64 copy.  Optional `n_frames`/`grid` pin the expected
    frame count and spatial extents.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise DimensionError(f"{name} must be (n_samples, n_frames, H, W), got shape {x.shape}")
    if x.shape[0] < 1:
        raise DimensionError(f"{name} has no samples")
    if not np.isfinite(x).all():
        raise DomainError(f"{name} contains non-finite values")
    if n_frames is not None and x.shape[1] != n_frames:
        raise DimensionError(f"{name} has {x.shape[1]} frames, expected {n_frames}")
    if grid is not None and x.shape[2:] != tuple(grid):
        raise DimensionError(f"{name} grid {x.shape[2:]} does not match expected {tuple(grid)}")
    return x


def check_dem(dem, grid: tuple[int, int]) -> np.ndarray:
    """Validate a (H, W) normalized terrain grid in [0, 1]."""
    dem = np.asarray(dem, dtype=np.float64)
    if dem.ndim != 2:
        raise DimensionError(f"dem must be 2-D, got shape {dem.shape}")
    if dem.shape != tuple(grid):
        raise DimensionError(f"dem grid {dem.shape} does not match expected {tuple(grid)}")
    if not np.isfinite(dem).all():
        raise DomainError("dem contains non-finite values")
    if dem.min() < 0.0 or dem.max() > 1.0:
        raise DomainError(f"dem must be normalized to [0, 1], got range [{dem.min()}, {dem.max()}]")
    return dem


def check_fitted(estimator, attributes: tuple[str, ...]) -> None:
    """Raise sklearn's NotFittedError unless all trailing-underscore
    attributes exist."""
    from sklearn.exceptions import NotFittedError

    missing = [a for a in attributes if not hasattr(estimator, a)]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted yet; missing {missing}. "
            "Call fit before using this method."
        )
