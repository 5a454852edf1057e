"""Input validation helpers used by the public entry points."""

from __future__ import annotations

import numpy as np


def as_float_array(x, name: str, shape=None, dtype=np.float64) -> np.ndarray:
    """Coerce to a contiguous float array, optionally enforcing a shape.

    `shape` entries set to None are unconstrained (e.g. (None, 3)).
    """
    a = np.ascontiguousarray(x, dtype=dtype)
    if shape is not None:
        if a.ndim != len(shape):
            raise ValueError(f"{name}: expected {len(shape)}-d array, got {a.ndim}-d")
        for axis, want in enumerate(shape):
            if want is not None and a.shape[axis] != want:
                raise ValueError(f"{name}: expected shape {shape}, got {a.shape}")
    return a


def check_finite(a: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name}: contains non-finite values")
    return a


def check_rotation(r: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    """Validate a 3x3 orthonormal matrix with determinant +1."""
    r = as_float_array(r, "rotation", (3, 3))
    check_finite(r, "rotation")
    err = np.abs(r.T @ r - np.eye(3)).max()
    if err > atol:
        raise ValueError(f"rotation is not orthonormal (max |R^T R - I| = {err:.3g})")
    if np.linalg.det(r) < 0:
        raise ValueError("rotation has negative determinant (improper rotation)")
    return r


def check_unit_normals(normals: np.ndarray, atol: float = 1e-4) -> np.ndarray:
    lengths = np.linalg.norm(normals, axis=-1)
    worst = np.abs(lengths - 1.0).max() if lengths.size else 0.0
    if worst > atol:
        raise ValueError(f"normals are not unit length (max deviation {worst:.3g})")
    return normals


def check_probability_vector(p: np.ndarray, atol: float = 1e-6) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < -atol):
        raise ValueError("probabilities must be non-negative")
    s = p.sum()
    if abs(s - 1.0) > atol:
        raise ValueError(f"probabilities must sum to 1 (got {s!r})")
    return p
