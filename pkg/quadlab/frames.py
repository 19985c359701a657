"""Rigid motions, rotation helpers and the RK4 step shared by the integrators."""

from typing import Any, Callable, Iterable

import numpy as np
import scipy.linalg

Array = Any


def hat(w: Array) -> Array:
    """Skew matrix [w]x with [w]x y = w x y; works on stacks (..., 3)."""
    w = np.asarray(w, dtype=float)
    out = np.zeros(w.shape[:-1] + (3, 3))
    out[..., 0, 1] = -w[..., 2]
    out[..., 0, 2] = w[..., 1]
    out[..., 1, 0] = w[..., 2]
    out[..., 1, 2] = -w[..., 0]
    out[..., 2, 0] = -w[..., 1]
    out[..., 2, 1] = w[..., 0]
    return out


def vee(m: Array) -> Array:
    """Inverse of `hat`, taking the skew part of `m`."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.stack(
        [
            m[..., 2, 1] - m[..., 1, 2],
            m[..., 0, 2] - m[..., 2, 0],
            m[..., 1, 0] - m[..., 0, 1],
        ],
        axis=-1,
    )


def orthogonality_error(m: Array) -> float:
    """max |M^T M - I| over a matrix or a stack of matrices."""
    m = np.asarray(m, dtype=float)
    n = m.shape[-1]
    gram = np.swapaxes(m, -1, -2) @ m
    return float(np.abs(gram - np.eye(n)).max()) if m.size else 0.0


def polar_project(m: Array) -> Array:
    """Nearest orthogonal matrix (polar factor), for one matrix or a stack."""
    m = np.asarray(m, dtype=float)
    if m.ndim == 2:
        return scipy.linalg.polar(m)[0]
    flat = m.reshape((-1,) + m.shape[-2:])
    return np.stack([scipy.linalg.polar(item)[0] for item in flat]).reshape(m.shape)


def rotation_2d(angle: Array) -> Array:
    """Planar rotation matrices for an angle (or array of angles)."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)


def rk4_step(
    fn: Callable[[float, Array], Array], s: float, y: Array, h: float
) -> Array:
    """One classical Runge-Kutta step of y' = fn(s, y)."""
    k1 = fn(s, y)
    k2 = fn(s + h / 2, y + h / 2 * k1)
    k3 = fn(s + h / 2, y + h / 2 * k2)
    k4 = fn(s + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


class RigidMotion:
    """A rigid motion x -> R x + t.

    `R` is orthogonal; improper motions (det R = -1) are allowed so that reflections
    can be represented, but everything built by the rolling machinery is proper.

    >>> shift = RigidMotion(np.eye(3), [1.0, 0.0, 0.0])
    >>> (shift @ shift.inverse()).distance(RigidMotion.identity())
    0.0
    """

    def __init__(self, R: Array, t: Array):
        self.R = np.asarray(R, dtype=float)
        self.t = np.asarray(t, dtype=float)
        if self.R.shape[-2:] != (3, 3) or self.t.shape[-1:] != (3,):
            raise ValueError(
                f"Expected R (3, 3) and t (3,), got {self.R.shape} and {self.t.shape}"
            )

    @classmethod
    def identity(cls) -> "RigidMotion":
        """The identity motion."""
        return cls(np.eye(3), np.zeros(3))

    def __call__(self, x: Array) -> Array:
        """Apply to points (..., 3)."""
        return np.asarray(x, dtype=float) @ self.R.T + self.t

    def rotate(self, v: Array) -> Array:
        """Apply the linear part to vectors (..., 3)."""
        return np.asarray(v, dtype=float) @ self.R.T

    def __matmul__(self, other: "RigidMotion") -> "RigidMotion":
        """Composition: (self @ other)(x) = self(other(x))."""
        return RigidMotion(self.R @ other.R, self.R @ other.t + self.t)

    def inverse(self) -> "RigidMotion":
        """The inverse motion."""
        return RigidMotion(self.R.T, -self.R.T @ self.t)

    def det(self) -> float:
        """Determinant of the linear part."""
        return float(np.linalg.det(self.R))

    def orthogonality_error(self) -> float:
        """max |R^T R - I|."""
        return orthogonality_error(self.R)

    def distance(self, other: "RigidMotion") -> float:
        """max-abs distance between two motions (rotation and translation parts)."""
        return float(
            max(np.abs(self.R - other.R).max(), np.abs(self.t - other.t).max())
        )

    def __repr__(self) -> str:
        return f"RigidMotion(R={self.R.tolist()}, t={self.t.tolist()})"


def compose_all(motions: Iterable[RigidMotion]) -> RigidMotion:
    """Left-to-right composition m0 @ m1 @ ..."""
    result = RigidMotion.identity()
    for motion in motions:
        result = result @ motion
    return result
