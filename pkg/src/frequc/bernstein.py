"""Cubic Bernstein polynomial algebra on the unit interval.

A signal segment is represented by four coefficients ``c`` so that

    F(t) = sum_k c[k] * C(3, k) * t**k * (1 - t)**(3 - k),   t in [0, 1].

Linear operators on the coefficient vector give the derivative (``W``), the
running integral (``L``) and conservative upper bounds (``J``).  All of them
are plain numpy arrays so they can be applied either to numbers or, row by
row, to decision variables of an optimization model.
"""

from functools import lru_cache
from math import comb

import numpy as np

from .errors import ConfigError, DomainError

DEGREE = 3
MAX_BOUND_DEPTH = 6

_BINOM3 = np.array([comb(3, k) for k in range(4)], dtype=float)


def as_coeffs(coeffs, size=4):
    """Validate and return a coefficient vector as a float array."""
    c = np.asarray(coeffs, dtype=float)
    if c.shape != (size,):
        raise DomainError(f"expected {size} Bernstein coefficients, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise DomainError("Bernstein coefficients must be finite")
    return c


def basis(t):
    """Cubic Bernstein basis at ``t``; returns shape ``t.shape + (4,)``."""
    t = np.asarray(t, dtype=float)
    k = np.arange(4)
    tt = t[..., None]
    return _BINOM3 * tt**k * (1.0 - tt) ** (3 - k)


def eval(coeffs, t):
    """Evaluate the cubic spline segment at normalized time ``t``.

    ``t`` may be a scalar or an array; every entry must lie in ``[0, 1]``.
    """
    c = as_coeffs(coeffs)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0) or not np.all(np.isfinite(t_arr)):
        raise DomainError("normalized time must lie in [0, 1]")
    # endpoints are interpolated exactly
    out = basis(t_arr) @ c
    out = np.where(t_arr == 0.0, c[0], out)
    out = np.where(t_arr == 1.0, c[3], out)
    return float(out) if out.ndim == 0 else out


def eval_quadratic(coeffs, t):
    """Evaluate a degree-2 Bernstein form (the image of :func:`derivative`)."""
    q = as_coeffs(coeffs, size=3)
    t = np.asarray(t, dtype=float)
    tt = t[..., None]
    k = np.arange(3)
    out = np.array([1.0, 2.0, 1.0]) * tt**k * (1.0 - tt) ** (2 - k) @ q
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _derivative_matrix():
    w = np.zeros((3, 4))
    for k in range(3):
        w[k, k] = -3.0
        w[k, k + 1] = 3.0
    w.setflags(write=False)
    return w


def derivative_matrix():
    """The 3x4 matrix ``W`` mapping cubic coefficients to derivative coefficients."""
    return _derivative_matrix()


def derivative(coeffs):
    """Exact derivative of the segment, as degree-2 Bernstein coefficients."""
    return derivative_matrix() @ as_coeffs(coeffs)


def integral_unit(coeffs):
    """Exact integral of the segment over ``[0, 1]``."""
    return float(np.sum(as_coeffs(coeffs)) / 4.0)


def _gram(m, n):
    # integral over [0,1] of B_{m,i} * B_{n,j}
    g = np.empty((m + 1, n + 1))
    for i in range(m + 1):
        for j in range(n + 1):
            g[i, j] = comb(m, i) * comb(n, j) / (comb(m + n, i + j) * (m + n + 1))
    return g


@lru_cache(maxsize=None)
def _integral_matrix():
    # Exact antiderivative of B_{3,k} in the degree-4 basis is (1/4) sum_{j>k} B_{4,j}.
    # Reduce it to degree 3 by L2 least squares with both endpoint values pinned:
    # 0 at t=0 and 1/4 (the exact integral over [0, 1]) at t=1.
    g33 = _gram(3, 3)
    g34 = _gram(3, 4)
    free = [1, 2]
    pinned = [0, 3]
    lmat = np.zeros((4, 4))
    for k in range(4):
        exact = np.zeros(5)
        exact[k + 1:] = 0.25
        row = np.zeros(4)
        row[3] = 0.25
        rhs = g34[free] @ exact - g33[np.ix_(free, pinned)] @ row[pinned]
        row[free] = np.linalg.solve(g33[np.ix_(free, free)], rhs)
        lmat[k] = row
    lmat.setflags(write=False)
    return lmat


def integral_matrix():
    """The 4x4 matrix ``L``: ``integral_0^t F ~= (L.T @ c) . B_3(t)``.

    Exact whenever ``F`` has degree at most 2.
    """
    return _integral_matrix()


def running_integral(coeffs):
    """Coefficients of the running integral ``t -> integral_0^t F``."""
    return integral_matrix().T @ as_coeffs(coeffs)


def subdivision_matrices(s):
    """Matrices ``(A, B)`` with ``A @ c`` / ``B @ c`` the left / right pieces at ``s``."""
    if not 0.0 < s < 1.0:
        raise DomainError("subdivision point must lie strictly inside (0, 1)")
    # de Casteljau: left piece row i is the i-th step of the triangle's left edge
    left = np.zeros((4, 4))
    right = np.zeros((4, 4))
    for i in range(4):
        for j in range(i + 1):
            left[i, j] = comb(i, j) * s**j * (1 - s) ** (i - j)
        n = 3 - i
        for j in range(n + 1):
            right[i, i + j] = comb(n, j) * s**j * (1 - s) ** (n - j)
    return left, right


def subdivide(coeffs, s=0.5):
    """Split the segment at ``s`` into two cubic pieces on rescaled time.

    Returns ``(left, right)`` with ``eval(left, u) == eval(c, s*u)`` and
    ``eval(right, u) == eval(c, s + (1-s)*u)``.
    """
    c = as_coeffs(coeffs)
    left, right = subdivision_matrices(s)
    return left @ c, right @ c


@lru_cache(maxsize=None)
def _bound_rows(depth):
    if depth == 0:
        j = np.eye(4)
    else:
        left, right = subdivision_matrices(0.5)
        prev = _bound_rows(depth - 1)
        blocks = [m @ blk for blk in np.split(prev, len(prev) // 4) for m in (left, right)]
        j = np.vstack(blocks)
    j.setflags(write=False)
    return j


def bound_rows(depth=1):
    """Stacked subdivision maps ``J`` for ``2**depth`` dyadic sub-intervals.

    By the convex-hull property ``J @ c <= u`` elementwise implies
    ``max_t F(t) <= u``.  Sub-intervals are stacked left to right, four rows
    each.
    """
    if int(depth) != depth or depth < 0:
        raise ConfigError(f"bound depth must be a non-negative integer, got {depth!r}")
    if depth > MAX_BOUND_DEPTH:
        raise ConfigError(f"bound depth {depth} exceeds the cap of {MAX_BOUND_DEPTH}")
    return _bound_rows(int(depth))


def upper_bound(coeffs, depth=1):
    """Convex-hull upper bound on ``max_t F(t)`` after ``depth`` subdivisions."""
    return float(np.max(bound_rows(depth) @ as_coeffs(coeffs)))
