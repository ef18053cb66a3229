"""
Uniform B-splines and their primitives in piecewise-polynomial (pp) form.

All arithmetic is in cell units: a cell is the interval [0, 1) in the
normalized coordinate ``xi``. On a given cell, the ``degree + 1`` basis
functions that do not vanish are numbered ``r = 0 .. degree`` with ``r = 0``
the function whose support begins furthest to the left.
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numba
import numpy as np

MAX_DEGREE = 12


def _poly_mul(a, b):
    # ascending-power coefficient lists
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        for j, bj in enumerate(b):
            out[i + j] += ai * bj
    return out


def _poly_add(a, b):
    n = max(len(a), len(b))
    a = a + [Fraction(0)] * (n - len(a))
    b = b + [Fraction(0)] * (n - len(b))
    return [x + y for x, y in zip(a, b)]


def _poly_shift(a, s):
    """Coefficients of ``a(t + s)`` (ascending powers)."""
    out = [Fraction(0)]
    # Horner in the shifted variable
    for c in reversed(a):
        out = _poly_add(_poly_mul(out, [Fraction(s), Fraction(1)]), [c])
    return out


def _fit(a, n):
    """Pad or trim ascending coefficients to length ``n`` (dropped terms must be 0)."""
    assert all(c == 0 for c in a[n:])
    return (a + [Fraction(0)] * n)[:n]


def _poly_integrate(a):
    return [Fraction(0)] + [c / (k + 1) for k, c in enumerate(a)]


def _poly_eval(a, x):
    return sum(c * x**k for k, c in enumerate(a))


def _cardinal_pieces(degree):
    """Exact pieces of the cardinal B-spline supported on [0, degree + 1).

    Piece ``k`` is returned as ascending coefficients in the local variable
    ``t = x - k`` on ``t`` in [0, 1).
    """
    # pieces in the global variable x, built by the Cox-de Boor recursion
    pieces = [[Fraction(1)]]
    for q in range(1, degree + 1):
        new = []
        for k in range(q + 1):
            acc = [Fraction(0)]
            if k < q:
                # x / q * B_{q-1}(x)
                acc = _poly_add(acc, _poly_mul([Fraction(0), Fraction(1, q)], pieces[k]))
            if k >= 1:
                # (q + 1 - x) / q * B_{q-1}(x - 1)
                shifted = _poly_shift(pieces[k - 1], -1)
                acc = _poly_add(acc, _poly_mul([Fraction(q + 1, q), Fraction(-1, q)], shifted))
            new.append(acc)
        pieces = new
    return [_fit(_poly_shift(p, k), degree + 1) for k, p in enumerate(pieces)]


@dataclass(frozen=True)
class PPSplineBasis:
    """pp-form of the uniform B-spline of one degree and of its primitive.

    Attributes
    ----------
    degree : int
    poly_coeffs : ndarray, shape (degree + 1, degree + 1)
        Row ``r`` holds the coefficients (highest power first) of basis
        function ``r`` restricted to the cell, as a polynomial in ``xi``.
    poly_coeffs_primitive : ndarray, shape (degree + 1, degree + 2)
        Row ``r`` holds the coefficients (highest power first) of the
        primitive of basis function ``r`` on the cell. The primitive is 0
        left of the support and 1 right of it.
    """

    degree: int
    poly_coeffs: np.ndarray
    poly_coeffs_primitive: np.ndarray


@lru_cache(maxsize=None)
def pp_coefficients(degree):
    """Build the pp-form of the uniform B-spline of ``degree``.

    Coefficients are computed with exact rational arithmetic and rounded to
    float64 once.
    """
    degree = int(degree)
    if degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"degree must lie in [0, {MAX_DEGREE}], got {degree}")
    pieces = _cardinal_pieces(degree)

    prim_pieces = []
    offset = Fraction(0)
    for p in pieces:
        integ = _poly_integrate(p)
        integ[0] += offset
        prim_pieces.append(integ)
        offset = _poly_eval(integ, 1)
    assert offset == 1

    coeffs = np.zeros((degree + 1, degree + 1))
    prim = np.zeros((degree + 1, degree + 2))
    for r in range(degree + 1):
        # basis r on this cell is piece (degree - r) of the cardinal spline
        k = degree - r
        coeffs[r] = [float(c) for c in reversed(pieces[k])]
        prim[r] = [float(c) for c in reversed(prim_pieces[k])]
    coeffs.setflags(write=False)
    prim.setflags(write=False)
    return PPSplineBasis(degree, coeffs, prim)


@numba.njit(nogil=True, cache=True)
def horner_rows(coeffs, xi, out, offset, stride):
    """Evaluate every row of ``coeffs`` at ``xi`` into ``out[offset + r*stride]``."""
    nrow, ncol = coeffs.shape
    for r in range(nrow):
        acc = coeffs[r, 0]
        for c in range(1, ncol):
            acc = acc * xi + coeffs[r, c]
        out[offset + r * stride] = acc


def _check_xi(xi):
    if not (0.0 <= xi < 1.0):
        raise ValueError(f"xi must lie in [0, 1), got {xi!r}")


def eval_basis(basis, xi):
    """Values of the ``degree + 1`` basis functions nonzero on the cell at ``xi``.

    ``xi`` may also be an array, giving shape ``xi.shape + (degree + 1,)``.
    """
    if np.ndim(xi):
        xi = np.asarray(xi, dtype=np.float64)
        if not np.all((xi >= 0.0) & (xi < 1.0)):
            raise ValueError("xi must lie in [0, 1)")
        acc = np.broadcast_to(basis.poly_coeffs[:, 0], xi.shape + (basis.degree + 1,)).copy()
        for c in range(1, basis.degree + 1):
            acc = acc * xi[..., None] + basis.poly_coeffs[:, c]
        return acc
    _check_xi(xi)
    out = np.empty(basis.degree + 1)
    horner_rows(basis.poly_coeffs, float(xi), out, 0, 1)
    return out


def eval_primitive(basis, xi):
    """Primitive values at ``xi`` in cell units.

    Entry 0 is the saturated primitive (always 1) of the function whose
    support ends at the left edge of the cell; entries ``1 .. degree + 1``
    are the primitives of the basis functions ``r = 0 .. degree`` that are
    nonzero on the cell. Functions further left are also saturated at 1;
    functions further right are 0.
    """
    _check_xi(xi)
    out = np.empty(basis.degree + 2)
    out[0] = 1.0
    horner_rows(basis.poly_coeffs_primitive, float(xi), out, 1, 1)
    return out
