"""Convolutional dictionaries, sparse codes and the linear operators between them.

Array conventions used throughout the package:

* an image is a 2-D float array of shape ``(H, W)``;
* a sparse code is a 3-D float array of shape ``(H, W, m)``; ``code[r, c]``
  is the needle of the pixel at ``(r, c)``, so ``code.ravel()`` is needle-major
  in row-major pixel order;
* a slice ``D_l @ needle`` placed at pixel ``(r, c)`` covers the ``n x n``
  window whose top-left corner is ``(r, c)``; patches are read from the same
  window. All indexing wraps periodically.

A stripe of location ``i`` gathers the needles at ``i + (dr, dc)`` for
``dr, dc`` in ``-(n-1) .. n-1``. The shifts are taken in row-major order and
the ``m`` atoms of one shift are contiguous, so a stripe vector has
``(2n-1)**2 * m`` entries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError


@dataclass(frozen=True, eq=False)
class LocalDictionary:
    """``m`` unit-norm ``n x n`` filters, stored as an ``(m, n, n)`` array."""

    atoms: np.ndarray
    _spectra: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim != 3 or atoms.shape[1] != atoms.shape[2] or atoms.shape[0] < 1:
            raise InvalidArgumentError(
                f"atoms must have shape (m, n, n), got {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise InvalidArgumentError("atoms contain non-finite values")
        norms = np.sqrt((atoms ** 2).sum(axis=(1, 2)))
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise InvalidArgumentError("every atom must have unit Euclidean norm")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_filters(cls, filters):
        """Normalize arbitrary nonzero filters to unit norm."""
        filters = np.asarray(filters, dtype=float)
        norms = np.sqrt((filters ** 2).sum(axis=(1, 2), keepdims=True))
        if np.any(norms == 0):
            raise InvalidArgumentError("cannot normalize a zero filter")
        return cls(filters / norms)

    @property
    def n(self):
        return self.atoms.shape[1]

    @property
    def m(self):
        return self.atoms.shape[0]

    @property
    def matrix(self):
        """The ``n**2 x m`` matrix whose columns are the vectorized atoms."""
        return self.atoms.reshape(self.m, -1).T

    def spectrum(self, shape):
        """rfft2 of the zero-padded filters on an ``shape`` periodic grid."""
        shape = tuple(shape)
        spec = self._spectra.get(shape)
        if spec is None:
            spec = np.fft.rfft2(self.atoms, s=shape, axes=(1, 2))
            spec.setflags(write=False)
            self._spectra[shape] = spec
        return spec


def build_dct_dictionary(n, m):
    """Separable 2-D DCT dictionary with ``m`` atoms of size ``n x n``.

    ``sqrt(m)`` one-dimensional cosines are sampled on ``n`` points; with
    ``m == n**2`` this is the orthonormal DCT-II basis, larger ``m`` gives an
    overcomplete frame. Atom 0 is the constant atom.
    """
    if n < 1 or m < 1:
        raise InvalidArgumentError("n and m must be positive")
    p = math.isqrt(m)
    if p * p != m:
        raise InvalidArgumentError(f"m={m} is not a perfect square")
    if p < n:
        raise InvalidArgumentError(f"sqrt(m)={p} is smaller than n={n}")
    t = np.arange(n)
    basis = np.cos(np.pi * np.outer(np.arange(p), 2 * t + 1) / (2 * p))
    basis /= np.linalg.norm(basis, axis=1, keepdims=True)
    atoms = np.einsum("ai,bj->abij", basis, basis).reshape(m, n, n)
    atoms /= np.sqrt((atoms ** 2).sum(axis=(1, 2), keepdims=True))
    return LocalDictionary(atoms)


def _check_image(x, name="image"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise InvalidArgumentError(f"{name} must be 2-D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError(f"{name} contains non-finite values")
    return x


def _check_code(code, dictionary):
    code = np.asarray(code, dtype=float)
    if code.ndim != 3 or code.shape[2] != dictionary.m:
        raise InvalidArgumentError(
            f"code must have shape (H, W, {dictionary.m}), got {code.shape}")
    if code.shape[0] < dictionary.n or code.shape[1] < dictionary.n:
        raise InvalidArgumentError("grid is smaller than the filter size")
    return code


def synthesize(dictionary, code):
    """Return ``D @ code``, the sum of slices ``R_i^T D_l alpha_i``."""
    code = _check_code(code, dictionary)
    shape = code.shape[:2]
    spec = np.fft.rfft2(code, axes=(0, 1))
    total = np.einsum("rcj,jrc->rc", spec, dictionary.spectrum(shape))
    return np.fft.irfft2(total, s=shape)


def analyze(dictionary, image):
    """Return ``D^T @ image`` (correlation with every filter), shape ``(H, W, m)``."""
    image = _check_image(image)
    if image.shape[0] < dictionary.n or image.shape[1] < dictionary.n:
        raise InvalidArgumentError("image is smaller than the filter size")
    shape = image.shape
    spec = np.fft.rfft2(image)
    prod = np.conj(dictionary.spectrum(shape)) * spec[None]
    out = np.fft.irfft2(prod, s=shape, axes=(1, 2))
    return np.moveaxis(out, 0, -1)


def stripe_shifts(n):
    """Offsets ``(dr, dc)`` of the needles in a stripe, in stripe order."""
    r = range(-(n - 1), n)
    return [(dr, dc) for dr in r for dc in r]


def stripe_length(n, m):
    return (2 * n - 1) ** 2 * m


def extract_stripe(code, loc, n):
    """Stripe vector ``S_i code`` of location ``loc = (row, col)``."""
    code = np.asarray(code, dtype=float)
    H, W, m = code.shape
    offs = np.arange(-(n - 1), n)
    rows = (loc[0] + offs) % H
    cols = (loc[1] + offs) % W
    return code[np.ix_(rows, cols)].reshape(-1)


def scatter_stripe(stripe, loc, shape, n):
    """Adjoint of :func:`extract_stripe`: a zero code with ``stripe`` added in place."""
    H, W, m = shape
    out = np.zeros(shape)
    offs = np.arange(-(n - 1), n)
    rows = (loc[0] + offs) % H
    cols = (loc[1] + offs) % W
    block = np.asarray(stripe, dtype=float).reshape(len(offs), len(offs), m)
    np.add.at(out, np.ix_(rows, cols), block)
    return out


def extract_stripes(code, n):
    """All stripes at once, shape ``(H, W, (2n-1)**2, m)``."""
    code = np.asarray(code, dtype=float)
    H, W, m = code.shape
    out = np.empty((H, W, (2 * n - 1) ** 2, m), dtype=code.dtype)
    for s, (dr, dc) in enumerate(stripe_shifts(n)):
        out[:, :, s, :] = np.roll(code, (-dr, -dc), axis=(0, 1))
    return out


def scatter_stripes(stripes, n):
    """Adjoint of :func:`extract_stripes`: ``sum_i S_i^T stripes[i]``."""
    H, W, S, m = stripes.shape
    out = np.zeros((H, W, m), dtype=stripes.dtype)
    for s, (dr, dc) in enumerate(stripe_shifts(n)):
        out += np.roll(stripes[:, :, s, :], (dr, dc), axis=(0, 1))
    return out


def extract_patch(image, loc, n):
    """Vectorized ``n x n`` patch ``R_i image`` with top-left corner ``loc``."""
    image = np.asarray(image, dtype=float)
    H, W = image.shape
    rows = (loc[0] + np.arange(n)) % H
    cols = (loc[1] + np.arange(n)) % W
    return image[np.ix_(rows, cols)].reshape(-1)


def scatter_patch(patch, loc, shape, n):
    """Adjoint of :func:`extract_patch`."""
    out = np.zeros(shape)
    rows = (loc[0] + np.arange(n)) % shape[0]
    cols = (loc[1] + np.arange(n)) % shape[1]
    np.add.at(out, np.ix_(rows, cols), np.asarray(patch, dtype=float).reshape(n, n))
    return out


def extract_patches(image, n):
    """All patches, shape ``(H, W, n**2)``."""
    image = np.asarray(image, dtype=float)
    H, W = image.shape
    out = np.empty((H, W, n * n), dtype=image.dtype)
    for q in range(n * n):
        out[:, :, q] = np.roll(image, (-(q // n), -(q % n)), axis=(0, 1))
    return out


def scatter_patches(patches, n):
    """Adjoint of :func:`extract_patches`: ``sum_i R_i^T patches[i]``."""
    H, W, _ = patches.shape
    out = np.zeros((H, W), dtype=patches.dtype)
    for q in range(n * n):
        out += np.roll(patches[:, :, q], (q // n, q % n), axis=(0, 1))
    return out


@dataclass(frozen=True, eq=False)
class StripeDictionary:
    """The stripe dictionary ``base`` and its theta-weighted version ``matrix``.

    ``matrix = (1 - theta) * base + theta * n**2 * local_padded``, which is
    ``base`` rescaled column-wise by ``weights``.
    """

    base: np.ndarray
    local_padded: np.ndarray
    theta: float
    matrix: np.ndarray
    n: int
    m: int

    @property
    def weights(self):
        """Diagonal of ``W_i``: ``1 - theta`` off-center, ``1 - theta + theta*n**2`` at the center shift."""
        S = (2 * self.n - 1) ** 2
        w = np.full((S, self.m), 1.0 - self.theta)
        w[S // 2] += self.theta * self.n ** 2
        return w.reshape(-1)


def _clipped_stripe_matrix(dictionary):
    n, m = dictionary.n, dictionary.m
    shifts = stripe_shifts(n)
    omega = np.zeros((n, n, len(shifts), m))
    for s, (dr, dc) in enumerate(shifts):
        # patch pixel q sees atom pixel q - (dr, dc)
        r0, r1 = max(dr, 0), min(n, n + dr)
        c0, c1 = max(dc, 0), min(n, n + dc)
        omega[r0:r1, c0:c1, s, :] = np.moveaxis(
            dictionary.atoms[:, r0 - dr:r1 - dr, c0 - dc:c1 - dc], 0, -1)
    return omega.reshape(n * n, len(shifts) * m)


def build_stripe_dictionary(dictionary, theta=0.0):
    if not 0.0 <= theta <= 1.0:
        raise InvalidArgumentError(f"theta must lie in [0, 1], got {theta}")
    n, m = dictionary.n, dictionary.m
    base = _clipped_stripe_matrix(dictionary)
    S = (2 * n - 1) ** 2
    padded = np.zeros_like(base)
    center = S // 2
    padded[:, center * m:(center + 1) * m] = dictionary.matrix
    if theta == 0.0:
        matrix = base.copy()
    else:
        matrix = (1.0 - theta) * base + theta * n ** 2 * padded
    for a in (base, padded, matrix):
        a.setflags(write=False)
    return StripeDictionary(base, padded, float(theta), matrix, n, m)


def needle_l1_map(code):
    """Per-location ``||alpha_i||_1``."""
    return np.abs(code).sum(axis=-1)


def stripe_l1_norms(code, n):
    """``||S_i code||_1`` for every location, by a periodic box sum of needle norms."""
    needles = needle_l1_map(code)
    out = np.zeros_like(needles)
    for dr, dc in stripe_shifts(n):
        out += np.roll(needles, (-dr, -dc), axis=(0, 1))
    return out


def l1inf_norm(code, n):
    """``max_i ||S_i code||_1``."""
    return float(stripe_l1_norms(code, n).max())
