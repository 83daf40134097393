"""Adjacency-based area-level basis construction.

The area random effects live in the span of the eigenvectors of the area
adjacency matrix that have positive eigenvalues. Eigenvectors are sign- and
order-normalized so repeated runs (and relabeled but isomorphic graphs)
produce identical bases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_EIGEN_TOL = 1e-8


@dataclass(frozen=True)
class BasisMatrix:
    """r x q basis whose columns are unit-norm adjacency eigenvectors."""

    B: np.ndarray
    eigenvalues: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, float)
        ev = np.asarray(self.eigenvalues, float)
        if B.ndim != 2 or ev.ndim != 1 or B.shape[1] != ev.size:
            raise ValueError("basis matrix and eigenvalues are inconsistent")
        if B.shape[1] > B.shape[0]:
            raise ValueError("basis cannot have more columns than areas")
        # descending up to eigenvalue ties (repeated eigenvalues reorder freely)
        if ev.size and ((ev <= 0).any() or (np.diff(ev) > 1e-9).any()):
            raise ValueError("eigenvalues must be positive and descending")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "eigenvalues", ev)

    @property
    def r(self) -> int:
        return self.B.shape[0]

    @property
    def q(self) -> int:
        return self.B.shape[1]


def adjacency_eigenbasis(A, tol: float = DEFAULT_EIGEN_TOL) -> BasisMatrix:
    """Basis of adjacency eigenvectors with eigenvalues above ``tol``.

    ``A`` must be a symmetric 0/1 matrix with zero diagonal. Columns are
    ordered by descending eigenvalue and sign-normalized so the first entry
    larger than 1e-12 in magnitude is positive. Ties (repeated eigenvalues)
    are broken lexicographically on the rounded entries.
    """
    A = np.asarray(A, float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("adjacency matrix must be square")
    if not np.array_equal(A, A.T):
        raise ValueError("adjacency matrix must be symmetric")
    if np.diag(A).any():
        raise ValueError("adjacency matrix must have a zero diagonal")
    if not np.isin(A, (0.0, 1.0)).all():
        raise ValueError("adjacency entries must be 0 or 1")

    eigvals, eigvecs = np.linalg.eigh(A)
    keep = eigvals > tol
    if not keep.any():
        raise ValueError("adjacency matrix has no positive eigenvalues; basis is empty")
    order = np.argsort(-eigvals[keep], kind="stable")
    values = eigvals[keep][order]
    vectors = eigvecs[:, keep][:, order]

    vectors = _fix_signs(vectors)
    vectors, values = _break_ties(vectors, values)
    return BasisMatrix(B=vectors, eigenvalues=values)


def area_design_rows(basis, area_index) -> np.ndarray:
    """Stack the basis row of each unit's area: row i is B[area_index[i], :].

    ``basis`` may be a BasisMatrix or a plain r x q row matrix; ``area_index``
    holds integer row positions.
    """
    B = basis.B if isinstance(basis, BasisMatrix) else np.asarray(basis, float)
    idx = np.asarray(area_index)
    if idx.size and (idx.min() < 0 or idx.max() >= B.shape[0]):
        raise KeyError(f"area index out of range for a {B.shape[0]}-row basis")
    return B[idx, :]


def _fix_signs(vectors):
    vectors = vectors.copy()
    for j in range(vectors.shape[1]):
        col = vectors[:, j]
        nonzero = np.flatnonzero(np.abs(col) > 1e-12)
        if nonzero.size and col[nonzero[0]] < 0:
            vectors[:, j] = -col
    return vectors


def _break_ties(vectors, values):
    # Within an eigenvalue tie the model is rotation-invariant; sort columns
    # on rounded entries only so the output is deterministic.
    order = np.arange(values.size)
    rounded = np.round(vectors / 1e-12) * 1e-12
    start = 0
    while start < values.size:
        stop = start
        while stop + 1 < values.size and abs(values[stop + 1] - values[start]) <= 1e-10:
            stop += 1
        if stop > start:
            block = order[start : stop + 1]
            keys = [tuple(rounded[:, j]) for j in block]
            perm = sorted(range(len(keys)), key=keys.__getitem__)
            order[start : stop + 1] = block[perm]
        start = stop + 1
    return vectors[:, order], values[order]
