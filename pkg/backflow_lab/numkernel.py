"""Dense complex linear algebra kernel
Kronecker products, partial traces, Hermitian eigen-decomposition and norms
on numpy arrays. Everything else in the package builds on these.
"""
from functools import reduce

import numpy as np

from backflow_lab.config import HERM_TOL
from backflow_lab.errors import DimensionMismatchError, NonHermitianError


def as_matrix(m):
    """Return m as a square complex ndarray."""
    arr = np.asarray(m, dtype=complex)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatchError(f"expected a square matrix, got shape {arr.shape}")
    return arr


def hermitian_part(m):
    m = np.asarray(m, dtype=complex)
    return (m + m.conj().T) / 2


def hermiticity_defect(m):
    """Largest entry of |M - M^dagger|."""
    m = np.asarray(m, dtype=complex)
    return float(np.abs(m - m.conj().T).max()) if m.size else 0.0


def is_hermitian(m, tol=HERM_TOL):
    """Hermitian within tol, relative to the largest entry when that exceeds 1."""
    m = np.asarray(m, dtype=complex)
    scale = max(1.0, float(np.abs(m).max())) if m.size else 1.0
    return hermiticity_defect(m) <= tol * scale


def kron(a, b):
    """Kronecker product of two matrices (A index major)."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def kron_all(*ms):
    return reduce(kron, ms)


def partial_trace(m, dims, keep):
    """Trace out every subsystem not listed in keep.

    dims are the subsystem dimensions in tensor order; keep is an index or a
    collection of indices. Kept subsystems stay in their original order.
    """
    m = np.asarray(m, dtype=complex)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims))
    if m.shape != (total, total):
        raise DimensionMismatchError(f"matrix of shape {m.shape} does not match dims {dims}")
    if np.isscalar(keep) or isinstance(keep, (int, np.integer)):
        keep = [int(keep)]
    keep = sorted(set(int(k) for k in keep))
    n = len(dims)
    if any(k < 0 or k >= n for k in keep):
        raise DimensionMismatchError(f"keep={keep} out of range for {n} subsystems")

    t = m.reshape(dims + dims)
    current = n
    for k in sorted(set(range(n)) - set(keep), reverse=True):
        t = np.trace(t, axis1=k, axis2=k + current)
        current -= 1
    kept = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(kept, kept)


def herm_eig(m, tol=HERM_TOL):
    """Eigen-decomposition of a Hermitian matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues real and sorted in
    descending order; eigenvectors are the matching orthonormal columns.
    The input is symmetrized before LAPACK is called.
    """
    m = as_matrix(m)
    if not is_hermitian(m, tol):
        raise NonHermitianError(
            f"matrix is not Hermitian (defect {hermiticity_defect(m):.3e})"
        )
    vals, vecs = np.linalg.eigh(hermitian_part(m))
    return vals[::-1].copy(), vecs[:, ::-1].copy()


def eigvalsh(m):
    """Ascending eigenvalues of the Hermitian part of m."""
    return np.linalg.eigvalsh(hermitian_part(as_matrix(m)))


def min_eig(m):
    return float(eigvalsh(m)[0])


def trace_norm(m):
    """Sum of singular values; eigenvalue magnitudes for Hermitian input."""
    m = as_matrix(m)
    if m.size == 0:
        return 0.0
    if is_hermitian(m):
        return float(np.abs(eigvalsh(m)).sum())
    return float(np.linalg.svd(m, compute_uv=False).sum())


def psd_sqrt(m):
    """Square root of a PSD matrix (negative eigenvalues clipped to zero)."""
    vals, vecs = np.linalg.eigh(hermitian_part(as_matrix(m)))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def psd_inv_sqrt(m, rcond=1e-12):
    """Pseudo-inverse square root on the support of a PSD matrix.

    Also returns the projector onto the numerical kernel (eigenvalues below
    rcond times the largest one).
    """
    vals, vecs = np.linalg.eigh(hermitian_part(as_matrix(m)))
    cutoff = rcond * max(float(vals[-1]), 0.0)
    support = vals > cutoff
    inv = np.zeros_like(vals)
    inv[support] = 1.0 / np.sqrt(vals[support])
    root = (vecs * inv) @ vecs.conj().T
    kernel_vecs = vecs[:, ~support]
    kernel = kernel_vecs @ kernel_vecs.conj().T
    return root, kernel


def projector(vector):
    """|v><v| for a (not necessarily normalized) vector, normalized first."""
    v = np.asarray(vector, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def basis_projector(dim, index):
    p = np.zeros((dim, dim), dtype=complex)
    p[index, index] = 1.0
    return p
