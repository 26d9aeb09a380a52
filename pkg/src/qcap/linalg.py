"""Dense Hermitian matrix kernel.

Every matrix in qcap is a square complex ``numpy.ndarray``. Functions here
never modify their arguments; results are fresh arrays.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BadFactorization,
    DimensionMismatch,
    DimensionOverflow,
    NotHermitian,
    SingularMatrix,
)

#: Eigenvalues at or below ``KERNEL_TOL * max|eigenvalue|`` count as kernel.
KERNEL_TOL = 1e-12
#: Largest matrix dimension produced by tensor products unless overridden.
MAX_DIM = 4096


@dataclass(frozen=True)
class HermitianEigensystem:
    """Eigenvalues in non-decreasing order and column eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.conj().T


def as_matrix(m) -> np.ndarray:
    """Coerce ``m`` to a finite, square complex array."""
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def hermitian_part(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + dagger(m))


def check_hermitian(m: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    m = as_matrix(m)
    dev = np.max(np.abs(m - m.conj().T))
    if dev > tol:
        raise NotHermitian(f"matrix deviates from Hermitian by {dev:.3g} > {tol:.3g}")
    return hermitian_part(m)


def _jacobi_eigh(a: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Cyclic Jacobi diagonalization of a Hermitian matrix.

    Each rotation first removes the phase of the pivot ``a[p, q]`` and then
    applies the real symmetric Jacobi rotation to the 2x2 block.
    """
    a = np.array(a, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    scale = max(np.linalg.norm(a), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                r = abs(apq)
                if r <= 1e-300:
                    continue
                phase = apq / r
                app, aqq = a[p, p].real, a[q, q].real
                theta = 0.5 * math.atan2(2.0 * r, aqq - app)
                c, s = math.cos(theta), math.sin(theta)
                # columns p, q of J = diag(1, conj(phase)) @ [[c, s], [-s, c]]
                j = np.array([[c, s], [-s * phase.conjugate(), c * phase.conjugate()]])
                idx = [p, q]
                a[:, idx] = a[:, idx] @ j
                a[idx, :] = j.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                v[:, idx] = v[:, idx] @ j
    w = np.real(np.diag(a))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def eig_hermitian(m, hermiticity_tol: float = 1e-10, method: str = "lapack") -> HermitianEigensystem:
    """Eigendecomposition of a Hermitian matrix.

    The input is symmetrized before decomposition. ``method`` selects the
    LAPACK driver (default) or the built-in cyclic Jacobi solver.

    Raises:
        NotHermitian: if ``max|m - m^H| > hermiticity_tol``.
    """
    h = check_hermitian(m, hermiticity_tol)
    if method == "lapack":
        w, u = np.linalg.eigh(h)
    elif method == "jacobi":
        w, u = _jacobi_eigh(h)
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    w.setflags(write=False)
    u.setflags(write=False)
    return HermitianEigensystem(w, u)


def kernel_mask(w: np.ndarray, kernel_tol: float = KERNEL_TOL) -> np.ndarray:
    """Boolean mask of eigenvalues treated as zero (relative to the largest)."""
    top = np.max(np.abs(w), axis=-1, keepdims=True) if w.size else 0.0
    return np.abs(w) <= kernel_tol * top


def _scalar_function(func: str, p: float | None) -> Callable[[np.ndarray], np.ndarray]:
    if func == "log":
        return np.log
    if func == "abs":
        return np.abs
    if func == "pow":
        if p is None:
            raise ValueError("pow requires an exponent")
        if float(p).is_integer():
            k = int(p)
            return lambda x: x**k
        return lambda x: np.power(x, p)
    if func == "exp":
        return np.exp
    raise ValueError(f"unknown matrix function {func!r}")


def matrix_function(
    m,
    func: str,
    p: float | None = None,
    kernel_policy: str = "zero",
    kernel_tol: float = KERNEL_TOL,
    hermiticity_tol: float = 1e-10,
) -> np.ndarray:
    """Apply ``log``, ``pow`` (exponent ``p``), ``abs`` or ``exp`` spectrally.

    With ``kernel_policy="zero"`` eigenvalues inside the kernel (see
    :func:`kernel_mask`) are mapped to 0 for ``log`` and ``pow``, which gives
    support-restricted logarithms and generalized inverses. With
    ``kernel_policy="error"`` a log or negative power that touches the kernel
    raises :class:`SingularMatrix`.
    """
    if kernel_policy not in ("zero", "error"):
        raise ValueError(f"unknown kernel policy {kernel_policy!r}")
    es = eig_hermitian(m, hermiticity_tol)
    w = np.array(es.eigenvalues)
    f = _scalar_function(func, p)
    if func in ("abs", "exp"):
        fw = f(w)
    else:
        integer_power = func == "pow" and float(p).is_integer()
        kern = kernel_mask(w, kernel_tol)
        needs_support = func == "log" or (func == "pow" and p < 0)
        if needs_support and kernel_policy == "error" and np.any(kern):
            raise SingularMatrix(f"{func} of a singular matrix (min eigenvalue {w.min():.3g})")
        if not integer_power and np.any(w[~kern] < 0):
            raise ValueError(f"{func} of a matrix with negative eigenvalue {w.min():.3g}")
        fw = np.zeros_like(w)
        if integer_power and p >= 0:
            fw = f(w)
        else:
            fw[~kern] = f(w[~kern])
    u = es.eigenvectors
    return (u * fw) @ u.conj().T


def matrix_log(m, kernel_policy: str = "zero", kernel_tol: float = KERNEL_TOL) -> np.ndarray:
    return matrix_function(m, "log", kernel_policy=kernel_policy, kernel_tol=kernel_tol)


def matrix_power(m, p: float, kernel_policy: str = "zero", kernel_tol: float = KERNEL_TOL) -> np.ndarray:
    return matrix_function(m, "pow", p, kernel_policy=kernel_policy, kernel_tol=kernel_tol)


def matrix_abs(m) -> np.ndarray:
    return matrix_function(m, "abs")


def tensor_product(a, b, max_dim: int = MAX_DIM) -> np.ndarray:
    """Kronecker product; refuses results larger than ``max_dim``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] * b.shape[0] > max_dim or a.shape[1] * b.shape[1] > max_dim:
        raise DimensionOverflow(
            f"tensor product dimension {a.shape[0] * b.shape[0]} exceeds cap {max_dim}"
        )
    return np.kron(a, b)


def tensor_all(factors: Sequence[np.ndarray], max_dim: int = MAX_DIM) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for f in factors:
        out = tensor_product(out, f, max_dim)
    return out


def partial_trace(m, dims: Sequence[int], keep: Sequence[int] | int) -> np.ndarray:
    """Trace out every subsystem not listed in ``keep``.

    Args:
        m: operator on the product space with subsystem dimensions ``dims``.
        dims: subsystem dimensions, first factor leftmost in the Kronecker order.
        keep: indices of the subsystems to keep (order is preserved as given
            in ascending index order).
    """
    m = np.asarray(m)
    dims = [int(d) for d in dims]
    if any(d < 1 for d in dims) or int(np.prod(dims)) != m.shape[0] or m.shape[0] != m.shape[1]:
        raise BadFactorization(f"dims {dims} do not factor a {m.shape} matrix")
    if isinstance(keep, (int, np.integer)):
        keep = [int(keep)]
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise BadFactorization(f"keep indices {keep} out of range for {len(dims)} subsystems")
    n = len(dims)
    t = m.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if 2 * n > len(letters):
        raise BadFactorization("too many subsystems")
    row = list(letters[:n])
    col = list(letters[n : 2 * n])
    for i in range(n):
        if i not in keep:
            col[i] = row[i]
    out = "".join(row[k] for k in keep) + "".join(col[k] for k in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[k] for k in keep])) if keep else 1
    return res.reshape(dk, dk)


def min_eigenvalue(m) -> float:
    return float(np.linalg.eigvalsh(hermitian_part(np.asarray(m, dtype=complex)))[0])


def loewner_leq(a, b, tol: float = 1e-10) -> bool:
    """True iff ``b - a`` is positive semi-definite up to ``-tol``."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")
    return min_eigenvalue(b - a) >= -tol


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    w = np.linalg.eigvalsh(hermitian_part(np.asarray(a) - np.asarray(b)))
    return 0.5 * float(np.sum(np.abs(w)))


def matrix_to_json(m) -> dict:
    """Serialize as ``{"dim": n, "entries": [[re, im], ...]}`` in row-major order."""
    m = as_matrix(m)
    return {"dim": int(m.shape[0]), "entries": [[float(z.real), float(z.imag)] for z in m.ravel()]}


def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        n = int(obj["dim"])
        entries = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed matrix object: {exc}") from None
    if n < 1 or len(entries) != n * n:
        raise ValueError(f"expected {n * n} entries for dim {n}, got {len(entries)}")
    arr = np.array([complex(float(re), float(im)) for re, im in entries]).reshape(n, n)
    if not np.all(np.isfinite(arr)):
        raise ValueError("matrix file contains non-finite values")
    return arr
