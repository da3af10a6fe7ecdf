"""
Dense real-matrix kernels: one-sided Jacobi SVD, polar decomposition,
Gram matrices, column angles and Haar sampling on the Stiefel manifold.

Matrices are plain 2-D ``numpy.float64`` arrays.
"""

from typing import NamedTuple

import numpy as np

from .errors import DegenerateColumn, NumericalFailure, ShapeMismatch

MAX_SWEEPS = 60
DEGENERATE_NORM = 1e-12


class SvdResult(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray


class PolarResult(NamedTuple):
    q: np.ndarray
    p: np.ndarray


def as_mat(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeMismatch(f"expected a 2-D matrix, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeMismatch(f"empty matrix of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _round_robin(n):
    """Rounds of disjoint column pairs covering every pair exactly once."""
    players = list(range(n)) + ([-1] if n % 2 else [])
    k = len(players)
    rounds = []
    for _ in range(k - 1):
        pairs = [(players[i], players[k - 1 - i]) for i in range(k // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p >= 0 and q >= 0]
        if pairs:
            p, q = np.array(pairs).T
            rounds.append((p, q))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _complete_columns(u, missing):
    """Replace the columns listed in ``missing`` with an orthonormal completion."""
    m = u.shape[0]
    keep = [j for j in range(u.shape[1]) if j not in set(missing)]
    basis = [u[:, j] for j in keep]
    for j in missing:
        best, best_norm = None, -1.0
        for i in range(m):
            v = np.zeros(m)
            v[i] = 1.0
            for _ in range(2):
                for b in basis:
                    v -= (b @ v) * b
            nv = np.linalg.norm(v)
            if nv > best_norm:
                best, best_norm = v, nv
            if nv > 0.5:
                break
        best = best / best_norm
        u[:, j] = best
        basis.append(best)
    return u


def _jacobi_tall(a):
    m, n = a.shape
    work = a.copy()
    v = np.eye(n)
    eps = np.finfo(np.float64).eps
    tol = eps * m
    # columns this small carry only rounding noise; they are treated as null
    tiny = (eps * m * np.sqrt(np.sum(a * a))) ** 2
    rounds = _round_robin(n)
    residual = 0.0
    for _ in range(MAX_SWEEPS):
        rotated = False
        residual = 0.0
        for p, q in rounds:
            ap, aq = work[:, p], work[:, q]
            alpha = np.sum(ap * ap, axis=0)
            beta = np.sum(aq * aq, axis=0)
            gamma = np.sum(ap * aq, axis=0)
            scale = np.sqrt(alpha * beta)
            live = (alpha > tiny) & (beta > tiny)
            with np.errstate(divide="ignore", invalid="ignore"):
                rel = np.where(live, np.abs(gamma) / scale, 0.0)
            residual = max(residual, float(rel.max(initial=0.0)))
            act = rel > tol
            if not act.any():
                continue
            rotated = True
            p, q = p[act], q[act]
            alpha, beta, gamma = alpha[act], beta[act], gamma[act]
            zeta = (beta - alpha) / (2.0 * gamma)
            sign = np.where(zeta >= 0, 1.0, -1.0)
            t = sign / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            ap, aq = work[:, p], work[:, q]
            work[:, p] = c * ap - s * aq
            work[:, q] = s * ap + c * aq
            vp, vq = v[:, p], v[:, q]
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
        if not rotated:
            break
    else:
        raise NumericalFailure(
            f"Jacobi SVD did not converge in {MAX_SWEEPS} sweeps", residual=residual
        )

    sv = np.sqrt(np.sum(work * work, axis=0))
    order = np.argsort(-sv, kind="stable")
    sv, work, v = sv[order], work[:, order], v[:, order]
    u = np.zeros_like(work)
    missing = []
    for j in range(n):
        if sv[j] * sv[j] > tiny:
            u[:, j] = work[:, j] / sv[j]
        else:
            missing.append(j)
    if missing:
        u = _complete_columns(u, missing)
    return SvdResult(u, sv, v.T.copy())


def svd(a):
    """Thin singular value decomposition by one-sided Jacobi rotations.

    Parameters
    ----------
    a : array_like
        Finite real matrix of shape (m, d).

    Returns
    -------
    SvdResult
        ``u`` (m, r) with orthonormal columns, ``s`` (r,) descending and
        non-negative, ``vt`` (r, d); r = min(m, d).

    Raises
    ------
    NumericalFailure
        If the rotations have not converged after ``MAX_SWEEPS`` sweeps.
    """
    a = as_mat(a)
    if a.shape[0] >= a.shape[1]:
        return _jacobi_tall(a)
    u, s, vt = _jacobi_tall(a.T)
    return SvdResult(vt.T.copy(), s, u.T.copy())


def polar_decompose(a):
    """Factor a tall matrix as ``q @ p``.

    ``q`` has orthonormal columns and ``p = sqrt(a.T @ a)`` is symmetric
    positive semi-definite.
    """
    a = as_mat(a)
    if a.shape[0] < a.shape[1]:
        raise ShapeMismatch(f"polar decomposition needs rows >= cols, got {a.shape}")
    u, s, vt = svd(a)
    q = u @ vt
    p = (vt.T * s) @ vt
    p = 0.5 * (p + p.T)
    return PolarResult(q, p)


def gram(a):
    a = as_mat(a)
    g = a.T @ a
    return 0.5 * (g + g.T)


def frobenius_inner(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shape {a.shape} vs {b.shape}")
    # np.sum over a contiguous buffer uses pairwise summation.
    return float(np.sum(a * b))


def column_angles(a, skip_degenerate=False):
    """Pairwise angles in degrees between the columns of ``a``.

    Angles are returned for pairs (k, l), k < l, in row-major order. Columns
    with norm below ``DEGENERATE_NORM`` raise :class:`DegenerateColumn`, or
    are dropped from the pairing when ``skip_degenerate`` is set.
    """
    a = np.asarray(a, dtype=np.float64)
    norms = np.sqrt(np.sum(a * a, axis=0))
    bad = np.flatnonzero(norms <= DEGENERATE_NORM)
    if bad.size and not skip_degenerate:
        raise DegenerateColumn(bad.tolist())
    good = np.flatnonzero(norms > DEGENERATE_NORM)
    unit = a[:, good] / norms[good]
    cos = np.clip(unit.T @ unit, -1.0, 1.0)
    k, l = np.triu_indices(good.size, k=1)
    return np.degrees(np.arccos(cos[k, l]))


def sample_stiefel(m, d, seed):
    """Haar-distributed m x d matrix with orthonormal columns.

    QR of a standard Gaussian matrix, with the signs of R's diagonal folded
    into Q so the result does not depend on the QR routine's sign convention.
    """
    if not (m >= d >= 1):
        raise ShapeMismatch(f"need m >= d >= 1, got m={m}, d={d}")
    rng = np.random.default_rng(seed)
    return _haar_from_gaussian(rng.standard_normal((m, d)))


def sample_stiefel_batch(n, m, d, rng):
    """``n`` independent Haar draws as an (n, m, d) array, using ``rng``."""
    if not (m >= d >= 1):
        raise ShapeMismatch(f"need m >= d >= 1, got m={m}, d={d}")
    return _haar_from_gaussian(rng.standard_normal((n, m, d)))


def _haar_from_gaussian(g):
    q, r = np.linalg.qr(g)
    diag = np.diagonal(r, axis1=-2, axis2=-1)
    signs = np.where(diag < 0, -1.0, 1.0)
    return q * signs[..., None, :]
