"""Lanczos-based exponentiation and ground-state search for Hermitian operators.

Vectors may be numpy arrays or :class:`~kzxx.symtensor.SymTensor`; only
addition, scalar multiplication and :func:`inner` are used.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

from . import symtensor as st


def inner(a, b):
    if isinstance(a, st.SymTensor):
        return st.vdot(a, b)
    return np.vdot(a, b)


def _norm(v) -> float:
    return float(np.sqrt(abs(inner(v, v))))


def _lanczos_basis(matvec, v, m, tol):
    """Lanczos with full re-orthogonalisation; returns basis, alpha, beta."""
    basis = [v]
    alpha, beta = [], []
    for j in range(m):
        w = matvec(basis[j])
        a = inner(basis[j], w).real
        alpha.append(a)
        w = w - a * basis[j]
        if j > 0:
            w = w - beta[-1] * basis[j - 1]
        for _ in range(2):
            for u in basis:
                w = w - inner(u, w) * u
        b = _norm(w)
        if b < tol or j == m - 1:
            beta.append(b)
            break
        beta.append(b)
        basis.append(w / b)
    return basis, np.array(alpha), np.array(beta)


def expm_multiply(matvec, v, dt: complex, tol: float = 1e-12, max_krylov: int = 60):
    """Return ``exp(dt * H) v`` for Hermitian ``H`` given as ``matvec``.

    ``dt`` is usually ``-1j * tau``.  The Krylov space grows until the
    a-posteriori error estimate ``|beta_m * (e^{dt T})_{m,0}|`` drops below
    ``tol * ||v||``; the time step is split when ``max_krylov`` is not enough.
    """
    nrm = _norm(v)
    if nrm == 0.0:
        return v
    steps = 1
    while True:
        result = v
        ok = True
        for _ in range(steps):
            out = _expm_single(matvec, result, dt / steps, tol / steps, max_krylov)
            if out is None:
                ok = False
                break
            result = out
        if ok:
            return result
        steps *= 2
        if steps > 1024:
            raise RuntimeError("Krylov exponentiation failed to converge")


def _expm_single(matvec, v, dt, tol, m):
    nrm = _norm(v)
    basis = [v / nrm]
    alpha, beta = [], []
    y = np.ones(1, dtype=complex)
    for j in range(m):
        w = matvec(basis[j])
        a = inner(basis[j], w).real
        alpha.append(a)
        w = w - a * basis[j]
        if j > 0:
            w = w - beta[-1] * basis[j - 1]
        for _ in range(2):
            for u in basis:
                w = w - inner(u, w) * u
        b = _norm(w)
        T = np.diag(alpha) + np.diag(beta, 1) + np.diag(beta, -1)
        ev, U = scipy.linalg.eigh(T)
        y = U @ (np.exp(dt * ev) * U[0].conj())
        if b < 1e-14 or abs(b * y[-1]) < tol:
            break
        if j == m - 1:
            return None
        beta.append(b)
        basis.append(w / b)
    out = y[0] * basis[0]
    for c, bv in zip(y[1:], basis[1:]):
        out = out + c * bv
    return nrm * out


def lanczos_ground(matvec, v0, tol: float = 1e-12, krylov: int = 40, max_restarts: int = 50):
    """Lowest eigenpair of a Hermitian operator by restarted Lanczos."""
    v = v0 / _norm(v0)
    energy = np.inf
    for _ in range(max_restarts):
        basis, alpha, beta = _lanczos_basis(matvec, v, krylov, 1e-14)
        k = len(alpha)
        T = np.diag(alpha) + np.diag(beta[: k - 1], 1) + np.diag(beta[: k - 1], -1)
        w, U = scipy.linalg.eigh(T)
        y = U[:, 0]
        v = y[0] * basis[0]
        for c, b in zip(y[1:], basis[1:]):
            v = v + c * b
        v = v / _norm(v)
        resid = abs(beta[k - 1] * y[-1])
        converged = resid < tol or abs(energy - w[0]) < tol * max(1.0, abs(w[0])) * 1e-2
        energy = w[0]
        if converged or beta[k - 1] < 1e-14:
            break
    return float(energy), v
