"""Matrices of jets, stored struct-of-arrays for einsum-friendly calculus.

A JetMatrix bundles the pointwise value of a matrix-valued quantity with its
first and second coordinate derivatives.  Inverse and determinant propagate
derivatives through the standard identities d(A^-1) = -A^-1 dA A^-1 and
d(det A) = det A tr(A^-1 dA).
"""

from __future__ import annotations

import numpy as np

from .jets import EvaluationError, Jet2

__all__ = ["JetMatrix"]


class JetMatrix:
    """An (n x m) matrix of scalars with optional grad/hess arrays.

    value: (n, m); grad: (n, m, d); hess: (n, m, d, d) with d the chart dim.
    grad/hess are None when the corresponding derivatives are unknown.
    """

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad=None, hess=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = grad
        self.hess = hess

    @staticmethod
    def from_jets(entries) -> "JetMatrix":
        """Pack a nested sequence of Jet2 into a JetMatrix.

        Derivative arrays are kept only if every entry carries them.
        """
        n = len(entries)
        m = len(entries[0])
        v = np.empty((n, m))
        has_g = all(j.grad is not None for row in entries for j in row)
        has_h = has_g and all(j.hess is not None for row in entries for j in row)
        g = h = None
        if has_g:
            d = entries[0][0].grad.size
            g = np.zeros((n, m, d))
            if has_h:
                h = np.zeros((n, m, d, d))
        for i, row in enumerate(entries):
            for j, jet in enumerate(row):
                v[i, j] = jet.value
                if has_g:
                    g[i, j] = jet.grad
                    if has_h:
                        h[i, j] = jet.hess
        return JetMatrix(v, g, h)

    @property
    def shape(self):
        return self.value.shape

    def entry(self, i: int, j: int) -> Jet2:
        g = None if self.grad is None else self.grad[i, j].copy()
        h = None if self.hess is None else self.hess[i, j].copy()
        return Jet2(self.value[i, j], g, h)

    def transpose(self) -> "JetMatrix":
        g = None if self.grad is None else np.swapaxes(self.grad, 0, 1)
        h = None if self.hess is None else np.swapaxes(self.hess, 0, 1)
        return JetMatrix(self.value.T, g, h)

    def __add__(self, other: "JetMatrix") -> "JetMatrix":
        g = None if (self.grad is None or other.grad is None) else self.grad + other.grad
        h = None if (self.hess is None or other.hess is None or g is None) else self.hess + other.hess
        return JetMatrix(self.value + other.value, g, h)

    def __neg__(self) -> "JetMatrix":
        g = None if self.grad is None else -self.grad
        h = None if self.hess is None else -self.hess
        return JetMatrix(-self.value, g, h)

    def __sub__(self, other: "JetMatrix") -> "JetMatrix":
        return self + (-other)

    def matmul(self, other: "JetMatrix") -> "JetMatrix":
        a, b = self, other
        v = a.value @ b.value
        g = h = None
        if a.grad is not None and b.grad is not None:
            g = np.einsum("ixk,xj->ijk", a.grad, b.value) + np.einsum(
                "ix,xjk->ijk", a.value, b.grad
            )
            if a.hess is not None and b.hess is not None:
                cross = np.einsum("ixk,xjl->ijkl", a.grad, b.grad)
                h = (
                    np.einsum("ixkl,xj->ijkl", a.hess, b.value)
                    + np.einsum("ix,xjkl->ijkl", a.value, b.hess)
                    + cross
                    + np.swapaxes(cross, 2, 3)
                )
        return JetMatrix(v, g, h)

    def scale(self, jet: Jet2) -> "JetMatrix":
        v = jet.value * self.value
        g = h = None
        if jet.grad is not None and self.grad is not None:
            g = jet.value * self.grad + np.einsum("ij,k->ijk", self.value, jet.grad)
            if jet.hess is not None and self.hess is not None:
                cross = np.einsum("ijk,l->ijkl", self.grad, jet.grad)
                h = (
                    jet.value * self.hess
                    + np.einsum("ij,kl->ijkl", self.value, jet.hess)
                    + cross
                    + np.swapaxes(cross, 2, 3)
                )
        return JetMatrix(v, g, h)

    def inverse(self) -> "JetMatrix":
        n, m = self.value.shape
        if n != m:
            raise ValueError("inverse of a non-square JetMatrix")
        try:
            vi = np.linalg.inv(self.value)
        except np.linalg.LinAlgError as err:
            raise EvaluationError(f"singular matrix: {err}") from err
        g = h = None
        if self.grad is not None:
            # d(A^-1) = -A^-1 dA A^-1
            g = -np.einsum("ia,abk,bj->ijk", vi, self.grad, vi)
            if self.hess is not None:
                t1 = np.einsum("ia,abk,bc,cdl,dj->ijkl", vi, self.grad, vi, self.grad, vi)
                h = t1 + np.swapaxes(t1, 2, 3) - np.einsum(
                    "ia,abkl,bj->ijkl", vi, self.hess, vi
                )
        return JetMatrix(vi, g, h)

    def det(self) -> Jet2:
        val = float(np.linalg.det(self.value))
        if self.grad is None:
            return Jet2(val)
        vi = np.linalg.inv(self.value)
        # t_k = tr(A^-1 dA/dx_k)
        t = np.einsum("ab,bak->k", vi, self.grad)
        g = val * t
        if self.hess is None:
            return Jet2(val, g)
        trh = np.einsum("ab,bakl->kl", vi, self.hess)
        mix = np.einsum("ab,bck,cd,dal->kl", vi, self.grad, vi, self.grad)
        h = val * (np.outer(t, t) + trh - mix)
        return Jet2(val, g, h)
