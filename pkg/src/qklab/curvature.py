"""Metric geometry on a chart: connection, curvature, and derived checks.

The Levi-Civita data is assembled from exact metric jets: Christoffel
symbols need first derivatives, the Riemann tensor second ones, both carried
by the Jet2 coefficients of a MetricField.  Everything downstream (Einstein
and Killing residuals, the Nijenhuis tensor, the curvature-span holonomy
bound) is plain dense linear algebra at a point.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Tuple, Union

import numpy as np

from .jetlinalg import JetMatrix
from .jets import ChartPoint, EvaluationError, Jet2, ScalarField
from .forms import KFormField, VectorField

__all__ = [
    "CurvatureAtPoint",
    "EndomorphismField",
    "IncompatibilityError",
    "MetricField",
    "acs_from_pair",
    "christoffel",
    "einstein_residual",
    "first_bianchi_residual",
    "holonomy_dim_estimate",
    "killing_residual",
    "metric_compatibility_residual",
    "nijenhuis",
    "pullback_metric",
    "ricci_two_form",
    "riemann_ricci_scalar",
    "symmetrized_covariant_derivative",
]

CoeffLike = Union[ScalarField, int, float]


class IncompatibilityError(Exception):
    """A metric/form pair fails to define an almost complex structure."""


@dataclass(frozen=True)
class MetricField:
    """Symmetric (0,2)-tensor field; positive definiteness is checked where
    an operation needs it, not at construction (quotient presentations may
    be degenerate on purpose)."""

    dim: int
    fn: Callable[[ChartPoint], JetMatrix]

    def eval(self, pt: ChartPoint) -> JetMatrix:
        if pt.dim != self.dim:
            raise ValueError("metric evaluated on the wrong chart")
        return self.fn(pt)

    # -- builders ------------------------------------------------------------

    @staticmethod
    def from_terms(
        dim: int,
        terms: Sequence[Tuple[CoeffLike, KFormField, KFormField]],
    ) -> "MetricField":
        """Sum of c * sym(a (x) b) over the given (c, a, b) triples.

        sym is the half-symmetrised product, so (c, a, a) contributes
        c * a (x) a and the polarisation 2 x (c, a, b) matches the tensor
        a (x) b + b (x) a.
        """
        from .jets import constant_field

        prepared = []
        for c, a, b in terms:
            if a.degree != 1 or b.degree != 1 or a.dim != dim or b.dim != dim:
                raise ValueError("metric terms need 1-forms on the same chart")
            cf = c if isinstance(c, ScalarField) else constant_field(float(c), dim)
            prepared.append((cf, a, b))

        def fn(pt):
            rows = [[Jet2.constant(0.0, dim) for _ in range(dim)] for _ in range(dim)]
            for cf, a, b in prepared:
                cj = cf(pt)
                av = _one_form_entries(a, pt, dim)
                bv = _one_form_entries(b, pt, dim)
                for i in range(dim):
                    for j in range(i, dim):
                        term = (av[i] * bv[j] + av[j] * bv[i]) * 0.5 * cj
                        rows[i][j] = rows[i][j] + term
            for i in range(dim):
                for j in range(i):
                    rows[i][j] = rows[j][i]
            return JetMatrix.from_jets(rows)

        return MetricField(dim, fn)

    def __add__(self, other: "MetricField") -> "MetricField":
        if other.dim != self.dim:
            raise ValueError("metrics on charts of different dimensions")
        return MetricField(self.dim, lambda pt: self.eval(pt) + other.eval(pt))

    def __sub__(self, other: "MetricField") -> "MetricField":
        return MetricField(self.dim, lambda pt: self.eval(pt) - other.eval(pt))

    def scale(self, factor: CoeffLike) -> "MetricField":
        if isinstance(factor, ScalarField):
            return MetricField(self.dim, lambda pt: self.eval(pt).scale(factor(pt)))
        c = float(factor)
        return MetricField(
            self.dim, lambda pt: self.eval(pt).scale(Jet2.constant(c, self.dim))
        )

    @staticmethod
    def flat(dim: int) -> "MetricField":
        eye = np.eye(dim)
        return MetricField(
            dim,
            lambda pt: JetMatrix(eye.copy(), np.zeros((dim, dim, dim)), np.zeros((dim, dim, dim, dim))),
        )

    @staticmethod
    def lift_block(inner: "MetricField", offset: int, dim: int) -> "MetricField":
        """Embed a metric on a sub-chart whose coordinates sit at an offset.

        Coefficients keep depending on the inner coordinates only; jets are
        zero-padded on the remaining directions.
        """

        def fn(pt):
            sub = ChartPoint(pt.coords[offset : offset + inner.dim])
            m = inner.eval(sub)
            n = inner.dim
            v = np.zeros((dim, dim))
            v[offset : offset + n, offset : offset + n] = m.value
            g = h = None
            if m.grad is not None:
                g = np.zeros((dim, dim, dim))
                g[offset : offset + n, offset : offset + n, offset : offset + n] = m.grad
                if m.hess is not None:
                    h = np.zeros((dim, dim, dim, dim))
                    h[
                        offset : offset + n,
                        offset : offset + n,
                        offset : offset + n,
                        offset : offset + n,
                    ] = m.hess
            return JetMatrix(v, g, h)

        return MetricField(dim, fn)

    def vector_flat(self, X: VectorField) -> KFormField:
        """The 1-form g(X, .)."""

        def fn(pt):
            m = self.eval(pt)
            comps = X.comps(pt)
            out = {}
            for j in range(self.dim):
                acc = None
                for i in range(self.dim):
                    term = m.entry(i, j) * comps[i]
                    acc = term if acc is None else acc + term
                out[(j,)] = acc
            return out

        return KFormField(self.dim, 1, fn)

    def inner(self, X: VectorField, Y: VectorField) -> ScalarField:
        """The function g(X, Y)."""

        def fn(pt):
            m = self.eval(pt)
            xc = X.comps(pt)
            yc = Y.comps(pt)
            acc = Jet2.constant(0.0, self.dim)
            for i in range(self.dim):
                for j in range(self.dim):
                    acc = acc + m.entry(i, j) * xc[i] * yc[j]
            return acc

        return ScalarField(self.dim, fn)


def _one_form_entries(a: KFormField, pt: ChartPoint, dim: int):
    coeffs = a.coeffs(pt)
    zero = Jet2.constant(0.0, dim)
    return [coeffs.get((i,), zero) for i in range(dim)]


@dataclass(frozen=True)
class EndomorphismField:
    """A (1,1)-tensor field J^i_j as a JetMatrix-valued map."""

    dim: int
    fn: Callable[[ChartPoint], JetMatrix]

    def eval(self, pt: ChartPoint) -> JetMatrix:
        if pt.dim != self.dim:
            raise ValueError("endomorphism evaluated on the wrong chart")
        return self.fn(pt)

    def apply_to_one_form(self, a: KFormField) -> KFormField:
        """The 1-form a composed with J: X -> a(J X)."""

        def fn(pt):
            jm = self.eval(pt)
            coeffs = a.coeffs(pt)
            out = {}
            for col in range(self.dim):
                acc = None
                for (m,), jet in coeffs.items():
                    term = jet * jm.entry(m, col)
                    acc = term if acc is None else acc + term
                if acc is not None:
                    out[(col,)] = acc
            return out

        return KFormField(self.dim, 1, fn)


@dataclass(frozen=True)
class CurvatureAtPoint:
    """Pointwise Levi-Civita data; riemann/ricci/scalar may be None for the
    connection-only variant."""

    christoffel: np.ndarray  # Gamma^a_{bc}
    riemann: np.ndarray | None  # R^a_{b c d}, antisymmetric in (c, d)
    ricci: np.ndarray | None
    scalar: float | None
    metric: np.ndarray
    metric_inv: np.ndarray
    metric_grad: np.ndarray  # d_k g_{ij} as [i, j, k]


def _metric_arrays(g: MetricField, pt: ChartPoint, need_hess: bool):
    m = g.eval(pt)
    if m.grad is None or (need_hess and m.hess is None):
        raise EvaluationError("metric lacks the jet depth needed for curvature", pt)
    try:
        np.linalg.cholesky(m.value)
    except np.linalg.LinAlgError as err:
        raise EvaluationError("metric not positive definite", pt) from err
    return m


def christoffel(g: MetricField, pt: ChartPoint) -> CurvatureAtPoint:
    """Christoffel symbols only (no curvature)."""
    m = _metric_arrays(g, pt, need_hess=False)
    vi = np.linalg.inv(m.value)
    gamma = _gamma(vi, m.grad)
    return CurvatureAtPoint(gamma, None, None, None, m.value, vi, m.grad)


def _gamma(vi: np.ndarray, grad: np.ndarray) -> np.ndarray:
    # grad[i, j, k] = d_k g_{ij}
    t = np.einsum("ad,dcb->abc", vi, grad) + np.einsum("ad,dbc->abc", vi, grad) - np.einsum(
        "ad,bcd->abc", vi, grad
    )
    return 0.5 * t


def riemann_ricci_scalar(g: MetricField, pt: ChartPoint) -> CurvatureAtPoint:
    m = _metric_arrays(g, pt, need_hess=True)
    vi = np.linalg.inv(m.value)
    gamma = _gamma(vi, m.grad)
    dvi = -np.einsum("ax,xyE,yb->abE", vi, m.grad, vi)
    # d_E Gamma^a_{bc}; hess[i, j, k, E] = d_E d_k g_{ij}
    dgamma = 0.5 * (
        np.einsum("adE,dcb->abcE", dvi, m.grad)
        + np.einsum("adE,dbc->abcE", dvi, m.grad)
        - np.einsum("adE,bcd->abcE", dvi, m.grad)
        + np.einsum("ad,dcbE->abcE", vi, m.hess)
        + np.einsum("ad,dbcE->abcE", vi, m.hess)
        - np.einsum("ad,bcdE->abcE", vi, m.hess)
    )
    # R^r_{s m n} = d_m Gamma^r_{n s} - d_n Gamma^r_{m s} + Gamma Gamma terms
    riem = (
        np.einsum("rnsm->rsmn", dgamma)
        - np.einsum("rmsn->rsmn", dgamma)
        + np.einsum("rml,lns->rsmn", gamma, gamma)
        - np.einsum("rnl,lms->rsmn", gamma, gamma)
    )
    ricci = np.einsum("msmn->sn", riem)
    scalar = float(np.einsum("sn,sn", vi, ricci))
    return CurvatureAtPoint(gamma, riem, ricci, scalar, m.value, vi, m.grad)


def metric_compatibility_residual(g: MetricField, pt: ChartPoint) -> float:
    c = christoffel(g, pt)
    nabla = (
        c.metric_grad.transpose(2, 0, 1)
        - np.einsum("dca,db->cab", c.christoffel, c.metric)
        - np.einsum("dcb,ad->cab", c.christoffel, c.metric)
    )
    return float(np.max(np.abs(nabla)))


def first_bianchi_residual(g: MetricField, pt: ChartPoint) -> float:
    r = riemann_ricci_scalar(g, pt).riemann
    cyc = r + np.einsum("rmns->rsmn", r) + np.einsum("rnsm->rsmn", r)
    return float(np.max(np.abs(cyc)))


def einstein_residual(g: MetricField, lam: float, pts: Sequence[ChartPoint]) -> float:
    """Max componentwise residual of Ric - lam * g over the sample points."""
    worst = 0.0
    for pt in pts:
        c = riemann_ricci_scalar(g, pt)
        worst = max(worst, float(np.max(np.abs(c.ricci - lam * c.metric))))
    return worst


def symmetrized_covariant_derivative(
    g: MetricField, X: VectorField, pt: ChartPoint
) -> np.ndarray:
    """nabla_i X_j + nabla_j X_i with indices lowered by g (values)."""
    c = christoffel(g, pt)
    m = g.eval(pt)
    comps = X.comps(pt)
    xv = np.array([j.value for j in comps])
    if any(j.grad is None for j in comps):
        raise EvaluationError("vector field lacks gradients for a Killing residual", pt)
    xg = np.array([j.grad for j in comps])  # xg[i, k] = d_k X^i
    x_low = c.metric @ xv
    # d_i X_j with X_j = g_{jk} X^k
    dx_low = np.einsum("jki,k->ij", c.metric_grad, xv) + np.einsum("jk,ki->ij", c.metric, xg)
    nabla = dx_low - np.einsum("mij,m->ij", c.christoffel, x_low)
    return nabla + nabla.T


def killing_residual(g: MetricField, X: VectorField, pts: Sequence[ChartPoint]) -> float:
    worst = 0.0
    for pt in pts:
        worst = max(worst, float(np.max(np.abs(symmetrized_covariant_derivative(g, X, pt)))))
    return worst


def acs_from_pair(g: MetricField, w: KFormField, tol: float = 1e-8) -> EndomorphismField:
    """Almost complex structure J with g(J . , . ) = w( . , . ).

    Raises IncompatibilityError at evaluation when J^2 deviates from -Id
    beyond tol (degenerate or non-compatible input).
    """
    if w.degree != 2:
        raise ValueError("acs_from_pair expects a 2-form")
    if w.dim != g.dim:
        raise ValueError("metric and form on different charts")
    n = g.dim

    def fn(pt):
        m = g.eval(pt)
        coeffs = w.coeffs(pt)
        rows = [[Jet2.constant(0.0, n) for _ in range(n)] for _ in range(n)]
        for (i, j), jet in coeffs.items():
            rows[i][j] = jet
            rows[j][i] = -jet
        omega = JetMatrix.from_jets(rows)
        # g(JX, Y) = w(X, Y)  =>  J = -g^{-1} w  in matrix components
        jm = m.inverse().matmul(omega)
        jm = -jm
        sq = jm.value @ jm.value
        if float(np.max(np.abs(sq + np.eye(n)))) > tol:
            raise IncompatibilityError(
                f"J^2 deviates from -Id by {np.max(np.abs(sq + np.eye(n))):.3e} "
                f"at point {pt.coords}"
            )
        return jm

    return EndomorphismField(n, fn)


def nijenhuis(J: EndomorphismField, pt: ChartPoint, tol: float = 1e-8) -> float:
    """Max component of the Nijenhuis tensor of J at a point.

    N^k_{ij} = J^m_i d_m J^k_j - J^m_j d_m J^k_i - J^k_m (d_i J^m_j - d_j J^m_i)
    """
    jm = J.eval(pt)
    n = J.dim
    if float(np.max(np.abs(jm.value @ jm.value + np.eye(n)))) > tol:
        raise IncompatibilityError(f"J^2 != -Id at {pt.coords}")
    if jm.grad is None:
        raise EvaluationError("endomorphism lacks gradients for the Nijenhuis tensor", pt)
    v, dv = jm.value, jm.grad  # dv[k, j, m] = d_m J^k_j
    term1 = np.einsum("mi,kjm->kij", v, dv)
    term2 = np.einsum("mj,kim->kij", v, dv)
    anti = dv.transpose(0, 2, 1)  # anti[m, i, j] = d_i J^m_j
    anti = anti - anti.transpose(0, 2, 1)
    term3 = np.einsum("km,mij->kij", v, anti)
    nij = term1 - term2 - term3
    return float(np.max(np.abs(nij)))


def holonomy_dim_estimate(g: MetricField, pt: ChartPoint, rel_threshold: float = 1e-8) -> int:
    """Dimension of the bracket closure of the curvature operators at a point.

    A lower bound for the restricted holonomy algebra (the curvature
    endomorphisms lie in it and it is a Lie subalgebra of so(n)).
    """
    c = riemann_ricci_scalar(g, pt)
    n = g.dim
    evals, evecs = np.linalg.eigh(c.metric)
    if np.any(evals <= 0):
        raise EvaluationError("metric not positive definite", pt)
    s = evecs @ np.diag(evals ** -0.5) @ evecs.T  # orthonormal frame columns
    s_inv = evecs @ np.diag(evals ** 0.5) @ evecs.T
    gens = []
    for mu in range(n):
        for nu in range(mu + 1, n):
            mat = s_inv @ c.riemann[:, :, mu, nu] @ s
            mat = 0.5 * (mat - mat.T)  # exact so(n) representative
            gens.append(mat)
    basis = _span_basis(gens, rel_threshold)
    while True:
        new = list(basis)
        for a, b in itertools.combinations(basis, 2):
            new.append(a @ b - b @ a)
        larger = _span_basis(new, rel_threshold)
        if len(larger) == len(basis):
            return len(basis)
        basis = larger


def _span_basis(mats: Sequence[np.ndarray], rel_threshold: float):
    if not mats:
        return []
    stack = np.array([m.ravel() for m in mats])
    scale = np.max(np.abs(stack))
    if scale == 0.0:
        return []
    u, sv, vt = np.linalg.svd(stack / scale, full_matrices=False)
    keep = sv > rel_threshold * sv[0]
    n = mats[0].shape[0]
    return [vt[i].reshape(n, n) for i in range(int(np.sum(keep)))]


def ricci_two_form(g: MetricField, J: EndomorphismField, pt: ChartPoint) -> np.ndarray:
    """Values of the 2-form Ric(J . , . ) at a point (the Ricci form when g
    is Kaehler with respect to J)."""
    c = riemann_ricci_scalar(g, pt)
    jv = J.eval(pt).value
    rho = np.einsum("ai,aj->ij", jv, c.ricci)
    return rho


def pullback_metric(comps: Sequence[ScalarField], target: MetricField) -> MetricField:
    """Value/gradient-level pullback of a metric along a map between charts."""
    dim_src = comps[0].dim
    if any(c.dim != dim_src for c in comps):
        raise ValueError("map components live on different charts")
    if len(comps) != target.dim:
        raise ValueError("map component count must equal the target dimension")

    def fn(pt):
        jets = [c(pt) for c in comps]
        image = ChartPoint(np.array([j.value for j in jets]))
        m = target.eval(image)
        jac = np.array([j.grad for j in jets])  # (tgt, src)
        v = jac.T @ m.value @ jac
        g = None
        if m.grad is not None and all(j.hess is not None for j in jets):
            # d_k (g_ij(phi) J^i_a J^j_b)
            dg_pulled = np.einsum("ijm,mk->ijk", m.grad, jac)
            hess = np.array([j.hess for j in jets])  # (tgt, src, src)
            g = (
                np.einsum("ia,ijk,jb->abk", jac, dg_pulled, jac)
                + np.einsum("iak,ij,jb->abk", hess, m.value, jac)
                + np.einsum("ia,ij,jbk->abk", jac, m.value, hess)
            )
        return JetMatrix(v, g, None)

    return MetricField(dim_src, fn)
