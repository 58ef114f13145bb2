"""Exterior algebra of differential forms and vector fields on a chart.

Forms are stored sparsely: a degree-k field maps a chart point to a dict
from strictly increasing index tuples to jet coefficients.  The exterior
derivative reads the jet gradients of the coefficients, so every identity
checked downstream (d^2 = 0, Leibniz, Cartan, structure equations) is exact
to rounding with no discretisation anywhere.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Sequence, Tuple, Union

import numpy as np

from .jetlinalg import JetMatrix
from .jets import ChartPoint, EvaluationError, Jet2, ScalarField, constant_field

__all__ = [
    "ComplexFormField",
    "KFormField",
    "VectorField",
    "coordinate_differential",
    "dc_derivative",
    "exterior_derivative",
    "form_values",
    "hodge_star",
    "interior_product",
    "lie_bracket",
    "lie_derivative",
    "max_abs_coeff",
    "one_form",
    "pair_one_form",
    "pullback_form",
    "two_form",
    "wedge",
]

Index = Tuple[int, ...]
Coeffs = Dict[Index, Jet2]
CoeffLike = Union[ScalarField, int, float]


def _merge_sign(left: Index, right: Index) -> Tuple[Index, int]:
    """Sort the concatenation of two disjoint increasing tuples.

    Returns (sorted tuple, permutation sign), or sign 0 on index overlap.
    """
    if set(left) & set(right):
        return (), 0
    combined = left + right
    inversions = 0
    for i in range(len(combined)):
        for j in range(i + 1, len(combined)):
            if combined[i] > combined[j]:
                inversions += 1
    return tuple(sorted(combined)), -1 if inversions % 2 else 1


def _insert_sign(m: int, idx: Index) -> Tuple[Index, int]:
    """Index tuple and sign for dx_m wedge dx_idx (idx increasing, m not in idx)."""
    pos = 0
    while pos < len(idx) and idx[pos] < m:
        pos += 1
    return idx[:pos] + (m,) + idx[pos:], -1 if pos % 2 else 1


def _accumulate(acc: Coeffs, key: Index, jet: Jet2) -> None:
    if key in acc:
        acc[key] = acc[key] + jet
    else:
        acc[key] = jet


def _is_zero_jet(j: Jet2) -> bool:
    if j.value != 0.0:
        return False
    if j.grad is not None and np.any(j.grad):
        return False
    if j.hess is not None and np.any(j.hess):
        return False
    return True


def _prune(acc: Coeffs) -> Coeffs:
    return {k: j for k, j in acc.items() if not _is_zero_jet(j)}


@dataclass(frozen=True)
class KFormField:
    """Degree-k differential form on a dim-dimensional chart."""

    dim: int
    degree: int
    fn: Callable[[ChartPoint], Coeffs]

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError("form degree must be non-negative")

    def coeffs(self, pt: ChartPoint) -> Coeffs:
        if pt.dim != self.dim:
            raise ValueError(f"form on dim-{self.dim} chart evaluated at dim-{pt.dim} point")
        if self.degree > self.dim:
            return {}
        return self.fn(pt)

    @staticmethod
    def zero(dim: int, degree: int) -> "KFormField":
        return KFormField(dim, degree, lambda pt: {})

    # -- linear algebra ----------------------------------------------------

    def __add__(self, other: "KFormField") -> "KFormField":
        if other.dim != self.dim or other.degree != self.degree:
            raise ValueError("can only add forms of matching dimension and degree")

        def fn(pt):
            acc = dict(self.coeffs(pt))
            for k, j in other.coeffs(pt).items():
                _accumulate(acc, k, j)
            return _prune(acc)

        return KFormField(self.dim, self.degree, fn)

    def __neg__(self) -> "KFormField":
        return KFormField(self.dim, self.degree, lambda pt: {k: -j for k, j in self.coeffs(pt).items()})

    def __sub__(self, other: "KFormField") -> "KFormField":
        return self + (-other)

    def __mul__(self, factor: CoeffLike) -> "KFormField":
        if isinstance(factor, ScalarField):
            if factor.dim != self.dim:
                raise ValueError("scaling field lives on a different chart")
            return KFormField(
                self.dim,
                self.degree,
                lambda pt: _scale_coeffs(self.coeffs(pt), factor(pt)),
            )
        c = float(factor)
        return KFormField(self.dim, self.degree, lambda pt: {k: j * c for k, j in self.coeffs(pt).items()})

    __rmul__ = __mul__

    def wedge(self, other: "KFormField") -> "KFormField":
        return wedge(self, other)


def _scale_coeffs(coeffs: Coeffs, jet: Jet2) -> Coeffs:
    return {k: j * jet for k, j in coeffs.items()}


def coordinate_differential(dim: int, index: int) -> KFormField:
    """The constant 1-form dx_index."""
    if not 0 <= index < dim:
        raise ValueError(f"index {index} out of range for dim {dim}")
    key = (index,)
    return KFormField(dim, 1, lambda pt: {key: Jet2.constant(1.0, dim)})


def _as_field(c: CoeffLike, dim: int) -> ScalarField:
    return c if isinstance(c, ScalarField) else constant_field(float(c), dim)


def one_form(dim: int, comps: Mapping[int, CoeffLike]) -> KFormField:
    fields = {i: _as_field(c, dim) for i, c in comps.items()}
    return KFormField(dim, 1, lambda pt: {(i,): f(pt) for i, f in fields.items()})


def two_form(dim: int, comps: Mapping[Tuple[int, int], CoeffLike]) -> KFormField:
    """Build a 2-form from {(i, j): coeff}; pairs may come in either order."""
    fields = {}
    for (i, j), c in comps.items():
        if i == j:
            raise ValueError("repeated index in a 2-form term")
        key, sign = ((i, j), 1.0) if i < j else ((j, i), -1.0)
        f = _as_field(c, dim) * sign
        fields[key] = fields[key] + f if key in fields else f
    return KFormField(dim, 2, lambda pt: {k: f(pt) for k, f in fields.items()})


def wedge(a: KFormField, b: KFormField) -> KFormField:
    if a.dim != b.dim:
        raise ValueError("wedge of forms on charts of different dimensions")
    degree = a.degree + b.degree
    if degree > a.dim:
        return KFormField.zero(a.dim, degree)

    def fn(pt):
        acc: Coeffs = {}
        bc = b.coeffs(pt)
        for ka, ja in a.coeffs(pt).items():
            for kb, jb in bc.items():
                key, sign = _merge_sign(ka, kb)
                if sign == 0:
                    continue
                _accumulate(acc, key, ja * jb if sign > 0 else ja * jb * -1.0)
        return _prune(acc)

    return KFormField(a.dim, degree, fn)


def wedge_power(a: KFormField, n: int) -> KFormField:
    if n < 1:
        raise ValueError("wedge power needs n >= 1")
    out = a
    for _ in range(n - 1):
        out = wedge(out, a)
    return out


def exterior_derivative(a: KFormField) -> KFormField:
    degree = a.degree + 1

    def fn(pt):
        acc: Coeffs = {}
        for idx, jet in a.coeffs(pt).items():
            if jet.grad is None:
                raise EvaluationError(
                    "exterior derivative needs coefficient gradients; "
                    "form was differentiated too many times",
                    pt,
                )
            for m in range(a.dim):
                if m in idx:
                    continue
                key, sign = _insert_sign(m, idx)
                part = jet.partial(m)
                _accumulate(acc, key, part if sign > 0 else -part)
        return _prune(acc)

    return KFormField(a.dim, degree, fn)


@dataclass(frozen=True)
class VectorField:
    """A vector field on a chart: components as jets."""

    dim: int
    fn: Callable[[ChartPoint], Sequence[Jet2]]

    def comps(self, pt: ChartPoint) -> Sequence[Jet2]:
        if pt.dim != self.dim:
            raise ValueError("vector field evaluated on the wrong chart")
        return self.fn(pt)

    @staticmethod
    def from_components(dim: int, comps: Mapping[int, CoeffLike]) -> "VectorField":
        fields = {i: _as_field(c, dim) for i, c in comps.items()}

        def fn(pt):
            zero = Jet2.constant(0.0, dim)
            out = [zero] * dim
            for i, f in fields.items():
                out[i] = f(pt)
            return out

        return VectorField(dim, fn)

    @staticmethod
    def coordinate(dim: int, index: int) -> "VectorField":
        return VectorField.from_components(dim, {index: 1.0})

    def __add__(self, other: "VectorField") -> "VectorField":
        if other.dim != self.dim:
            raise ValueError("vector fields on charts of different dimensions")
        return VectorField(
            self.dim,
            lambda pt: [x + y for x, y in zip(self.comps(pt), other.comps(pt))],
        )

    def __neg__(self) -> "VectorField":
        return VectorField(self.dim, lambda pt: [-x for x in self.comps(pt)])

    def __sub__(self, other: "VectorField") -> "VectorField":
        return self + (-other)

    def __mul__(self, factor: CoeffLike) -> "VectorField":
        if isinstance(factor, ScalarField):
            return VectorField(self.dim, lambda pt: [x * factor(pt) for x in self.comps(pt)])
        c = float(factor)
        return VectorField(self.dim, lambda pt: [x * c for x in self.comps(pt)])

    __rmul__ = __mul__

    def apply(self, f: ScalarField) -> ScalarField:
        """Directional derivative X(f); one jet order below f."""

        def fn(pt):
            jf = f(pt)
            comps = self.comps(pt)
            out = Jet2(0.0) if jf.grad is None else Jet2.constant(0.0, self.dim)
            for m, xm in enumerate(comps):
                out = out + xm * jf.partial(m)
            return out

        return ScalarField(self.dim, fn)


def interior_product(X: VectorField, a: KFormField) -> KFormField:
    if a.degree < 1:
        raise ValueError("interior product needs a form of degree >= 1")
    if X.dim != a.dim:
        raise ValueError("vector field and form live on different charts")

    def fn(pt):
        comps = X.comps(pt)
        acc: Coeffs = {}
        for idx, jet in a.coeffs(pt).items():
            for pos, i in enumerate(idx):
                key = idx[:pos] + idx[pos + 1 :]
                term = comps[i] * jet
                _accumulate(acc, key, term if pos % 2 == 0 else -term)
        return _prune(acc)

    return KFormField(a.dim, a.degree - 1, fn)


def lie_derivative(X: VectorField, a: KFormField) -> KFormField:
    """Cartan formula L_X = d iota_X + iota_X d (X(f) for degree 0)."""
    if a.degree == 0:

        def fn(pt):
            coeffs = a.coeffs(pt)
            jet = coeffs.get((), Jet2.constant(0.0, a.dim))
            comps = X.comps(pt)
            out = Jet2(0.0) if jet.grad is None else Jet2.constant(0.0, a.dim)
            for m, xm in enumerate(comps):
                out = out + xm * jet.partial(m)
            return {(): out}

        return KFormField(a.dim, 0, fn)
    first = exterior_derivative(interior_product(X, a))
    second = interior_product(X, exterior_derivative(a))
    return first + second


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    if X.dim != Y.dim:
        raise ValueError("bracket of vector fields on different charts")

    def fn(pt):
        xc = X.comps(pt)
        yc = Y.comps(pt)
        out = []
        for i in range(X.dim):
            acc = Jet2.constant(0.0, X.dim) if yc[i].grad is not None and xc[i].grad is not None else Jet2(0.0)
            for m in range(X.dim):
                acc = acc + xc[m] * yc[i].partial(m) - yc[m] * xc[i].partial(m)
            out.append(acc)
        return out

    return VectorField(X.dim, fn)


def pair_one_form(a: KFormField, X: VectorField) -> ScalarField:
    """The function a(X) for a 1-form a."""
    if a.degree != 1:
        raise ValueError("pair_one_form expects a 1-form")

    def fn(pt):
        comps = X.comps(pt)
        out = Jet2.constant(0.0, a.dim)
        for (i,), jet in a.coeffs(pt).items():
            out = out + jet * comps[i]
        return out

    return ScalarField(a.dim, fn)


def form_values(a: KFormField, pt: ChartPoint, vectors: Sequence[np.ndarray]) -> float:
    """Evaluate the form on constant vectors at a point."""
    if len(vectors) != a.degree:
        raise ValueError("need exactly degree many vectors")
    if a.degree == 0:
        c = a.coeffs(pt)
        return c.get((), Jet2(0.0)).value
    vecs = [np.asarray(v, dtype=float) for v in vectors]
    total = 0.0
    for idx, jet in a.coeffs(pt).items():
        mat = np.array([[v[i] for v in vecs] for i in idx])
        total += jet.value * np.linalg.det(mat)
    return total


def max_abs_coeff(a: KFormField, pt: ChartPoint) -> float:
    c = a.coeffs(pt)
    if not c:
        return 0.0
    return max(abs(j.value) for j in c.values())


# -- Hodge star ------------------------------------------------------------


def _perm_sign(seq: Sequence[int]) -> int:
    inversions = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inversions += 1
    return -1 if inversions % 2 else 1


def _jet_det(entries) -> Jet2:
    """Determinant of a small matrix of jets via permutation expansion."""
    k = len(entries)
    if k == 0:
        raise ValueError("empty determinant")
    total = None
    for perm in itertools.permutations(range(k)):
        term = entries[0][perm[0]]
        for r in range(1, k):
            term = term * entries[r][perm[r]]
        term = term if _perm_sign(perm) > 0 else -term
        total = term if total is None else total + term
    return total


def hodge_star(g, a: KFormField) -> KFormField:
    """Hodge star of a form with respect to a metric field.

    The chart's coordinate order is the positive orientation.  Raises on
    metrics that fail to be positive definite at the evaluation point.
    """
    if g.dim != a.dim:
        raise ValueError("metric and form on charts of different dimensions")
    n = a.dim
    k = a.degree

    def fn(pt):
        m = g.eval(pt)
        try:
            np.linalg.cholesky(m.value)
        except np.linalg.LinAlgError as err:
            raise EvaluationError("metric not positive definite", pt) from err
        ginv = m.inverse()
        sqrt_det = _jet_sqrt(m.det())
        coeffs = a.coeffs(pt)
        out: Coeffs = {}
        if k == 0:
            jet = coeffs.get(())
            if jet is not None:
                out[tuple(range(n))] = jet * sqrt_det
            return out
        full = set(range(n))
        # raise indices against g^{-1} via compound-matrix minors
        raised: Coeffs = {}
        for upper in itertools.combinations(range(n), k):
            acc = None
            for lower, jet in coeffs.items():
                minor = [[ginv.entry(i, j) for j in lower] for i in upper]
                term = _jet_det(minor) * jet
                acc = term if acc is None else acc + term
            if acc is not None:
                raised[upper] = acc
        for upper, jet in raised.items():
            rest = tuple(sorted(full - set(upper)))
            sign = _perm_sign(upper + rest)
            term = jet * sqrt_det
            _accumulate(out, rest, term if sign > 0 else -term)
        return _prune(out)

    return KFormField(n, n - k, fn)


def _jet_sqrt(j: Jet2) -> Jet2:
    if j.value <= 0:
        raise EvaluationError(f"sqrt of non-positive determinant {j.value}")
    s = float(np.sqrt(j.value))
    g = None if j.grad is None else 0.5 / s * j.grad
    h = None
    if j.hess is not None:
        h = 0.5 / s * j.hess - 0.25 / (s * j.value) * np.outer(j.grad, j.grad)
    return Jet2(s, g, h)


def dc_derivative(f: ScalarField, J) -> KFormField:
    """The 1-form df composed with an almost complex structure: X -> df(JX).

    With this sign the Kaehler form of the exponential level-one bundle
    satisfies omega = -1/2 d(dc t).
    """
    dim = f.dim

    def fn(pt):
        jf = f(pt)
        jm: JetMatrix = J.eval(pt)
        out: Coeffs = {}
        for col in range(dim):
            acc = None
            for m in range(dim):
                term = jf.partial(m) * jm.entry(m, col)
                acc = term if acc is None else acc + term
            out[(col,)] = acc
        return out

    return KFormField(dim, 1, fn)


# -- complex combinations ---------------------------------------------------


@dataclass(frozen=True)
class ComplexFormField:
    """A complex form stored as a pair of real forms of equal degree."""

    re: KFormField
    im: KFormField

    def __post_init__(self):
        if self.re.dim != self.im.dim or self.re.degree != self.im.degree:
            raise ValueError("real and imaginary parts must match in dim and degree")

    @property
    def dim(self) -> int:
        return self.re.dim

    @property
    def degree(self) -> int:
        return self.re.degree

    def wedge(self, other: "ComplexFormField") -> "ComplexFormField":
        re = wedge(self.re, other.re) - wedge(self.im, other.im)
        im = wedge(self.re, other.im) + wedge(self.im, other.re)
        return ComplexFormField(re, im)

    def power(self, n: int) -> "ComplexFormField":
        if n < 1:
            raise ValueError("power needs n >= 1")
        out = self
        for _ in range(n - 1):
            out = out.wedge(self)
        return out

    def d(self) -> "ComplexFormField":
        return ComplexFormField(exterior_derivative(self.re), exterior_derivative(self.im))

    def max_abs_coeff(self, pt: ChartPoint) -> float:
        return max(max_abs_coeff(self.re, pt), max_abs_coeff(self.im, pt))


# -- pullbacks ---------------------------------------------------------------


def pullback_form(comps: Sequence[ScalarField], target: KFormField) -> KFormField:
    """Pull a form back along the map whose components are given fields.

    Coefficients of the result carry exact values and gradients but no
    Hessians (the Jacobian of the map is itself a first-derivative object),
    so the pullback supports one further exterior derivative's worth of
    value-level checks; prefer pulling back d(form) over d(pullback).
    """
    dim_src = comps[0].dim
    if any(c.dim != dim_src for c in comps):
        raise ValueError("map components live on different charts")
    if len(comps) != target.dim:
        raise ValueError("map component count must equal the target dimension")

    def fn(pt):
        jets = [c(pt) for c in comps]
        image = ChartPoint(np.array([j.value for j in jets]))
        # Jacobian entries as order-1 jets: d(phi_i)/dx_j
        jac = [[j.partial(col) for col in range(dim_src)] for j in jets]
        coeffs = target.fn(image)
        out: Coeffs = {}
        for idx, jet in coeffs.items():
            composed = _compose_jet(jet, jets, dim_src)
            for jdx in itertools.combinations(range(dim_src), target.degree):
                minor = [[jac[i][j] for j in jdx] for i in idx]
                term = composed * _jet_det(minor)
                _accumulate(out, jdx, term)
        return _prune(out)

    if target.degree == 0:

        def fn0(pt):
            jets = [c(pt) for c in comps]
            image = ChartPoint(np.array([j.value for j in jets]))
            coeffs = target.fn(image)
            if () not in coeffs:
                return {}
            return {(): _compose_jet(coeffs[()], jets, dim_src)}

        return KFormField(dim_src, 0, fn0)

    return KFormField(dim_src, target.degree, fn)


def _compose_jet(outer: Jet2, inner_jets: Sequence[Jet2], dim_src: int) -> Jet2:
    """Chain rule for f(phi(x)) given the jet of f at phi(x) and jets of phi."""
    if outer.grad is None:
        return Jet2(outer.value)
    if any(j.grad is None for j in inner_jets):
        return Jet2(outer.value)
    jac = np.array([j.grad for j in inner_jets])  # (dim_tgt, dim_src)
    g = jac.T @ outer.grad
    if outer.hess is None or any(j.hess is None for j in inner_jets):
        return Jet2(outer.value, g)
    h = jac.T @ outer.hess @ jac
    for k, j in enumerate(inner_jets):
        h = h + outer.grad[k] * j.hess
    return Jet2(outer.value, g, h)
