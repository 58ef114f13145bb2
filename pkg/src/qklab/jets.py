"""Second-order forward-mode jets on coordinate charts.

Every derivative taken anywhere in this package flows through the
:class:`Jet2` type: a scalar value together with its exact gradient and
Hessian with respect to the chart coordinates.  Scalar fields are thin
closures from chart points to jets, composable through overloaded
arithmetic, so geometric constructors read like the formulas they encode.

Jets may be *degraded*: extracting a partial derivative of a field whose
coefficients were themselves produced by differentiation yields a jet whose
own Hessian (and eventually gradient) is unknown.  Unknown slots are ``None``
and any attempt to use them raises, rather than silently producing noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

__all__ = [
    "ChartPoint",
    "EvaluationError",
    "Jet2",
    "ScalarField",
    "arctan",
    "arctan2",
    "constant_field",
    "cos",
    "cosh",
    "exp",
    "finite_difference_check",
    "lift_coordinate",
    "ln",
    "power",
    "precompose_coordinate",
    "sample_box",
    "sin",
    "sinh",
    "sqrt",
]


class EvaluationError(Exception):
    """A field could not be evaluated (domain violation, singular data...).

    Carries the offending chart point when known.
    """

    def __init__(self, message: str, point: "ChartPoint | None" = None):
        if point is not None:
            message = f"{message} at point {np.asarray(point.coords)}"
        super().__init__(message)
        self.point = point


@dataclass(frozen=True)
class ChartPoint:
    """A point of a coordinate chart: a finite real vector."""

    coords: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.coords, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("chart point needs a nonempty coordinate vector")
        if not np.all(np.isfinite(c)):
            raise ValueError(f"chart point has non-finite coordinates: {c}")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return int(self.coords.size)

    def __getitem__(self, i: int) -> float:
        return float(self.coords[i])


class Jet2:
    """Value, gradient and Hessian of a scalar at a chart point.

    ``grad`` / ``hess`` may be ``None`` for jets obtained by differentiating
    other jets; arithmetic propagates the unknown slots.  A fresh analytic
    jet always carries both.
    """

    __slots__ = ("value", "grad", "hess")

    def __init__(self, value, grad=None, hess=None):
        self.value = float(value)
        self.grad = grad
        self.hess = hess
        if hess is not None and grad is None:
            raise ValueError("a jet with a Hessian must carry a gradient")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def constant(value: float, dim: int) -> "Jet2":
        return Jet2(value, np.zeros(dim), np.zeros((dim, dim)))

    @staticmethod
    def variable(value: float, index: int, dim: int) -> "Jet2":
        if not 0 <= index < dim:
            raise ValueError(f"coordinate index {index} out of range for dim {dim}")
        g = np.zeros(dim)
        g[index] = 1.0
        return Jet2(value, g, np.zeros((dim, dim)))

    @property
    def order(self) -> int:
        if self.hess is not None:
            return 2
        if self.grad is not None:
            return 1
        return 0

    def partial(self, m: int) -> "Jet2":
        """Jet of the m-th partial derivative; one order lower than self."""
        if self.grad is None:
            raise EvaluationError("cannot differentiate a jet without a gradient")
        if self.hess is None:
            return Jet2(self.grad[m])
        return Jet2(self.grad[m], self.hess[m].copy())

    # -- arithmetic --------------------------------------------------------

    @staticmethod
    def _coerce(x, like: "Jet2"):
        if isinstance(x, Jet2):
            return x
        d = None if like.grad is None else like.grad.size
        if d is None:
            return Jet2(float(x))
        return Jet2.constant(float(x), d)

    def __add__(self, other):
        o = Jet2._coerce(other, self)
        g = None if (self.grad is None or o.grad is None) else self.grad + o.grad
        h = None if (self.hess is None or o.hess is None or g is None) else self.hess + o.hess
        return Jet2(self.value + o.value, g, h)

    __radd__ = __add__

    def __neg__(self):
        g = None if self.grad is None else -self.grad
        h = None if self.hess is None else -self.hess
        return Jet2(-self.value, g, h)

    def __sub__(self, other):
        return self + (-Jet2._coerce(other, self))

    def __rsub__(self, other):
        return (-self) + Jet2._coerce(other, self)

    def __mul__(self, other):
        if not isinstance(other, Jet2):
            c = float(other)
            g = None if self.grad is None else c * self.grad
            h = None if self.hess is None else c * self.hess
            return Jet2(c * self.value, g, h)
        a, b = self, other
        g = None
        if a.grad is not None and b.grad is not None:
            g = a.grad * b.value + b.grad * a.value
        h = None
        if g is not None and a.hess is not None and b.hess is not None:
            cross = np.outer(a.grad, b.grad)
            h = a.hess * b.value + b.hess * a.value + cross + cross.T
        return Jet2(a.value * b.value, g, h)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet2":
        if self.value == 0.0:
            raise EvaluationError("division by a field vanishing at the point")
        inv = 1.0 / self.value
        return _unary(self, inv, -inv * inv, 2.0 * inv * inv * inv)

    def __truediv__(self, other):
        o = other if isinstance(other, Jet2) else Jet2._coerce(other, self)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return Jet2._coerce(other, self) * self.reciprocal()

    def __pow__(self, expo):
        return power(self, expo)


def _unary(j: Jet2, f: float, fp: float, fpp: float) -> Jet2:
    """Chain rule for f(j) from the value f and derivatives fp, fpp at j.value."""
    g = None if j.grad is None else fp * j.grad
    h = None
    if j.hess is not None:
        h = fp * j.hess + fpp * np.outer(j.grad, j.grad)
    return Jet2(f, g, h)


def _jexp(j: Jet2) -> Jet2:
    e = math.exp(j.value)
    return _unary(j, e, e, e)


def _jln(j: Jet2) -> Jet2:
    if j.value <= 0.0:
        raise EvaluationError(f"ln of non-positive value {j.value}")
    inv = 1.0 / j.value
    return _unary(j, math.log(j.value), inv, -inv * inv)


def _jsqrt(j: Jet2) -> Jet2:
    if j.value <= 0.0:
        raise EvaluationError(f"sqrt of non-positive value {j.value}")
    s = math.sqrt(j.value)
    return _unary(j, s, 0.5 / s, -0.25 / (s * j.value))


def _jsin(j: Jet2) -> Jet2:
    s, c = math.sin(j.value), math.cos(j.value)
    return _unary(j, s, c, -s)


def _jcos(j: Jet2) -> Jet2:
    s, c = math.sin(j.value), math.cos(j.value)
    return _unary(j, c, -s, -c)


def _jsinh(j: Jet2) -> Jet2:
    s, c = math.sinh(j.value), math.cosh(j.value)
    return _unary(j, s, c, s)


def _jcosh(j: Jet2) -> Jet2:
    s, c = math.sinh(j.value), math.cosh(j.value)
    return _unary(j, c, s, c)


def _jtan(j: Jet2) -> Jet2:
    t = math.tan(j.value)
    sec2 = 1.0 + t * t
    return _unary(j, t, sec2, 2.0 * t * sec2)


def _jarctan(j: Jet2) -> Jet2:
    den = 1.0 + j.value * j.value
    return _unary(j, math.atan(j.value), 1.0 / den, -2.0 * j.value / (den * den))


def _jpow(j: Jet2, expo) -> Jet2:
    if isinstance(expo, int) or (isinstance(expo, float) and expo.is_integer()):
        n = int(expo)
        if n == 0:
            d = None if j.grad is None else j.grad.size
            return Jet2(1.0) if d is None else Jet2.constant(1.0, d)
        if j.value == 0.0 and n < 2:
            if n < 0:
                raise EvaluationError("negative integer power of zero")
            # n == 1: identity
            return j
        v = j.value ** n
        fp = n * j.value ** (n - 1)
        fpp = n * (n - 1) * j.value ** (n - 2) if n != 1 else 0.0
        return _unary(j, v, fp, fpp)
    # non-integer exponent: positive base only (t**(1/4) style profiles)
    if j.value <= 0.0:
        raise EvaluationError(f"non-integer power of non-positive base {j.value}")
    e = float(expo)
    v = j.value ** e
    return _unary(j, v, e * v / j.value, e * (e - 1.0) * v / (j.value * j.value))


Real = Union[int, float]
FieldLike = Union["ScalarField", Real]


@dataclass(frozen=True)
class ScalarField:
    """A scalar field on a chart, evaluating to a second-order jet.

    Fields compose through arithmetic operators and the unary functions in
    this module; all resulting derivatives are exact.
    """

    dim: int
    fn: Callable[[ChartPoint], Jet2]

    def __call__(self, pt: ChartPoint) -> Jet2:
        if pt.dim != self.dim:
            raise ValueError(f"field on dim-{self.dim} chart evaluated at dim-{pt.dim} point")
        return self.fn(pt)

    def _binary(self, other: FieldLike, op):
        if isinstance(other, ScalarField):
            if other.dim != self.dim:
                raise ValueError("fields live on charts of different dimensions")
            return ScalarField(self.dim, lambda pt: op(self.fn(pt), other.fn(pt)))
        if not isinstance(other, (int, float)):
            return NotImplemented
        c = float(other)
        return ScalarField(self.dim, lambda pt: op(self.fn(pt), c))

    def __add__(self, other: FieldLike):
        return self._binary(other, lambda a, b: a + b)

    __radd__ = __add__

    def __sub__(self, other: FieldLike):
        return self._binary(other, lambda a, b: a - b)

    def __rsub__(self, other: FieldLike):
        return self._binary(other, lambda a, b: -a + b)

    def __mul__(self, other: FieldLike):
        return self._binary(other, lambda a, b: a * b)

    __rmul__ = __mul__

    def __truediv__(self, other: FieldLike):
        return self._binary(other, lambda a, b: a / b)

    def __rtruediv__(self, other: FieldLike):
        return self._binary(other, lambda a, b: a.reciprocal() * b)

    def __neg__(self):
        return ScalarField(self.dim, lambda pt: -self.fn(pt))

    def __pow__(self, expo: Real):
        return ScalarField(self.dim, lambda pt: _jpow(self.fn(pt), expo))


def lift_coordinate(index: int, dim: int) -> ScalarField:
    """The coordinate function x_index on a dim-dimensional chart."""
    if not 0 <= index < dim:
        raise ValueError(f"coordinate index {index} out of range for dim {dim}")
    return ScalarField(dim, lambda pt: Jet2.variable(pt[index], index, dim))


def constant_field(value: Real, dim: int) -> ScalarField:
    v = float(value)
    return ScalarField(dim, lambda pt: Jet2.constant(v, dim))


def _lift_unary(jfn) -> Callable[[FieldLike], ScalarField]:
    def wrapper(f: ScalarField) -> ScalarField:
        return ScalarField(f.dim, lambda pt: jfn(f.fn(pt)))

    return wrapper


exp = _lift_unary(_jexp)
ln = _lift_unary(_jln)
sqrt = _lift_unary(_jsqrt)
sin = _lift_unary(_jsin)
cos = _lift_unary(_jcos)
sinh = _lift_unary(_jsinh)
cosh = _lift_unary(_jcosh)
tan = _lift_unary(_jtan)
arctan = _lift_unary(_jarctan)


def power(base, expo):
    """base**expo for jets or fields; non-integer exponents need base > 0."""
    if isinstance(base, Jet2):
        return _jpow(base, expo)
    if isinstance(base, ScalarField):
        return base ** expo
    raise TypeError(f"power of unsupported type {type(base)!r}")


def arctan2(num: ScalarField, den: ScalarField) -> ScalarField:
    """The angle atan2(num, den); smooth away from the ray num=0, den<=0."""
    if num.dim != den.dim:
        raise ValueError("fields live on charts of different dimensions")

    def fn(pt: ChartPoint) -> Jet2:
        jv, ju = num.fn(pt), den.fn(pt)
        u, v = ju.value, jv.value
        r2 = u * u + v * v
        if r2 == 0.0:
            raise EvaluationError("atan2 undefined at the origin", pt)
        theta = math.atan2(v, u)
        tu, tv = -v / r2, u / r2
        tuu = 2 * u * v / (r2 * r2)
        tuv = (v * v - u * u) / (r2 * r2)
        tvv = -2 * u * v / (r2 * r2)
        g = h = None
        if ju.grad is not None and jv.grad is not None:
            g = tu * ju.grad + tv * jv.grad
            if ju.hess is not None and jv.hess is not None:
                cross = np.outer(ju.grad, jv.grad)
                h = (
                    tu * ju.hess
                    + tv * jv.hess
                    + tuu * np.outer(ju.grad, ju.grad)
                    + tuv * (cross + cross.T)
                    + tvv * np.outer(jv.grad, jv.grad)
                )
        return Jet2(theta, g, h)

    return ScalarField(num.dim, fn)


def precompose_coordinate(profile: ScalarField, index: int, dim: int) -> ScalarField:
    """Turn a one-variable field t -> f(t) into a chart field x -> f(x_index).

    Exact chain rule; the profile keeps full second-order data.
    """
    if profile.dim != 1:
        raise ValueError("precompose_coordinate expects a one-variable profile")

    def fn(pt: ChartPoint) -> Jet2:
        inner = ChartPoint(np.array([pt[index]]))
        j = profile.fn(inner)
        g = None
        h = None
        if j.grad is not None:
            g = np.zeros(dim)
            g[index] = j.grad[0]
        if j.hess is not None:
            h = np.zeros((dim, dim))
            h[index, index] = j.hess[0, 0]
        return Jet2(j.value, g, h)

    return ScalarField(dim, fn)


def finite_difference_check(field: ScalarField, pt: ChartPoint, h: float) -> float:
    """Max discrepancy between jet derivatives and central differences.

    Independent oracle for the AD engine: gradient by the O(h^2) two-point
    stencil, Hessian by the four-point stencil.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    d = pt.dim
    x = pt.coords
    jet = field(pt)
    if jet.grad is None or jet.hess is None:
        raise EvaluationError("finite_difference_check needs a fully differentiable field", pt)

    def val(delta):
        return field(ChartPoint(x + delta)).value

    worst = 0.0
    f0 = jet.value
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        gp = (val(ei) - val(-ei)) / (2 * h)
        worst = max(worst, abs(gp - jet.grad[i]))
        hii = (val(ei) - 2 * f0 + val(-ei)) / (h * h)
        worst = max(worst, abs(hii - jet.hess[i, i]))
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            hij = (val(ei + ej) - val(ei - ej) - val(-ei + ej) + val(-ei - ej)) / (4 * h * h)
            worst = max(worst, abs(hij - jet.hess[i, j]))
    return worst


def sample_box(box: Sequence[Sequence[float]], count: int, seed: int) -> list[ChartPoint]:
    """Reproducible uniform samples from a product of intervals."""
    box = np.asarray(box, dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ValueError("box must be a sequence of (lo, hi) pairs")
    rng = np.random.default_rng(seed)
    lo, hi = box[:, 0], box[:, 1]
    pts = rng.uniform(size=(count, box.shape[0])) * (hi - lo) + lo
    return [ChartPoint(row) for row in pts]
