"""Moment maps and quotients of the quaternion-Kahler bundle models.

Killing fields of the hyperKahler base lift to the three-torus bundle in a
kind-dependent way (tri-holomorphic, permuting, homothetic, plus the
vertical torus directions).  Every lift preserves the closed 4-form, so it
has a 2-form-valued moment map; this module builds the lifts, assembles the
closed-form moment maps, restricts to level sets of permuting actions, and
runs the inverse construction that rebuilds the hyperKahler base from the
quotient frame data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .jets import (
    ChartPoint,
    EvaluationError,
    Jet2,
    ScalarField,
    arctan2,
    constant_field,
    cosh,
    exp,
    lift_coordinate,
    sample_box,
    sinh,
    sqrt,
)
from .forms import (
    KFormField,
    VectorField,
    coordinate_differential,
    exterior_derivative,
    interior_product,
    lie_derivative,
    max_abs_coeff,
    one_form,
    pair_one_form,
    pullback_form,
    wedge,
)
from .curvature import MetricField, acs_from_pair, pullback_metric
from .spaces import (
    ConstructionError,
    HKData,
    SpaceModel,
    flat_base,
    flat_killing_field,
    lift_form,
    lift_vector,
)

__all__ = [
    "LiftedAction",
    "MomentMapData",
    "QuotientModel",
    "VerificationError",
    "build_lift",
    "frame_identities",
    "hkqk_inverse",
    "level_set_identities",
    "level_set_restrict",
    "moment_map",
    "reduced_metric",
]


class VerificationError(Exception):
    """A claimed identity failed beyond tolerance; carries the worst point."""

    def __init__(self, message: str, point: Optional[ChartPoint] = None):
        if point is not None:
            message = f"{message} (worst point {point.coords})"
        super().__init__(message)
        self.point = point


# -- lifted actions ------------------------------------------------------------


@dataclass
class LiftedAction:
    """A Killing field of the three-torus bundle covering a base action."""

    kind: str
    lift: VectorField
    base_field: Optional[VectorField]
    constants: Dict[str, float]
    permuting_weight: float = 0.0
    name: str = ""


def _check_sigma_action(base: HKData, X: VectorField, kind: str, probes, tol=1e-9) -> None:
    s1, s2, s3 = base.sigma
    if kind == "triholomorphic":
        resids = [lie_derivative(X, s) for s in base.sigma]
    elif kind == "permuting":
        resids = [
            lie_derivative(X, s1),
            lie_derivative(X, s2) + 2.0 * s3,
            lie_derivative(X, s3) - 2.0 * s2,
        ]
    elif kind == "homothetic":
        resids = [lie_derivative(X, s) + 2.0 * s for s in base.sigma]
    else:
        raise ValueError(f"unknown action kind {kind!r}")
    for r in resids:
        for pt in probes:
            v = max_abs_coeff(r, pt)
            if v > tol:
                raise ConstructionError(
                    f"base field does not act as {kind}: residual {v:.3e} at {pt.coords}"
                )


def _check_kappa_convention(base: HKData, X: VectorField, kind: str, probes, tol=1e-9) -> None:
    if base.kappa is None:
        raise ConstructionError("lifting needs kappa potentials on the base")
    k1, k2, k3 = base.kappa
    if kind == "triholomorphic":
        resids = [lie_derivative(X, k) for k in base.kappa]
        labels = ["L_X kappa1", "L_X kappa2", "L_X kappa3"]
    elif kind == "permuting":
        resids = [
            lie_derivative(X, k1),
            k2 - interior_product(X, base.sigma[2]) * 0.5,
            k3 + interior_product(X, base.sigma[1]) * 0.5,
        ]
        labels = ["L_X kappa1", "kappa2 convention", "kappa3 convention"]
    elif kind == "homothetic":
        resids = [lie_derivative(X, k) + 2.0 * k for k in base.kappa]
        labels = ["L_X kappa1 + 2 kappa1", "L_X kappa2 + 2 kappa2", "L_X kappa3 + 2 kappa3"]
    else:
        return
    for r, lab in zip(resids, labels):
        for pt in probes:
            v = max_abs_coeff(r, pt)
            if v > tol:
                raise ConstructionError(
                    f"{lab} fails for the {kind} lift: residual {v:.3e} at {pt.coords}"
                )


def _primitive_lift(base: HKData, X: VectorField, kind: str, a: float, dim: int) -> VectorField:
    y = [lift_coordinate(i, dim) for i in (1, 2, 3)]
    lifted = lift_vector(X, 4, dim)
    if kind == "triholomorphic":
        return lifted
    if kind == "permuting":
        rot = VectorField.from_components(dim, {2: -2.0 * y[2], 3: 2.0 * y[1]})
        extra = VectorField.from_components(dim, {1: -a / 2.0}) if a else None
        out = lifted + rot
        return out + extra if extra is not None else out
    if kind == "homothetic":
        scale = VectorField.from_components(
            dim, {1: -2.0 * y[0], 2: -2.0 * y[1], 3: -2.0 * y[2], 0: 1.0}
        )
        return lifted + scale
    raise ValueError(f"unknown primitive kind {kind!r}")


def build_lift(base: HKData, kind: str, constants: Optional[Dict[str, float]] = None) -> LiftedAction:
    """Lift a base action to the three-torus bundle chart (t, y1..y3, base).

    constants: per kind -- vertical takes a, b, c; permuting takes the level
    constant a; combination takes weights u, v, w plus vertical a, b, c.
    A 'field' entry selects the canonical flat-base vector field by name.
    """
    constants = dict(constants or {})
    dim = 4 + base.dim
    probes = sample_box(base.box or [(-0.5, 0.5)] * base.dim, 6, seed=2024)

    if kind == "vertical":
        a = constants.get("a", 0.0)
        b = constants.get("b", 0.0)
        c = constants.get("c", 0.0)
        lift = VectorField.from_components(dim, {1: -a, 2: b, 3: c})
        return LiftedAction("vertical", lift, None, constants, name=f"vertical({a},{b},{c})")

    if kind == "combination":
        u = constants.get("u", 0.0)
        v = constants.get("v", 0.0)
        w = constants.get("w", 0.0)
        parts: List[VectorField] = []
        if u:
            f, _ = flat_killing_field(base, "radial")
            parts.append(u * _primitive_lift(base, f, "homothetic", 0.0, dim))
            _check_sigma_action(base, f, "homothetic", probes)
            _check_kappa_convention(base, f, "homothetic", probes)
        if v:
            f, _ = flat_killing_field(base, "rotation_diag")
            parts.append(v * _primitive_lift(base, f, "permuting", 0.0, dim))
            _check_sigma_action(base, f, "permuting", probes)
            _check_kappa_convention(base, f, "permuting", probes)
        if w:
            f, _ = flat_killing_field(base, "rotation_antidiag")
            parts.append(w * _primitive_lift(base, f, "triholomorphic", 0.0, dim))
            _check_sigma_action(base, f, "triholomorphic", probes)
            _check_kappa_convention(base, f, "triholomorphic", probes)
        vert = VectorField.from_components(
            dim,
            {1: -constants.get("a", 0.0), 2: constants.get("b", 0.0), 3: constants.get("c", 0.0)},
        )
        parts.append(vert)
        lift = parts[0]
        for p in parts[1:]:
            lift = lift + p
        return LiftedAction(
            "combination", lift, None, constants, permuting_weight=v, name="combination"
        )

    field_spec = constants.pop("field", None)
    if isinstance(field_spec, VectorField):
        X = field_spec
        declared = kind
    elif field_spec is None:
        default = {"homothetic": "radial", "permuting": "rotation_diag", "triholomorphic": "rotation_antidiag"}
        X, declared = flat_killing_field(base, default[kind])
    else:
        X, declared = flat_killing_field(base, str(field_spec))

    _check_sigma_action(base, X, kind, probes)
    _check_kappa_convention(base, X, kind, probes)
    a = constants.get("a", 0.0)
    lift = _primitive_lift(base, X, kind, a, dim)
    weight = 1.0 if kind == "permuting" else 0.0
    return LiftedAction(kind, lift, X, constants, permuting_weight=weight, name=f"{kind}")


# -- moment maps ----------------------------------------------------------------


@dataclass
class MomentMapData:
    """Components of a moment map together with its defining residual."""

    components: Tuple[ScalarField, ScalarField, ScalarField]
    mu_alpha: ScalarField
    mu_xi: ScalarField
    mu_eta: ScalarField
    form: KFormField
    residual: float
    worst_point: Optional[ChartPoint]


def moment_map(
    action: LiftedAction,
    model: SpaceModel,
    pts: Optional[Sequence[ChartPoint]] = None,
    tol: float = 1e-8,
) -> MomentMapData:
    """Closed-form moment map of a lifted action on an N-type model.

    Verifies the defining identity d f = iota_X Omega at the sample points
    and raises VerificationError beyond the tolerance.
    """
    if model.which != "N":
        raise ValueError("moment maps are computed on N-type models")
    dim = model.dim
    t = lift_coordinate(0, dim)
    e2t = exp(2.0 * t)
    al, xi, eta = model.forms["alpha"], model.forms["xi"], model.forms["eta"]
    mu_alpha = -1.0 * pair_one_form(al, action.lift)
    mu_xi = pair_one_form(xi, action.lift)
    mu_eta = pair_one_form(eta, action.lift)
    f1 = mu_alpha
    if action.permuting_weight:
        f1 = f1 - (0.5 * action.permuting_weight) * exp(-2.0 * t)
    comps = (f1, mu_xi, mu_eta)
    f_form = (
        model.forms["omega1"] * (f1 * e2t)
        + model.forms["omega2"] * (mu_xi * e2t)
        + model.forms["omega3"] * (mu_eta * e2t)
    )
    resid = exterior_derivative(f_form) - interior_product(action.lift, model.forms["Omega"])
    if pts is None:
        pts = sample_box(model.box, 10, seed=31)
    worst, worst_pt = 0.0, None
    for pt in pts:
        v = max_abs_coeff(resid, pt)
        if v > worst:
            worst, worst_pt = v, pt
    if worst > tol:
        raise VerificationError(
            f"moment map identity fails for {action.name}: residual {worst:.3e}", worst_pt
        )
    return MomentMapData(comps, mu_alpha, mu_xi, mu_eta, f_form, worst, worst_pt)


# -- closed-form quotient metrics --------------------------------------------------


@dataclass
class QuotientModel:
    """A reduced metric on its natural chart, with its expected constants."""

    name: str
    chart: Tuple[str, ...]
    dim: int
    metric: MetricField
    provenance: str
    expected: Dict[str, float] = field(default_factory=dict)
    box: Optional[List[Tuple[float, float]]] = None
    killing: Optional[VectorField] = None
    degenerate: bool = False
    aux: Dict[str, object] = field(default_factory=dict)


def _round_sphere_coframe(dim: int, offset: int):
    """Left-invariant unit coframe of the round 3-sphere in Euler angles
    (theta, phi, psi) sitting at the given coordinate offset."""
    th = lift_coordinate(offset, dim)
    ps = lift_coordinate(offset + 2, dim)
    from .jets import cos as jcos, sin as jsin

    dth = coordinate_differential(dim, offset)
    dph = coordinate_differential(dim, offset + 1)
    dps = coordinate_differential(dim, offset + 2)
    g1 = (dth * jcos(ps) + dph * (jsin(ps) * jsin(th))) * 0.5
    g2 = (dth * jsin(ps) - dph * (jcos(ps) * jsin(th))) * 0.5
    g3 = (dps + dph * jcos(th)) * 0.5
    return g1, g2, g3


def reduced_metric(which: str, params: Optional[Dict[str, float]] = None) -> QuotientModel:
    """Closed-form reduced metrics of the bundled quotient constructions."""
    params = dict(params or {})
    if which in ("radial_R4", "sasaki_link"):
        dim = 4
        y = lift_coordinate(0, dim)
        dy = coordinate_differential(dim, 0)
        g1, g2, g3 = _round_sphere_coframe(dim, 1)
        warp = sinh(y) * sinh(y) * cosh(y) * cosh(y)
        metric = MetricField.from_terms(
            dim, [(1.0, dy, dy), (warp, g1, g1), (warp, g2, g2), (warp, g3, g3)]
        )
        return QuotientModel(
            name=which,
            chart=("y", "theta", "phi", "psi"),
            dim=dim,
            metric=metric,
            provenance="radial homothetic quotient over the cone link",
            expected={"scal": -48.0, "lambda": -12.0},
            box=[(0.4, 1.3), (0.5, 2.6), (-1.2, 1.2), (-1.2, 1.2)],
        )

    if which == "permuting_example1":
        a = params.get("a", 2.0)
        dim = 4
        x1 = lift_coordinate(0, dim)
        x2 = lift_coordinate(1, dim)
        p = lift_coordinate(2, dim)
        dx1 = coordinate_differential(dim, 0)
        dx2 = coordinate_differential(dim, 1)
        dp = coordinate_differential(dim, 2)
        dq = coordinate_differential(dim, 3)
        denom = (2.0 * p - a) ** 2
        c_plane = (2.0 * p + a) / denom
        c_p = (2.0 * p + a) / (4.0 * p * denom)
        c_fibre = p / (denom * (2.0 * p + a))
        theta_q = dq - 2.0 * (dx1 * x2 - dx2 * x1)
        metric = MetricField.from_terms(
            dim,
            [
                (c_plane, dx1, dx1),
                (c_plane, dx2, dx2),
                (c_p, dp, dp),
                (c_fibre, theta_q, theta_q),
            ],
        )
        box = [(-0.5, 0.5), (-0.5, 0.5), (0.15, 0.65), (-0.5, 0.5)]
        return QuotientModel(
            name=f"permuting_example1(a={a})",
            chart=("x1", "x2", "p", "q"),
            dim=dim,
            metric=metric,
            provenance="plane-rotation permuting quotient (explicit closed form)",
            expected={"scal": -48.0, "lambda": -12.0},
            box=box,
            killing=VectorField.from_components(dim, {3: 4.0}),
            aux={"a": a},
        )

    if which == "permuting_example2":
        a = params.get("a", 1.0)
        dim = 4
        x = [lift_coordinate(i, dim) for i in range(dim)]
        r2 = sum(xi * xi for xi in x)
        conf = a / ((constant_field(a, dim) - r2) ** 2)
        metric = MetricField.from_terms(
            dim,
            [(conf, coordinate_differential(dim, i), coordinate_differential(dim, i)) for i in range(dim)],
        )
        lim = float(np.sqrt(0.5 * min(a, 1.0)) * 0.495)
        return QuotientModel(
            name=f"permuting_example2(a={a})",
            chart=("x1", "x2", "x3", "x4"),
            dim=dim,
            metric=metric,
            provenance="diagonal-rotation permuting quotient (conformal closed form)",
            expected={"scal": -48.0, "lambda": -12.0},
            box=[(-lim, lim)] * dim,
            aux={"a": a},
        )

    if which == "homothetic_general":
        base = flat_base(n=1, kappa="radial")
        X, _ = flat_killing_field(base, "radial")
        dim = 5
        t = lift_coordinate(0, dim)
        dt = coordinate_differential(dim, 0)
        e2t = exp(2.0 * t)
        e4t = exp(4.0 * t)
        kappa = [lift_form(k, 1, dim) for k in base.kappa]
        xl = lift_vector(X, 1, dim)
        g_m = MetricField.lift_block(base.g, 1, dim)
        x_flat = g_m.vector_flat(xl)
        norm2 = g_m.inner(xl, xl)
        terms = [(1.0, dt, dt)]
        for k in kappa:
            terms.append((4.0 * e4t, k, k))
        corr = dt + x_flat * e2t
        coeff = -1.0 / (1.0 + e2t * norm2)
        terms.append((coeff, corr, corr))
        metric = MetricField.from_terms(dim, terms) + g_m.scale(e2t)
        model = QuotientModel(
            name="homothetic_general",
            chart=("t", "x1", "x2", "x3", "x4"),
            dim=dim,
            metric=metric,
            provenance="general homothetic quotient presented on the level set",
            expected={"scal": -48.0, "lambda": -12.0},
            box=[(-0.3, 0.3)] + [(0.2, 0.7)] * 4,
            degenerate=True,
        )
        model.aux["projection"] = [lift_coordinate(1 + i, dim) * e2t ** 0.5 for i in range(4)]
        model.aux["descended"] = _homothetic_w_chart()
        return model

    if which == "permuting_general":
        a = params.get("a", 2.0)
        return _permuting_general_model(a)

    raise ValueError(f"unknown reduced metric {which!r}")


def _homothetic_w_chart() -> QuotientModel:
    """The radial quotient written on invariant coordinates w = e^t x."""
    dim = 4
    w = [lift_coordinate(i, dim) for i in range(dim)]
    r2 = sum(wi * wi for wi in w)
    radial = coordinate_differential(dim, 0) * w[0]
    for i in range(1, dim):
        radial = radial + coordinate_differential(dim, i) * w[i]
    conf = 1.0 + r2
    coeff = -(r2 + 2.0) / conf
    terms = [(conf, coordinate_differential(dim, i), coordinate_differential(dim, i)) for i in range(dim)]
    terms.append((coeff, radial, radial))
    return QuotientModel(
        name="homothetic_w_chart",
        chart=("w1", "w2", "w3", "w4"),
        dim=dim,
        metric=MetricField.from_terms(dim, terms),
        provenance="radial quotient on invariant coordinates",
        expected={"scal": -48.0, "lambda": -12.0},
        box=[(-0.7, 0.7)] * dim,
    )


def _example1_level_data(a: float):
    """Closed-form ingredients of the plane-rotation level set (dim 5 chart
    x1..x4, y1)."""
    dim = 5
    x = [lift_coordinate(i, dim) for i in range(4)]
    dx = [coordinate_differential(dim, i) for i in range(4)]
    dy1 = coordinate_differential(dim, 4)
    p = x[2] * x[2] + x[3] * x[3]
    big_a = constant_field(a, dim) - 2.0 * p
    # kappa1 is the rotation-invariant primitive; kappa2, kappa3 follow the
    # permuting convention for the plane-rotation field below
    kappa1 = (dx[1] * x[0] - dx[0] * x[1] + dx[3] * x[2] - dx[2] * x[3]) * 0.5
    kappa2 = dx[0] * (-1.0 * x[2]) + dx[1] * x[3]
    kappa3 = dx[0] * (-1.0 * x[3]) + dx[1] * (-1.0 * x[2])
    alpha = dy1 + kappa1
    X = VectorField.from_components(dim, {2: -2.0 * x[3], 3: 2.0 * x[2]})
    x_tilde = X + VectorField.from_components(dim, {4: -a / 2.0})
    return {
        "dim": dim,
        "x": x,
        "dx": dx,
        "dy1": dy1,
        "p": p,
        "A": big_a,
        "kappa": (kappa1, kappa2, kappa3),
        "alpha": alpha,
        "X": X,
        "x_tilde": x_tilde,
    }


def _permuting_general_model(a: float) -> QuotientModel:
    """The general permuting quotient formula on the level-set chart."""
    d = _example1_level_data(a)
    dim = d["dim"]
    big_a = d["A"]
    inv_a = 1.0 / big_a
    inv_a2 = inv_a * inv_a
    kappa1, kappa2, kappa3 = d["kappa"]
    alpha = d["alpha"]
    dp = (d["dx"][2] * d["x"][2] + d["dx"][3] * d["x"][3]) * 2.0
    g_m = MetricField.lift_block(MetricField.flat(4), 0, dim)
    xl = d["X"]
    x_flat = g_m.vector_flat(xl)
    norm2 = g_m.inner(xl, xl)
    denom = big_a + norm2
    terms = [
        (inv_a2, dp, dp),
        (4.0 * norm2 * inv_a2 / denom, alpha, alpha),
        (4.0 * inv_a2, kappa2, kappa2),
        (4.0 * inv_a2, kappa3, kappa3),
        # the displayed cross term is the unnormalised symmetric product
        (4.0 * inv_a / denom, x_flat, alpha),
        (-1.0 * inv_a / denom, x_flat, x_flat),
    ]
    metric = MetricField.from_terms(dim, terms) + g_m.scale(inv_a)
    return QuotientModel(
        name=f"permuting_general(a={a})",
        chart=("x1", "x2", "x3", "x4", "y1"),
        dim=dim,
        metric=metric,
        provenance="general permuting quotient presented on the level set",
        expected={},
        box=[(-0.5, 0.5), (-0.5, 0.5), (0.2, 0.7), (-0.45, 0.45), (-0.5, 0.5)],
        degenerate=True,
        aux={"a": a},
    )


# -- level sets of permuting actions ---------------------------------------------


def level_set_restrict(model: SpaceModel, action: LiftedAction) -> SpaceModel:
    """Restrict an N-model over flat R^4 to the zero set of a permuting
    moment map, packaging the frame data the quotient analysis consumes.

    The zero set {y2 = y3 = 0, t = -log(a - 2p)/2} is charted by
    (x1..x4, y1); everything is expressed in closed form there.
    """
    if model.which != "N":
        raise ValueError("level sets are taken in N-type models")
    if action.kind != "permuting":
        raise ValueError("level sets are implemented for permuting actions")
    a = action.constants.get("a", 0.0)
    if a <= 0:
        raise ConstructionError("the level constant a must be positive for a real level set")
    d = _example1_level_data(a)
    dim = d["dim"]
    big_a = d["A"]
    e2t = 1.0 / big_a
    e4t = e2t * e2t
    kappa1, kappa2, kappa3 = d["kappa"]
    alpha = d["alpha"]
    dp = (d["dx"][2] * d["x"][2] + d["dx"][3] * d["x"][3]) * 2.0
    dt_hat = dp * e2t
    g_m = MetricField.lift_block(MetricField.flat(4), 0, dim)

    g_level = MetricField.from_terms(
        dim,
        [
            (e4t, dp, dp),
            (4.0 * e4t, alpha, alpha),
            (4.0 * e4t, kappa2, kappa2),
            (4.0 * e4t, kappa3, kappa3),
        ],
    ) + g_m.scale(e2t)

    x_tilde = d["x_tilde"]
    norm_xt = g_level.inner(x_tilde, x_tilde)
    xi_def = g_level.vector_flat(x_tilde) * (1.0 / norm_xt)
    x_flat = g_m.vector_flat(d["X"])
    denom = big_a + g_m.inner(d["X"], d["X"])
    xi_closed = (x_flat - 2.0 * d["dy1"] - 2.0 * kappa1) * (1.0 / denom)
    reduced = g_level - MetricField.from_terms(dim, [(norm_xt, xi_closed, xi_closed)])

    sigma = [lift_form(s, 0, dim) for s in flat_base(n=1).sigma]
    omega1 = sigma[0] * e2t + wedge(kappa2, kappa3) * (4.0 * e4t) + wedge(dt_hat, alpha) * (2.0 * e2t)
    omega2 = sigma[1] * e2t - wedge(kappa2, dt_hat) * (2.0 * e2t) - wedge(alpha, kappa3) * (4.0 * e4t)
    omega3 = sigma[2] * e2t - wedge(kappa2, alpha) * (4.0 * e4t) - wedge(kappa3, dt_hat) * (2.0 * e2t)

    root_p = sqrt(d["p"])
    f = d["x"][2] / root_p
    h = d["x"][3] / root_p
    dx_angle = (d["dx"][3] * d["x"][2] - d["dx"][2] * d["x"][3]) * (0.5 / d["p"])
    omega_bar2 = omega2 * h - omega3 * f
    omega_bar3 = omega2 * f + omega3 * h
    beta = dx_angle * 2.0 + alpha * (4.0 * e2t)
    alpha2 = (kappa2 * f + kappa3 * h) * (-4.0 * e2t)
    alpha3 = (kappa2 * (-1.0 * h) + kappa3 * f) * (4.0 * e2t)

    # embedding into the 8-dimensional chart and projection to the quotient
    from .jets import ln

    t_embed = ln(big_a) * -0.5
    zero = constant_field(0.0, dim)
    embed = [t_embed, lift_coordinate(4, dim), zero, zero] + [d["x"][i] for i in range(4)]
    angle = arctan2(d["x"][3], d["x"][2]) * 0.5
    project = [d["x"][0], d["x"][1], d["p"], lift_coordinate(4, dim) * 4.0 + angle * (2.0 * a)]

    aux = {
        "a": a,
        "action": action,
        "p": d["p"],
        "A": big_a,
        "e2t": e2t,
        "kappa": d["kappa"],
        "alpha_conn": alpha,
        "dp": dp,
        "dt_hat": dt_hat,
        "x_tilde": x_tilde,
        "X": d["X"],
        "xi_def": xi_def,
        "xi_closed": xi_closed,
        "norm_xt": norm_xt,
        "reduced": reduced,
        "omega_level": (omega1, omega2, omega3),
        "omega_bar": (omega1, omega_bar2, omega_bar3),
        "f": f,
        "h": h,
        "dx_angle": dx_angle,
        "beta": beta,
        "alpha2": alpha2,
        "alpha3": alpha3,
        "embed": embed,
        "project": project,
        "quotient": reduced_metric("permuting_example1", {"a": a}),
        "Z_rep": VectorField.coordinate(dim, 4),
        "n_model": model,
    }
    box = [(-0.5, 0.5), (-0.5, 0.5), (0.2, 0.7), (-0.45, 0.45), (-0.5, 0.5)]
    return SpaceModel(
        name=f"level_set(a={a})",
        chart=("x1", "x2", "x3", "x4", "y1"),
        dim=dim,
        metric=g_level,
        forms={
            "omega1": omega1,
            "omega_bar2": omega_bar2,
            "omega_bar3": omega_bar3,
            "beta": beta,
            "alpha2": alpha2,
            "alpha3": alpha3,
            "xi_X": xi_closed,
        },
        base=model.base,
        which="level_set",
        box=box,
        aux=aux,
    )


def level_set_identities(level: SpaceModel, pts: Sequence[ChartPoint]) -> Dict[str, float]:
    """Residuals of the displayed level-set geometry: the restricted metric,
    the connection form, its horizontality, and the two quotient-metric
    computation paths."""
    aux = level.aux
    model: SpaceModel = aux["n_model"]
    out: Dict[str, float] = {}

    pulled = pullback_metric(aux["embed"], model.metric)
    worst = 0.0
    for pt in pts:
        diff = pulled.eval(pt).value - level.metric.eval(pt).value
        worst = max(worst, float(np.max(np.abs(diff))))
    out["restricted_metric"] = worst

    xi_def, xi_closed = aux["xi_def"], aux["xi_closed"]
    worst = 0.0
    for pt in pts:
        cd, cc = xi_def.coeffs(pt), xi_closed.coeffs(pt)
        for k in set(cd) | set(cc):
            va = cd[k].value if k in cd else 0.0
            vb = cc[k].value if k in cc else 0.0
            worst = max(worst, abs(va - vb))
    out["connection_form"] = worst

    # horizontal part of the vertical torus field is xi_X-null
    dim = level.dim
    corr = 2.0 / (aux["A"] + MetricField.lift_block(MetricField.flat(4), 0, dim).inner(aux["X"], aux["X"]))
    z_h = VectorField.coordinate(dim, 4) + corr * aux["x_tilde"]
    horiz = pair_one_form(xi_closed, z_h)
    worst = 0.0
    for pt in pts:
        worst = max(worst, abs(horiz(pt).value))
    out["xi_X_of_Z_horizontal"] = worst

    quotient: QuotientModel = aux["quotient"]
    two_path = pullback_metric(aux["project"], quotient.metric)
    reduced: MetricField = aux["reduced"]
    worst = 0.0
    for pt in pts:
        diff = two_path.eval(pt).value - reduced.eval(pt).value
        worst = max(worst, float(np.max(np.abs(diff))))
    out["reduced_metric_two_path"] = worst
    return out


# -- quotient frame identities -----------------------------------------------------


def _two_form_inner(ginv: np.ndarray, av: Dict, bv: Dict) -> float:
    total = 0.0
    for (i, j), ja in av.items():
        for (k, l), jb in bv.items():
            raised = ginv[i, k] * ginv[j, l] - ginv[i, l] * ginv[j, k]
            total += ja.value * jb.value * raised
    return total


def frame_identities(level: SpaceModel, pts: Sequence[ChartPoint]) -> Dict[str, float]:
    """Residuals of the quotient frame equations: the sp(1)-curvature block
    (negative branch), invariance of the rotated forms, and the dual-frame
    relations tying the Killing field to the structure forms."""
    aux = level.aux
    a = aux["a"]
    out: Dict[str, float] = {}
    w1, w2, w3 = aux["omega_bar"]
    beta, alpha2, alpha3 = aux["beta"], aux["alpha2"], aux["alpha3"]

    frame = [
        exterior_derivative(beta) - 4.0 * w1 - wedge(alpha2, alpha3),
        exterior_derivative(alpha2) + 4.0 * w3 - wedge(alpha3, beta),
        exterior_derivative(alpha3) + 4.0 * w2 - wedge(beta, alpha2),
    ]
    worst = 0.0
    for r in frame:
        for pt in pts:
            worst = max(worst, max_abs_coeff(r, pt))
    out["sp1_curvature_block"] = worst

    conn = [
        exterior_derivative(w1) + wedge(alpha2, w2) - wedge(alpha3, w3),
        exterior_derivative(w2) - wedge(alpha2, w1) - wedge(beta, w3),
        exterior_derivative(w3) + wedge(alpha3, w1) + wedge(beta, w2),
    ]
    worst = 0.0
    for r in conn:
        for pt in pts:
            worst = max(worst, max_abs_coeff(r, pt))
    out["sp1_connection_block"] = worst

    xt = aux["x_tilde"]
    worst = 0.0
    for w in aux["omega_bar"]:
        r = lie_derivative(xt, w)
        for pt in pts:
            worst = max(worst, max_abs_coeff(r, pt))
    out["invariance_omega_bar"] = worst

    worst = 0.0
    bz = pair_one_form(beta, aux["Z_rep"])
    for pt in pts:
        worst = max(worst, abs(bz(pt).value - 4.0 / aux["A"](pt).value))
    out["beta_of_Z"] = worst

    # downstairs: section pullback at the zero angle slice
    quotient: QuotientModel = aux["quotient"]
    qd = quotient.dim
    x1q = lift_coordinate(0, qd)
    x2q = lift_coordinate(1, qd)
    pq = lift_coordinate(2, qd)
    qq = lift_coordinate(3, qd)
    section = [x1q, x2q, sqrt(pq), constant_field(0.0, qd), qq * 0.25]
    w1q = pullback_form(section, w1)
    w2q = pullback_form(section, w2)
    w3q = pullback_form(section, w3)
    a2q = pullback_form(section, alpha2)
    a3q = pullback_form(section, alpha3)
    z = quotient.killing
    z_flat = quotient.metric.vector_flat(z)
    beta_z = 4.0 / (constant_field(a, qd) - 2.0 * pq)
    d_beta_z = exterior_derivative(KFormField(qd, 0, lambda pt: {(): beta_z(pt)}))

    i1 = acs_from_pair(quotient.metric, w1q)
    i2 = acs_from_pair(quotient.metric, w2q)
    i3 = acs_from_pair(quotient.metric, w3q)
    rel1 = 4.0 * z_flat + i1.apply_to_one_form(d_beta_z)
    rel2 = 4.0 * z_flat - i2.apply_to_one_form(a2q) * beta_z
    rel3 = 4.0 * z_flat + i3.apply_to_one_form(a3q) * beta_z
    qpts = sample_box(quotient.box, max(4, len(pts) // 2), seed=61)
    worst = 0.0
    for r in (rel1, rel2, rel3):
        for pt in qpts:
            worst = max(worst, max_abs_coeff(r, pt))
    out["z_flat_relations"] = worst

    # sp(1)-projection of d(Z flat) against the first structure form
    dz_flat = exterior_derivative(z_flat)
    worst = 0.0
    for pt in qpts:
        ginv = np.linalg.inv(quotient.metric.eval(pt).value)
        bars = [w1q.coeffs(pt), w2q.coeffs(pt), w3q.coeffs(pt)]
        gram = np.array([[_two_form_inner(ginv, x, yv) for yv in bars] for x in bars])
        rhs = np.array([_two_form_inner(ginv, dz_flat.coeffs(pt), yv) for yv in bars])
        coef = np.linalg.solve(gram, rhs)
        target = 4.0 / (a - 2.0 * pt[2])
        resid = max(abs(coef[0] - target), abs(coef[1]), abs(coef[2]))
        worst = max(worst, resid)
    out["dz_sp1_projection"] = worst

    # moment map of Z on the quotient: Z . Omega = -d((a-2p)^{-1} omega_bar1)
    big = wedge(w1q, w1q) + wedge(w2q, w2q) + wedge(w3q, w3q)
    omega_q = big * 0.5
    inv_field = 1.0 / (constant_field(a, qd) - 2.0 * pq)
    mm = interior_product(z, omega_q) + exterior_derivative(w1q * inv_field)
    worst = 0.0
    for pt in qpts:
        worst = max(worst, max_abs_coeff(mm, pt))
    out["z_moment_map"] = worst
    return out


# -- the inverse construction -----------------------------------------------------


def hkqk_inverse(level: SpaceModel, pts: Sequence[ChartPoint], tol_frame: float = 1e-7):
    """Rebuild the hyperKahler triple and base metric from quotient data.

    Consumes the frame (omega_bar_i, beta, alpha2, alpha3), the Killing
    field, and the fibre angle, all living on the level set; returns the
    reconstructed triple and metric together with comparison residuals
    against the original flat base.
    """
    aux = level.aux
    frame = frame_identities(level, pts[: max(3, len(pts) // 4)])
    if frame["sp1_curvature_block"] > tol_frame:
        raise VerificationError(
            f"frame equations fail: residual {frame['sp1_curvature_block']:.3e}; "
            "the quotient data does not satisfy the negative-branch structure block"
        )

    beta, alpha2, alpha3 = aux["beta"], aux["alpha2"], aux["alpha3"]
    f, h = aux["f"], aux["h"]
    dx_angle = aux["dx_angle"]
    bz_inv = aux["A"] * 0.25  # 1 / beta(Z)

    sigma1 = -1.0 * exterior_derivative((dx_angle * 2.0 - beta) * bz_inv)
    sigma2 = -1.0 * exterior_derivative((alpha3 * h + alpha2 * f) * bz_inv)
    sigma3 = -1.0 * exterior_derivative((alpha2 * h - alpha3 * f) * bz_inv)
    sigma_rec = (sigma1, sigma2, sigma3)

    reduced: MetricField = aux["reduced"]
    z_rep = aux["Z_rep"]
    z_flat = reduced.vector_flat(z_rep)
    norm_z = reduced.inner(z_rep, z_rep)
    xi_x = aux["xi_closed"]
    d_beta = exterior_derivative(beta)
    z_db = _contract_two_form(d_beta, z_rep)

    bz = 4.0 / aux["A"]

    def coeff_m(pt):
        z2 = norm_z(pt)
        b = bz(pt)
        return (z2 * -16.0) / (b * z2 * 4.0 - b * b * b)

    coeff_field = ScalarField(level.dim, lambda pt: coeff_m(pt))
    g_rec = (
        reduced.scale(bz_inv * 4.0)
        + MetricField.from_terms(
            level.dim,
            [
                (bz_inv * bz_inv * bz_inv * -16.0, z_flat, z_flat),
                (bz_inv * bz_inv * 16.0, xi_x, z_flat),
                (bz_inv * -1.0, alpha2, alpha2),
                (bz_inv * -1.0, alpha3, alpha3),
                (coeff_field, xi_x, xi_x),
                (bz_inv * bz_inv * bz_inv * -1.0, z_db, z_db),
            ],
        )
    )

    base = flat_base(n=1, kappa="radial")
    sigma_flat = [lift_form(s, 0, level.dim) for s in base.sigma]
    diag: Dict[str, float] = dict(frame)

    worst = 0.0
    for rec, orig in zip(sigma_rec, sigma_flat):
        for pt in pts:
            cr, co = rec.coeffs(pt), orig.coeffs(pt)
            for k in set(cr) | set(co):
                va = cr[k].value if k in cr else 0.0
                vb = co[k].value if k in co else 0.0
                worst = max(worst, abs(va - vb))
    diag["sigma_match"] = worst

    expect = np.zeros((level.dim, level.dim))
    expect[:4, :4] = np.eye(4)
    worst = 0.0
    for pt in pts:
        worst = max(worst, float(np.max(np.abs(g_rec.eval(pt).value - expect))))
    diag["metric_match"] = worst

    worst = 0.0
    for s in sigma_rec:
        ds = exterior_derivative(s)
        for pt in pts:
            worst = max(worst, max_abs_coeff(ds, pt))
    diag["closedness"] = worst

    xt = aux["x_tilde"]
    resids = [
        lie_derivative(xt, sigma_rec[0]),
        lie_derivative(xt, sigma_rec[1]) + 2.0 * sigma_rec[2],
        lie_derivative(xt, sigma_rec[2]) - 2.0 * sigma_rec[1],
    ]
    worst = 0.0
    for r in resids:
        for pt in pts:
            worst = max(worst, max_abs_coeff(r, pt))
    diag["permuting_relations"] = worst

    worst = 0.0
    for s in sigma_rec:
        contracted = _contract_two_form(s, VectorField.coordinate(level.dim, 4))
        for pt in pts:
            worst = max(worst, max_abs_coeff(contracted, pt))
    diag["basic_forms"] = worst

    return sigma_rec, g_rec, diag


def _contract_two_form(w: KFormField, X: VectorField) -> KFormField:
    return interior_product(X, w)
