"""Constructors for the verified geometries.

A hyperKahler base package (flat or Gibbons-Hawking) feeds four families of
total spaces built on product charts (t, fibre coordinates, base):

* warped bundles with 0..3 torus directions carrying Einstein metrics,
  the three-torus case quaternion-Kahler with its closed 4-form;
* hyper-Hermitian four-torus bundles (mixed and abelian connection shapes);
* Ricci-flat special metrics (Calabi-type, and the exceptional-holonomy
  metrics on the two- and three-torus bundles);
* the two-torus bundle with its balanced Hermitian structure.

Each model packages the metric, its distinguished forms, and the constants
the verification suite is expected to reproduce.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .jets import (
    ChartPoint,
    Jet2,
    ScalarField,
    constant_field,
    exp,
    lift_coordinate,
    power,
    precompose_coordinate,
    sample_box,
)
from .forms import (
    ComplexFormField,
    KFormField,
    VectorField,
    coordinate_differential,
    exterior_derivative,
    hodge_star,
    interior_product,
    max_abs_coeff,
    one_form,
    wedge,
    wedge_power,
)
from .curvature import MetricField, acs_from_pair, nijenhuis

__all__ = [
    "ConstructionError",
    "HKData",
    "ProfileSet",
    "SpaceModel",
    "balanced_check",
    "build_hypercomplex",
    "build_total_space",
    "build_xi_eta_bundle",
    "expected_lambda",
    "exponential_profiles",
    "flat_base",
    "flat_killing_field",
    "gibbons_hawking",
    "hypercomplex_nijenhuis_residual",
    "lift_form",
    "lift_scalar",
    "lift_vector",
    "ricci_flat_specials",
    "structure_equation_residual",
    "verify_hk",
]

FIBRE_COUNT = {"Q": 0, "P": 1, "L": 2, "N": 3}


class ConstructionError(Exception):
    """A geometry constructor received inconsistent input data."""


# -- chart lifting -----------------------------------------------------------


def _pad_jet(j: Jet2, offset: int, total: int) -> Jet2:
    g = h = None
    if j.grad is not None:
        g = np.zeros(total)
        g[offset : offset + j.grad.size] = j.grad
        if j.hess is not None:
            n = j.grad.size
            h = np.zeros((total, total))
            h[offset : offset + n, offset : offset + n] = j.hess
    return Jet2(j.value, g, h)


def lift_scalar(f: ScalarField, offset: int, total: int) -> ScalarField:
    def fn(pt: ChartPoint) -> Jet2:
        sub = ChartPoint(pt.coords[offset : offset + f.dim])
        return _pad_jet(f(sub), offset, total)

    return ScalarField(total, fn)


def lift_form(a: KFormField, offset: int, total: int) -> KFormField:
    def fn(pt: ChartPoint):
        sub = ChartPoint(pt.coords[offset : offset + a.dim])
        return {
            tuple(i + offset for i in idx): _pad_jet(j, offset, total)
            for idx, j in a.coeffs(sub).items()
        }

    return KFormField(total, a.degree, fn)


def lift_vector(v: VectorField, offset: int, total: int) -> VectorField:
    def fn(pt: ChartPoint):
        sub = ChartPoint(pt.coords[offset : offset + v.dim])
        comps = v.comps(sub)
        zero = Jet2.constant(0.0, total)
        out = [zero] * total
        for i, j in enumerate(comps):
            out[offset + i] = _pad_jet(j, offset, total)
        return out

    return VectorField(total, fn)


# -- base packages -----------------------------------------------------------


@dataclass
class HKData:
    """A hyperKahler base on a chart: metric, Kahler triple, potentials."""

    dim: int
    chart: Tuple[str, ...]
    g: MetricField
    sigma: Tuple[KFormField, KFormField, KFormField]
    kappa: Optional[Tuple[KFormField, KFormField, KFormField]] = None
    killing: Optional[Tuple[VectorField, str]] = None
    box: Optional[List[Tuple[float, float]]] = None
    name: str = "hk_base"

    @property
    def n(self) -> int:
        return self.dim // 4


def _flat_triple(dim: int) -> Tuple[KFormField, KFormField, KFormField]:
    from .forms import two_form

    s1 = {}
    s2 = {}
    s3 = {}
    for b in range(0, dim, 4):
        s1[(b, b + 1)] = 1.0
        s1[(b + 2, b + 3)] = 1.0
        s2[(b, b + 2)] = 1.0
        s2[(b + 3, b + 1)] = 1.0
        s3[(b, b + 3)] = 1.0
        s3[(b + 1, b + 2)] = 1.0
    return two_form(dim, s1), two_form(dim, s2), two_form(dim, s3)


def flat_base(n: int = 1, torus: bool = False, kappa: str = "default") -> HKData:
    """Flat R^{4n} (or a torus chart) with the standard Kahler triple.

    kappa picks the primitives of the triple: "default" uses the linear
    x1 dx2 + x3 dx4 pattern, "radial" the rotation-invariant halves needed
    when circle actions on the base are lifted.
    """
    if n < 1:
        raise ValueError("need n >= 1")
    dim = 4 * n
    x = [lift_coordinate(i, dim) for i in range(dim)]
    s1, s2, s3 = _flat_triple(dim)
    k1: Dict[int, ScalarField] = {}
    k2: Dict[int, ScalarField] = {}
    k3: Dict[int, ScalarField] = {}
    for b in range(0, dim, 4):
        if kappa == "default":
            k1.update({b + 1: x[b], b + 3: x[b + 2]})
            k2.update({b + 2: x[b], b + 1: x[b + 3]})
            k3.update({b + 3: x[b], b + 2: x[b + 1]})
        elif kappa == "radial":
            half = 0.5
            k1.update({b + 1: half * x[b], b: -half * x[b + 1], b + 3: half * x[b + 2], b + 2: -half * x[b + 3]})
            k2.update({b: -half * x[b + 2], b + 1: half * x[b + 3], b + 2: half * x[b], b + 3: -half * x[b + 1]})
            k3.update({b: -half * x[b + 3], b + 1: -half * x[b + 2], b + 2: half * x[b + 1], b + 3: half * x[b]})
        elif kappa == "rotation_34":
            # permuting convention for the speed-two rotation of (x3, x4)
            half = 0.5
            k1.update({b + 1: half * x[b], b: -half * x[b + 1], b + 3: half * x[b + 2], b + 2: -half * x[b + 3]})
            k2.update({b: -1.0 * x[b + 2], b + 1: x[b + 3]})
            k3.update({b: -1.0 * x[b + 3], b + 1: -1.0 * x[b + 2]})
        else:
            raise ValueError(f"unknown kappa mode {kappa!r}")
    kap = (one_form(dim, k1), one_form(dim, k2), one_form(dim, k3))
    chart = tuple(f"x{i + 1}" for i in range(dim))
    name = f"torus{dim}" if torus else f"r{dim}"
    return HKData(
        dim=dim,
        chart=chart,
        g=MetricField.flat(dim),
        sigma=(s1, s2, s3),
        kappa=kap,
        box=[(-0.5, 0.5)] * dim,
        name=name + f"_{kappa}",
    )


def flat_killing_field(base: HKData, which: str) -> Tuple[VectorField, str]:
    """Canonical Killing/homothetic fields of the flat base, block-repeated.

    radial: homothetic scaling; rotation_diag: permutes the second and third
    Kahler forms; rotation_antidiag: preserves the triple; rotation_34:
    speed-two rotation of the last two coordinates of each block (permuting).
    """
    dim = base.dim
    x = [lift_coordinate(i, dim) for i in range(dim)]
    comps: Dict[int, ScalarField] = {}
    if which == "radial":
        kind = "homothetic"
        for i in range(dim):
            comps[i] = -1.0 * x[i]
    elif which == "rotation_diag":
        kind = "permuting"
        for b in range(0, dim, 4):
            comps[b] = -1.0 * x[b + 1]
            comps[b + 1] = x[b]
            comps[b + 2] = -1.0 * x[b + 3]
            comps[b + 3] = x[b + 2]
    elif which == "rotation_antidiag":
        kind = "triholomorphic"
        for b in range(0, dim, 4):
            comps[b] = -1.0 * x[b + 1]
            comps[b + 1] = x[b]
            comps[b + 2] = x[b + 3]
            comps[b + 3] = -1.0 * x[b + 2]
    elif which == "rotation_34":
        kind = "permuting"
        for b in range(0, dim, 4):
            comps[b + 2] = -2.0 * x[b + 3]
            comps[b + 3] = 2.0 * x[b + 2]
    else:
        raise ValueError(f"unknown flat Killing field {which!r}")
    return VectorField.from_components(dim, comps), kind


def gibbons_hawking(
    V: ScalarField,
    theta: KFormField,
    kappa: Optional[Tuple[KFormField, KFormField, KFormField]] = None,
    probes: Optional[Sequence[ChartPoint]] = None,
    box: Optional[List[Tuple[float, float]]] = None,
    tol_harmonic: float = 1e-8,
    tol_connection: float = 1e-10,
) -> HKData:
    """HK data on the chart (u1, u2, u3, y) from a positive harmonic V.

    V and theta live on the 4-chart (theta typically dy + ... with base
    coefficients).  Checks at the probe points: V > 0, flat-Laplacian
    harmonicity, and d theta = -*dV for the Euclidean star on (u1, u2, u3).
    """
    dim = 4
    if V.dim != dim or theta.dim != dim or theta.degree != 1:
        raise ValueError("V and theta must live on the 4-dimensional chart (u1,u2,u3,y)")
    if box is None:
        box = [(0.5, 1.5), (-0.5, 0.5), (-0.5, 0.5), (-0.5, 0.5)]
    if probes is None:
        probes = sample_box(box, 10, seed=1234)

    du = [coordinate_differential(dim, i) for i in range(3)]
    dtheta = exterior_derivative(theta)
    for pt in probes:
        jv = V(pt)
        if jv.value <= 0:
            raise ConstructionError(f"V must be positive; V={jv.value} at {pt.coords}")
        lap = float(np.trace(jv.hess[:3, :3]))
        if abs(lap) > tol_harmonic:
            raise ConstructionError(f"V is not harmonic: laplacian {lap:.3e} at {pt.coords}")
        # -*dV on the Euclidean (u1,u2,u3) factor
        grad = jv.grad
        expect = {(1, 2): -grad[0], (2, 0): -grad[1], (0, 1): -grad[2]}
        dc = dtheta.coeffs(pt)
        resid = 0.0
        want = {}
        for (i, j), val in expect.items():
            key, sgn = ((i, j), 1.0) if i < j else ((j, i), -1.0)
            want[key] = want.get(key, 0.0) + sgn * val
        for key in set(dc) | set(want):
            have = dc[key].value if key in dc else 0.0
            resid = max(resid, abs(have - want.get(key, 0.0)))
        if resid > tol_connection:
            raise ConstructionError(
                f"d theta != -*dV (residual {resid:.3e} at {pt.coords})"
            )

    sig = []
    cyc = [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
    for i, j, k in cyc:
        sig.append(wedge(theta, du[i]) + wedge(du[j], du[k]) * V)
    sigma = tuple(sig)

    vinv = 1.0 / V
    terms = [(vinv, theta, theta)]
    for i in range(3):
        terms.append((V, du[i], du[i]))
    g = MetricField.from_terms(dim, terms)
    return HKData(
        dim=dim,
        chart=("u1", "u2", "u3", "y"),
        g=g,
        sigma=sigma,  # type: ignore[arg-type]
        kappa=kappa,
        box=box,
        name="gibbons_hawking",
    )


def gh_linear_potential() -> HKData:
    """The bundled Gibbons-Hawking base with V = u1, theta = dy + u3 du2."""
    dim = 4
    u1 = lift_coordinate(0, dim)
    u2 = lift_coordinate(1, dim)
    u3 = lift_coordinate(2, dim)
    y = lift_coordinate(3, dim)
    theta = one_form(dim, {3: 1.0, 1: u3})
    kappa1 = one_form(dim, {0: y + u2 * u3, 2: u1 * u2})
    kappa2 = one_form(dim, {1: y, 0: u1 * u3})
    kappa3 = one_form(dim, {2: y, 1: 0.5 * (u1 * u1 - u3 * u3)})
    return gibbons_hawking(u1, theta, kappa=(kappa1, kappa2, kappa3))


# -- profiles ----------------------------------------------------------------


@dataclass
class ProfileSet:
    """Positive warping profiles of the single variable t."""

    p: Optional[ScalarField] = None
    q: Optional[ScalarField] = None
    r: Optional[ScalarField] = None
    s: Optional[ScalarField] = None
    label: str = ""

    def active(self, which: str) -> Dict[str, ScalarField]:
        need = {"Q": ("p",), "P": ("p", "q"), "L": ("p", "q", "r"), "N": ("p", "q", "r", "s")}[
            which
        ]
        out = {}
        for name in need:
            f = getattr(self, name)
            if f is None:
                raise ConstructionError(f"profile {name!r} required for a {which}-type model")
            out[name] = f
        return out


def exponential_profiles(a: float = 1.0, b: float = 1.0) -> ProfileSet:
    """The exponential solution family p = a e^{bt}, q = r = s = 2 a^2 b e^{2bt}."""
    t = lift_coordinate(0, 1)
    p = a * exp(b * t)
    fib = (2.0 * a * a * b) * exp(2.0 * b * t)
    return ProfileSet(p=p, q=fib, r=fib, s=fib, label=f"exp(a={a},b={b})")


def expected_lambda(which: str, n: int, b: float = 1.0) -> float:
    """Einstein constant of the exponential family, by substitution into the
    cohomogeneity-one system."""
    return -(b * b) * (4.0 * n + 4.0 * FIBRE_COUNT[which])


# -- total spaces ------------------------------------------------------------


@dataclass
class SpaceModel:
    """A constructed geometry bundled with everything checks consume."""

    name: str
    chart: Tuple[str, ...]
    dim: int
    metric: MetricField
    forms: Dict[str, KFormField] = field(default_factory=dict)
    complex_forms: Dict[str, ComplexFormField] = field(default_factory=dict)
    expected: Dict[str, float] = field(default_factory=dict)
    profiles: Optional[ProfileSet] = None
    base: Optional[HKData] = None
    which: str = ""
    box: Optional[List[Tuple[float, float]]] = None
    aux: Dict[str, object] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.base.n if self.base is not None else 0


def _validate_base(base: HKData, probes: Sequence[ChartPoint], tol: float = 1e-10) -> None:
    if base.kappa is None:
        raise ConstructionError("base carries no kappa potentials")
    for i, (kap, sig) in enumerate(zip(base.kappa, base.sigma), start=1):
        resid = exterior_derivative(kap) - sig
        for pt in probes:
            r = max_abs_coeff(resid, pt)
            if r > tol:
                raise ConstructionError(
                    f"d kappa_{i} != sigma_{i} (residual {r:.3e} at {pt.coords})"
                )


def build_total_space(
    base: HKData,
    profiles: ProfileSet,
    which: str,
    validate: bool = True,
    t_box: Tuple[float, float] = (-0.3, 0.3),
) -> SpaceModel:
    """Warped bundle over the base with 0..3 torus directions.

    Chart order is (t, fibre coordinates, base coordinates).  Connection
    forms follow d(alpha) = sigma_1, d(xi) = -sigma_2, d(eta) = -sigma_3.
    """
    if which not in FIBRE_COUNT:
        raise ValueError(f"which must be one of Q, P, L, N, got {which!r}")
    fibres = FIBRE_COUNT[which]
    if fibres > 0 and base.kappa is None:
        raise ConstructionError(f"{which}-type model needs kappa potentials on the base")
    act = profiles.active(which)
    dim = 1 + fibres + base.dim
    offset = 1 + fibres
    chart = ("t",) + tuple(f"y{i + 1}" for i in range(fibres)) + base.chart
    if validate and fibres > 0:
        probes = sample_box(base.box or [(-0.5, 0.5)] * base.dim, 5, seed=99)
        _validate_base(base, probes)

    dt = coordinate_differential(dim, 0)
    sigma = tuple(lift_form(s, offset, dim) for s in base.sigma)
    kappa = tuple(lift_form(k, offset, dim) for k in base.kappa) if base.kappa else None

    conns: Dict[str, KFormField] = {}
    if fibres >= 1:
        conns["alpha"] = coordinate_differential(dim, 1) + kappa[0]
    if fibres >= 2:
        conns["xi"] = coordinate_differential(dim, 2) - kappa[1]
    if fibres >= 3:
        conns["eta"] = coordinate_differential(dim, 3) - kappa[2]

    prof = {name: precompose_coordinate(f, 0, dim) for name, f in act.items()}
    terms = [(1.0, dt, dt)]
    for name, conn in zip(("alpha", "xi", "eta"), ("q", "r", "s")):
        if name in conns:
            terms.append((prof[conn] * prof[conn], conns[name], conns[name]))
    metric = MetricField.from_terms(dim, terms) + MetricField.lift_block(
        base.g, offset, dim
    ).scale(prof["p"] * prof["p"])

    forms: Dict[str, KFormField] = {}
    complex_forms: Dict[str, ComplexFormField] = {}
    forms["dt"] = dt
    for i, s in enumerate(sigma, start=1):
        forms[f"sigma{i}"] = s
    forms.update(conns)

    nbase = base.n
    if which == "P":
        p2 = prof["p"] * prof["p"]
        omega_p = wedge(dt, conns["alpha"]) * prof["q"] + sigma[0] * p2
        forms["omega_P"] = omega_p
        s23 = ComplexFormField(sigma[1], sigma[2])
        lead = ComplexFormField(one_form(dim, {0: 1.0 / prof["q"]}), conns["alpha"])
        complex_forms["Upsilon_P"] = lead.wedge(s23.power(nbase))
    if which == "N":
        p2 = prof["p"] * prof["p"]
        al, xi, eta = conns["alpha"], conns["xi"], conns["eta"]
        omega1 = sigma[0] * p2 + wedge(xi, eta) * (prof["r"] * prof["s"]) + wedge(dt, al) * prof["q"]
        omega2 = sigma[1] * p2 + wedge(xi, dt) * prof["r"] + wedge(al, eta) * (prof["q"] * prof["s"])
        omega3 = sigma[2] * p2 + wedge(xi, al) * (prof["r"] * prof["q"]) + wedge(eta, dt) * prof["s"]
        forms["omega1"], forms["omega2"], forms["omega3"] = omega1, omega2, omega3
        big = wedge(omega1, omega1) + wedge(omega2, omega2) + wedge(omega3, omega3)
        forms["Omega"] = big * 0.5
        t_chart = lift_coordinate(0, dim)
        conf = exp((-4.0 / (2 * nbase + 1)) * t_chart)
        for i, w in enumerate((omega1, omega2, omega3), start=1):
            forms[f"omega{i}_balanced"] = w * conf

    box = [t_box] + [(-0.5, 0.5)] * fibres + list(base.box or [(-0.5, 0.5)] * base.dim)
    return SpaceModel(
        name=f"{which.lower()}{dim}_{base.name}_{profiles.label}",
        chart=chart,
        dim=dim,
        metric=metric,
        forms=forms,
        complex_forms=complex_forms,
        profiles=profiles,
        base=base,
        which=which,
        box=box,
    )


def build_xi_eta_bundle(base: HKData, validate: bool = True) -> SpaceModel:
    """Two-torus bundle on (y2, y3, base) with the balanced Hermitian data
    g = xi^2 + eta^2 + g_M, omega = xi wedge eta + sigma_1."""
    if base.kappa is None:
        raise ConstructionError("xi-eta bundle needs kappa potentials")
    dim = 2 + base.dim
    offset = 2
    if validate:
        probes = sample_box(base.box or [(-0.5, 0.5)] * base.dim, 5, seed=101)
        _validate_base(base, probes)
    sigma = tuple(lift_form(s, offset, dim) for s in base.sigma)
    kappa = tuple(lift_form(k, offset, dim) for k in base.kappa)
    xi = coordinate_differential(dim, 0) - kappa[1]
    eta = coordinate_differential(dim, 1) - kappa[2]
    metric = MetricField.from_terms(dim, [(1.0, xi, xi), (1.0, eta, eta)]) + MetricField.lift_block(
        base.g, offset, dim
    )
    omega = wedge(xi, eta) + sigma[0]
    ups = ComplexFormField(xi, eta).wedge(ComplexFormField(sigma[1], sigma[2]).power(base.n))
    chart = ("y2", "y3") + base.chart
    return SpaceModel(
        name=f"m{dim}_xi_eta_{base.name}",
        chart=chart,
        dim=dim,
        metric=metric,
        forms={"xi": xi, "eta": eta, "omega": omega, "sigma1": sigma[0]},
        complex_forms={"Upsilon": ups},
        base=base,
        which="xi_eta",
        box=[(-0.5, 0.5)] * 2 + list(base.box or [(-0.5, 0.5)] * base.dim),
    )


def _check_sp_n(base: HKData, gamma: KFormField, probes: Sequence[ChartPoint], label: str, tol: float = 1e-9) -> None:
    """Curvatures must sit in the holonomy-algebra summand of the 2-forms.

    On a 4-dimensional base that is anti-self-duality with respect to g_M.
    """
    if base.dim == 4:
        star = hodge_star(base.g, gamma)
        resid = star + gamma
        for pt in probes:
            r = max_abs_coeff(resid, pt)
            if r > tol:
                raise ConstructionError(
                    f"curvature of {label} is not anti-self-dual (residual {r:.3e})"
                )
        return
    # general base: invariance under all three complex structures
    for i, sig in enumerate(base.sigma, start=1):
        J = acs_from_pair(base.g, sig)
        for pt in probes:
            jm = J.eval(pt).value
            coeffs = gamma.coeffs(pt)
            mat = np.zeros((base.dim, base.dim))
            for (a, b), jet in coeffs.items():
                mat[a, b] = jet.value
                mat[b, a] = -jet.value
            pulled = jm.T @ mat @ jm
            if float(np.max(np.abs(pulled - mat))) > tol:
                raise ConstructionError(f"curvature of {label} is not of type (1,1) for I{i}")


def build_hypercomplex(
    base: HKData,
    nus: Sequence[Optional[KFormField]],
    validate: bool = True,
) -> SpaceModel:
    """Hyper-Hermitian structure on a four-torus bundle over the base.

    One potential: the mixed shape using the base potentials for the first
    three connections (alpha, xi, eta) and the given form for the fourth.
    Two to four potentials: the abelian shape nu_i = dy_i + rho_i with all
    curvatures in the holonomy-algebra summand (missing entries are zero).
    """
    if not 1 <= len(nus) <= 4:
        raise ValueError("need between 1 and 4 potentials")
    dim = 4 + base.dim
    offset = 4
    probes = sample_box(base.box or [(-0.5, 0.5)] * base.dim, 5, seed=77)
    zero_pot = KFormField.zero(base.dim, 1)
    if len(nus) == 1:
        shape = "mixed"
        if base.kappa is None:
            raise ConstructionError("mixed shape needs kappa potentials on the base")
        if validate:
            _validate_base(base, probes)
        pot = nus[0] if nus[0] is not None else zero_pot
        if validate:
            _check_sp_n(base, exterior_derivative(pot), probes, "nu")
        kappa = tuple(lift_form(k, offset, dim) for k in base.kappa)
        conn = [
            coordinate_differential(dim, 0) + kappa[0],
            coordinate_differential(dim, 1) - kappa[1],
            coordinate_differential(dim, 2) - kappa[2],
            coordinate_differential(dim, 3) + lift_form(pot, offset, dim),
        ]
        al, xi, eta, nu = conn
        pair12 = (wedge(xi, eta), wedge(nu, al))
        pair13 = (wedge(xi, nu), wedge(al, eta))
        pair14 = (wedge(xi, al), wedge(eta, nu))
        ups1 = (
            ComplexFormField(lift_form(base.sigma[1], offset, dim), lift_form(base.sigma[2], offset, dim))
            .power(base.n)
            .wedge(ComplexFormField(xi, eta))
            .wedge(ComplexFormField(nu, al))
        )
        conn_named = {"alpha": al, "xi": xi, "eta": eta, "nu": nu}
    else:
        shape = "abelian"
        pots = [p if p is not None else zero_pot for p in nus]
        pots += [zero_pot] * (4 - len(pots))
        if validate:
            for i, p in enumerate(pots, start=1):
                _check_sp_n(base, exterior_derivative(p), probes, f"nu{i}")
        conn = [
            coordinate_differential(dim, i) + lift_form(p, offset, dim)
            for i, p in enumerate(pots)
        ]
        n1, n2, n3, n4 = conn
        pair12 = (wedge(n1, n2), wedge(n3, n4))
        pair13 = (wedge(n1, n3), wedge(n4, n2))
        pair14 = (wedge(n1, n4), wedge(n2, n3))
        ups1 = (
            ComplexFormField(lift_form(base.sigma[1], offset, dim), lift_form(base.sigma[2], offset, dim))
            .power(base.n)
            .wedge(ComplexFormField(n2, n3))
            .wedge(ComplexFormField(n4, n1))
        )
        conn_named = {f"nu{i + 1}": c for i, c in enumerate(conn)}

    sigma = tuple(lift_form(s, offset, dim) for s in base.sigma)
    omega1 = sigma[0] + pair12[0] + pair12[1]
    omega2 = sigma[1] + pair13[0] + pair13[1]
    omega3 = sigma[2] + pair14[0] + pair14[1]
    metric = MetricField.from_terms(dim, [(1.0, c, c) for c in conn]) + MetricField.lift_block(
        base.g, offset, dim
    )
    forms = {"omega1": omega1, "omega2": omega2, "omega3": omega3}
    for i, s in enumerate(sigma, start=1):
        forms[f"sigma{i}"] = s
    forms.update(conn_named)
    chart = tuple(f"y{i + 1}" for i in range(4)) + base.chart
    return SpaceModel(
        name=f"hypercomplex_{shape}_{base.name}",
        chart=chart,
        dim=dim,
        metric=metric,
        forms=forms,
        complex_forms={"Upsilon1": ups1},
        base=base,
        which=f"hypercomplex_{shape}",
        box=[(-0.5, 0.5)] * 4 + list(base.box or [(-0.5, 0.5)] * base.dim),
    )


def _positive_coordinate(index: int, dim: int) -> ScalarField:
    """Coordinate function that refuses non-positive values (t > 0 charts)."""
    from .jets import EvaluationError

    inner = lift_coordinate(index, dim)

    def fn(pt):
        if pt[index] <= 0.0:
            raise EvaluationError(f"coordinate {index} must be positive", pt)
        return inner(pt)

    return ScalarField(dim, fn)


def ricci_flat_specials(
    which: str,
    b: float = 1.0,
    c: float = 2.0,
    n: int = 1,
    base: Optional[HKData] = None,
    t_box: Tuple[float, float] = (0.5, 3.0),
) -> SpaceModel:
    """The known Ricci-flat solutions on the warped bundles (t > 0 charts)."""
    if base is None:
        base = flat_base(n=n, torus=True)
    t1 = _positive_coordinate(0, 1)
    if which == "calabi_P":
        m = 1.0 / (2 * n + 2)
        p = t1 ** m
        q = (2.0 * m) * t1 ** (2 * m - 1.0)
        profiles = ProfileSet(p=p, q=q, label="calabi")
        model = build_total_space(base, profiles, "P", t_box=t_box)
        model.expected["lambda"] = 0.0
        model.name = f"calabi_p{model.dim}"
        return model
    if n != 1:
        raise ConstructionError("the exceptional-holonomy metrics need a 4-dimensional base")
    if b <= 0 or (which == "spin7_N8" and c <= 0):
        raise ConstructionError("parameters b, c must be positive")
    if which == "as_G2_L7":
        fibres, dim = 2, 7
        lapse = t1 * (t1 + b)
        coeffs = {
            "q": t1 ** -1.0,
            "r": (t1 + b) ** -1.0,
        }
        warp = t1 * (t1 + b)
        name = "g2_l7"
    elif which == "spin7_N8":
        fibres, dim = 3, 8
        lapse = t1 * (t1 + b) * (t1 + c)
        coeffs = {
            "q": t1 ** -1.0,
            "r": (t1 + b) ** -1.0,
            "s": (t1 + c) ** -1.0,
        }
        warp = t1 * (t1 + b) * (t1 + c)
        name = "spin7_n8"
    else:
        raise ValueError(f"unknown special {which!r}")

    offset = 1 + fibres
    probes = sample_box(base.box or [(-0.5, 0.5)] * base.dim, 5, seed=55)
    _validate_base(base, probes)
    kappa = tuple(lift_form(k, offset, dim) for k in base.kappa)
    dt = coordinate_differential(dim, 0)
    conns = [coordinate_differential(dim, 1) + kappa[0], coordinate_differential(dim, 2) - kappa[1]]
    if fibres == 3:
        conns.append(coordinate_differential(dim, 3) - kappa[2])
    lapse_chart = precompose_coordinate(lapse, 0, dim)
    terms = [(lapse_chart * lapse_chart, dt, dt)]
    for conn, key in zip(conns, ("q", "r", "s")):
        cf = precompose_coordinate(coeffs[key], 0, dim)
        terms.append((cf * cf, conn, conn))
    warp_chart = precompose_coordinate(warp, 0, dim)
    metric = MetricField.from_terms(dim, terms) + MetricField.lift_block(base.g, offset, dim).scale(
        warp_chart
    )
    chart = ("t",) + tuple(f"y{i + 1}" for i in range(fibres)) + base.chart
    return SpaceModel(
        name=name,
        chart=chart,
        dim=dim,
        metric=metric,
        expected={"lambda": 0.0},
        base=base,
        which=which,
        box=[t_box] + [(-0.5, 0.5)] * fibres + list(base.box),
    )


# -- residual operations ------------------------------------------------------


def structure_equation_residual(model: SpaceModel, pts: Sequence[ChartPoint]) -> float:
    """Residual of the first-order system satisfied by the three 2-forms of
    the three-torus model with the canonical exponential profile."""
    if model.which != "N":
        raise ValueError("structure equations apply to N-type models")
    dim = model.dim
    t = lift_coordinate(0, dim)
    c = 4.0 * exp(2.0 * t)
    al, xi, eta = model.forms["alpha"], model.forms["xi"], model.forms["eta"]
    w1, w2, w3 = model.forms["omega1"], model.forms["omega2"], model.forms["omega3"]
    resid = [
        exterior_derivative(w1) + wedge(eta * c, w2) - wedge(xi * c, w3),
        exterior_derivative(w2) - wedge(eta * c, w1) - wedge(al * c, w3),
        exterior_derivative(w3) + wedge(xi * c, w1) + wedge(al * c, w2),
    ]
    worst = 0.0
    for pt in pts:
        for r in resid:
            worst = max(worst, max_abs_coeff(r, pt))
    return worst


def balanced_check(model: SpaceModel, which_form: str, pwr: int, pts: Sequence[ChartPoint]) -> float:
    """Max coefficient of d(form^power) over the sample points."""
    if which_form not in model.forms:
        raise ValueError(f"model {model.name} has no form named {which_form!r}")
    form = model.forms[which_form]
    if form.degree != 2:
        raise ValueError("balanced check expects a 2-form")
    d = exterior_derivative(wedge_power(form, pwr))
    worst = 0.0
    for pt in pts:
        worst = max(worst, max_abs_coeff(d, pt))
    return worst


def hypercomplex_nijenhuis_residual(model: SpaceModel, pts: Sequence[ChartPoint]) -> float:
    """Max Nijenhuis component over the three almost complex structures."""
    worst = 0.0
    for i in (1, 2, 3):
        J = acs_from_pair(model.metric, model.forms[f"omega{i}"])
        for pt in pts:
            worst = max(worst, nijenhuis(J, pt))
    return worst


def verify_hk(base: HKData, pts: Sequence[ChartPoint]) -> Dict[str, float]:
    """Residuals of the hyperKahler package invariants at the sample points."""
    out: Dict[str, float] = {}
    worst_closed = 0.0
    for s in base.sigma:
        ds = exterior_derivative(s)
        for pt in pts:
            worst_closed = max(worst_closed, max_abs_coeff(ds, pt))
    out["d_sigma"] = worst_closed

    if base.kappa is not None:
        worst = 0.0
        for kap, sig in zip(base.kappa, base.sigma):
            resid = exterior_derivative(kap) - sig
            for pt in pts:
                worst = max(worst, max_abs_coeff(resid, pt))
        out["d_kappa_minus_sigma"] = worst

    if base.dim == 4:
        worst = 0.0
        vol = wedge(base.sigma[0], base.sigma[0])
        for i in range(3):
            for j in range(i, 3):
                prod = wedge(base.sigma[i], base.sigma[j])
                target = vol if i == j else None
                for pt in pts:
                    pv = prod.coeffs(pt)
                    tv = vol.coeffs(pt) if target is not None else {}
                    keys = set(pv) | set(tv)
                    for k in keys:
                        a = pv[k].value if k in pv else 0.0
                        bv = tv[k].value if k in tv else 0.0
                        worst = max(worst, abs(a - bv))
        out["wedge_relations"] = worst

    worst = 0.0
    js = [acs_from_pair(base.g, s) for s in base.sigma]
    for pt in pts:
        j1, j2, j3 = (J.eval(pt).value for J in js)
        worst = max(worst, float(np.max(np.abs(j1 @ j2 - j3))))
        gm = base.g.eval(pt).value
        for jm in (j1, j2, j3):
            worst = max(worst, float(np.max(np.abs(jm.T @ gm @ jm - gm))))
    out["quaternion_relations"] = worst
    return out
