"""The cohomogeneity-one Einstein system for the warped bundle ansatz.

For g = dt^2 + p^2 g_M + q^2 alpha^2 + r^2 xi^2 + s^2 eta^2 the Einstein
condition Ric = lambda g reduces to a second-order system in the active
profiles; dropping fibre directions truncates the system (two-torus: drop s;
one-torus: drop r, s; none: the single warped-product equation).  This
module evaluates the residuals with jet-exact derivatives and integrates
trajectories with a classical fixed-step fourth-order scheme.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, TextIO, Union

import numpy as np

from .jets import ChartPoint, EvaluationError
from .spaces import FIBRE_COUNT, ProfileSet, expected_lambda, exponential_profiles

__all__ = [
    "OdeState",
    "Trajectory",
    "integrate",
    "scaling_family_check",
    "system_residual",
]

ACTIVE = {"Q": ("p",), "P": ("p", "q"), "L": ("p", "q", "r"), "N": ("p", "q", "r", "s")}


@dataclass
class OdeState:
    """Profile values and first derivatives at one time."""

    t: float
    values: Dict[str, float]
    derivs: Dict[str, float]

    def validate(self, which: str) -> None:
        for name in ACTIVE[which]:
            if name not in self.values or name not in self.derivs:
                raise ValueError(f"state misses profile {name!r} for type {which}")
            if self.values[name] <= 0:
                raise EvaluationError(f"profile {name} must stay positive, got {self.values[name]}")

    @staticmethod
    def from_profiles(profiles: ProfileSet, which: str, t: float) -> "OdeState":
        values, derivs = {}, {}
        pt = ChartPoint(np.array([t]))
        for name in ACTIVE[which]:
            f = getattr(profiles, name)
            j = f(pt)
            values[name] = j.value
            derivs[name] = float(j.grad[0])
        return OdeState(t, values, derivs)


def _jet_data(profiles: ProfileSet, which: str, t: float):
    """(value, first, second) per active profile, via exact jets."""
    pt = ChartPoint(np.array([t]))
    out = {}
    for name in ACTIVE[which]:
        f = getattr(profiles, name)
        if f is None:
            raise EvaluationError(f"profile {name!r} missing for type {which}")
        j = f(pt)
        if j.value <= 0:
            raise EvaluationError(f"profile {name} must be positive, got {j.value} at t={t}")
        out[name] = (j.value, float(j.grad[0]), float(j.hess[0, 0]))
    return out


def _residual_vector(vals, n: int, lam: float, which: str) -> np.ndarray:
    """Left minus right of each active equation.

    vals maps profile name to (value, first, second derivative).
    """
    p, dp, ddp = vals["p"]
    if which == "Q":
        return np.array([dp * dp + lam / (4.0 * n) * p * p])
    fibre_names = ACTIVE[which][1:]
    rows = []
    # trace equation
    trace = 4.0 * n * ddp / p + lam
    for name in fibre_names:
        f, df, ddf = vals[name]
        trace += ddf / f
    rows.append(trace)
    # one diagonal equation per fibre direction
    for name in fibre_names:
        f, df, ddf = vals[name]
        others = sum(vals[o][1] / vals[o][0] for o in fibre_names if o != name)
        rows.append(
            f * ddf
            + f * df * others
            + 4.0 * n * dp * f * df / p
            - n * f ** 4 / p ** 4
            + lam * f * f
        )
    # base equation
    sum_logs = sum(vals[o][1] / vals[o][0] for o in fibre_names)
    sum_sq = sum(vals[o][0] ** 2 for o in fibre_names)
    rows.append(
        p * ddp
        + p * dp * sum_logs
        + (4.0 * n - 1.0) * dp * dp
        + sum_sq / (2.0 * p * p)
        + lam * p * p
    )
    return np.array(rows)


def system_residual(
    profiles: ProfileSet, n: int, lam: float, t: float, which: str
) -> np.ndarray:
    """Residual vector of the active equations at time t, jet-exact."""
    if which not in ACTIVE:
        raise ValueError(f"which must be one of Q, P, L, N, got {which!r}")
    return _residual_vector(_jet_data(profiles, which, t), n, lam, which)


def scaling_family_check(
    a: float,
    b: float,
    n: int,
    which: str,
    ts: Sequence[float] = (0.0, 0.4, 1.1),
) -> float:
    """Max residual of the exponential family with the rescaled constant
    lambda(b) = b^2 lambda(1)."""
    if a <= 0 or b <= 0:
        raise ValueError("family parameters a, b must be positive")
    profiles = exponential_profiles(a=a, b=b)
    lam = expected_lambda(which, n, b)
    worst = 0.0
    for t in ts:
        worst = max(worst, float(np.max(np.abs(system_residual(profiles, n, lam, t, which)))))
    return worst


# -- integration ----------------------------------------------------------------


@dataclass
class Trajectory:
    which: str
    n: int
    lam: float
    times: np.ndarray
    values: Dict[str, np.ndarray]
    derivs: Dict[str, np.ndarray]
    constraint: np.ndarray
    completed: bool
    halt_reason: str = ""

    def endpoint(self) -> OdeState:
        i = len(self.times) - 1
        return OdeState(
            float(self.times[i]),
            {k: float(v[i]) for k, v in self.values.items()},
            {k: float(v[i]) for k, v in self.derivs.items()},
        )

    def max_constraint_drift(self) -> float:
        return float(np.max(np.abs(self.constraint)))

    def to_csv(self, dest: Union[str, TextIO]) -> None:
        names = list(self.values)
        header = ["t"] + names + [f"d{n}" for n in names] + ["constraint"]
        rows = np.column_stack(
            [self.times]
            + [self.values[n] for n in names]
            + [self.derivs[n] for n in names]
            + [self.constraint]
        )
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for row in rows:
            buf.write(",".join(f"{x:.17g}" for x in row) + "\n")
        if isinstance(dest, str):
            with open(dest, "w") as fh:
                fh.write(buf.getvalue())
        else:
            dest.write(buf.getvalue())


def _second_derivatives(values, derivs, n: int, lam: float, which: str) -> Dict[str, float]:
    """Solve the trace and diagonal equations for the second derivatives."""
    p = values["p"]
    out: Dict[str, float] = {}
    fibre_names = ACTIVE[which][1:]
    acc = lam
    for name in fibre_names:
        f, df = values[name], derivs[name]
        others = sum(derivs[o] / values[o] for o in fibre_names if o != name)
        ddf = (-lam * f * f - f * df * others - 4.0 * n * derivs["p"] * f * df / p + n * f ** 4 / p ** 4) / f
        out[name] = ddf
        acc += ddf / f
    # trace equation determines p''
    out["p"] = -acc * p / (4.0 * n)
    return out


def _constraint(values, derivs, seconds, n: int, lam: float, which: str) -> float:
    p, dp, ddp = values["p"], derivs["p"], seconds["p"]
    if which == "Q":
        return dp * dp + lam / (4.0 * n) * p * p
    fibre_names = ACTIVE[which][1:]
    sum_logs = sum(derivs[o] / values[o] for o in fibre_names)
    sum_sq = sum(values[o] ** 2 for o in fibre_names)
    return (
        p * ddp
        + p * dp * sum_logs
        + (4.0 * n - 1.0) * dp * dp
        + sum_sq / (2.0 * p * p)
        + lam * p * p
    )


def integrate(
    initial: OdeState,
    n: int,
    lam: float,
    which: str,
    t_end: float,
    step: float,
) -> Trajectory:
    """Fixed-step classical fourth-order integration of the reduced system.

    The trace and diagonal equations supply the second derivatives; the
    base (pp'') equation is monitored as the constraint along the way.
    Halts with a partial trajectory if a profile reaches zero.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if which not in ACTIVE:
        raise ValueError(f"which must be one of Q, P, L, N, got {which!r}")
    initial.validate(which)
    names = list(ACTIVE[which])

    def pack(values, derivs):
        return np.array([values[k] for k in names] + [derivs[k] for k in names])

    def unpack(vec):
        m = len(names)
        return (
            {k: float(vec[i]) for i, k in enumerate(names)},
            {k: float(vec[m + i]) for i, k in enumerate(names)},
        )

    def rhs(vec):
        values, derivs = unpack(vec)
        if any(values[k] <= 0 for k in names):
            raise EvaluationError("profile hit zero during integration")
        seconds = _second_derivatives(values, derivs, n, lam, which)
        m = len(names)
        out = np.empty(2 * m)
        out[:m] = [derivs[k] for k in names]
        out[m:] = [seconds[k] for k in names]
        return out

    n_steps = max(1, int(round((t_end - initial.t) / step)))
    times = [initial.t]
    vec = pack(initial.values, initial.derivs)
    history = [vec.copy()]
    constraint = []
    completed = True
    halt_reason = ""
    values, derivs = unpack(vec)
    seconds = _second_derivatives(values, derivs, n, lam, which)
    constraint.append(_constraint(values, derivs, seconds, n, lam, which))
    t = initial.t
    for _ in range(n_steps):
        try:
            k1 = rhs(vec)
            k2 = rhs(vec + 0.5 * step * k1)
            k3 = rhs(vec + 0.5 * step * k2)
            k4 = rhs(vec + step * k3)
        except EvaluationError as err:
            completed = False
            halt_reason = str(err)
            break
        vec = vec + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += step
        values, derivs = unpack(vec)
        if any(values[k] <= 0 for k in names):
            completed = False
            halt_reason = "profile hit zero during integration"
            break
        times.append(t)
        history.append(vec.copy())
        seconds = _second_derivatives(values, derivs, n, lam, which)
        constraint.append(_constraint(values, derivs, seconds, n, lam, which))

    hist = np.array(history)
    m = len(names)
    return Trajectory(
        which=which,
        n=n,
        lam=lam,
        times=np.array(times),
        values={k: hist[:, i] for i, k in enumerate(names)},
        derivs={k: hist[:, m + i] for i, k in enumerate(names)},
        constraint=np.array(constraint),
        completed=completed,
        halt_reason=halt_reason,
    )
