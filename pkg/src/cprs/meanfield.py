"""Mean-field density systems: right-hand sides, equilibria, bounds.

Three systems are exposed. ``u_sym`` tracks the four type densities
(u0, u1, u2, u3) of the symmetric model; ``v_asym`` and ``v_sym`` track
(v0, v1, v2) = (empty, wild, sterile) densities for the asymmetric and
symmetric models. The two families are linked by

    u1 = 1 - v0 - v2,   u2 = 1 - v0 - v1,   u3 = v0 + v1 + v2 - 1.

Each v-system right-hand side exists in two versions. ``printed``
reproduces two transcription slips verbatim (a v1 where the growth
factor needs v2, and a ``- v1*v2`` where the empty-density line needs
``- v1 - v2``); ``corrected`` is the version consistent with the
four-density derivation. The numerical equilibrium adjudicates which
one is canonical; see :func:`meanfield_report`. The same applies to two
readings of the printed nontrivial equilibria.

All right-hand sides are plain arithmetic, so they evaluate exactly on
``fractions.Fraction`` inputs and support complex-step Jacobians.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from types import SimpleNamespace

import numpy as np

from .errors import DomainError, NumericalInstabilityError
from .params import Params

V_ASYM = "v_asym"
U_SYM = "u_sym"
V_SYM = "v_sym"
SYSTEMS = (V_ASYM, U_SYM, V_SYM)

PRINTED = "printed"
CORRECTED = "corrected"
VERSIONS = (PRINTED, CORRECTED)

DEFAULT_STEADY_TOL = 1e-9
DEFAULT_NEWTON_TOL = 1e-12
DEFAULT_DT = 1e-3
DEFAULT_T_MAX = 1e4
NEWTON_MAX_ITER = 200
SIMPLEX_DRIFT = 1e-9


def exact_params(p: Params):
    """Rational (decimal) reading of the parameters, for evaluating the
    right-hand sides in exact arithmetic."""
    return SimpleNamespace(
        lambda1=Fraction(str(p.lambda1)),
        lambda2=Fraction(str(p.lambda2)),
        r=Fraction(str(p.r)),
        d=p.d,
    )


def u_from_v(v, validate: bool = True, eps: float = 1e-12):
    """Map (v0, v1, v2) to (u0, u1, u2, u3)."""
    v0, v1, v2 = v
    u = (v0, 1 - v0 - v2, 1 - v0 - v1, v0 + v1 + v2 - 1)
    if validate:
        _check_unit_interval(u, ("u0", "u1", "u2", "u3"), eps)
    return u


def v_from_u(u, validate: bool = True, eps: float = 1e-12):
    """Map (u0, u1, u2, u3) to (v0, v1, v2)."""
    u0, u1, u2, u3 = u
    if validate:
        _check_unit_interval(u, ("u0", "u1", "u2", "u3"), eps)
        total = u0 + u1 + u2 + u3
        if abs(total - 1) > eps:
            raise DomainError(f"u densities sum to {total}, not 1")
    return (u0, u1 + u3, u2 + u3)


def _check_unit_interval(values, names, eps):
    bad = [
        f"{name}={float(val)}"
        for name, val in zip(names, values)
        if val < -eps or val > 1 + eps
    ]
    if bad:
        raise DomainError("densities outside [0,1]: " + ", ".join(bad))


def _growth_factor(v0, v1, v2, lam1, lam2, third):
    # (lam2-lam1)*v0 + lam2*v1 + (lam2-lam1)*<third> + (lam1-lam2),
    # which equals lam1*u1 + lam2*u3 when <third> is v2
    return (lam2 - lam1) * v0 + lam2 * v1 + (lam2 - lam1) * third + (lam1 - lam2)


def rhs(system: str, state, p: Params, version: str = CORRECTED):
    """Right-hand side of one mean-field system at ``state``.

    ``state`` is (u0,u1,u2,u3) for ``u_sym`` and (v0,v1,v2) otherwise.
    The arithmetic is polymorphic over the component type.
    """
    if version not in VERSIONS:
        raise ValueError(f"version must be one of {VERSIONS}")
    lam1, lam2, r, d = p.lambda1, p.lambda2, p.r, p.d
    if system == U_SYM:
        u0, u1, u2, u3 = state
        growth = 2 * d * (lam1 * u1 + lam2 * u3)
        du1 = growth * u0 + u3 - (r + 1) * u1
        du2 = r * u0 + u3 - u2 - growth * u2
        du3 = r * u1 + growth * u2 - 2 * u3
        du0 = -growth * u0 - r * u0 + u1 + u2
        return (du0, du1, du2, du3)
    v0, v1, v2 = state
    if system == V_ASYM:
        third0 = v1 if version == PRINTED else v2
        f0 = _growth_factor(v0, v1, v2, lam1, lam2, third0)
        f1 = _growth_factor(v0, v1, v2, lam1, lam2, v2)
        dv0 = -2 * d * f0 * v0 - (r + 2) * v0 - v1 - v2 + 2
        dv1 = 2 * d * f1 * v0 - v1
        dv2 = r * (1 - v2) - v2
        return (dv0, dv1, dv2)
    if system == V_SYM:
        if version == PRINTED:
            f0 = _growth_factor(v0, v1, v2, lam1, lam2, v1)
            dv0 = -2 * d * f0 * v0 - (r + 2) * v0 - v1 * v2 + 2
        else:
            f0 = _growth_factor(v0, v1, v2, lam1, lam2, v2)
            dv0 = -2 * d * f0 * v0 - (r + 2) * v0 - v1 - v2 + 2
        f1 = _growth_factor(v0, v1, v2, lam1, lam2, v2)
        dv1 = 2 * d * f1 * (1 - v1) - v1
        dv2 = r * (1 - v2) - v2
        return (dv0, dv1, dv2)
    raise ValueError(f"system must be one of {SYSTEMS}")


def residual_inf(system: str, state, p: Params, version: str = CORRECTED) -> float:
    return float(max(abs(c) for c in rhs(system, state, p, version)))


def trivial_equilibrium(system: str, p: Params, exact: bool = False):
    """The wild-free equilibrium: u = (1/(r+1), 0, r/(r+1), 0).

    With ``exact=True`` the state is returned in rational arithmetic, on
    which the corrected right-hand sides vanish identically.
    """
    if exact:
        r = Fraction(str(p.r))
        u0 = 1 / (1 + r)
        u2 = r * u0
        zero = Fraction(0)
    else:
        u0 = 1.0 / (p.r + 1.0)
        u2 = p.r * u0
        zero = 0.0
    if system == U_SYM:
        return (u0, zero, u2, zero)
    return (u0, zero, u2)


@dataclass
class EquilibriumCandidate:
    name: str
    state: tuple
    residual: float
    admissible: bool
    source: str  # "closed-form", "newton", "trivial"
    converged: bool = True

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "state": [float(c) for c in self.state],
            "residual": self.residual,
            "admissible": self.admissible,
            "source": self.source,
            "converged": self.converged,
        }


def _admissible(system, state, eps=1e-9) -> bool:
    try:
        if system == U_SYM:
            _check_unit_interval(state, "0123", eps)
            return abs(sum(state) - 1) <= max(eps, 1e-9)
        u_from_v(state, validate=True, eps=eps)
        return True
    except DomainError:
        return False


def nontrivial_candidates(system: str, p: Params) -> list[tuple[str, tuple]]:
    """Closed-form nontrivial equilibrium candidates, one per printed
    reading."""
    lam1, lam2, r, d = p.lambda1, p.lambda2, p.r, p.d
    v2 = r / (r + 1.0)
    out = []
    if system == V_ASYM:
        denom_v1 = 4 * d * lam1 + 2 * d * lam2 * r
        v1 = (r + 2) / (2 * (r + 1)) - (r + 2) ** 2 / (2 * denom_v1)
        denom_printed = 4 * d * lam1 * r + 2 * d * lam2 * r
        if denom_printed > 0:
            out.append(("printed", ((r + 2) / denom_printed, v1, v2)))
        out.append(("v0-consistent", ((r + 2) / denom_v1, v1, v2)))
    else:
        two_d_lam = 2 * d * (lam1 + lam2 * r)
        v0 = 1.0 / two_d_lam
        printed = (v0, (r + 1) / two_d_lam, v2)
        complement = (v0, 1 - (r + 1) / two_d_lam, v2)
        if system == V_SYM:
            out.append(("printed", printed))
            out.append(("v1-complement", complement))
        else:  # U_SYM: same candidates through the density map
            out.append(("printed", u_from_v(printed, validate=False)))
            out.append(("v1-complement", u_from_v(complement, validate=False)))
    return out


@dataclass
class IntegrationResult:
    state: tuple
    converged: bool
    steps: int
    projections: int
    t: float


def _project(system, state):
    if system == U_SYM:
        u = np.clip(np.asarray(state, dtype=float), 0.0, 1.0)
        total = u.sum()
        if total <= 0:
            raise NumericalInstabilityError("density mass vanished")
        return tuple(u / total)
    u = np.clip(np.asarray(u_from_v(state, validate=False), dtype=float), 0.0, 1.0)
    total = u.sum()
    if total <= 0:
        raise NumericalInstabilityError("density mass vanished")
    u = tuple(u / total)
    return v_from_u(u, validate=False)


def _drift(system, state) -> float:
    if system == U_SYM:
        comp = state
        mass = abs(sum(state) - 1.0)
    else:
        comp = u_from_v(state, validate=False)
        mass = 0.0
    out = mass
    for c in comp:
        if c < 0:
            out = max(out, -c)
        elif c > 1:
            out = max(out, c - 1.0)
    return out


def integrate_to_steady_state(system: str, state0, p: Params,
                              dt: float = DEFAULT_DT,
                              t_max: float = DEFAULT_T_MAX,
                              tol: float = DEFAULT_STEADY_TOL,
                              version: str = CORRECTED) -> IntegrationResult:
    """Classical fixed-step fourth-order integration until the
    right-hand side's sup norm drops below ``tol``.

    States drifting off the density simplex by more than 1e-9 are
    projected back (counted in the result); drifting beyond 0.1 raises
    :class:`NumericalInstabilityError` with a short trace.
    """
    state = tuple(float(c) for c in state0)
    _ = _admissible(system, state) or _raise_domain(system, state)
    t = 0.0
    steps = 0
    projections = 0
    trace = []
    f = lambda s: rhs(system, s, p, version)
    while t < t_max:
        if residual_inf(system, state, p, version) < tol:
            return IntegrationResult(state, True, steps, projections, t)
        k1 = f(state)
        k2 = f(tuple(s + 0.5 * dt * k for s, k in zip(state, k1)))
        k3 = f(tuple(s + 0.5 * dt * k for s, k in zip(state, k2)))
        k4 = f(tuple(s + dt * k for s, k in zip(state, k3)))
        state = tuple(
            s + dt * (a + 2 * b + 2 * c + e) / 6.0
            for s, a, b, c, e in zip(state, k1, k2, k3, k4)
        )
        t += dt
        steps += 1
        trace.append((t, state))
        if len(trace) > 5:
            trace.pop(0)
        drift = _drift(system, state)
        if not all(math.isfinite(c) for c in state) or drift > 0.1:
            raise NumericalInstabilityError(
                f"integration left the density simplex at t={t}: {trace}"
            )
        if drift > SIMPLEX_DRIFT:
            state = _project(system, state)
            projections += 1
    return IntegrationResult(state, residual_inf(system, state, p, version) < tol,
                             steps, projections, t)


def _raise_domain(system, state):
    raise DomainError(f"inadmissible initial state for {system}: {state}")


def jacobian(system: str, state, p: Params, version: str = CORRECTED) -> np.ndarray:
    """Complex-step Jacobian of the right-hand side (machine accurate)."""
    n = len(state)
    h = 1e-20
    J = np.empty((n, n))
    for j in range(n):
        bumped = tuple(
            complex(c, h if i == j else 0.0) for i, c in enumerate(state)
        )
        deriv = rhs(system, bumped, p, version)
        J[:, j] = [comp.imag / h for comp in deriv]
    return J


def newton_refine(system: str, state, p: Params,
                  tol: float = DEFAULT_NEWTON_TOL,
                  max_iter: int = NEWTON_MAX_ITER,
                  version: str = CORRECTED):
    """Damped Newton iteration on the right-hand side.

    The u-system conserves mass, so its full Jacobian is singular along
    the mass direction; Newton then runs on (u1, u2, u3) with
    u0 = 1 - u1 - u2 - u3. Returns ``(state, converged)``; singular
    Jacobians and stalls report ``converged=False`` instead of raising.
    """
    reduced = system == U_SYM

    def expand(y):
        # works for float and complex components alike
        if reduced:
            return (1.0 - y[0] - y[1] - y[2], y[0], y[1], y[2])
        return tuple(y)

    def f(y):
        full = rhs(system, expand(y), p, version)
        return full[1:] if reduced else full

    x = np.asarray([float(c) for c in state])
    if reduced:
        x = x[1:].copy()
    m = x.size
    h = 1e-20
    for _ in range(max_iter):
        fx = np.asarray(f(tuple(x)), dtype=float)
        norm = np.abs(fx).max()
        if norm < tol:
            return expand(x), True
        J = np.empty((m, m))
        for j in range(m):
            bumped = tuple(
                complex(c, h if i == j else 0.0) for i, c in enumerate(x)
            )
            J[:, j] = [comp.imag / h for comp in f(bumped)]
        try:
            step = np.linalg.solve(J, -fx)
        except np.linalg.LinAlgError:
            return expand(x), False
        alpha = 1.0
        while alpha > 1e-8:
            trial = x + alpha * step
            fnorm = np.abs(np.asarray(f(tuple(trial)), dtype=float)).max()
            if fnorm < norm * (1.0 - 0.25 * alpha) + 1e-18:
                x = trial
                break
            alpha *= 0.5
        else:
            return expand(x), False
    return expand(x), bool(np.abs(np.asarray(f(tuple(x)), dtype=float)).max() < tol)


def _interior_starts(system) -> list[tuple]:
    if system == U_SYM:
        grid = [
            (0.4, 0.3, 0.2, 0.1), (0.25, 0.25, 0.25, 0.25),
            (0.1, 0.6, 0.2, 0.1), (0.6, 0.1, 0.2, 0.1),
            (0.2, 0.1, 0.6, 0.1), (0.1, 0.2, 0.2, 0.5),
            (0.3, 0.05, 0.6, 0.05), (0.05, 0.45, 0.05, 0.45),
        ]
    else:
        grid = [
            (0.3, 0.4, 0.5), (0.25, 0.5, 0.5), (0.4, 0.3, 0.6),
            (0.2, 0.6, 0.4), (0.5, 0.25, 0.35), (0.35, 0.35, 0.45),
            (0.15, 0.55, 0.6), (0.45, 0.2, 0.5),
        ]
    return grid


def equilibria(system: str, p: Params, version: str = CORRECTED,
               newton_tol: float = DEFAULT_NEWTON_TOL) -> list[EquilibriumCandidate]:
    """Trivial equilibrium, printed nontrivial readings, and Newton
    solutions from the interior multi-start grid, each tagged with its
    residual and admissibility."""
    out = []
    triv = trivial_equilibrium(system, p)
    out.append(
        EquilibriumCandidate(
            "trivial", triv, residual_inf(system, triv, p, version),
            _admissible(system, triv), "trivial",
        )
    )
    for name, state in nontrivial_candidates(system, p):
        out.append(
            EquilibriumCandidate(
                name, state, residual_inf(system, state, p, version),
                _admissible(system, state, eps=1e-9), "closed-form",
            )
        )
    found = []
    for start in _interior_starts(system):
        refined, converged = newton_refine(
            system, start, p, tol=newton_tol, version=version
        )
        if not converged:
            continue
        if any(
            max(abs(a - b) for a, b in zip(refined, prev)) < 1e-7
            for prev in found
        ):
            continue
        found.append(refined)
        out.append(
            EquilibriumCandidate(
                f"newton-{len(found)}", refined,
                residual_inf(system, refined, p, version),
                _admissible(system, refined, eps=1e-7), "newton",
            )
        )
    return out


@dataclass
class BoundResult:
    value: float | None
    applicable: bool
    vacuous: bool = False
    note: str = ""


def bound_r0(p: Params) -> BoundResult:
    """Release-rate bound from the asymmetric nontrivial equilibrium:
    [2d*lam2 - 3 + sqrt((2d*lam2 - 3)^2 - 8(1 - 2d*lam1))] / 2."""
    d, lam1, lam2 = p.d, p.lambda1, p.lambda2
    a = 2 * d * lam2 - 3
    disc = a * a - 8 * (1 - 2 * d * lam1)
    if disc < 0:
        return BoundResult(None, False, note="no real root")
    root = (a + math.sqrt(disc)) / 2
    if root < 0:
        return BoundResult(root, True, vacuous=True, note="bound below 0")
    return BoundResult(root, True)


def bound_r1(p: Params) -> BoundResult:
    """Release-rate bound from the symmetric nontrivial equilibrium:
    (2d*lam1 - 1)/(1 - 2d*lam2), valid for lam2 <= 1/(2d)."""
    d, lam1, lam2 = p.d, p.lambda1, p.lambda2
    if lam2 > 1.0 / (2 * d):
        return BoundResult(None, False, note="requires lambda2 <= 1/(2d)")
    if lam2 == 1.0 / (2 * d):
        return BoundResult(None, False, note="denominator vanishes")
    value = (2 * d * lam1 - 1) / (1 - 2 * d * lam2)
    return BoundResult(value, True, vacuous=value < 0,
                       note="bound below 0" if value < 0 else "")


def stability_eigenvalues(system: str, state, p: Params,
                          version: str = CORRECTED) -> list[complex]:
    return [complex(z) for z in np.linalg.eigvals(jacobian(system, state, p, version))]


def meanfield_report(p: Params, newton_tol: float = DEFAULT_NEWTON_TOL) -> dict:
    """Equilibrium survey of all three systems plus the adjudication of
    the printed-formula variants against the numerical equilibrium."""
    report: dict = {
        "params": {
            "lambda1": p.lambda1, "lambda2": p.lambda2, "r": p.r, "d": p.d,
        },
        "systems": {},
    }
    for system in SYSTEMS:
        per_version = {}
        for version in VERSIONS:
            cands = equilibria(system, p, version=version, newton_tol=newton_tol)
            interior = _interior_starts(system)[0]
            try:
                # a coarser step suffices here: Newton polishes whatever
                # the integration lands on, and a non-convergent printed
                # variant should fail fast rather than run 1e7 steps
                integ = integrate_to_steady_state(
                    system, interior, p, dt=1e-2, t_max=300.0, version=version
                )
                refined, converged = newton_refine(
                    system, integ.state, p, tol=newton_tol, version=version
                )
                numerical = {
                    "state": [float(c) for c in refined],
                    "residual": residual_inf(system, refined, p, version),
                    "converged": bool(integ.converged and converged),
                    "stability_real_parts": [
                        z.real
                        for z in stability_eigenvalues(system, refined, p, version)
                    ],
                }
            except NumericalInstabilityError as exc:
                numerical = {"error": str(exc)}
            per_version[version] = {
                "candidates": [c.as_dict() for c in cands],
                "numerical": numerical,
            }
        confirmed = [
            c["name"]
            for c in per_version[CORRECTED]["candidates"]
            if c["source"] == "closed-form" and c["residual"] < 1e-8
        ]
        report["systems"][system] = {
            **per_version,
            "canonical_version": CORRECTED,
            "confirmed_closed_forms": confirmed,
        }
    report["bounds"] = {
        "r0": vars(bound_r0(p)),
        "r1": vars(bound_r1(p)),
    }
    return report
