"""Time steppers for gradient flows with auxiliary-variable couplings.

Four scheme families, each in first-order (backward Euler) and second-order
(Crank-Nicolson with extrapolated midpoint) form:

* ``sav``    scalar r ~ sqrt(E1 + C); the coupled linear system is reduced by
  scalar elimination to exactly two constant-coefficient solves per step.
* ``ieq``    pointwise q ~ sqrt(F + C); eliminating q leaves a
  variable-coefficient operator on phi, solved by GMRES preconditioned with
  the constant-coefficient inverse.
* ``3s-sav`` scalar eta ~ E1 + C, no square root; the coupling chi is fully
  explicit, so one constant-coefficient solve advances phi and a scalar
  update advances eta.
* ``3s-ieq`` pointwise q ~ F + C, same step-by-step structure with a field
  update for q.

``3s-sav-sqrt`` is a diagnostic variant of 3s-sav that advances
r = sqrt(eta) directly; its update radicand can go negative for large steps,
which is surfaced as RadicandNegativeError rather than hidden.

All schemes dissipate their modified energy (see ``modified_energy``)
unconditionally in dt; this is algebraic and holds for every step size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.fft as _fft
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (
    AuxiliaryDegeneracyError,
    ConfigurationError,
    RadicandNegativeError,
    SolverDivergenceError,
    UsageError,
)
from .models import ModelSpec, energy, nonlinear_energy
from .spectral import (
    ScalarField2D,
    apply_operator,
    dealias_pass,
    forward,
    inner_product,
    integrate,
    inverse,
    solve_implicit,
)

__all__ = [
    "SCHEME_KINDS",
    "SchemeConfig",
    "ScalarR",
    "ScalarEta",
    "FieldQ",
    "AuxVariable",
    "CouplingTerm",
    "StepState",
    "resolve_c",
    "init_state",
    "startup_half_step",
    "step_3ssav",
    "step_3sieq",
    "step_sav",
    "step_ieq",
    "step_3ssav_sqrt",
    "step",
    "modified_energy",
    "aux_scalar",
]

SCHEME_KINDS = ("sav", "ieq", "3s-sav", "3s-ieq", "3s-sav-sqrt")


@dataclass(frozen=True)
class SchemeConfig:
    """Scheme selection and stepping parameters.

    ``c_policy`` is the shift constant C: a number, the string "auto" for
    C = -E(phi0) - delta, or None to take the scheme's default (auto for
    3s-sav, C = 1 otherwise; the square-root based schemes need E1 + C > 0,
    which the auto rule would violate).
    """

    kind: str
    order: int
    dt: float
    t_end: float
    c_policy: Union[float, str, None] = None
    delta: float = 1.0
    guard: float = 1e-12
    gmres_tol: float = 1e-12
    gmres_maxiter: int = 200

    def __post_init__(self) -> None:
        if self.kind not in SCHEME_KINDS:
            raise ConfigurationError(
                f"unknown scheme '{self.kind}'; available: {', '.join(SCHEME_KINDS)}"
            )
        if self.order not in (1, 2):
            raise ConfigurationError(f"order must be 1 or 2, got {self.order}")
        if self.kind == "3s-sav-sqrt" and self.order != 1:
            raise ConfigurationError(
                "3s-sav-sqrt is a first-order diagnostic scheme; use order=1"
            )
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.t_end < self.dt:
            raise ConfigurationError(
                f"t_end={self.t_end} must be at least one step dt={self.dt}"
            )
        if isinstance(self.c_policy, str) and self.c_policy != "auto":
            raise ConfigurationError(
                f"c_policy must be a number, 'auto', or None, got '{self.c_policy}'"
            )
        if self.c_policy in (None, "auto") and not self.delta > 0:
            raise ConfigurationError(f"delta must be positive, got {self.delta}")
        if not self.guard > 0:
            raise ConfigurationError("guard floor must be positive")
        if not (self.gmres_tol > 0 and self.gmres_maxiter >= 1):
            raise ConfigurationError("gmres_tol must be > 0 and gmres_maxiter >= 1")


@dataclass(frozen=True)
class ScalarR:
    r: float


@dataclass(frozen=True)
class ScalarEta:
    eta: float


@dataclass(frozen=True)
class FieldQ:
    q: ScalarField2D


AuxVariable = Union[ScalarR, ScalarEta, FieldQ]


@dataclass(frozen=True)
class CouplingTerm:
    """The explicit coupling field chi together with the formula it came from."""

    chi: ScalarField2D
    kind: str


@dataclass(frozen=True)
class StepState:
    """Integrator state after n steps: t = n*dt, phi = phi^n.

    ``c`` is the shift constant resolved once from the initial data, so the
    auto rule stays fixed over the whole run.  ``phi_prev``/``aux_prev`` feed
    the second-order extrapolation and are absent before the first step.
    """

    phi: ScalarField2D
    aux: AuxVariable
    n: int
    t: float
    c: float
    phi_prev: Optional[ScalarField2D] = None
    aux_prev: Optional[AuxVariable] = None
    chi_cache: Optional[CouplingTerm] = None


def resolve_c(phi0: ScalarField2D, model: ModelSpec, cfg: SchemeConfig) -> float:
    """Resolve the shift constant C from the config policy and initial data."""
    policy = cfg.c_policy
    if policy is None:
        policy = "auto" if cfg.kind == "3s-sav" else 1.0
    if policy == "auto":
        return -energy(phi0, model).e_total - cfg.delta
    return float(policy)


def _aux_kind_label(kind: str) -> str:
    return {
        "sav": "r*F'/sqrt(E1+C)",
        "ieq": "q*F'/sqrt(F+C)",
        "3s-sav": "eta*F'/(E1+C)",
        "3s-ieq": "q*F'/(F+C)",
        "3s-sav-sqrt": "r*F'/sqrt(E1+C)",
    }[kind]


def init_state(phi0: ScalarField2D, model: ModelSpec, cfg: SchemeConfig) -> StepState:
    """Initialize the auxiliary variable exactly from phi0.

    sav / 3s-sav-sqrt: r0 = sqrt(E1 + C), needs a positive radicand.
    3s-sav:            eta0 = E1 + C, needs |eta0| above the guard floor.
    ieq:               q0 = sqrt(F + C) pointwise, needs F + C > 0 everywhere.
    3s-ieq:            q0 = F + C pointwise, needs |F + C| above the guard.
    """
    c = resolve_c(phi0, model, cfg)
    kind = cfg.kind
    aux: AuxVariable
    if kind in ("sav", "3s-sav-sqrt"):
        rad = nonlinear_energy(phi0, model) + c
        if rad <= 0:
            raise ConfigurationError(
                f"E1(phi0) + C = {rad:.6e} is not positive; choose a larger C "
                f"for scheme '{kind}'"
            )
        aux = ScalarR(math.sqrt(rad))
    elif kind == "3s-sav":
        eta0 = nonlinear_energy(phi0, model) + c
        if abs(eta0) < cfg.guard:
            raise ConfigurationError(
                f"|E1(phi0) + C| = {abs(eta0):.3e} is below the guard floor "
                f"{cfg.guard}; adjust C"
            )
        aux = ScalarEta(eta0)
    elif kind == "ieq":
        rad = model.potential.f(phi0.values) + c
        if rad.min() <= 0:
            i, j = np.unravel_index(int(np.argmin(rad)), rad.shape)
            raise ConfigurationError(
                f"F(phi0) + C = {rad.min():.6e} at grid point ({i}, {j}) is not "
                "positive; choose a larger C for scheme 'ieq'"
            )
        aux = FieldQ(ScalarField2D(phi0.grid, np.sqrt(rad)))
    else:  # 3s-ieq
        q0 = model.potential.f(phi0.values) + c
        if np.abs(q0).min() < cfg.guard:
            i, j = np.unravel_index(int(np.argmin(np.abs(q0))), q0.shape)
            raise ConfigurationError(
                f"|F(phi0) + C| = {np.abs(q0).min():.3e} at grid point ({i}, {j}) "
                f"is below the guard floor {cfg.guard}; adjust C"
            )
        aux = FieldQ(ScalarField2D(phi0.grid, q0))
    return StepState(phi=phi0, aux=aux, n=0, t=0.0, c=c)


def _apply_g(f: ScalarField2D, model: ModelSpec) -> ScalarField2D:
    return apply_operator(f, model.g_symbol)


def _apply_gl(f: ScalarField2D, model: ModelSpec) -> ScalarField2D:
    # G(L f) fused into a single transform pair; both symbols are diagonal.
    grid = f.grid
    tab = model.g_symbol.table(grid) * model.l_symbol.table(grid)
    return ScalarField2D(grid, inverse(grid, tab * forward(f)))


def _dealias(f: ScalarField2D) -> ScalarField2D:
    return dealias_pass(f) if f.grid.dealias else f


def _nonlinear_deriv(phi: ScalarField2D, model: ModelSpec) -> np.ndarray:
    return model.potential.df(phi.values)


def _extrapolate_phi(state: StepState) -> ScalarField2D:
    if state.phi_prev is None:
        raise UsageError("order-2 stepping with n >= 1 requires phi_prev")
    return ScalarField2D(
        state.phi.grid, 1.5 * state.phi.values - 0.5 * state.phi_prev.values
    )


def _startup(
    phi0: ScalarField2D, model: ModelSpec, cfg: SchemeConfig, c: float
) -> tuple[ScalarField2D, float]:
    # Backward-Euler half step with the nonlinearity frozen at phi0:
    # (I - dt/2*G*L) phi_half = phi0 + dt/2*G F'(phi0).  Second-order accurate
    # as a midpoint predictor, which is all the first CN step needs.
    fprime = _dealias(ScalarField2D(phi0.grid, _nonlinear_deriv(phi0, model)))
    rhs = phi0 + (0.5 * cfg.dt) * _apply_g(fprime, model)
    phi_half = solve_implicit(rhs, 0.5 * cfg.dt, 1.0, model.g_symbol, model.l_symbol)
    return phi_half, nonlinear_energy(phi_half, model) + c


def startup_half_step(
    phi0: ScalarField2D, model: ModelSpec, cfg: SchemeConfig
) -> tuple[ScalarField2D, float]:
    """Midpoint predictor for the first Crank-Nicolson step.

    Returns (phi_half, eta_half) with eta_half = E1(phi_half) + C; field-based
    schemes recompute their own auxiliary from phi_half pointwise.
    """
    return _startup(phi0, model, cfg, resolve_c(phi0, model, cfg))


def _cn_midpoint(
    state: StepState, model: ModelSpec, cfg: SchemeConfig
) -> tuple[ScalarField2D, Optional[ScalarField2D]]:
    """Evaluation field phi_tilde for order 2: extrapolation, or the startup
    half step when no history exists yet.  Returns (phi_tilde, phi_half),
    phi_half being non-None only on the startup path."""
    if state.n == 0:
        phi_half, _ = _startup(state.phi, model, cfg, state.c)
        return phi_half, phi_half
    return _extrapolate_phi(state), None


def _advance(
    state: StepState,
    phi_new: ScalarField2D,
    aux_new: AuxVariable,
    cfg: SchemeConfig,
    chi: ScalarField2D,
) -> StepState:
    n = state.n + 1
    return StepState(
        phi=phi_new,
        aux=aux_new,
        n=n,
        t=n * cfg.dt,
        c=state.c,
        phi_prev=state.phi,
        aux_prev=state.aux,
        chi_cache=CouplingTerm(chi, _aux_kind_label(cfg.kind)),
    )


# ---------------------------------------------------------------------------
# 3S-SAV: scalar eta, explicit coupling, one solve per step.
# ---------------------------------------------------------------------------


def step_3ssav(state: StepState, model: ModelSpec, cfg: SchemeConfig) -> StepState:
    """One step of the step-by-step scalar-auxiliary scheme.

    Order 1:  chi = eta^n/(E1(phi^n)+C) * F'(phi^n);
              (I - dt*G*L) phi^{n+1} = phi^n + dt*G chi;
              eta^{n+1} = eta^n + (chi, phi^{n+1} - phi^n).
    Order 2:  same with chi built at the extrapolated midpoint
              (3/2 phi^n - 1/2 phi^{n-1}, 3/2 eta^n - 1/2 eta^{n-1}) and a
              Crank-Nicolson solve; the first step takes its midpoint from
              the startup half step.
    """
    if not isinstance(state.aux, ScalarEta):
        raise UsageError("step_3ssav requires a ScalarEta auxiliary")
    dt = cfg.dt
    eta = state.aux.eta
    if cfg.order == 1:
        phi_e, eta_e = state.phi, eta
    else:
        phi_e, phi_half = _cn_midpoint(state, model, cfg)
        if phi_half is not None:
            eta_e = nonlinear_energy(phi_half, model) + state.c
        else:
            if not isinstance(state.aux_prev, ScalarEta):
                raise UsageError("order-2 stepping with n >= 1 requires aux_prev")
            eta_e = 1.5 * eta - 0.5 * state.aux_prev.eta

    den = nonlinear_energy(phi_e, model) + state.c
    if abs(den) < cfg.guard:
        raise AuxiliaryDegeneracyError(
            f"denominator E1+C = {den:.3e} below guard {cfg.guard} at step "
            f"n={state.n}"
        )
    chi = _dealias(
        ScalarField2D(phi_e.grid, (eta_e / den) * _nonlinear_deriv(phi_e, model))
    )

    if cfg.order == 1:
        rhs = state.phi + dt * _apply_g(chi, model)
        phi_new = solve_implicit(rhs, dt, 1.0, model.g_symbol, model.l_symbol)
    else:
        rhs = state.phi + (0.5 * dt) * _apply_gl(state.phi, model) + dt * _apply_g(
            chi, model
        )
        phi_new = solve_implicit(rhs, dt, 0.5, model.g_symbol, model.l_symbol)

    eta_new = eta + inner_product(chi, phi_new - state.phi)
    return _advance(state, phi_new, ScalarEta(eta_new), cfg, chi)


# ---------------------------------------------------------------------------
# 3S-IEQ: pointwise q, explicit coupling, one solve per step.
# ---------------------------------------------------------------------------


def _pointwise_den(
    phi_e: ScalarField2D, model: ModelSpec, c: float, guard: float, n: int
) -> np.ndarray:
    den = model.potential.f(phi_e.values) + c
    amin = np.abs(den).min()
    if amin < guard:
        i, j = np.unravel_index(int(np.argmin(np.abs(den))), den.shape)
        raise AuxiliaryDegeneracyError(
            f"pointwise denominator F+C = {den[i, j]:.3e} below guard {guard} "
            f"at grid point ({i}, {j}), step n={n}"
        )
    return den


def step_3sieq(state: StepState, model: ModelSpec, cfg: SchemeConfig) -> StepState:
    """One step of the step-by-step pointwise-auxiliary scheme.

    Identical skeleton to step_3ssav with field-valued q:
    chi = q_e/(F(phi_e)+C) * F'(phi_e) pointwise, one constant-coefficient
    solve for phi, then q^{n+1} = q^n + chi*(phi^{n+1} - phi^n) pointwise.
    """
    if not isinstance(state.aux, FieldQ):
        raise UsageError("step_3sieq requires a FieldQ auxiliary")
    dt = cfg.dt
    q = state.aux.q
    if cfg.order == 1:
        phi_e = state.phi
        q_e = q.values
    else:
        phi_e, phi_half = _cn_midpoint(state, model, cfg)
        if phi_half is not None:
            q_e = model.potential.f(phi_half.values) + state.c
        else:
            if not isinstance(state.aux_prev, FieldQ):
                raise UsageError("order-2 stepping with n >= 1 requires aux_prev")
            q_e = 1.5 * q.values - 0.5 * state.aux_prev.q.values

    den = _pointwise_den(phi_e, model, state.c, cfg.guard, state.n)
    chi = _dealias(
        ScalarField2D(phi_e.grid, (q_e / den) * _nonlinear_deriv(phi_e, model))
    )

    if cfg.order == 1:
        rhs = state.phi + dt * _apply_g(chi, model)
        phi_new = solve_implicit(rhs, dt, 1.0, model.g_symbol, model.l_symbol)
    else:
        rhs = state.phi + (0.5 * dt) * _apply_gl(state.phi, model) + dt * _apply_g(
            chi, model
        )
        phi_new = solve_implicit(rhs, dt, 0.5, model.g_symbol, model.l_symbol)

    q_new = ScalarField2D(
        q.grid, q.values + chi.values * (phi_new.values - state.phi.values)
    )
    return _advance(state, phi_new, FieldQ(q_new), cfg, chi)


# ---------------------------------------------------------------------------
# SAV baseline: scalar r, implicit coupling removed by scalar elimination.
# ---------------------------------------------------------------------------


def _sav_b(phi_e: ScalarField2D, model: ModelSpec, c: float, kind: str) -> ScalarField2D:
    rad = nonlinear_energy(phi_e, model) + c
    if rad <= 0:
        raise ConfigurationError(
            f"E1 + C = {rad:.6e} is not positive; the square root in scheme "
            f"'{kind}' needs a larger C"
        )
    return _dealias(
        ScalarField2D(
            phi_e.grid, _nonlinear_deriv(phi_e, model) / math.sqrt(rad)
        )
    )


def step_sav(state: StepState, model: ModelSpec, cfg: SchemeConfig) -> StepState:
    """One step of the classical scalar-auxiliary-variable scheme.

    The coupled (phi, r) system is linear; r^{n+1} is eliminated through the
    inner product (b, phi^{n+1}), leaving exactly two constant-coefficient
    solves.  The computed pair satisfies both original equations to round-off.
    """
    if not isinstance(state.aux, ScalarR):
        raise UsageError("step_sav requires a ScalarR auxiliary")
    dt = cfg.dt
    r = state.aux.r
    phi = state.phi

    if cfg.order == 1:
        b = _sav_b(phi, model, state.c, cfg.kind)
        gb = _apply_g(b, model)
        u = solve_implicit(phi, dt, 1.0, model.g_symbol, model.l_symbol)
        v = solve_implicit(gb, dt, 1.0, model.g_symbol, model.l_symbol)
        bv = inner_product(b, v)
        pivot = 1.0 - 0.5 * dt * bv
        if abs(pivot) < cfg.guard:
            raise AuxiliaryDegeneracyError(
                f"scalar elimination pivot {pivot:.3e} below guard at step {state.n}"
            )
        r_new = (r + 0.5 * inner_product(b, u - phi)) / pivot
        phi_new = u + (dt * r_new) * v
        chi = ScalarField2D(b.grid, r_new * b.values)
    else:
        phi_e, _ = _cn_midpoint(state, model, cfg)
        b = _sav_b(phi_e, model, state.c, cfg.kind)
        gb = _apply_g(b, model)
        w = solve_implicit(
            phi + (0.5 * dt) * _apply_gl(phi, model),
            dt,
            0.5,
            model.g_symbol,
            model.l_symbol,
        )
        v = solve_implicit(gb, dt, 0.5, model.g_symbol, model.l_symbol)
        bv = inner_product(b, v)
        pivot = 1.0 - 0.25 * dt * bv
        if abs(pivot) < cfg.guard:
            raise AuxiliaryDegeneracyError(
                f"scalar elimination pivot {pivot:.3e} below guard at step {state.n}"
            )
        dr = (0.5 * inner_product(b, w - phi) + 0.5 * dt * r * bv) / pivot
        r_new = r + dr
        phi_new = w + (0.5 * dt * (r + r_new)) * v
        chi = ScalarField2D(b.grid, 0.5 * (r + r_new) * b.values)

    return _advance(state, phi_new, ScalarR(r_new), cfg, chi)


# ---------------------------------------------------------------------------
# IEQ baseline: pointwise q, variable-coefficient solve via GMRES.
# ---------------------------------------------------------------------------


def _ieq_b(phi_e: ScalarField2D, model: ModelSpec, c: float) -> np.ndarray:
    rad = model.potential.f(phi_e.values) + c
    if rad.min() <= 0:
        i, j = np.unravel_index(int(np.argmin(rad)), rad.shape)
        raise ConfigurationError(
            f"F + C = {rad.min():.6e} at grid point ({i}, {j}) is not positive; "
            "the square root in scheme 'ieq' needs a larger C"
        )
    return _nonlinear_deriv(phi_e, model) / np.sqrt(rad)


def _ieq_solve(
    phi: ScalarField2D,
    rhs: np.ndarray,
    b2: np.ndarray,
    coef: float,
    theta: float,
    model: ModelSpec,
    cfg: SchemeConfig,
) -> np.ndarray:
    """Solve (I - theta*dt*G*L - coef*G*b2) x = rhs with preconditioned GMRES."""
    grid = phi.grid
    shape = grid.shape
    n = phi.values.size
    g_tab = model.g_symbol.table(grid)
    gl_tab = g_tab * model.l_symbol.table(grid)
    dt = cfg.dt

    def matvec(x_flat):
        x = x_flat.reshape(shape)
        x_hat = _fft.rfft2(x)
        lin = _fft.irfft2(gl_tab * x_hat, s=shape)
        mixed = _fft.irfft2(g_tab * _fft.rfft2(b2 * x), s=shape)
        return (x - theta * dt * lin - coef * mixed).ravel()

    def precond(x_flat):
        f = ScalarField2D(grid, x_flat.reshape(shape))
        return solve_implicit(f, dt, theta, model.g_symbol, model.l_symbol).values.ravel()

    op = LinearOperator((n, n), matvec=matvec, dtype=float)
    pre = LinearOperator((n, n), matvec=precond, dtype=float)
    restart = min(30, n)
    maxiter = max(1, -(-cfg.gmres_maxiter // restart))
    kwargs = dict(
        x0=phi.values.ravel(),
        M=pre,
        atol=0.0,
        restart=restart,
        maxiter=maxiter,
    )
    try:
        x, info = gmres(op, rhs.ravel(), rtol=cfg.gmres_tol, **kwargs)
    except TypeError:  # older scipy spells the relative tolerance 'tol'
        x, info = gmres(op, rhs.ravel(), tol=cfg.gmres_tol, **kwargs)
    if info != 0:
        res = np.linalg.norm(matvec(x) - rhs.ravel())
        scale = np.linalg.norm(rhs.ravel()) or 1.0
        raise SolverDivergenceError(
            f"variable-coefficient solve did not converge within "
            f"{cfg.gmres_maxiter} iterations (info={info}); final relative "
            f"residual {res / scale:.3e}"
        )
    return x.reshape(shape)


def step_ieq(state: StepState, model: ModelSpec, cfg: SchemeConfig) -> StepState:
    """One step of the classical invariant-energy-quadratization scheme.

    Eliminating q^{n+1} = q^n + b/2*(phi^{n+1} - phi^n) pointwise leaves a
    variable-coefficient linear operator on phi^{n+1} (the b^2 term varies in
    space), solved iteratively with the constant-coefficient inverse as
    preconditioner to a relative residual of cfg.gmres_tol.
    """
    if not isinstance(state.aux, FieldQ):
        raise UsageError("step_ieq requires a FieldQ auxiliary")
    dt = cfg.dt
    phi = state.phi
    q = state.aux.q

    if cfg.order == 1:
        b = _ieq_b(phi, model, state.c)
        theta, coef = 1.0, 0.5 * dt
        base = phi.values
    else:
        phi_e, _ = _cn_midpoint(state, model, cfg)
        b = _ieq_b(phi_e, model, state.c)
        theta, coef = 0.5, 0.25 * dt
        base = (phi + (0.5 * dt) * _apply_gl(phi, model)).values

    b_field = _dealias(ScalarField2D(phi.grid, b))
    b = b_field.values
    b2 = b * b
    bq = ScalarField2D(phi.grid, b * q.values)
    b2phi = ScalarField2D(phi.grid, b2 * phi.values)
    rhs = base + dt * _apply_g(bq, model).values - coef * _apply_g(b2phi, model).values

    phi_new_vals = _ieq_solve(phi, rhs, b2, coef, theta, model, cfg)
    phi_new = ScalarField2D(phi.grid, phi_new_vals)
    q_new = ScalarField2D(
        q.grid, q.values + 0.5 * b * (phi_new.values - phi.values)
    )
    chi = ScalarField2D(phi.grid, b * q_new.values)
    return _advance(state, phi_new, FieldQ(q_new), cfg, chi)


# ---------------------------------------------------------------------------
# Diagnostic square-root variant of 3S-SAV.
# ---------------------------------------------------------------------------


def step_3ssav_sqrt(state: StepState, model: ModelSpec, cfg: SchemeConfig) -> StepState:
    """Backward-Euler step advancing r = sqrt(E1 + C) directly.

    chi = r^n/sqrt(E1(phi^n)+C) * F'(phi^n); after the phi solve the update
    (r^{n+1})^2 = (r^n)^2 + (chi, phi^{n+1}-phi^n) may have a negative right
    side for large steps; that raises RadicandNegativeError.  With a positive
    radicand this step agrees with order-1 step_3ssav started from eta = r^2.
    """
    if not isinstance(state.aux, ScalarR):
        raise UsageError("step_3ssav_sqrt requires a ScalarR auxiliary")
    dt = cfg.dt
    r = state.aux.r
    den = nonlinear_energy(state.phi, model) + state.c
    if den <= 0:
        raise RadicandNegativeError(
            f"radicand E1(phi)+C = {den:.6e} is not positive at step n={state.n}"
        )
    chi = _dealias(
        ScalarField2D(
            state.phi.grid,
            (r / math.sqrt(den)) * _nonlinear_deriv(state.phi, model),
        )
    )
    rhs = state.phi + dt * _apply_g(chi, model)
    phi_new = solve_implicit(rhs, dt, 1.0, model.g_symbol, model.l_symbol)
    rad = r * r + inner_product(chi, phi_new - state.phi)
    if rad < 0:
        raise RadicandNegativeError(
            f"radicand r^2 + (chi, dphi) = {rad:.6e} is negative at step "
            f"n={state.n} with dt={dt}; the square-root update blew up "
            "(shrink dt or use the 3s-sav scheme)"
        )
    return _advance(state, phi_new, ScalarR(math.sqrt(rad)), cfg, chi)


_STEPPERS: dict[str, Callable[[StepState, ModelSpec, SchemeConfig], StepState]] = {
    "sav": step_sav,
    "ieq": step_ieq,
    "3s-sav": step_3ssav,
    "3s-ieq": step_3sieq,
    "3s-sav-sqrt": step_3ssav_sqrt,
}


def step(state: StepState, model: ModelSpec, cfg: SchemeConfig) -> StepState:
    """Advance one step with the scheme selected by cfg.kind."""
    return _STEPPERS[cfg.kind](state, model, cfg)


def modified_energy(state: StepState, model: ModelSpec, cfg: SchemeConfig) -> float:
    """The scheme's discrete Lyapunov functional at the current state.

    1/2*(phi, L phi) plus eta (3s-sav), r^2 (sav and the sqrt variant),
    integral of q (3s-ieq), or integral of q^2 (ieq).  Non-increasing in n
    for every dt.
    """
    e_lin = 0.5 * inner_product(state.phi, apply_operator(state.phi, model.l_symbol))
    aux = state.aux
    if isinstance(aux, ScalarEta):
        return e_lin + aux.eta
    if isinstance(aux, ScalarR):
        return e_lin + aux.r * aux.r
    if cfg.kind == "ieq":
        return e_lin + inner_product(aux.q, aux.q)
    return e_lin + integrate(aux.q)


def aux_scalar(state: StepState) -> float:
    """Scalar summary of the auxiliary variable (eta, r, or integral of q)."""
    aux = state.aux
    if isinstance(aux, ScalarEta):
        return aux.eta
    if isinstance(aux, ScalarR):
        return aux.r
    return integrate(aux.q)
