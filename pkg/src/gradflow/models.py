"""Concrete gradient-flow models and energy evaluation.

A model is data: the symbols of the linear energy operator L (nonnegative)
and the dissipation operator G (nonpositive, mobility folded in), a pointwise
potential F with derivative F', and the physical parameters.  The free energy
is E(phi) = 1/2*(phi, L phi) + integral of F(phi).

Registered models:

* ``allen-cahn``            g = -M,        l = eps^2*|k|^2
* ``cahn-hilliard``         g = -M*|k|^2,  l = eps^2*|k|^2
* ``cahn-hilliard-stabilized``  adds the shift beta to l and widens the well:
  F = 1/4*(v^2-1-beta)^2, so the shifted linear part stays nonnegative.
* ``pfc``                   g = -M*|k|^2,  l = (1-|k|^2)^2, with the -eps*v
  part of the crystal operator folded into the potential
  (F = 1/4*v^4 - eps/2*v^2) so that l keeps a nonnegative symbol.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, NonFiniteError
from .spectral import (
    OperatorSymbol,
    ScalarField2D,
    apply_operator,
    inner_product,
    integrate,
)

__all__ = [
    "PotentialSpec",
    "ModelSpec",
    "EnergyRecord",
    "MODEL_NAMES",
    "make_model",
    "energy",
    "chemical_potential",
    "nonlinear_energy",
]

MODEL_NAMES = ("allen-cahn", "cahn-hilliard", "cahn-hilliard-stabilized", "pfc")


@dataclass(frozen=True)
class PotentialSpec:
    """Pointwise energy density F and its derivative F'."""

    f: Callable[[np.ndarray], np.ndarray]
    df: Callable[[np.ndarray], np.ndarray]
    label: str


@dataclass(frozen=True)
class ModelSpec:
    """A gradient flow phi_t = G(L phi + F'(phi)) as data."""

    name: str
    l_symbol: OperatorSymbol
    g_symbol: OperatorSymbol
    potential: PotentialSpec
    epsilon: float
    mobility: float
    beta: float = 0.0


@dataclass
class EnergyRecord:
    """Energy bookkeeping for one instant of a run.

    e_total = e_linear + e_nonlinear is the original free energy; e_modified
    is the scheme's Lyapunov functional and is filled in by the stepping
    driver, as is the auxiliary value (eta, r, or the integral of q) and the
    number of implicit solves spent on the step.
    """

    t: float
    e_total: float
    e_linear: float
    e_nonlinear: float
    mass: float
    e_modified: Optional[float] = None
    aux: Optional[float] = None
    solve_count: Optional[int] = None


def _double_well() -> PotentialSpec:
    return PotentialSpec(
        f=lambda v: 0.25 * (v * v - 1.0) ** 2,
        df=lambda v: v * v * v - v,
        label="double-well",
    )


def make_model(
    name: str, epsilon: float, mobility: float = 1.0, beta: float = 0.0
) -> ModelSpec:
    """Build a registered model; unknown names raise ConfigurationError."""
    if epsilon <= 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")
    if mobility <= 0:
        raise ConfigurationError(f"mobility must be positive, got {mobility}")
    if beta < 0:
        raise ConfigurationError(f"beta must be nonnegative, got {beta}")
    eps2 = epsilon * epsilon
    m = mobility
    if name == "allen-cahn":
        l = OperatorSymbol("L[allen-cahn]", lambda kx2, ky2: eps2 * (kx2 + ky2), sign=1)
        g = OperatorSymbol("G[allen-cahn]", lambda kx2, ky2: -m + 0.0 * kx2, sign=-1)
        return ModelSpec(name, l, g, _double_well(), epsilon, mobility, 0.0)
    if name == "cahn-hilliard":
        l = OperatorSymbol(
            "L[cahn-hilliard]", lambda kx2, ky2: eps2 * (kx2 + ky2), sign=1
        )
        g = OperatorSymbol("G[cahn-hilliard]", lambda kx2, ky2: -m * (kx2 + ky2), sign=-1)
        return ModelSpec(name, l, g, _double_well(), epsilon, mobility, 0.0)
    if name == "cahn-hilliard-stabilized":
        if beta == 0.0:
            raise ConfigurationError(
                "cahn-hilliard-stabilized requires a positive beta"
            )
        b = beta
        l = OperatorSymbol(
            "L[cahn-hilliard-stabilized]",
            lambda kx2, ky2: eps2 * (kx2 + ky2) + b,
            sign=1,
        )
        g = OperatorSymbol(
            "G[cahn-hilliard-stabilized]", lambda kx2, ky2: -m * (kx2 + ky2), sign=-1
        )
        pot = PotentialSpec(
            f=lambda v: 0.25 * (v * v - 1.0 - b) ** 2,
            df=lambda v: v * v * v - (1.0 + b) * v,
            label=f"double-well-shifted(beta={beta})",
        )
        return ModelSpec(name, l, g, pot, epsilon, mobility, beta)
    if name == "pfc":
        # Swift-Hohenberg linear part -eps + (1+Lap)^2 has symbol
        # (1-|k|^2)^2 - eps, which dips negative near |k| = 1; keep the
        # nonnegative square in l and move -eps*v into the potential.
        l = OperatorSymbol(
            "L[pfc]", lambda kx2, ky2: (1.0 - (kx2 + ky2)) ** 2, sign=1
        )
        g = OperatorSymbol("G[pfc]", lambda kx2, ky2: -m * (kx2 + ky2), sign=-1)
        e = epsilon
        pot = PotentialSpec(
            f=lambda v: 0.25 * v**4 - 0.5 * e * v * v,
            df=lambda v: v * v * v - e * v,
            label=f"pfc-quartic(eps={epsilon})",
        )
        return ModelSpec(name, l, g, pot, epsilon, mobility, 0.0)
    raise ConfigurationError(
        f"unknown model '{name}'; available: {', '.join(MODEL_NAMES)}"
    )


def nonlinear_energy(phi: ScalarField2D, model: ModelSpec) -> float:
    """E1(phi) = integral of F(phi) over the domain."""
    out = float(np.sum(model.potential.f(phi.values))) * phi.grid.cell_area
    if not np.isfinite(out):
        raise NonFiniteError(f"nonlinear energy of '{model.name}' is non-finite")
    return out


def energy(phi: ScalarField2D, model: ModelSpec, t: float = 0.0) -> EnergyRecord:
    """Original free energy split into linear and nonlinear parts, plus mass."""
    e_lin = 0.5 * inner_product(phi, apply_operator(phi, model.l_symbol))
    e_non = nonlinear_energy(phi, model)
    total = e_lin + e_non
    if not np.isfinite(total):
        raise NonFiniteError(f"energy of '{model.name}' overflowed")
    return EnergyRecord(
        t=t, e_total=total, e_linear=e_lin, e_nonlinear=e_non, mass=integrate(phi)
    )


def chemical_potential(phi: ScalarField2D, model: ModelSpec) -> ScalarField2D:
    """mu = L phi + F'(phi)."""
    lin = apply_operator(phi, model.l_symbol)
    return ScalarField2D(phi.grid, lin.values + model.potential.df(phi.values))
