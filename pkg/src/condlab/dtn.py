"""Boundary power pairings and the averaged power functional.

The Dirichlet-to-current map sends a zero-mean trace f to the boundary
current functional of the solved state u^f.  Its pairing with a trace phi
is evaluated through the assembled energy gradient:

    <Lambda(f), phi> = sum_{boundary nodes b} phi_b * r_b(u^f)

which equals the volumetric form sum_T area sigma grad u . grad Phi for
every admissible discrete lift Phi of phi (the residual vanishes at free
unknowns, and sums to zero over each PEC component).  At the discrete
level this pairing is the exact derivative of the minimized energy with
respect to the trace, so the averaged pairing

    avg_power(f) = integral_0^1 <Lambda(alpha f), f> d alpha

reproduces the Dirichlet energy up to quadrature error in alpha; the
mismatch is reported as ``transfer_residual``.  Gauss-Legendre nodes on
(0, 1) are solved in ascending order, each warm-started from the previous
solution scaled by the node ratio.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constitutive import MaterialMap
from .mesh import Mesh
from .solver import (BoundaryDatum, PotentialField, SolveOptions, _DofMap,
                     _residual_nodal, harmonic_initial_guess, solve)


def dtn_pairing(mesh: Mesh, materials: MaterialMap, fld: PotentialField,
                phi: BoundaryDatum) -> float:
    """Pairing of the boundary current of a solved state with a trace."""
    dof = _DofMap.build(mesh, materials)
    r = _residual_nodal(mesh, materials, dof, fld.u)
    return float(phi.values @ r[phi.node_ids])


def dtn_pairing_via_lift(mesh: Mesh, materials: MaterialMap,
                         fld: PotentialField, phi: BoundaryDatum,
                         lift: np.ndarray | None = None) -> float:
    """Volumetric evaluation sum_T area sigma grad u . grad Phi.

    ``lift`` is a full nodal extension of phi; defaults to the discrete
    harmonic one.  Any admissible lift (exact trace, constant on each PEC
    component) gives the same value within solver tolerance.
    """
    dof = _DofMap.build(mesh, materials)
    if lift is None:
        u_fix = np.zeros(mesh.n_nodes)
        u_fix[phi.node_ids] = phi.values
        x = harmonic_initial_guess(mesh, dof, u_fix)
        lift = u_fix + dof.prolong @ x
    r = _residual_nodal(mesh, materials, dof, fld.u)
    keep = np.isfinite(lift)
    return float(lift[keep] @ r[keep])


def ohmic_power(mesh: Mesh, materials: MaterialMap,
                fld: PotentialField) -> float:
    """<Lambda(f), f> for the state's own datum."""
    return dtn_pairing(mesh, materials, fld, fld.datum)


def gauss_on_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights transplanted to (0, 1)."""
    if order < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _alpha_sweep(mesh: Mesh, materials: MaterialMap, datum: BoundaryDatum,
                 alphas: np.ndarray, opts: SolveOptions
                 ) -> list[PotentialField]:
    """Solve the datum scaled by each alpha (ascending), warm-starting each
    node from the previous solution scaled by the node ratio."""
    fields: list[PotentialField] = []
    prev_alpha = None
    prev_u = None
    for alpha in alphas:
        guess = None
        if prev_u is not None and prev_alpha not in (None, 0.0):
            guess = prev_u * (alpha / prev_alpha)
        fld = solve(mesh, materials, datum.scaled(float(alpha)), opts,
                    initial_guess=guess)
        fields.append(fld)
        prev_alpha, prev_u = float(alpha), fld.u
    return fields


@dataclass(frozen=True)
class PowerReport:
    """Boundary power summary for one datum and material map."""

    datum: str
    power: float
    avg_power: float
    energy: float
    transfer_residual: float
    quad_order: int
    nodes: tuple[tuple[float, float, float], ...]  # (alpha, weight, pairing)


def average_dtn_power(mesh: Mesh, materials: MaterialMap,
                      datum: BoundaryDatum, quad_order: int = 16,
                      opts: SolveOptions = SolveOptions()) -> PowerReport:
    """Averaged boundary power of one datum, with the transfer mismatch.

    Solves at each Gauss-Legendre alpha node plus alpha = 1; reports
    avg_power = sum_k w_k <Lambda(alpha_k f), f>, the full power
    <Lambda(f), f>, the Dirichlet energy of u^f, and
    |avg_power - energy| / max(|energy|, tiny) as ``transfer_residual``.
    """
    alphas, weights = gauss_on_unit(quad_order)
    fields = _alpha_sweep(mesh, materials, datum,
                          np.concatenate([alphas, [1.0]]), opts)
    full = fields[-1]
    pairings = np.array([dtn_pairing(mesh, materials, f, datum)
                         for f in fields[:-1]])
    avg = float(weights @ pairings)
    power = dtn_pairing(mesh, materials, full, datum)
    energy = full.info.energy
    residual = abs(avg - energy) / max(abs(energy), 1e-300)
    nodes = tuple((float(a), float(w), float(pr))
                  for a, w, pr in zip(alphas, weights, pairings))
    return PowerReport(datum.name, float(power), avg, float(energy),
                       float(residual), quad_order, nodes)


def average_dtn_pairing(mesh: Mesh, materials: MaterialMap,
                        datum: BoundaryDatum, phi: BoundaryDatum,
                        quad_order: int = 16,
                        opts: SolveOptions = SolveOptions()) -> float:
    """Averaged cross pairing integral_0^1 <Lambda(alpha f), phi> d alpha."""
    alphas, weights = gauss_on_unit(quad_order)
    fields = _alpha_sweep(mesh, materials, datum, alphas, opts)
    pairings = np.array([dtn_pairing(mesh, materials, f, phi)
                         for f in fields])
    return float(weights @ pairings)


@dataclass(frozen=True)
class GateauxRow:
    eps: float
    quotient: float
    residual: float


@dataclass(frozen=True)
class GateauxReport:
    """Finite-difference check of d/d eps E(u^(f + eps phi)) at eps = 0
    against the boundary pairing <Lambda(f), phi>."""

    pairing: float
    scale: float
    rows: tuple[GateauxRow, ...]

    @property
    def final_residual(self) -> float:
        return self.rows[-1].residual


def gateaux_check(mesh: Mesh, materials: MaterialMap, datum: BoundaryDatum,
                  phi: BoundaryDatum, eps_list: Sequence[float],
                  opts: SolveOptions = SolveOptions()) -> GateauxReport:
    """One-sided difference quotients of the energy along a trace direction.

    Rows are ordered by decreasing eps; each residual is
    |(E(f + eps phi) - E(f))/eps - <Lambda(f), phi>|.  For smooth laws the
    residual decreases ~linearly in eps until the solver floor.
    """
    base = solve(mesh, materials, datum, opts)
    pairing = dtn_pairing(mesh, materials, base, phi)
    rows = []
    quotients = []
    for eps in sorted(eps_list, reverse=True):
        fld = solve(mesh, materials, datum.plus(phi, eps), opts,
                    initial_guess=base.u)
        quotient = (fld.info.energy - base.info.energy) / eps
        quotients.append(abs(quotient))
        rows.append(GateauxRow(float(eps), float(quotient),
                               float(abs(quotient - pairing))))
    # degenerate pairings (symmetry zeros) fall back to the quotient size
    scale = max(abs(pairing), max(quotients, default=0.0), 1e-300)
    return GateauxReport(float(pairing), float(scale), tuple(rows))
