"""Ordering certificates and energy/power monotonicity comparisons.

A pointwise certificate establishes sigma_1(x, E) <= sigma_2(x, E) region
by region on a field grid, ranking the structural extremes as
PEI <= finite <= PEC.  For certified pairs the minimized Dirichlet energy
and the averaged boundary power are ordered the same way for every
zero-mean datum; the comparisons here evaluate both sides and report
per-datum margins with tolerances tied to solver and quadrature accuracy.

Pairs that mix structural and finite regimes (or the two growth branches)
are certified with a ``beyond stated hypotheses`` note: the ordering still
holds discretely by the admissible-state argument, but the regimes differ.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constitutive import MaterialMap, default_e_grid
from .dtn import average_dtn_power
from .mesh import Mesh
from .solver import BoundaryDatum, SolveOptions, solve


def _regime(model) -> str:
    if model.is_structural:
        return model.kind  # "pec" or "pei"
    p = model.effective_p
    if p is None:
        return "tabulated"
    return "finite-p>=2" if p >= 2.0 else "finite-p<2"


_RANK_LO = {"pei": 0}
_RANK_HI = {"pec": 2}


@dataclass(frozen=True)
class PointwiseCertificate:
    """Result of the per-region sigma ordering check."""

    ok: bool
    witness_label: int | None
    witness_e: float | None
    notes: tuple[str, ...]

    def __bool__(self) -> bool:
        return self.ok


def pointwise_leq(lo: MaterialMap, hi: MaterialMap,
                  grid: np.ndarray | None = None,
                  rtol: float = 1e-12) -> PointwiseCertificate:
    """Certify sigma_lo(x, E) <= sigma_hi(x, E) on a shared field grid.

    Structural markers are ranked PEI <= finite <= PEC; finite laws are
    compared by their ideal (unfloored) conductivities at every grid
    point.  Returns the first offending (label, E) as witness.
    """
    labels = sorted(set(lo.models) | set(hi.models))
    notes: list[str] = []
    for lab in labels:
        a = lo.model_for(lab)
        b = hi.model_for(lab)
        ra, rb = _regime(a), _regime(b)
        if ra != rb:
            notes.append(f"label {lab}: {ra} vs {rb} "
                         f"(beyond stated hypotheses)")
        if ra == "pei" or rb == "pec":
            continue  # ranked below / above everything
        if ra == "pec":
            if rb == "pec":
                continue
            return PointwiseCertificate(False, lab, None, tuple(notes))
        if rb == "pei":
            return PointwiseCertificate(False, lab, None, tuple(notes))
        g = grid
        if g is None:
            scale = getattr(a, "e0", None) or getattr(b, "e0", None) or 1.0
            g = default_e_grid(scale)
        sa = np.asarray(a.sigma_raw(g), dtype=float)
        sb = np.asarray(b.sigma_raw(g), dtype=float)
        bad = sa > sb * (1.0 + rtol)
        if np.any(bad):
            k = int(np.nonzero(bad)[0][0])
            return PointwiseCertificate(False, lab, float(np.asarray(g)[k]),
                                        tuple(notes))
    return PointwiseCertificate(True, None, None, tuple(notes))


@dataclass(frozen=True)
class ComparisonRow:
    datum: str
    value_lo: float
    value_hi: float
    delta: float
    tolerance: float
    violated: bool


@dataclass(frozen=True)
class MonotonicityReport:
    """Per-datum ordered comparison between two material maps."""

    kind: str  # "energy" or "avg_power"
    certificate: PointwiseCertificate
    rows: tuple[ComparisonRow, ...]

    @property
    def violations(self) -> tuple[ComparisonRow, ...]:
        return tuple(r for r in self.rows if r.violated)

    @property
    def ok(self) -> bool:
        return self.certificate.ok and not self.violations


def energy_compare(mesh: Mesh, lo: MaterialMap, hi: MaterialMap,
                   data: Sequence[BoundaryDatum],
                   opts: SolveOptions = SolveOptions(),
                   grid: np.ndarray | None = None,
                   tol_rel: float = 1e-8) -> MonotonicityReport:
    """Dirichlet energies of a certified pair across a datum family.

    ``delta = E_hi - E_lo`` must be >= -tol with
    tol = tol_rel * max(|E_hi|, |E_lo|); each row carries its margin.
    """
    cert = pointwise_leq(lo, hi, grid)
    rows = []
    for datum in data:
        e_lo = solve(mesh, lo, datum, opts).info.energy
        e_hi = solve(mesh, hi, datum, opts).info.energy
        tol = tol_rel * max(abs(e_lo), abs(e_hi), 1e-300)
        delta = e_hi - e_lo
        rows.append(ComparisonRow(datum.name, e_lo, e_hi, delta, tol,
                                  bool(cert.ok and delta < -tol)))
    return MonotonicityReport("energy", cert, tuple(rows))


def avg_dtn_compare(mesh: Mesh, lo: MaterialMap, hi: MaterialMap,
                    data: Sequence[BoundaryDatum], quad_order: int = 16,
                    opts: SolveOptions = SolveOptions(),
                    grid: np.ndarray | None = None,
                    tol_rel: float = 1e-8) -> MonotonicityReport:
    """Averaged boundary powers of a certified pair across a datum family.

    The per-row tolerance widens with the reported transfer residuals:
    tol = max(tol_rel, 3 * (res_lo + res_hi)) * scale, so quadrature error
    on nearly singular alpha-integrands is never misread as a violation.
    """
    cert = pointwise_leq(lo, hi, grid)
    rows = []
    for datum in data:
        rep_lo = average_dtn_power(mesh, lo, datum, quad_order, opts)
        rep_hi = average_dtn_power(mesh, hi, datum, quad_order, opts)
        scale = max(abs(rep_lo.avg_power), abs(rep_hi.avg_power), 1e-300)
        tol = max(tol_rel, 3.0 * (rep_lo.transfer_residual
                                  + rep_hi.transfer_residual)) * scale
        delta = rep_hi.avg_power - rep_lo.avg_power
        rows.append(ComparisonRow(datum.name, rep_lo.avg_power,
                                  rep_hi.avg_power, delta, tol,
                                  bool(cert.ok and delta < -tol)))
    return MonotonicityReport("avg_power", cert, tuple(rows))


@dataclass(frozen=True)
class LadderReport:
    """All ordered pair comparisons along a material chain."""

    names: tuple[str, ...]
    pair_reports: tuple[tuple[int, int, MonotonicityReport], ...]

    @property
    def ok(self) -> bool:
        return all(rep.ok for _, _, rep in self.pair_reports)

    @property
    def n_certified_pairs(self) -> int:
        return sum(1 for _, _, rep in self.pair_reports
                   if rep.certificate.ok)


def ladder_suite(mesh: Mesh, chain: Sequence[tuple[str, MaterialMap]],
                 data: Sequence[BoundaryDatum], quad_order: int = 8,
                 opts: SolveOptions = SolveOptions(),
                 grid: np.ndarray | None = None,
                 tol_rel: float = 1e-8) -> LadderReport:
    """Averaged-power monotonicity along an increasing material chain.

    Every map's powers are computed once per datum and all ordered pairs
    (i < j) are compared, so a chain of length 5 yields 10 certified
    comparisons per datum.
    """
    names = tuple(name for name, _ in chain)
    reports = {}
    for name, mats in chain:
        reports[name] = {d.name: average_dtn_power(mesh, mats, d,
                                                   quad_order, opts)
                         for d in data}
    pair_reports = []
    for i in range(len(chain)):
        for j in range(i + 1, len(chain)):
            nm_lo, m_lo = chain[i]
            nm_hi, m_hi = chain[j]
            cert = pointwise_leq(m_lo, m_hi, grid)
            rows = []
            for d in data:
                rl, rh = reports[nm_lo][d.name], reports[nm_hi][d.name]
                scale = max(abs(rl.avg_power), abs(rh.avg_power), 1e-300)
                tol = max(tol_rel, 3.0 * (rl.transfer_residual
                                          + rh.transfer_residual)) * scale
                delta = rh.avg_power - rl.avg_power
                rows.append(ComparisonRow(d.name, rl.avg_power, rh.avg_power,
                                          delta, tol,
                                          bool(cert.ok and delta < -tol)))
            pair_reports.append((i, j, MonotonicityReport("avg_power", cert,
                                                          tuple(rows))))
    return LadderReport(names, tuple(pair_reports))
