"""Dirichlet solver for div(sigma(x, |grad u|) grad u) = 0 on P1 meshes.

The discrete problem minimizes the convex energy

    E(u) = sum_T area_T * Q_label(T)(|grad u|_T)

over nodal fields with prescribed boundary trace, with one-point gradient
quadrature (P1 gradients are constant per triangle, so this is exact for
the P1 energy).  Structural regions change the unknown structure instead
of entering the sum:

* PEI triangles are excluded and their interior nodes removed; interface
  nodes stay free, which realizes the natural zero-flux condition.
* PEC triangles are excluded and all nodes of a PEC component collapse to
  one shared unknown; stationarity in that unknown is exactly the zero
  net-interface-flux constraint.

Newton direction from the symmetrized flux linearization, Armijo
backtracking on the energy, conjugate-gradient inner solves with diagonal
preconditioning, and a preconditioned gradient-descent fallback.  Power-law
floors follow a warm-started continuation schedule that shrinks reg_eps
tenfold per stage.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from .constitutive import ConstitutiveError, MaterialMap
from .mesh import BoundaryMass, Mesh, boundary_mass

logger = logging.getLogger(__name__)


class SolveError(Exception):
    """Raised when the energy minimization cannot be completed."""


# ---------------------------------------------------------------------------
# boundary data


@dataclass(frozen=True)
class BoundaryDatum:
    """Zero-mean Dirichlet trace sampled at the mesh boundary nodes."""

    name: str
    node_ids: np.ndarray
    values: np.ndarray

    def scaled(self, alpha: float) -> "BoundaryDatum":
        return BoundaryDatum(self.name, self.node_ids, alpha * self.values)

    def plus(self, other: "BoundaryDatum", eps: float = 1.0,
             name: str | None = None) -> "BoundaryDatum":
        if self.node_ids.shape != other.node_ids.shape or \
                np.any(self.node_ids != other.node_ids):
            raise ValueError("data live on different boundaries")
        return BoundaryDatum(name or f"{self.name}+{eps:g}*{other.name}",
                             self.node_ids, self.values + eps * other.values)

    @property
    def amplitude(self) -> float:
        return float(np.max(np.abs(self.values))) if len(self.values) else 0.0


def project_zero_mean(values: np.ndarray,
                      bmass: BoundaryMass) -> tuple[np.ndarray, float]:
    """Remove the weighted boundary mean; returns (shifted values, mean)."""
    values = np.asarray(values, dtype=float)
    if values.shape != bmass.node_ids.shape:
        raise ValueError("trace values misaligned with boundary nodes")
    mean = float(bmass.weights @ values / bmass.total)
    return values - mean, mean


@dataclass(frozen=True)
class DatumTerm:
    """One additive term of a boundary datum.

    kinds: "linear-x" (a*x), "linear-y" (a*y), "sin" (a*sin(k*theta)),
    "cos" (a*cos(k*theta)), "exp-x2-2y" (a*exp(x^2 + 2*y)), "expr"
    (amplitude times a numpy expression in x, y, r, theta).
    """

    kind: str
    amplitude: float
    k: int = 1
    expr: str | None = None


_EXPR_NAMES = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
               "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "pi": np.pi,
               "atan2": np.arctan2}


def _term_values(term: DatumTerm, xy: np.ndarray) -> np.ndarray:
    x, y = xy[:, 0], xy[:, 1]
    theta = np.arctan2(y, x)
    if term.kind == "linear-x":
        return term.amplitude * x
    if term.kind == "linear-y":
        return term.amplitude * y
    if term.kind == "sin":
        return term.amplitude * np.sin(term.k * theta)
    if term.kind == "cos":
        return term.amplitude * np.cos(term.k * theta)
    if term.kind == "exp-x2-2y":
        return term.amplitude * np.exp(x ** 2 + 2.0 * y)
    if term.kind == "expr":
        if not term.expr:
            raise ValueError("expr term needs an expression string")
        ns = {"x": x, "y": y, "r": np.hypot(x, y), "theta": theta,
              **_EXPR_NAMES}
        out = eval(term.expr, {"__builtins__": {}}, ns)  # noqa: S307
        return term.amplitude * np.broadcast_to(out, x.shape)
    raise ValueError(f"unknown datum term kind {term.kind!r}")


def make_datum(mesh: Mesh, terms: Sequence[DatumTerm], name: str,
               bmass: BoundaryMass | None = None) -> BoundaryDatum:
    """Evaluate terms at the boundary nodes and project to zero mean."""
    bm = bmass if bmass is not None else boundary_mass(mesh)
    xy = mesh.nodes[bm.node_ids]
    raw = np.zeros(len(xy))
    for term in terms:
        raw = raw + _term_values(term, xy)
    values, _ = project_zero_mean(raw, bm)
    return BoundaryDatum(name, bm.node_ids, values)


def datum_family(mesh: Mesh,
                 specs: Sequence[tuple[str, Sequence[DatumTerm]]]
                 ) -> list[BoundaryDatum]:
    """Build a named family of zero-mean data on one mesh."""
    bm = boundary_mass(mesh)
    return [make_datum(mesh, terms, name, bm) for name, terms in specs]


# ---------------------------------------------------------------------------
# unknown structure

_DIRICHLET = -1
_REMOVED = -2


@dataclass
class _DofMap:
    """Free-unknown structure: node -> column, prolongation u = u_fix + P x."""

    free_of_node: np.ndarray
    n_free: int
    prolong: sparse.csr_matrix
    active_tris: np.ndarray
    label_groups: dict[int, np.ndarray]
    label_slots: dict[int, np.ndarray]
    pec_groups: dict[int, np.ndarray]

    @classmethod
    def build(cls, mesh: Mesh, materials: MaterialMap) -> "_DofMap":
        materials.check_covers(mesh.labels)
        kinds = {lab: getattr(materials.model_for(lab), "kind", "")
                 for lab in np.unique(mesh.labels)}
        is_pei = np.array([kinds[l] == "pei" for l in mesh.labels.tolist()])
        is_pec = np.array([kinds[l] == "pec" for l in mesh.labels.tolist()])
        active = ~(is_pei | is_pec)
        active_ids = np.nonzero(active)[0]
        if not len(active_ids):
            raise SolveError("no conducting triangles")

        on_boundary = np.zeros(mesh.n_nodes, dtype=bool)
        on_boundary[mesh.boundary_nodes] = True
        touches_active = np.zeros(mesh.n_nodes, dtype=bool)
        touches_active[np.unique(mesh.triangles[active])] = True
        touches_pec = np.zeros(mesh.n_nodes, dtype=bool)
        touches_pec[np.unique(mesh.triangles[is_pec])] = True

        free_of_node = np.full(mesh.n_nodes, _REMOVED, dtype=np.int64)
        free_of_node[touches_active] = 0  # placeholder, numbered below
        free_of_node[on_boundary] = _DIRICHLET

        pec_groups: dict[int, np.ndarray] = {}
        col = 0
        # one shared column per PEC label
        pec_col_of_node = np.full(mesh.n_nodes, -1, dtype=np.int64)
        for lab in sorted(set(mesh.labels[is_pec].tolist())):
            nodes = np.unique(mesh.triangles[mesh.labels == lab])
            if np.any(on_boundary[nodes]):
                raise SolveError(f"PEC component {lab} touches the domain "
                                 f"boundary")
            pec_groups[lab] = nodes
            pec_col_of_node[nodes] = col
            col += 1
        merged = pec_col_of_node >= 0
        plain_free = (free_of_node == 0) & ~merged
        ids = np.nonzero(plain_free)[0]
        free_of_node[ids] = col + np.arange(len(ids))
        free_of_node[merged] = pec_col_of_node[merged]
        n_free = col + len(ids)

        rows = np.nonzero(free_of_node >= 0)[0]
        prolong = sparse.csr_matrix(
            (np.ones(len(rows)), (rows, free_of_node[rows])),
            shape=(mesh.n_nodes, n_free))

        groups: dict[int, np.ndarray] = {}
        slots: dict[int, np.ndarray] = {}
        for lab in sorted(set(mesh.labels[active].tolist())):
            tri_ids = np.nonzero(active & (mesh.labels == lab))[0]
            groups[lab] = tri_ids
            slots[lab] = np.searchsorted(active_ids, tri_ids)
        return cls(free_of_node, n_free, prolong, active_ids, groups,
                   slots, pec_groups)

    @property
    def removed_nodes(self) -> np.ndarray:
        return np.nonzero(self.free_of_node == _REMOVED)[0]


def _nodal_state(dof: _DofMap, u_fix: np.ndarray, x: np.ndarray) -> np.ndarray:
    u = u_fix + dof.prolong @ x
    u[dof.removed_nodes] = np.nan
    return u


def _grad_norms(mesh: Mesh, dof: _DofMap,
                u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients (per active triangle, in active order) and their norms."""
    tris = mesh.triangles[dof.active_tris]
    g = np.einsum("mij,mj->mi", mesh.grads[dof.active_tris], u[tris])
    return g, np.linalg.norm(g, axis=1)


def _per_tri_eval(mesh: Mesh, materials: MaterialMap, dof: _DofMap,
                  norms: np.ndarray, what: str) -> np.ndarray:
    """Evaluate a law quantity per active triangle (active order)."""
    out = np.empty(len(dof.active_tris))
    for lab, sel in dof.label_slots.items():
        model = materials.model_for(lab)
        out[sel] = getattr(model, what)(norms[sel])
    return out


def _energy_of(mesh: Mesh, materials: MaterialMap, dof: _DofMap,
               u: np.ndarray) -> float:
    _, norms = _grad_norms(mesh, dof, u)
    q = _per_tri_eval(mesh, materials, dof, norms, "energy_density")
    return float(mesh.areas[dof.active_tris] @ q)


def _residual_nodal(mesh: Mesh, materials: MaterialMap, dof: _DofMap,
                    u: np.ndarray) -> np.ndarray:
    """Assembled energy gradient at every node (no boundary projection)."""
    grads, norms = _grad_norms(mesh, dof, u)
    sig = _per_tri_eval(mesh, materials, dof, norms, "sigma")
    w = (mesh.areas[dof.active_tris] * sig)[:, None] * grads
    contrib = np.einsum("mi,mij->mj", w, mesh.grads[dof.active_tris])
    r = np.zeros(mesh.n_nodes)
    np.add.at(r, mesh.triangles[dof.active_tris], contrib)
    return r


def _residual_scale(mesh: Mesh, materials: MaterialMap, dof: _DofMap,
                    u: np.ndarray) -> float:
    """Norm of the cancellation-free residual assembly: the natural flux
    magnitude the gradient tolerance is measured against."""
    grads, norms = _grad_norms(mesh, dof, u)
    sig = _per_tri_eval(mesh, materials, dof, norms, "sigma")
    w = (mesh.areas[dof.active_tris] * sig)[:, None] * grads
    contrib = np.abs(np.einsum("mi,mij->mj", w, mesh.grads[dof.active_tris]))
    r = np.zeros(mesh.n_nodes)
    np.add.at(r, mesh.triangles[dof.active_tris], contrib)
    return float(np.linalg.norm(dof.prolong.T @ r))


def _roundoff_floor(mesh: Mesh, materials: MaterialMap, dof: _DofMap,
                    u: np.ndarray) -> float:
    """Assembly round-off bound on the gradient at the current state.

    Element gradients are differences of nodal values, so each residual
    term carries an absolute float error of order
    eps * sigma * max|u| * |grad phi_i| * max_j|grad phi_j| * area.
    Regularized p<2 laws driven to the field floor make sigma huge while
    the true fields vanish below float granularity; there the assembled
    gradient cannot fall under this bound, and stationarity is declared
    once it is reached.
    """
    _, norms = _grad_norms(mesh, dof, u)
    sig = _per_tri_eval(mesh, materials, dof, norms, "sigma")
    tris = mesh.triangles[dof.active_tris]
    u_mag = np.max(np.abs(u[tris]), axis=1)
    gb = mesh.grads[dof.active_tris]
    gnorm = np.linalg.norm(gb, axis=1)            # per basis function
    gmax = gnorm.max(axis=1)
    w = sig * u_mag * gmax * mesh.areas[dof.active_tris]
    contrib = w[:, None] * gnorm
    r = np.zeros(mesh.n_nodes)
    np.add.at(r, tris, contrib)
    return float(np.finfo(float).eps
                 * np.linalg.norm(dof.prolong.T @ r))


def _hessian(mesh: Mesh, materials: MaterialMap, dof: _DofMap,
             u: np.ndarray) -> sparse.csr_matrix:
    grads, norms = _grad_norms(mesh, dof, u)
    sig = _per_tri_eval(mesh, materials, dof, norms, "sigma")
    dfl = _per_tri_eval(mesh, materials, dof, norms, "dflux")
    safe = np.maximum(norms, 1e-300)
    unit = np.where(norms[:, None] > 0.0, grads / safe[:, None], 0.0)
    # d^2 Q / d(grad u)^2 = sigma * I + (dflux - sigma) * unit unit^T
    h = sig[:, None, None] * np.eye(2)[None, :, :] \
        + (dfl - sig)[:, None, None] * np.einsum("mi,mj->mij", unit, unit)
    gb = mesh.grads[dof.active_tris]
    elem = np.einsum("m,mki,mkl,mlj->mij", mesh.areas[dof.active_tris],
                     gb, h, gb)
    tris = mesh.triangles[dof.active_tris]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    mat = sparse.coo_matrix((elem.ravel(), (rows, cols)),
                            shape=(mesh.n_nodes, mesh.n_nodes))
    return mat.tocsr()


def _unit_stiffness(mesh: Mesh, dof: _DofMap) -> sparse.csr_matrix:
    """P1 stiffness with unit conductivity on the active triangles."""
    gb = mesh.grads[dof.active_tris]
    elem = np.einsum("m,mki,mkj->mij", mesh.areas[dof.active_tris], gb, gb)
    tris = mesh.triangles[dof.active_tris]
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sparse.coo_matrix((elem.ravel(), (rows, cols)),
                             shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()


def harmonic_initial_guess(mesh: Mesh, dof: _DofMap,
                           u_fix: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension (unit conductivity) of the trace,
    respecting the PEC/PEI unknown structure; used as the Newton start."""
    k = _unit_stiffness(mesh, dof)
    p = dof.prolong
    a = (p.T @ k @ p).tocsc()
    b = -p.T @ (k @ u_fix)
    if dof.n_free == 0:
        return np.zeros(0)
    return spsolve(a, b)


# ---------------------------------------------------------------------------
# solve


@dataclass(frozen=True)
class SolveOptions:
    """Newton/continuation controls.

    grad_rtol is relative to the gradient norm at the initial guess of the
    first stage; continuation multiplies every power-law reg_eps by the
    schedule entries in turn (the final entry must be 1).
    """

    grad_rtol: float = 1e-10
    max_iter: int = 150
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    cg_rtol: float = 1e-8
    cg_maxiter: int = 2000
    reg_schedule: tuple[float, ...] = (1e3, 1e2, 1e1, 1.0)
    floor_factor: float = 32.0
    stall_window: int = 8
    collect_log: bool = False


@dataclass
class SolveInfo:
    """``grad_floor`` is nonzero when the iteration stopped at the
    assembly round-off floor instead of the relative tolerance; the
    gradient cannot be driven below roughly machine epsilon times the
    stiffest material scale, so that state is stationary to working
    precision."""

    converged: bool
    n_iter: int
    grad_norm: float
    grad_tol: float
    energy: float
    grad_floor: float = 0.0
    pec_flux_balance: dict[int, float] = field(default_factory=dict)
    log: list[dict] = field(default_factory=list)


@dataclass
class PotentialField:
    """Nodal solution: ``u`` with NaN at removed (PEI-interior) nodes,
    ``valid_mask`` marking carried values, PEC component constants in
    ``info.pec_flux_balance``'s companion ``pec_values``."""

    mesh: Mesh
    u: np.ndarray
    valid_mask: np.ndarray
    datum: BoundaryDatum
    info: SolveInfo
    pec_values: dict[int, float] = field(default_factory=dict)


def _newton_stage(mesh: Mesh, materials: MaterialMap, dof: _DofMap,
                  u_fix: np.ndarray, x: np.ndarray, opts: SolveOptions,
                  tol_holder: dict, stage: int,
                  log: list[dict]) -> tuple[np.ndarray, float, int]:
    p = dof.prolong

    def eval_at(x_try: np.ndarray) -> float:
        return _energy_of(mesh, materials, dof,
                          _nodal_state(dof, u_fix, x_try))

    def line_search(x0: np.ndarray, d: np.ndarray, gd: float,
                    e_base: float) -> float:
        """Backtrack to an Armijo point, then settle at the best sampled
        energy along the ray.  The energy is convex but its second
        derivative jumps at the regularization floor, so the first
        accepted step can overshoot the one-dimensional minimum badly;
        continuing to halve while the energy improves, plus a short
        bracket refinement, repairs that at the cost of a few extra
        energy evaluations."""
        t = 1.0
        t_armijo = 0.0
        e_armijo = e_base
        for _bt in range(opts.max_backtracks):
            e_try = eval_at(x0 + t * d)
            if np.isfinite(e_try) and \
                    e_try <= e_base + opts.armijo_c * t * gd:
                t_armijo, e_armijo = t, e_try
                break
            t *= opts.backtrack
        if t_armijo == 0.0:
            return 0.0
        best_t, best_e = t_armijo, e_armijo
        t = t_armijo * opts.backtrack
        while t > 1e-30:
            e_try = eval_at(x0 + t * d)
            if not (np.isfinite(e_try) and e_try < best_e):
                break
            best_t, best_e = t, e_try
            t *= opts.backtrack
        lo = best_t * opts.backtrack
        hi = min(best_t / opts.backtrack, 1.0)
        for _k in range(10):
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            e1, e2 = eval_at(x0 + m1 * d), eval_at(x0 + m2 * d)
            if np.isfinite(e1) and e1 < best_e:
                best_t, best_e = m1, e1
            if np.isfinite(e2) and e2 < best_e:
                best_t, best_e = m2, e2
            if (np.isfinite(e1) and e1 <= e2) or not np.isfinite(e2):
                hi = m2
            else:
                lo = m1
        return best_t

    n_iter = 0
    e_best = np.inf
    gn_best = np.inf
    x_best = x
    stall = 0
    tol_holder.pop("floored", None)
    for it in range(opts.max_iter):
        u = _nodal_state(dof, u_fix, x)
        r = _residual_nodal(mesh, materials, dof, u)
        g = p.T @ r
        gn = float(np.linalg.norm(g))
        if "tol" not in tol_holder:
            # reference scale fixed once, at the very first iterate
            scale = _residual_scale(mesh, materials, dof, u)
            tol_holder["tol"] = opts.grad_rtol * scale
            tol_holder["scale"] = scale
        if gn <= tol_holder["tol"] or gn == 0.0:
            return x, gn, n_iter
        floor = _roundoff_floor(mesh, materials, dof, u)
        if gn <= opts.floor_factor * floor:
            # gradient indistinguishable from assembly round-off:
            # stationary to working precision
            tol_holder["floored"] = floor
            return x, gn, n_iter
        e_base = _energy_of(mesh, materials, dof, u)
        improved = False
        if not np.isfinite(e_best) or \
                e_base < e_best - 64.0 * np.finfo(float).eps * abs(e_best):
            e_best, x_best, improved = e_base, x, True
        if gn < 0.999 * gn_best:
            gn_best, improved = gn, True
        stall = 0 if improved else stall + 1
        if stall >= opts.stall_window:
            # a full window with neither a representable energy decrease
            # nor gradient progress: the line search is comparing
            # energies below float resolution, so no descent step can be
            # certified by energy.  Gradient norms still can, and the
            # energy is convex, so finish with damped Newton steps
            # accepted on residual decrease alone, then take the best
            # iterate as stationary to working precision.
            u_b = _nodal_state(dof, u_fix, x_best)
            g_b = p.T @ _residual_nodal(mesh, materials, dof, u_b)
            gn_b = float(np.linalg.norm(g_b))
            for _polish in range(opts.stall_window):
                if gn_b <= tol_holder["tol"]:
                    break
                h = (p.T @ _hessian(mesh, materials, dof, u_b) @ p).tocsr()
                inv_diag = 1.0 / np.maximum(h.diagonal(), 1e-300)
                precond = LinearOperator(h.shape,
                                         matvec=lambda v: inv_diag * v)
                d, _info = cg(h, -g_b, rtol=opts.cg_rtol, atol=0.0,
                              maxiter=opts.cg_maxiter, M=precond)
                took = False
                t = 1.0
                for _bt in range(6):
                    x_try = x_best + t * d
                    u_t = _nodal_state(dof, u_fix, x_try)
                    g_t = p.T @ _residual_nodal(mesh, materials, dof, u_t)
                    gn_t = float(np.linalg.norm(g_t))
                    if np.isfinite(gn_t) and gn_t < 0.5 * gn_b:
                        x_best, u_b, g_b = x_try, u_t, g_t
                        gn_b = gn_t
                        n_iter += 1
                        took = True
                        break
                    t *= opts.backtrack
                if not took:
                    break
            if gn_b > tol_holder["tol"]:
                tol_holder["floored"] = gn_b
            return x_best, gn_b, n_iter
        h = (p.T @ _hessian(mesh, materials, dof, u) @ p).tocsr()
        # Jacobi preconditioning: material contrast (structural limits,
        # p<2 laws at small fields) puts many decades on the diagonal
        inv_diag = 1.0 / np.maximum(h.diagonal(), 1e-300)
        precond = LinearOperator(h.shape, matvec=lambda v: inv_diag * v)
        d, _cg_info = cg(h, -g, rtol=opts.cg_rtol, atol=0.0,
                         maxiter=opts.cg_maxiter, M=precond)
        gd = float(g @ d)
        fell_back = False
        if not np.isfinite(gd) or gd >= 0.0:
            d = -g * inv_diag
            gd = float(g @ d)
            fell_back = True
        t = line_search(x, d, gd, e_base)
        if t == 0.0 and not fell_back:
            d = -g * inv_diag
            gd = float(g @ d)
            fell_back = True
            t = line_search(x, d, gd, e_base)
        if t == 0.0:
            raise SolveError(f"line search stalled at stage {stage}, "
                             f"iteration {it} (grad norm {gn:.3e}, "
                             f"round-off floor {floor:.3e})")
        x = x + t * d
        n_iter += 1
        if opts.collect_log:
            log.append({"stage": stage, "iter": it, "energy": e_base,
                        "grad_norm": gn, "step": t,
                        "fallback": fell_back})
    u = _nodal_state(dof, u_fix, x)
    g = p.T @ _residual_nodal(mesh, materials, dof, u)
    return x, float(np.linalg.norm(g)), n_iter


def solve(mesh: Mesh, materials: MaterialMap, datum: BoundaryDatum,
          opts: SolveOptions = SolveOptions(),
          initial_guess: np.ndarray | None = None) -> PotentialField:
    """Minimize the Dirichlet energy for one zero-mean boundary datum.

    Parameters
    ----------
    initial_guess : optional nodal array
        Full nodal state to warm-start from (e.g. a scaled previous
        solution); defaults to the discrete harmonic extension.

    Returns
    -------
    PotentialField
        Converged state; ``info`` carries iteration counts, the final
        gradient norm/tolerance and per-PEC-component net flux.

    Raises
    ------
    SolveError
        On line-search stall or non-convergence within the iteration
        budget.
    """
    bm = boundary_mass(mesh)
    vals_sorted = datum.values[np.argsort(datum.node_ids)]
    if datum.node_ids.shape != bm.node_ids.shape or \
            np.any(np.sort(datum.node_ids) != bm.node_ids):
        raise SolveError("datum does not cover the mesh boundary nodes")
    mean = float(bm.weights @ vals_sorted / bm.total)
    amp = max(float(np.max(np.abs(datum.values))), 1e-300) \
        if len(datum.values) else 1e-300
    if abs(mean) > 1e-9 * amp:
        raise SolveError(f"datum {datum.name!r} is not zero-mean "
                         f"(weighted mean {mean:.3e})")

    dof = _DofMap.build(mesh, materials)
    u_fix = np.zeros(mesh.n_nodes)
    u_fix[datum.node_ids] = datum.values

    if initial_guess is not None:
        ig = np.asarray(initial_guess, dtype=float)
        if ig.shape != (mesh.n_nodes,):
            raise SolveError("initial guess must be a full nodal array")
        free = dof.free_of_node >= 0
        x = np.zeros(dof.n_free)
        x[dof.free_of_node[free]] = np.where(np.isfinite(ig[free]),
                                             ig[free], 0.0)
    else:
        x = harmonic_initial_guess(mesh, dof, u_fix)

    schedule = opts.reg_schedule if not materials.is_linear else (1.0,)
    if not schedule or schedule[-1] != 1.0:
        raise SolveError("reg_schedule must end at multiplier 1.0")

    tol_holder: dict = {}
    log: list[dict] = []
    total_iter = 0
    for stage, mult in enumerate(schedule):
        mats = materials.with_reg_eps_scale(mult) if mult != 1.0 else materials
        x, gn, n_it = _newton_stage(mesh, mats, dof, u_fix, x, opts,
                                    tol_holder, stage, log)
        total_iter += n_it
    tol = tol_holder.get("tol", 0.0)
    floor = float(tol_holder.get("floored", 0.0))
    if gn > tol and gn != 0.0 and "floored" not in tol_holder:
        floor = _roundoff_floor(mesh, materials, dof,
                                _nodal_state(dof, u_fix, x))
        if gn > opts.floor_factor * floor:
            raise SolveError(f"Newton did not converge: grad norm {gn:.3e} "
                             f"above tolerance {tol:.3e} and round-off "
                             f"floor {floor:.3e}")

    u = _nodal_state(dof, u_fix, x)
    r = _residual_nodal(mesh, materials, dof, u)
    balance = {lab: float(r[nodes].sum())
               for lab, nodes in dof.pec_groups.items()}
    pec_values = {lab: float(u[nodes[0]])
                  for lab, nodes in dof.pec_groups.items()}
    energy = _energy_of(mesh, materials, dof, u)
    valid = np.ones(mesh.n_nodes, dtype=bool)
    valid[dof.removed_nodes] = False
    info = SolveInfo(True, total_iter, gn, tol, energy, floor, balance, log)
    return PotentialField(mesh, u, valid, datum, info, pec_values)


# ---------------------------------------------------------------------------
# derived quantities


def dirichlet_energy(mesh: Mesh, materials: MaterialMap,
                     field_or_u: "PotentialField | np.ndarray") -> float:
    """Energy sum over conducting triangles of a nodal state."""
    u = field_or_u.u if isinstance(field_or_u, PotentialField) else \
        np.asarray(field_or_u, dtype=float)
    dof = _DofMap.build(mesh, materials)
    return _energy_of(mesh, materials, dof, u)


def electric_field(mesh: Mesh, materials: MaterialMap,
                   fld: PotentialField) -> np.ndarray:
    """Per-triangle field E = -grad u, shape (m, 2); zero rows on PEI
    and PEC triangles, where the local field is not represented."""
    dof = _DofMap.build(mesh, materials)
    grads, _ = _grad_norms(mesh, dof, fld.u)
    e = np.zeros((mesh.n_triangles, 2))
    e[dof.active_tris] = -grads
    return e


def current_density(mesh: Mesh, materials: MaterialMap,
                    fld: PotentialField) -> np.ndarray:
    """Per-triangle current density J = -sigma(|grad u|) grad u, shape
    (m, 2); zero rows on PEI and PEC triangles."""
    dof = _DofMap.build(mesh, materials)
    grads, norms = _grad_norms(mesh, dof, fld.u)
    sig = _per_tri_eval(mesh, materials, dof, norms, "sigma")
    j = np.zeros((mesh.n_triangles, 2))
    j[dof.active_tris] = -sig[:, None] * grads
    return j


def energy_density_map(mesh: Mesh, materials: MaterialMap,
                       fld: PotentialField) -> np.ndarray:
    """Per-triangle energy density Q(|grad u|); zero on PEI/PEC."""
    dof = _DofMap.build(mesh, materials)
    _, norms = _grad_norms(mesh, dof, fld.u)
    q = _per_tri_eval(mesh, materials, dof, norms, "energy_density")
    out = np.zeros(mesh.n_triangles)
    out[dof.active_tris] = q
    return out


@dataclass(frozen=True)
class ContinuityRow:
    eps: float
    grad_diff_norm: float


@dataclass(frozen=True)
class ContinuityStudy:
    rows: tuple[ContinuityRow, ...]
    slope: float
    exponent: float


def boundary_data_continuity_study(mesh: Mesh, materials: MaterialMap,
                                   datum: BoundaryDatum,
                                   direction: BoundaryDatum,
                                   eps_list: Sequence[float],
                                   opts: SolveOptions = SolveOptions()
                                   ) -> ContinuityStudy:
    """Gradient-difference decay under boundary perturbations f + eps*phi.

    Reports || grad u^(f + eps phi) - grad u^f ||_{L^p} over the conducting
    triangles with p the declared background exponent, plus the fitted
    log-log slope (least squares over the given eps ladder).
    """
    p = materials.outer_exponent
    dof = _DofMap.build(mesh, materials)
    base = solve(mesh, materials, datum, opts)
    g_base, _ = _grad_norms(mesh, dof, base.u)
    areas = mesh.areas[dof.active_tris]
    rows = []
    for eps in sorted(eps_list, reverse=True):
        fld = solve(mesh, materials, datum.plus(direction, eps), opts,
                    initial_guess=base.u)
        g_eps, _ = _grad_norms(mesh, dof, fld.u)
        d = np.linalg.norm(g_eps - g_base, axis=1)
        norm = float((areas @ d ** p) ** (1.0 / p))
        rows.append(ContinuityRow(float(eps), norm))
    le = np.log([r.eps for r in rows])
    ln = np.log([max(r.grad_diff_norm, 1e-300) for r in rows])
    slope = float(np.polyfit(le, ln, 1)[0])
    return ContinuityStudy(tuple(rows), slope, p)
