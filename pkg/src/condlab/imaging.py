"""Inclusion detection by monotonicity tests on averaged boundary powers.

The scan overlays a rectangular cell grid on the interior of the mesh,
replaces one cell at a time with a structural extreme (perfectly
insulating or perfectly conducting), and compares the resulting averaged
boundary powers against measured ones datum by datum.  A cell is flagged
when every datum leaves the comparison on the anomaly side within a noise
tolerance.  Cells contained in an extreme anomaly are flagged by
construction: carving the test extreme into a region that already is one
cannot move the power past the measurement.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .constitutive import PEC, PEI, MaterialMap
from .dtn import average_dtn_power
from .mesh import Mesh
from .solver import BoundaryDatum, SolveOptions


@dataclass(frozen=True)
class Cell:
    """One grid cell: its index pair and the triangles it owns."""

    id: int
    ix: int
    iy: int
    tri_ids: tuple[int, ...]
    area: float


@dataclass(frozen=True)
class CellGrid:
    nx: int
    ny: int
    bbox: tuple[float, float, float, float]  # xmin, xmax, ymin, ymax
    cells: tuple[Cell, ...]

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_centers(self) -> np.ndarray:
        xmin, xmax, ymin, ymax = self.bbox
        dx = (xmax - xmin) / self.nx
        dy = (ymax - ymin) / self.ny
        return np.array([[xmin + (c.ix + 0.5) * dx, ymin + (c.iy + 0.5) * dy]
                         for c in self.cells])


def build_cell_grid(mesh: Mesh, nx: int, ny: int) -> CellGrid:
    """Partition interior triangles into an nx-by-ny grid by centroid.

    Triangles with a vertex on the outer boundary are excluded so every
    tested perturbation stays compactly inside the domain; empty cells
    are dropped.
    """
    xmin, ymin = mesh.nodes.min(axis=0)
    xmax, ymax = mesh.nodes.max(axis=0)
    on_boundary = np.zeros(mesh.n_nodes, dtype=bool)
    on_boundary[mesh.boundary_nodes] = True
    interior = ~np.any(on_boundary[mesh.triangles], axis=1)
    cent = mesh.nodes[mesh.triangles].mean(axis=1)
    dx = (xmax - xmin) / nx
    dy = (ymax - ymin) / ny
    ix = np.clip(((cent[:, 0] - xmin) / dx).astype(int), 0, nx - 1)
    iy = np.clip(((cent[:, 1] - ymin) / dy).astype(int), 0, ny - 1)
    cells = []
    for j in range(ny):
        for i in range(nx):
            tris = np.nonzero(interior & (ix == i) & (iy == j))[0]
            if tris.size == 0:
                continue
            cells.append(Cell(len(cells), i, j, tuple(int(t) for t in tris),
                              float(mesh.areas[tris].sum())))
    return CellGrid(nx, ny, (float(xmin), float(xmax), float(ymin),
                             float(ymax)), tuple(cells))


def fresh_label(mesh: Mesh, *maps: MaterialMap) -> int:
    used = {int(v) for v in np.unique(mesh.labels)}
    for m in maps:
        used.update(m.labels)
    return max(used) + 1


def make_cell_phantom(mesh: Mesh, grid: CellGrid, cell_ids: Sequence[int],
                      background: MaterialMap,
                      model=None) -> tuple[Mesh, MaterialMap]:
    """Stamp a model (default PEI) onto the union of the given cells.

    Returns a relabeled mesh plus the background map extended with the
    stamped model under a fresh region label.
    """
    if model is None:
        model = PEI()
    lab = fresh_label(mesh, background)
    labels = mesh.labels.copy()
    for cid in cell_ids:
        labels[list(grid.cells[cid].tri_ids)] = lab
    return mesh.relabeled(labels), background.replaced(lab, model)


@dataclass(frozen=True)
class Measurements:
    """Averaged boundary powers per datum, optionally noise-corrupted."""

    datum_names: tuple[str, ...]
    clean: np.ndarray
    noisy: np.ndarray
    noise_rel: float
    seed: int
    quad_order: int

    @property
    def powers(self) -> np.ndarray:
        """The observed values the scan compares against."""
        return self.noisy


def synth_measurements(mesh: Mesh, materials: MaterialMap,
                       data: Sequence[BoundaryDatum], quad_order: int = 8,
                       noise_rel: float = 0.0, seed: int = 0,
                       opts: SolveOptions = SolveOptions()) -> Measurements:
    """Forward-model averaged powers with multiplicative uniform noise."""
    clean = np.array([average_dtn_power(mesh, materials, d, quad_order,
                                        opts).avg_power for d in data])
    rng = np.random.default_rng(seed)
    noisy = clean * (1.0 + noise_rel * rng.uniform(-1.0, 1.0, clean.size))
    return Measurements(tuple(d.name for d in data), clean, noisy,
                        noise_rel, seed, quad_order)


@dataclass(frozen=True)
class MpmResult:
    grid: CellGrid
    contrast: str  # "pei" or "pec"
    tol: float
    datum_names: tuple[str, ...]
    margins: np.ndarray  # (n_cells, n_data)
    scores: np.ndarray   # (n_cells,) min over data
    mask: np.ndarray     # (n_cells,) bool, score >= -tol

    @property
    def flagged_cells(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.nonzero(self.mask)[0])


def _cell_powers(mesh: Mesh, background: MaterialMap, cell: Cell,
                 model, lab: int, data: Sequence[BoundaryDatum],
                 quad_order: int, opts: SolveOptions) -> np.ndarray:
    labels = mesh.labels.copy()
    labels[list(cell.tri_ids)] = lab
    test_mesh = mesh.relabeled(labels)
    test_mats = background.replaced(lab, model)
    return np.array([average_dtn_power(test_mesh, test_mats, d, quad_order,
                                       opts).avg_power for d in data])


def _scan_task(args) -> tuple[int, np.ndarray]:
    mesh, background, cell, model, lab, data, quad_order, opts = args
    return cell.id, _cell_powers(mesh, background, cell, model, lab, data,
                                 quad_order, opts)


def mpm_scan(mesh: Mesh, background: MaterialMap, grid: CellGrid,
             data: Sequence[BoundaryDatum], measurements: Measurements,
             contrast: str = "pei", quad_order: int = 8,
             tol: float | None = None,
             opts: SolveOptions = SolveOptions(),
             workers: int = 1) -> MpmResult:
    """Flag grid cells whose structural test perturbation stays on the
    anomaly side of the measured powers for every datum.

    Margins are relative: with an insulating test the cell margin for
    datum f is (P_test - P_meas) / |P_meas|, with a conducting test the
    sign is mirrored.  The per-cell score is the minimum margin over the
    data and a cell is flagged when score >= -tol.  The default tol is
    3 * noise_rel plus a 1e-9 floor against solver round-off.
    """
    if contrast not in ("pei", "pec"):
        raise ValueError(f"contrast must be 'pei' or 'pec', got {contrast!r}")
    model = PEI() if contrast == "pei" else PEC()
    if tol is None:
        tol = 3.0 * measurements.noise_rel + 1e-9
    lab = fresh_label(mesh, background)
    meas = measurements.powers
    tasks = [(mesh, background, cell, model, lab, data, quad_order, opts)
             for cell in grid.cells]
    test_powers = np.empty((grid.n_cells, len(data)))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for cid, powers in pool.map(_scan_task, tasks, chunksize=1):
                test_powers[cid] = powers
    else:
        for task in tasks:
            cid, powers = _scan_task(task)
            test_powers[cid] = powers
    denom = np.abs(meas)[None, :]
    if contrast == "pei":
        margins = (test_powers - meas[None, :]) / denom
    else:
        margins = (meas[None, :] - test_powers) / denom
    scores = margins.min(axis=1)
    mask = scores >= -tol
    return MpmResult(grid, contrast, float(tol), measurements.datum_names,
                     margins, scores, mask)


@dataclass(frozen=True)
class MaskMetrics:
    n_truth: int
    n_flagged: int
    n_hit: int        # truth cells that were flagged
    n_excess: int     # flagged cells outside the truth set
    contained: bool   # every truth cell flagged
    jaccard: float


def mask_metrics(result: MpmResult,
                 truth_cells: Sequence[int]) -> MaskMetrics:
    truth = np.zeros(result.grid.n_cells, dtype=bool)
    truth[list(truth_cells)] = True
    hit = truth & result.mask
    union = truth | result.mask
    return MaskMetrics(int(truth.sum()), int(result.mask.sum()),
                       int(hit.sum()), int((result.mask & ~truth).sum()),
                       bool(np.all(result.mask[truth])),
                       float(hit.sum() / union.sum()) if union.any() else 1.0)
