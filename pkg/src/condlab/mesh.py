"""Triangle meshes for 2D conduction domains.

Plain P1 (linear triangle) geometry: node coordinates in meters, triangles as
index triples with an integer region label per triangle.  Label 0 is the
background phase, labels >= 1 mark inclusion components.  The boundary is not
stored; it is inferred as the set of edges incident to exactly one triangle,
which supports multiply connected domains (annulus meshes have two loops).

Disk meshes are built from staggered polar rings plus a Delaunay pass;
annulus and rectangle meshes are structured.  No external mesher is used.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import Delaunay

logger = logging.getLogger(__name__)


class MeshError(Exception):
    """Raised for malformed meshes or invalid generator geometry."""


@dataclass(frozen=True)
class DiskInclusion:
    """Circular inclusion: center (x, y), radius, region label >= 1."""

    center: tuple[float, float]
    radius: float
    label: int


@dataclass(frozen=True)
class PolygonInclusion:
    """Simple-polygon inclusion given by CCW vertices and a region label >= 1."""

    vertices: tuple[tuple[float, float], ...]
    label: int


Inclusion = DiskInclusion | PolygonInclusion


def _signed_areas(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = nodes[triangles[:, 0]]
    b = nodes[triangles[:, 1]]
    c = nodes[triangles[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _orient_ccw(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Swap two vertices of every clockwise triangle; returns a copy."""
    tris = triangles.copy()
    neg = _signed_areas(nodes, tris) < 0.0
    tris[neg] = tris[neg][:, [0, 2, 1]]
    return tris


def _edge_incidence(triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All undirected edges (sorted pairs) and their triangle-incidence counts."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                        triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    edges, counts = np.unique(e, axis=0, return_counts=True)
    return edges, counts


@dataclass
class Mesh:
    """Immutable-by-convention triangle mesh with derived P1 geometry.

    Attributes
    ----------
    nodes : (n, 2) float array
        Vertex coordinates in meters.
    triangles : (m, 3) int array
        CCW vertex index triples.
    labels : (m,) int array
        Region label per triangle (0 = background).

    Derived fields (filled in ``__post_init__``): signed areas, per-triangle
    P1 basis gradients ``grads[t, :, j]`` (gradient of the hat function of
    local vertex j), boundary edges and the sorted array of boundary nodes.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    labels: np.ndarray
    areas: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)
    boundary_edges: np.ndarray = field(init=False, repr=False)
    boundary_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.nodes.ndim != 2 or self.nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError("triangles must be an (m, 3) array")
        if self.labels.shape != (self.triangles.shape[0],):
            raise MeshError("labels must have one entry per triangle")
        if self.triangles.min(initial=0) < 0 or \
                self.triangles.max(initial=-1) >= len(self.nodes):
            raise MeshError("triangle index out of range")
        areas = _signed_areas(self.nodes, self.triangles)
        if np.any(areas <= 0.0):
            bad = int(np.argmin(areas))
            raise MeshError(f"triangle {bad} has nonpositive area "
                            f"({areas[bad]:.3e}); orient CCW first")
        self.areas = areas
        self.grads = self._basis_gradients()
        edges, counts = _edge_incidence(self.triangles)
        self.boundary_edges = edges[counts == 1]
        self.boundary_nodes = np.unique(self.boundary_edges)

    def _basis_gradients(self) -> np.ndarray:
        a = self.nodes[self.triangles[:, 0]]
        b = self.nodes[self.triangles[:, 1]]
        c = self.nodes[self.triangles[:, 2]]
        # grad of hat_j is the rotated opposite edge over twice the area
        g = np.empty((len(self.triangles), 2, 3))
        two_a = (2.0 * self.areas)[:, None]
        g[:, :, 0] = np.stack([b[:, 1] - c[:, 1], c[:, 0] - b[:, 0]], axis=1) / two_a
        g[:, :, 1] = np.stack([c[:, 1] - a[:, 1], a[:, 0] - c[:, 0]], axis=1) / two_a
        g[:, :, 2] = np.stack([a[:, 1] - b[:, 1], b[:, 0] - a[:, 0]], axis=1) / two_a
        return g

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def relabeled(self, new_labels: np.ndarray) -> "Mesh":
        """Copy of the mesh with replaced region labels (geometry shared)."""
        return Mesh(self.nodes, self.triangles, np.asarray(new_labels))

    def gradient_of(self, u: np.ndarray) -> np.ndarray:
        """Per-triangle constant gradient of a nodal field, shape (m, 2)."""
        return np.einsum("mij,mj->mi", self.grads, u[self.triangles])


@dataclass(frozen=True)
class BoundaryMass:
    """Trace mass weights: half the length of the adjacent boundary edges.

    ``node_ids`` is sorted and aligned with ``weights``; ``total`` is the
    polygonal perimeter of all boundary loops.
    """

    node_ids: np.ndarray
    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def boundary_mass(mesh: Mesh) -> BoundaryMass:
    """Lumped boundary mass per boundary node (trapezoid weights)."""
    p = mesh.nodes[mesh.boundary_edges[:, 0]]
    q = mesh.nodes[mesh.boundary_edges[:, 1]]
    lengths = np.linalg.norm(q - p, axis=1)
    weights = np.zeros(mesh.n_nodes)
    np.add.at(weights, mesh.boundary_edges[:, 0], 0.5 * lengths)
    np.add.at(weights, mesh.boundary_edges[:, 1], 0.5 * lengths)
    return BoundaryMass(mesh.boundary_nodes, weights[mesh.boundary_nodes])


def validate(mesh: Mesh) -> list[str]:
    """Structural diagnostics; an empty list means the mesh is clean.

    Checks: manifold edges, closed boundary loops, edge-connected background,
    inclusions strictly interior (no labeled triangle touches the boundary),
    no duplicate triangles, nonnegative labels.
    """
    problems: list[str] = []
    edges, counts = _edge_incidence(mesh.triangles)
    if np.any(counts > 2):
        bad = edges[counts > 2][0]
        problems.append(f"nonmanifold edge {tuple(bad)} shared by >2 triangles")
    # boundary loop closure: every boundary node has exactly two boundary edges
    deg = np.zeros(mesh.n_nodes, dtype=int)
    np.add.at(deg, mesh.boundary_edges.ravel(), 1)
    open_nodes = np.nonzero(deg == 1)[0]
    if len(open_nodes):
        problems.append(f"boundary not closed at node {int(open_nodes[0])}")
    if np.any(deg[mesh.boundary_nodes] > 2):
        pinch = int(mesh.boundary_nodes[np.argmax(deg[mesh.boundary_nodes])])
        problems.append(f"boundary pinches at node {pinch}")
    if np.any(mesh.labels < 0):
        problems.append("negative region label")
    # background connectivity through shared edges
    bg = np.nonzero(mesh.labels == 0)[0]
    if len(bg) == 0:
        problems.append("no background (label 0) triangles")
    elif not _edge_connected(mesh.triangles[bg]):
        problems.append("background (label 0) is not edge-connected")
    # inclusions compactly inside: no labeled triangle touches the boundary
    on_boundary = np.zeros(mesh.n_nodes, dtype=bool)
    on_boundary[mesh.boundary_nodes] = True
    labeled = mesh.labels >= 1
    if np.any(labeled & on_boundary[mesh.triangles].any(axis=1)):
        t = int(np.nonzero(labeled & on_boundary[mesh.triangles].any(axis=1))[0][0])
        problems.append(f"inclusion touches boundary (triangle {t}, "
                        f"label {int(mesh.labels[t])})")
    srt = np.sort(mesh.triangles, axis=1)
    uniq = np.unique(srt, axis=0)
    if len(uniq) != len(srt):
        problems.append("duplicate triangles present")
    return problems


def _edge_connected(triangles: np.ndarray) -> bool:
    """True if the triangle set is connected through shared edges."""
    if len(triangles) <= 1:
        return True
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]],
                        triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    tri_of = np.tile(np.arange(len(triangles)), 3)
    order = np.lexsort((e[:, 1], e[:, 0]))
    e, tri_of = e[order], tri_of[order]
    same = np.all(e[1:] == e[:-1], axis=1)
    # adjacency via union-find over edge-sharing pairs
    parent = np.arange(len(triangles))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for k in np.nonzero(same)[0]:
        ra, rb = find(tri_of[k]), find(tri_of[k + 1])
        if ra != rb:
            parent[ra] = rb
    root = find(0)
    return all(find(i) == root for i in range(len(triangles)))


# ---------------------------------------------------------------------------
# generators


def _ring_points(center: tuple[float, float], radius: float, n: int,
                 stagger: bool) -> np.ndarray:
    offs = 0.5 if stagger else 0.0
    th = 2.0 * np.pi * (np.arange(n) + offs) / n
    return np.stack([center[0] + radius * np.cos(th),
                     center[1] + radius * np.sin(th)], axis=1)


def _disk_cloud(center: tuple[float, float], radius: float,
                target_h: float) -> np.ndarray:
    n_rings = max(2, int(round(radius / target_h)))
    dr = radius / n_rings
    pts = [np.array([center], dtype=float)]
    for k in range(1, n_rings + 1):
        r = k * dr
        n_k = max(6, int(round(2.0 * np.pi * r / target_h)))
        pts.append(_ring_points(center, r, n_k, stagger=(k % 2 == 1)))
    return np.concatenate(pts)


def _point_in_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Crossing-number test, vectorized over points."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    nv = len(vertices)
    for i in range(nv):
        x0, y0 = vertices[i]
        x1, y1 = vertices[(i + 1) % nv]
        crosses = ((y0 > y) != (y1 > y))
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= crosses & (x < np.where(crosses, xin, np.inf))
    return inside


def _dist_to_polygon(points: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Unsigned distance from points to the polygon boundary."""
    best = np.full(len(points), np.inf)
    nv = len(vertices)
    for i in range(nv):
        a = vertices[i]
        b = vertices[(i + 1) % nv]
        ab = b - a
        t = np.clip((points - a) @ ab / (ab @ ab), 0.0, 1.0)
        proj = a + t[:, None] * ab
        best = np.minimum(best, np.linalg.norm(points - proj, axis=1))
    return best


def _polygon_cloud(vertices: np.ndarray, target_h: float) -> np.ndarray:
    """Boundary samples plus a square interior lattice at spacing target_h."""
    pts = []
    nv = len(vertices)
    for i in range(nv):
        a, b = vertices[i], vertices[(i + 1) % nv]
        seg = np.linalg.norm(b - a)
        n = max(1, int(round(seg / target_h)))
        t = np.arange(n) / n
        pts.append(a + t[:, None] * (b - a))
    lo = vertices.min(axis=0)
    hi = vertices.max(axis=0)
    xs = np.arange(lo[0] + 0.5 * target_h, hi[0], target_h)
    ys = np.arange(lo[1] + 0.5 * target_h, hi[1], target_h)
    if len(xs) and len(ys):
        gx, gy = np.meshgrid(xs, ys)
        grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
        keep = _point_in_polygon(grid, vertices)
        keep &= _dist_to_polygon(grid, vertices) > 0.45 * target_h
        pts.append(grid[keep])
    return np.concatenate(pts)


def _inclusion_extent_ok(inc: Inclusion, radius: float,
                         center: tuple[float, float], clearance: float) -> bool:
    c = np.asarray(center)
    if isinstance(inc, DiskInclusion):
        d = np.linalg.norm(np.asarray(inc.center) - c)
        return d + inc.radius <= radius - clearance
    verts = np.asarray(inc.vertices)
    return bool(np.all(np.linalg.norm(verts - c, axis=1) <= radius - clearance))


def _inclusions_disjoint(a: Inclusion, b: Inclusion, gap: float) -> bool:
    def samples(inc: Inclusion) -> np.ndarray:
        if isinstance(inc, DiskInclusion):
            return _ring_points(inc.center, inc.radius, 64, stagger=False)
        return _polygon_cloud(np.asarray(inc.vertices, dtype=float),
                              _poly_h(inc))
    if isinstance(a, DiskInclusion) and isinstance(b, DiskInclusion):
        d = np.linalg.norm(np.asarray(a.center) - np.asarray(b.center))
        return d >= a.radius + b.radius + gap
    sa, sb = samples(a), samples(b)
    d = np.linalg.norm(sa[:, None, :] - sb[None, :, :], axis=2).min()
    return d >= gap


def _poly_h(inc: PolygonInclusion) -> float:
    verts = np.asarray(inc.vertices, dtype=float)
    edges = np.linalg.norm(np.roll(verts, -1, axis=0) - verts, axis=1)
    return float(edges.min() / 3.0)


def build_disk_mesh(radius: float, target_h: float,
                    inclusions: Sequence[Inclusion] = (),
                    center: tuple[float, float] = (0.0, 0.0)) -> Mesh:
    """Mesh a disk with optional strictly interior inclusions.

    Parameters
    ----------
    radius : float
        Disk radius in meters.
    target_h : float
        Nominal edge length; inclusions are locally refined to
        ``min(target_h, inclusion_radius / 2)``.
    inclusions : sequence of DiskInclusion | PolygonInclusion
        Labeled subregions.  Each must keep a clearance of one ``target_h``
        from the outer boundary and half of one from every other inclusion;
        labels must be unique and >= 1.

    Returns
    -------
    Mesh
        CCW-oriented, labeled by centroid membership; ``validate`` is clean.

    Raises
    ------
    MeshError
        If an inclusion leaves the disk, overlaps another, or reuses a label.
    """
    if radius <= 0 or target_h <= 0:
        raise MeshError("radius and target_h must be positive")
    seen: set[int] = set()
    for inc in inclusions:
        if inc.label < 1:
            raise MeshError(f"inclusion label {inc.label} must be >= 1")
        if inc.label in seen:
            raise MeshError(f"duplicate inclusion label {inc.label}")
        seen.add(inc.label)
        if not _inclusion_extent_ok(inc, radius, center, clearance=target_h):
            raise MeshError(f"inclusion label {inc.label} too close to or "
                            f"outside the outer boundary")
    for i, a in enumerate(inclusions):
        for b in inclusions[i + 1:]:
            if not _inclusions_disjoint(a, b, gap=0.5 * target_h):
                raise MeshError(f"inclusions {a.label} and {b.label} overlap "
                                f"or nearly touch")

    base = _disk_cloud(center, radius, target_h)
    keep = np.ones(len(base), dtype=bool)
    extra = []
    for inc in inclusions:
        if isinstance(inc, DiskInclusion):
            h_i = min(target_h, inc.radius / 2.0)
            extra.append(_disk_cloud(inc.center, inc.radius, h_i))
            d = np.linalg.norm(base - np.asarray(inc.center), axis=1)
            keep &= d > inc.radius + 0.6 * h_i
        else:
            verts = np.asarray(inc.vertices, dtype=float)
            h_i = min(target_h, _poly_h(inc))
            extra.append(_polygon_cloud(verts, h_i))
            near = _dist_to_polygon(base, verts) < 0.6 * h_i
            near |= _point_in_polygon(base, verts)
            keep &= ~near
    points = np.concatenate([base[keep]] + extra) if extra else base[keep]

    tri = Delaunay(points)
    triangles = _orient_ccw(points, tri.simplices.astype(np.int64))
    # drop degenerate slivers the hull pass may produce on cocircular points
    good = _signed_areas(points, triangles) > 1e-12 * target_h ** 2
    triangles = triangles[good]

    cent = points[triangles].mean(axis=1)
    labels = np.zeros(len(triangles), dtype=np.int64)
    for inc in inclusions:
        if isinstance(inc, DiskInclusion):
            inside = np.linalg.norm(cent - np.asarray(inc.center), axis=1) \
                < inc.radius
        else:
            inside = _point_in_polygon(cent, np.asarray(inc.vertices,
                                                        dtype=float))
        labels[inside] = inc.label

    mesh = Mesh(points, triangles, labels)
    problems = validate(mesh)
    if problems:
        raise MeshError("disk mesh generation failed: " + "; ".join(problems))
    return mesh


def build_annulus_mesh(r_inner: float, r_outer: float, target_h: float,
                       center: tuple[float, float] = (0.0, 0.0)) -> Mesh:
    """Structured annulus mesh with two boundary loops, all label 0.

    Every ring carries the same node count, so the triangulation is a
    regular stitch of quads split into two triangles each.
    """
    if not 0 < r_inner < r_outer:
        raise MeshError("need 0 < r_inner < r_outer")
    r_mid = 0.5 * (r_inner + r_outer)
    n_th = max(8, int(round(2.0 * np.pi * r_mid / target_h)))
    n_r = max(2, int(round((r_outer - r_inner) / target_h)))
    radii = np.linspace(r_inner, r_outer, n_r + 1)
    rings = [_ring_points(center, r, n_th, stagger=False) for r in radii]
    points = np.concatenate(rings)
    tris = []
    for k in range(n_r):
        a = k * n_th + np.arange(n_th)
        b = (k + 1) * n_th + np.arange(n_th)
        a1 = k * n_th + (np.arange(n_th) + 1) % n_th
        b1 = (k + 1) * n_th + (np.arange(n_th) + 1) % n_th
        tris.append(np.stack([a, b, b1], axis=1))
        tris.append(np.stack([a, b1, a1], axis=1))
    triangles = _orient_ccw(points, np.concatenate(tris).astype(np.int64))
    return Mesh(points, triangles, np.zeros(len(triangles), dtype=np.int64))


def build_rect_mesh(width: float, height: float, target_h: float,
                    layer_split: float | None = None,
                    layer_label: int = 1) -> Mesh:
    """Structured rectangle mesh on [0, width] x [0, height].

    With ``layer_split = a`` in (0, 1) a vertical material interface is
    inserted exactly at ``x = a * width`` and triangles right of it get
    ``layer_label``.  The layered variant is a 1D verification fixture: its
    second phase deliberately reaches the boundary, so it is exempt from the
    interior-inclusion rule that governs disk meshes with inclusions.
    """
    if width <= 0 or height <= 0 or target_h <= 0:
        raise MeshError("width, height and target_h must be positive")
    nx = max(2, int(round(width / target_h)))
    ny = max(2, int(round(height / target_h)))
    xs = np.linspace(0.0, width, nx + 1)
    if layer_split is not None:
        if not 0.0 < layer_split < 1.0:
            raise MeshError("layer_split must lie strictly inside (0, 1)")
        x_if = layer_split * width
        xs = np.unique(np.sort(np.append(xs, x_if)))
        # drop grid lines indistinguishable from the interface
        close = np.isclose(xs, x_if, rtol=0.0, atol=0.05 * target_h)
        xs = np.sort(np.append(xs[~close], x_if))
    ys = np.linspace(0.0, height, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel()], axis=1)
    n_y = len(ys)

    def nid(i: int, j: int) -> int:
        return i * n_y + j

    tris = []
    for i in range(len(xs) - 1):
        for j in range(n_y - 1):
            tris.append([nid(i, j), nid(i + 1, j), nid(i + 1, j + 1)])
            tris.append([nid(i, j), nid(i + 1, j + 1), nid(i, j + 1)])
    triangles = _orient_ccw(points, np.asarray(tris, dtype=np.int64))
    labels = np.zeros(len(triangles), dtype=np.int64)
    if layer_split is not None:
        cent_x = points[triangles].mean(axis=1)[:, 0]
        labels[cent_x > layer_split * width] = layer_label
    return Mesh(points, triangles, labels)


# ---------------------------------------------------------------------------
# file I/O


def save_mesh(mesh: Mesh, path: str) -> None:
    """Write the JSON mesh format: nodes plus [i, j, k, label] rows."""
    payload = {
        "nodes": [[float(x), float(y)] for x, y in mesh.nodes],
        "triangles": [[int(a), int(b), int(c), int(l)]
                      for (a, b, c), l in zip(mesh.triangles, mesh.labels)],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
        fh.write("\n")


def load_mesh(path: str) -> Mesh:
    """Read the JSON mesh format and validate it.

    Clockwise triangles are reoriented silently; structural defects
    (nonmanifold edges, open boundary, boundary-touching inclusions,
    disconnected background) raise ``MeshError``.
    """
    with open(path) as fh:
        payload = json.load(fh)
    try:
        nodes = np.asarray(payload["nodes"], dtype=float)
        rows = np.asarray(payload["triangles"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from None
    if rows.ndim != 2 or rows.shape[1] != 4:
        raise MeshError("triangles must be [i, j, k, label] rows")
    triangles = _orient_ccw(nodes, rows[:, :3])
    if np.any(_signed_areas(nodes, triangles) <= 0.0):
        raise MeshError("degenerate (zero-area) triangle in mesh file")
    mesh = Mesh(nodes, triangles, rows[:, 3])
    problems = validate(mesh)
    if problems:
        raise MeshError(f"invalid mesh {path}: " + "; ".join(problems))
    return mesh
