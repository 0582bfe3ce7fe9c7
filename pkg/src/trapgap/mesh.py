"""Slit-conforming triangulation of the 2D period cell.

The mesh is a graded tensor-product grid: every box edge and every hole
endpoint is an exact grid line, so screens are unions of triangle edges.
Grid spacing shrinks to ``h_max / hole_refine`` near the hole tips and grows
linearly away from them. Each grid rectangle is split along its rising
diagonal.

Screens become Neumann cracks by node duplication: a node lying on a screen
gets a second copy used only by the triangles inside the trap. The hole tips
stay single nodes, so interior and exterior connect exactly through the open
hole. Because both ``x = -1/2`` and ``x = +1/2`` use the same ``y`` grid (and
vice versa), opposite outer sides carry identical node layouts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MeshFailure, ParseError, UnsupportedDimension
from .geometry import FACES, CellGeometry
from .jsonio import fmt_float

GRADING = 0.25
FORMAT_HEADER = "trapgap-mesh 1"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    nodes: np.ndarray  # (N, 2)
    triangles: np.ndarray  # (T, 3), counterclockwise
    tags: np.ndarray  # (T,), 1..m for trap interiors, m+1 for the exterior
    seams: np.ndarray  # (S, 2) pairs (inner copy, outer copy)
    periodic_pairs: tuple[np.ndarray, np.ndarray]  # per axis (P_k, 2) pairs (low side, high side)
    corner_group: np.ndarray  # corners ordered (-,-), (+,-), (-,+), (+,+)
    n_regions: int = 1
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "tags", _frozen(self.tags, np.int64).reshape(-1))
        object.__setattr__(self, "seams", _frozen(self.seams, np.int64).reshape(-1, 2))
        object.__setattr__(
            self,
            "periodic_pairs",
            tuple(_frozen(p, np.int64).reshape(-1, 2) for p in self.periodic_pairs),
        )
        object.__setattr__(self, "corner_group", _frozen(self.corner_group, np.int64).reshape(-1))

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def boundary_nodes(self) -> np.ndarray:
        x = np.abs(self.nodes)
        return np.flatnonzero((x[:, 0] == 0.5) | (x[:, 1] == 0.5))

    def __eq__(self, other):
        if not isinstance(other, Mesh):
            return NotImplemented
        return (
            np.array_equal(self.nodes, other.nodes)
            and np.array_equal(self.triangles, other.triangles)
            and np.array_equal(self.tags, other.tags)
            and np.array_equal(self.seams, other.seams)
            and all(np.array_equal(a, b) for a, b in zip(self.periodic_pairs, other.periodic_pairs))
            and np.array_equal(self.corner_group, other.corner_group)
        )


def _size(t: np.ndarray, foci: list[float], h_max: float, h_fine: float) -> np.ndarray:
    if not foci:
        return np.full_like(t, h_max)
    dist = np.min(np.abs(t[:, None] - np.asarray(foci)[None, :]), axis=1)
    return np.minimum(h_max, h_fine + GRADING * dist)


def axis_grid(breaks, foci, h_max: float, h_fine: float) -> np.ndarray:
    """1D node coordinates containing every breakpoint exactly.

    Inside each breakpoint interval nodes equidistribute ``1/h(t)`` for the
    graded size function ``h``.
    """
    breaks = sorted(set(float(v) for v in breaks))
    out = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b - a < 1e-6 * h_fine:
            raise MeshFailure(f"features at {a!r} and {b!r} are closer than the resolvable length")
        samples = max(65, int(math.ceil(8 * (b - a) / h_fine)) + 1)
        t = np.linspace(a, b, samples)
        dens = 1.0 / _size(t, foci, h_max, h_fine)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
        count = max(1, int(math.ceil(cum[-1] - 1e-9)))
        if count > 1:
            inner = np.interp(np.linspace(0.0, cum[-1], count + 1)[1:-1], cum, t)
            out.extend(float(v) for v in inner)
        out.append(b)
    return np.asarray(out)


def min_hole_radius(h_max: float, hole_refine: float) -> float:
    return h_max / hole_refine


def triangulate(cell: CellGeometry, h_max: float = 0.05, hole_refine: float = 4.0) -> Mesh:
    """Triangulate the slit cell ``Y`` minus the screens of ``cell``."""
    if cell.boxes.n != 2:
        raise UnsupportedDimension(f"meshing is implemented for n=2 only, got n={cell.boxes.n}")
    if not 0 < h_max <= 0.2:
        raise ValueError(f"h_max must lie in (0, 0.2], got {h_max!r}")
    if not hole_refine >= 1:
        raise ValueError(f"hole_refine must be >= 1, got {hole_refine!r}")
    h_fine = h_max / hole_refine
    r_min = min_hole_radius(h_max, hole_refine)
    breaks = ([-0.5, 0.5], [-0.5, 0.5])
    foci = ([], [])
    for box, hole in zip(cell.boxes.boxes, cell.holes):
        for ax in (0, 1):
            breaks[ax].extend([box.lo[ax], box.hi[ax]])
        if hole.radius > 0:
            if hole.radius < r_min * (1 - 1e-12):
                raise MeshFailure(
                    f"hole {hole.box}: radius {hole.radius!r} below the minimum resolvable "
                    f"{r_min!r} (= h_max/hole_refine); an unresolved hole acts as a sealed trap"
                )
            normal = FACES[hole.face][0]
            along = 1 - normal
            c = hole.center[along]
            breaks[along].extend([c - hole.radius, c, c + hole.radius])
            foci[along].extend([c - hole.radius, c + hole.radius])
            foci[normal].append(hole.center[normal])
    xb, yb = breaks
    xf, yf = foci
    xs = axis_grid(xb, xf, h_max, h_fine)
    ys = axis_grid(yb, yf, h_max, h_fine)
    return _assemble_grid(cell, xs, ys, h_max=h_max, hole_refine=hole_refine)


def _assemble_grid(cell: CellGeometry, xs: np.ndarray, ys: np.ndarray, **meta) -> Mesh:
    nx, ny = xs.size, ys.size
    X, Yc = np.meshgrid(xs, ys)  # row k is y = ys[k]
    nodes = np.column_stack([X.ravel(), Yc.ravel()])

    def nid(i, k):
        return i + nx * k

    ii, kk = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
    ii, kk = ii.ravel(), kk.ravel()
    n00, n10, n01, n11 = nid(ii, kk), nid(ii + 1, kk), nid(ii, kk + 1), nid(ii + 1, kk + 1)
    tris = np.concatenate([np.column_stack([n00, n10, n11]), np.column_stack([n00, n11, n01])])
    cx = 0.5 * (xs[ii] + xs[ii + 1])
    cy = 0.5 * (ys[kk] + ys[kk + 1])
    m = cell.m
    cell_tag = np.full(ii.size, m + 1, dtype=np.int64)
    for j, box in enumerate(cell.boxes.boxes):
        inside = (cx > box.lo[0]) & (cx < box.hi[0]) & (cy > box.lo[1]) & (cy < box.hi[1])
        cell_tag[inside] = j + 1
    tags = np.concatenate([cell_tag, cell_tag])

    xi = {float(v): i for i, v in enumerate(xs)}
    yi = {float(v): k for k, v in enumerate(ys)}
    extra, seams = [], []
    next_id = nodes.shape[0]
    for j, (box, hole) in enumerate(zip(cell.boxes.boxes, cell.holes)):
        i0, i1 = xi[box.lo[0]], xi[box.hi[0]]
        k0, k1 = yi[box.lo[1]], yi[box.hi[1]]
        ring = set()
        for i in range(i0, i1 + 1):
            ring.add((i, k0))
            ring.add((i, k1))
        for k in range(k0, k1 + 1):
            ring.add((i0, k))
            ring.add((i1, k))
        r = hole.radius
        normal = FACES[hole.face][0]
        along = 1 - normal
        c = hole.center[along]
        remap = {}
        for i, k in sorted(ring, key=lambda p: (p[1], p[0])):
            pt = (xs[i], ys[k])
            if r > 0 and pt[normal] == hole.center[normal] and c - r <= pt[along] <= c + r:
                continue  # open hole and its tips stay shared
            old = nid(i, k)
            remap[old] = next_id
            extra.append(nodes[old])
            seams.append((next_id, old))
            next_id += 1
        mine = tags == j + 1
        sub = tris[mine]
        for old, new in remap.items():
            sub[sub == old] = new
        tris[mine] = sub
    if extra:
        nodes = np.vstack([nodes, np.asarray(extra)])
    pairs_x = np.column_stack([nid(0, np.arange(1, ny - 1)), nid(nx - 1, np.arange(1, ny - 1))])
    pairs_y = np.column_stack([nid(np.arange(1, nx - 1), 0), nid(np.arange(1, nx - 1), ny - 1)])
    corners = [nid(0, 0), nid(nx - 1, 0), nid(0, ny - 1), nid(nx - 1, ny - 1)]
    meta = dict(meta, nx=nx, ny=ny)
    return Mesh(
        nodes=nodes,
        triangles=tris,
        tags=tags,
        seams=np.asarray(seams, dtype=np.int64).reshape(-1, 2),
        periodic_pairs=(pairs_x, pairs_y),
        corner_group=corners,
        n_regions=m + 1,
        meta=meta,
    )


def structured_mesh(k: int) -> Mesh:
    """Uniform ``k x k`` grid on the empty cell, ``(k+1)**2`` nodes."""
    from .geometry import empty_cell

    g = np.linspace(-0.5, 0.5, k + 1)
    g[0], g[-1] = -0.5, 0.5
    return _assemble_grid(empty_cell(), g, g, h_max=1.0 / k, hole_refine=1.0)


def _angles(p: np.ndarray) -> np.ndarray:
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)

    def ang(opp, s1, s2):
        return np.degrees(np.arccos(np.clip((s1**2 + s2**2 - opp**2) / (2 * s1 * s2), -1, 1)))

    return np.column_stack([ang(a, b, c), ang(b, a, c), ang(c, a, b)]), np.column_stack([a, b, c])


def validate_mesh(mesh: Mesh, area_tol: float = 1e-10) -> dict:
    """Check every structural invariant of ``mesh``; never raises."""
    v = []
    areas = mesh.signed_areas()
    bad = np.flatnonzero(areas <= 0)
    if bad.size:
        v.append({"check": "positive_area", "triangles": bad[:20].tolist(), "count": int(bad.size)})
    total = math.fsum(areas)
    if abs(total - 1.0) > area_tol:
        v.append({"check": "area_partition", "sum": total})
    # seams
    if mesh.seams.size:
        a, b = mesh.seams[:, 0], mesh.seams[:, 1]
        if not np.array_equal(mesh.nodes[a], mesh.nodes[b]):
            v.append({"check": "seam_coordinates"})
        tri_sets = [set() for _ in range(mesh.n_nodes)]
        for t, tri in enumerate(mesh.triangles):
            for node in tri:
                tri_sets[node].add(t)
        for inner, outer in mesh.seams:
            if tri_sets[inner] & tri_sets[outer]:
                v.append({"check": "crack", "seam": [int(inner), int(outer)], "detail": "shared triangle"})
                continue
            tin = {int(mesh.tags[t]) for t in tri_sets[inner]}
            tout = {int(mesh.tags[t]) for t in tri_sets[outer]}
            if len(tin) != 1 or tin & tout or not tri_sets[inner] or not tri_sets[outer]:
                v.append({"check": "crack", "seam": [int(inner), int(outer)], "detail": "sides not separated"})
    # periodic pairs
    for axis, pairs in enumerate(mesh.periodic_pairs):
        if not pairs.size:
            continue
        lo, hi = mesh.nodes[pairs[:, 0]], mesh.nodes[pairs[:, 1]]
        shift = np.zeros(2)
        shift[axis] = 1.0
        off = hi - lo - shift
        wrong = np.flatnonzero(np.any(off != 0.0, axis=1))
        if wrong.size:
            v.append({"check": "periodic_offset", "axis": axis, "pairs": wrong[:20].tolist()})
        if np.any(lo[:, axis] != -0.5) or np.any(hi[:, axis] != 0.5):
            v.append({"check": "periodic_side", "axis": axis})
    # mirror boundaries from raw coordinates
    for axis in (0, 1):
        t = 1 - axis
        left = np.sort(mesh.nodes[mesh.nodes[:, axis] == -0.5][:, t])
        right = np.sort(mesh.nodes[mesh.nodes[:, axis] == 0.5][:, t])
        if not np.array_equal(left, right):
            v.append({"check": "mirror_boundary", "axis": axis})
    corners = mesh.nodes[mesh.corner_group] if mesh.corner_group.size == 4 else None
    expected = np.array([[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5], [0.5, 0.5]])
    if corners is None or not np.array_equal(corners, expected):
        v.append({"check": "corner_group"})
    angles, sides = _angles(mesh.nodes[mesh.triangles])
    longest = sides.max(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        aspect = longest**2 / (2.0 * np.abs(areas))
    return {
        "ok": not v,
        "violations": v,
        "area_sum": total,
        "min_angle_deg": float(angles.min()) if angles.size else 0.0,
        "max_aspect_ratio": float(aspect.max()) if aspect.size else 0.0,
        "n_nodes": mesh.n_nodes,
        "n_triangles": mesh.n_triangles,
        "n_seams": int(mesh.seams.shape[0]),
        "n_periodic_pairs": [int(p.shape[0]) for p in mesh.periodic_pairs],
    }


def export_mesh(mesh: Mesh) -> str:
    lines = [FORMAT_HEADER, f"regions {mesh.n_regions}", f"nodes {mesh.n_nodes}"]
    lines += [f"{fmt_float(x)} {fmt_float(y)}" for x, y in mesh.nodes]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{a} {b} {c} {t}" for (a, b, c), t in zip(mesh.triangles.tolist(), mesh.tags.tolist())]
    lines.append(f"seams {mesh.seams.shape[0]}")
    lines += [f"{a} {b}" for a, b in mesh.seams.tolist()]
    for axis, pairs in enumerate(mesh.periodic_pairs):
        lines.append(f"periodic {axis} {pairs.shape[0]}")
        lines += [f"{a} {b}" for a, b in pairs.tolist()]
    lines.append("corners " + " ".join(str(c) for c in mesh.corner_group.tolist()))
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text: str):
        self.lines = text.splitlines()
        self.pos = 0

    def next(self, what: str) -> list[str]:
        while self.pos < len(self.lines):
            self.pos += 1
            line = self.lines[self.pos - 1].strip()
            if line and not line.startswith("#"):
                return line.split()
        raise ParseError(self.pos + 1, f"unexpected end of file, expected {what}")

    def header(self, keyword: str, n_args: int = 1) -> list[int]:
        tok = self.next(keyword)
        if tok[0] != keyword or len(tok) != n_args + 1:
            raise ParseError(self.pos, f"expected '{keyword}' with {n_args} argument(s), got {' '.join(tok)!r}")
        try:
            return [int(t) for t in tok[1:]]
        except ValueError:
            raise ParseError(self.pos, f"non-integer count in {' '.join(tok)!r}") from None

    def rows(self, count: int, width: int, conv, what: str) -> list:
        out = []
        for _ in range(count):
            tok = self.next(what)
            if len(tok) != width:
                raise ParseError(self.pos, f"{what}: expected {width} fields, got {len(tok)}")
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise ParseError(self.pos, f"{what}: malformed value in {' '.join(tok)!r}") from None
        return out


def import_mesh(text: str) -> Mesh:
    rd = _Reader(text)
    first = rd.next("header")
    if " ".join(first) != FORMAT_HEADER:
        raise ParseError(rd.pos, f"expected header {FORMAT_HEADER!r}")
    (n_regions,) = rd.header("regions")
    (n,) = rd.header("nodes")
    nodes = rd.rows(n, 2, float, "node")
    (t,) = rd.header("triangles")
    tri = rd.rows(t, 4, int, "triangle")
    (s,) = rd.header("seams")
    seams = rd.rows(s, 2, int, "seam")
    pairs = []
    for axis in (0, 1):
        ax, count = rd.header("periodic", 2)
        if ax != axis:
            raise ParseError(rd.pos, f"expected periodic axis {axis}, got {ax}")
        pairs.append(rd.rows(count, 2, int, "periodic pair"))
    corners = rd.header("corners", 4)
    tri = np.asarray(tri, dtype=np.int64).reshape(-1, 4)
    for idx_arr, what in ((tri[:, :3], "triangle"), (np.asarray(seams), "seam")):
        if idx_arr.size and (idx_arr.min() < 0 or idx_arr.max() >= n):
            raise ParseError(rd.pos, f"{what} references a node outside 0..{n - 1}")
    return Mesh(
        nodes=np.asarray(nodes, dtype=float).reshape(-1, 2),
        triangles=tri[:, :3],
        tags=tri[:, 3],
        seams=np.asarray(seams, dtype=np.int64).reshape(-1, 2),
        periodic_pairs=tuple(np.asarray(p, dtype=np.int64).reshape(-1, 2) for p in pairs),
        corner_group=corners,
        n_regions=n_regions,
    )
