"""Period-cell geometry: box-shaped traps, holes in their walls, and screens.

The cell is ``Y = (-1/2, 1/2)**n``. Traps are axis-aligned boxes laid out in
a row along ``x_1``; each trap wall (screen) is the box boundary minus one
hole centred on a box face. Only ``n = 2`` cells can be built into
screens and meshed; the box layout itself is valid for any ``n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from . import jsonio
from .errors import HoleTooLarge, UnsupportedDimension, VolumeBudgetExceeded

HALF = 0.5


@dataclass(frozen=True)
class Box:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    sides: tuple[float, ...]

    @property
    def volume(self) -> float:
        return math.prod(self.sides)

    @property
    def n(self) -> int:
        return len(self.lo)


@dataclass(frozen=True)
class BoxFamily:
    n: int
    boxes: tuple[Box, ...]
    l: float
    l_hat: float
    l_j: tuple[float, ...]

    @property
    def m(self) -> int:
        return len(self.boxes)


def boxes_from_volumes(b: Sequence[float], n: int = 2) -> BoxFamily:
    """Row of boxes with volumes ``b`` inside the unit cell.

    All boxes share the cross-section ``(-l/2, l/2)**(n-1)``; box ``j`` has
    length ``l_j = b_j / l**(n-1)`` along ``x_1`` and consecutive boxes are
    separated by ``l_hat``. When there are more boxes than dimensions the
    separation is shrunk so the row still ends at ``x_1 = l/2``.
    """
    b = [float(v) for v in b]
    if n < 2:
        raise UnsupportedDimension(f"n must be >= 2, got {n}")
    if any(not v > 0 for v in b):
        raise ValueError(f"all volumes must be positive: {b}")
    total = math.fsum(b)
    if not total < 1:
        raise VolumeBudgetExceeded(f"sum of volumes {total!r} must be < 1")
    m = len(b)
    l = (0.5 + 0.5 * total) ** (1.0 / n)
    cross = l ** (n - 1)
    if m <= n:
        l_hat = (1.0 - total) / (2 * (n - 1) * cross)
    else:
        l_hat = (1.0 - total) / (2 * (m - 1) * cross)
    l_j = tuple(v / cross for v in b)
    boxes = []
    start = -l / 2
    for j in range(m):
        lo = start + j * l_hat + math.fsum(l_j[:j])
        hi = start + j * l_hat + math.fsum(l_j[: j + 1])
        boxes.append(
            Box(
                lo=(lo,) + (-l / 2,) * (n - 1),
                hi=(hi,) + (l / 2,) * (n - 1),
                sides=(l_j[j],) + (l,) * (n - 1),
            )
        )
    return BoxFamily(n=n, boxes=tuple(boxes), l=l, l_hat=l_hat, l_j=l_j)


def _point_box_distance(p: Sequence[float], box: Box) -> float:
    acc = 0.0
    for x, lo, hi in zip(p, box.lo, box.hi):
        gap = max(lo - x, 0.0, x - hi)
        acc += gap * gap
    return math.sqrt(acc)


FACES = {"left": (0, 0), "right": (0, 1), "bottom": (1, 0), "top": (1, 1)}


def _face_key(face) -> tuple[int, int]:
    return FACES[face] if isinstance(face, str) else tuple(face)


def face_name(face) -> str:
    key = _face_key(face)
    for name, k in FACES.items():
        if k == key:
            return name
    return f"axis{key[0]}-{'hi' if key[1] else 'lo'}"


def hole_center(box: Box, face="left") -> tuple[float, ...]:
    """Midpoint of one box face (default: the face with the smallest ``x_1``)."""
    axis, side = _face_key(face)
    c = [0.5 * (lo + hi) for lo, hi in zip(box.lo, box.hi)]
    c[axis] = box.hi[axis] if side else box.lo[axis]
    return tuple(c)


def flat_radius(family: BoxFamily, j: int, face="left") -> float:
    """Largest ball radius about the centre of one face of box ``j`` that stays flat.

    The ball may only meet ``box j`` through that face: it must miss the cell
    boundary, every other box, and the rest of ``box j``'s boundary.
    """
    box = family.boxes[j]
    c = hole_center(box, face)
    to_cell = min(HALF - abs(x) for x in c)
    to_boxes = min(
        (_point_box_distance(c, other) for i, other in enumerate(family.boxes) if i != j),
        default=math.inf,
    )
    return min(to_cell, to_boxes, min(box.sides) / 2)


def best_face(family: BoxFamily, j: int) -> tuple[int, int]:
    """Face of box ``j`` with the largest flat radius (ties go to the lower axis, low side)."""
    faces = [(axis, side) for axis in range(family.n) for side in (0, 1)]
    return max(faces, key=lambda f: (flat_radius(family, j, f), -f[0], -f[1]))


def validate_conditions(family: BoxFamily) -> dict:
    """Check disjointness, containment in the cell and flat hole faces.

    Never raises; returns ``{"ok": bool, "violations": [...], "flat_radius": [...]}``.
    """
    violations = []
    boxes = family.boxes
    for i in range(len(boxes)):
        for k in range(i + 1, len(boxes)):
            a, c = boxes[i], boxes[k]
            separated = any(a.hi[ax] < c.lo[ax] or c.hi[ax] < a.lo[ax] for ax in range(a.n))
            if not separated:
                violations.append({"condition": "b1", "boxes": [i, k], "detail": "closures intersect"})
    for i, box in enumerate(boxes):
        if any(not (lo > -HALF and hi < HALF) for lo, hi in zip(box.lo, box.hi)):
            violations.append({"condition": "b2", "boxes": [i], "detail": "closure touches or leaves the cell"})
        if any(not (hi > lo) for lo, hi in zip(box.lo, box.hi)):
            violations.append({"condition": "b3", "boxes": [i], "detail": "degenerate box"})
    radii = []
    for i in range(len(boxes)):
        r = flat_radius(family, i, best_face(family, i))
        radii.append(r)
        if not r > 0:
            violations.append({"condition": "b3", "boxes": [i], "detail": f"no flat ball (r_j = {r!r})"})
    return {"ok": not violations, "violations": violations, "flat_radius": radii}


@dataclass(frozen=True)
class Hole:
    box: int
    center: tuple[float, float]
    radius: float
    face: str = "left"


@dataclass(frozen=True)
class Screen:
    """Boundary of one box minus its hole, as straight segments."""

    box: int
    segments: tuple[tuple[tuple[float, float], tuple[float, float]], ...]


@dataclass(frozen=True)
class CellGeometry:
    boxes: BoxFamily
    holes: tuple[Hole, ...]
    screens: tuple[Screen, ...]
    flat_radii: tuple[float, ...]

    @property
    def m(self) -> int:
        return self.boxes.m


def _screen_segments(box: Box, hole: Hole):
    (x0, y0), (x1, y1) = box.lo, box.hi
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    edges = {"bottom": 0, "right": 1, "top": 2, "left": 3}
    cut = edges[hole.face]
    segs = []
    for e in range(4):
        p, q = corners[e], corners[(e + 1) % 4]
        if e != cut or hole.radius == 0:
            segs.append((p, q))
            continue
        axis = 0 if hole.face in ("bottom", "top") else 1
        sign = 1.0 if q[axis] > p[axis] else -1.0
        near, far = list(hole.center), list(hole.center)
        near[axis] -= sign * hole.radius
        far[axis] += sign * hole.radius
        segs += [(p, tuple(near)), (tuple(far), q)]
    return tuple(segs)


def build_cell(
    family: BoxFamily,
    radii: Sequence[float],
    *,
    faces="auto",
    allow_sealed: bool = False,
) -> CellGeometry:
    """Punch one hole per box and return the resulting screens.

    Each hole is centred on one box face: by default the face with the
    largest flat radius, i.e. the one looking into the widest clearance.
    ``faces`` may instead name a face for all boxes ("left", ...) or give one
    name per box. ``allow_sealed`` admits zero radii, which yields closed
    traps: the reference configuration of the limit problem.
    """
    if family.n != 2:
        raise UnsupportedDimension(f"cell geometry is implemented for n=2 only, got n={family.n}")
    radii = [float(r) for r in radii]
    if len(radii) != family.m:
        raise ValueError(f"expected {family.m} radii, got {len(radii)}")
    if isinstance(faces, str):
        faces = [faces] * family.m
    if len(faces) != family.m:
        raise ValueError(f"expected {family.m} faces, got {len(faces)}")
    holes, screens, flats = [], [], []
    for j, (box, r) in enumerate(zip(family.boxes, radii)):
        face = face_name(best_face(family, j)) if faces[j] == "auto" else faces[j]
        if face not in FACES:
            raise ValueError(f"unknown face {face!r}")
        limit = flat_radius(family, j, face)
        if r < 0 or (r == 0 and not allow_sealed):
            raise ValueError(f"hole {j}: radius must be positive, got {r!r}")
        if r >= limit:
            raise HoleTooLarge(j, r, limit)
        hole = Hole(box=j, center=hole_center(box, face), radius=r, face=face)
        holes.append(hole)
        screens.append(Screen(box=j, segments=_screen_segments(box, hole)))
        flats.append(limit)
    return CellGeometry(boxes=family, holes=tuple(holes), screens=tuple(screens), flat_radii=tuple(flats))


def empty_cell() -> CellGeometry:
    return CellGeometry(boxes=boxes_from_volumes([], 2), holes=(), screens=(), flat_radii=())


def geometry_to_dict(cell: CellGeometry) -> dict:
    fam = cell.boxes
    return {
        "n": fam.n,
        "l": fam.l,
        "l_hat": fam.l_hat,
        "l_j": list(fam.l_j),
        "boxes": [
            {"lo": list(b.lo), "hi": list(b.hi), "sides": list(b.sides), "tag": j + 1}
            for j, b in enumerate(fam.boxes)
        ],
        "holes": [
            {"box": h.box, "center": list(h.center), "radius": h.radius, "face": h.face, "flat_radius": r}
            for h, r in zip(cell.holes, cell.flat_radii)
        ],
        "screens": [
            {"box": s.box, "segments": [[list(p), list(q)] for p, q in s.segments]} for s in cell.screens
        ],
        "regions": {str(j + 1): f"B{j + 1}" for j in range(fam.m)} | {str(fam.m + 1): "exterior"},
    }


def export_geometry(cell: CellGeometry) -> str:
    return jsonio.dumps(geometry_to_dict(cell))


def geometry_from_dict(doc: dict) -> CellGeometry:
    boxes = tuple(
        Box(lo=tuple(b["lo"]), hi=tuple(b["hi"]), sides=tuple(b["sides"])) for b in doc["boxes"]
    )
    fam = BoxFamily(n=doc["n"], boxes=boxes, l=doc["l"], l_hat=doc["l_hat"], l_j=tuple(doc["l_j"]))
    holes = tuple(
        Hole(box=h["box"], center=tuple(h["center"]), radius=h["radius"], face=h["face"]) for h in doc["holes"]
    )
    screens = tuple(
        Screen(box=s["box"], segments=tuple((tuple(p), tuple(q)) for p, q in s["segments"]))
        for s in doc["screens"]
    )
    flats = tuple(h["flat_radius"] for h in doc["holes"])
    return CellGeometry(boxes=fam, holes=holes, screens=screens, flat_radii=flats)


def import_geometry(text: str) -> CellGeometry:
    return geometry_from_dict(jsonio.loads(text))
