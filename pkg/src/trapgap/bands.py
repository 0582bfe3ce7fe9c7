"""Band enclosures, gap certificates and radius-parameterized convergence studies.

For every band index ``k`` four cell problems are solved on one mesh:
Neumann (N), periodic (T1), antiperiodic (T2) and Dirichlet (D). The
discrete spaces are nested, so ``N_k <= T1_k`` and ``T2_k <= D_k`` hold
exactly, and ``[N_k, D_k]`` encloses band ``k`` of the discretized periodic
problem. A gap between bands ``k`` and ``k+1`` is certified when
``D_k < N_{k+1}``; ``(T2_k, T1_{k+1})`` is the sharper estimate of the same
gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import InconsistentEpsilon, TrapGapError, UnsupportedDimension
from .fem import Variant, apply_bc, assemble, solve_lowest
from .geometry import CellGeometry, boxes_from_volumes, build_cell
from .limits import DesignParams, GapTargets, LimitSpectrum, epsilon_from_radius
from .mesh import Mesh, triangulate

EPS_AGREEMENT = 1e-9
VARIANTS = (Variant.NEUMANN, Variant.PERIODIC, Variant.ANTIPERIODIC, Variant.DIRICHLET)


class EnclosureViolation(TrapGapError, ArithmeticError):
    def __init__(self, k: int, detail: str):
        self.k = k
        super().__init__(f"band {k}: enclosure violated, {detail}")


@dataclass(frozen=True, eq=False)
class BandStructure:
    lam_n: np.ndarray
    lam_t1: np.ndarray
    lam_t2: np.ndarray
    lam_d: np.ndarray
    epsilon: float | None = None  # None: unscaled cell eigenvalues
    tol: float = 1e-8
    meta: dict = field(default_factory=dict)

    @property
    def k_max(self) -> int:
        return int(self.lam_n.size)

    def quadruples(self) -> list[tuple[float, float, float, float]]:
        return [
            (float(a), float(b), float(c), float(d))
            for a, b, c, d in zip(self.lam_n, self.lam_t1, self.lam_t2, self.lam_d)
        ]

    def bands(self) -> list[tuple[float, float]]:
        """Band enclosures ``[N_k, D_k]``."""
        return [(float(a), float(d)) for a, d in zip(self.lam_n, self.lam_d)]

    def certified_gaps(self) -> list[tuple[int, float, float]]:
        """``(k, D_k, N_{k+1})`` for every strict certificate ``D_k < N_{k+1}``."""
        return [
            (k + 1, float(self.lam_d[k]), float(self.lam_n[k + 1]))
            for k in range(self.k_max - 1)
            if self.lam_d[k] < self.lam_n[k + 1]
        ]

    def estimated_gaps(self) -> list[tuple[int, float, float]]:
        """``(k, T2_k, T1_{k+1})`` wherever that interval is nonempty."""
        return [
            (k + 1, float(self.lam_t2[k]), float(self.lam_t1[k + 1]))
            for k in range(self.k_max - 1)
            if self.lam_t2[k] < self.lam_t1[k + 1]
        ]


def check_enclosure(bs: BandStructure) -> None:
    """Raise :class:`EnclosureViolation` unless ``N <= T1`` and ``T2 <= D`` up to ``2 tol``."""
    for k in range(bs.k_max):
        slack = 2 * bs.tol * max(1.0, abs(float(bs.lam_d[k])))
        if bs.lam_n[k] > bs.lam_t1[k] + slack:
            raise EnclosureViolation(k + 1, f"N={bs.lam_n[k]!r} > T1={bs.lam_t1[k]!r}")
        if bs.lam_t2[k] > bs.lam_d[k] + slack:
            raise EnclosureViolation(k + 1, f"T2={bs.lam_t2[k]!r} > D={bs.lam_d[k]!r}")


def band_enclosures_on_mesh(mesh: Mesh, k_max: int = 4, tol: float = 1e-8) -> BandStructure:
    raw = assemble(mesh)
    values = {}
    for variant in VARIANTS:
        res = solve_lowest(apply_bc(raw, mesh, variant), k_max, tol)
        values[variant] = res.values.copy()
    # the singular Neumann/periodic zero modes come back as +-1e-16 noise
    for variant in (Variant.NEUMANN, Variant.PERIODIC):
        v = values[variant]
        v[np.abs(v) <= tol * max(1.0, float(np.abs(v).max()))] = 0.0
    bs = BandStructure(
        lam_n=values[Variant.NEUMANN],
        lam_t1=values[Variant.PERIODIC],
        lam_t2=values[Variant.ANTIPERIODIC],
        lam_d=values[Variant.DIRICHLET],
        tol=tol,
        meta={"nodes": mesh.n_nodes, "triangles": mesh.n_triangles},
    )
    check_enclosure(bs)
    return bs


def band_enclosures(
    cell: CellGeometry,
    h_max: float = 0.05,
    k_max: int = 4,
    tol: float = 1e-8,
    hole_refine: float = 4.0,
) -> BandStructure:
    """Unscaled band enclosures of ``cell``; all four variants share one mesh."""
    mesh = triangulate(cell, h_max=h_max, hole_refine=hole_refine)
    bs = band_enclosures_on_mesh(mesh, k_max, tol)
    return replace(bs, meta=dict(bs.meta, radii=[h.radius for h in cell.holes], h_max=h_max, hole_refine=hole_refine))


def physical_spectrum(bs: BandStructure, epsilon: float) -> BandStructure:
    """Rescale cell eigenvalues to the ``eps``-periodic medium: multiply by ``eps**-2``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    if bs.epsilon is not None:
        raise ValueError("band structure is already scaled")
    s = epsilon**-2.0
    return replace(
        bs,
        lam_n=bs.lam_n * s,
        lam_t1=bs.lam_t1 * s,
        lam_t2=bs.lam_t2 * s,
        lam_d=bs.lam_d * s,
        epsilon=float(epsilon),
    )


def _overlap(a: tuple[float, float], b: tuple[float, float]) -> float:
    return min(a[1], b[1]) - max(a[0], b[0])


def _match_targets(gaps: list[tuple[float, float]], intervals: list[tuple[float, float]]) -> list[int | None]:
    """One-to-one matching, largest overlaps first; a gap with no free overlapping target gets None."""
    pairs = sorted(
        ((_overlap(g, t), i, j) for i, g in enumerate(gaps) for j, t in enumerate(intervals)),
        key=lambda p: (-p[0], p[1], p[2]),
    )
    match: list[int | None] = [None] * len(gaps)
    used = set()
    for ov, i, j in pairs:
        if ov <= 0:
            break
        if match[i] is None and j not in used:
            match[i] = j
            used.add(j)
    return match


def gap_report(bs: BandStructure, targets: GapTargets) -> dict:
    """Certified gaps below ``L``, each matched to an overlapping target interval."""
    intervals = [tuple(map(float, t)) for t in targets.intervals]
    found = [g for g in bs.certified_gaps() if g[1] < targets.L]
    match = _match_targets([(lo, hi) for _, lo, hi in found], intervals)
    estimates = {k: (lo, hi) for k, lo, hi in bs.estimated_gaps()}
    gaps = []
    for (k, lo, hi), best in zip(found, match):
        entry = {"k": k, "lo": lo, "hi": hi, "certified": True, "matched_target": best}
        if best is not None:
            a, b = intervals[best]
            entry["deviation_lo"] = abs(lo - a) / a
            entry["deviation_hi"] = abs(hi - b) / b
            entry["deviation"] = max(entry["deviation_lo"], entry["deviation_hi"])
        else:
            entry["deviation"] = None
        if k in estimates:
            entry["estimate"] = list(estimates[k])
        gaps.append(entry)
    matched = {j for j in match if j is not None}
    return {
        "epsilon": bs.epsilon,
        "L": targets.L,
        "gaps": gaps,
        "unmatched_targets": [j for j in range(len(intervals)) if j not in matched],
        "all_targets_certified": len(matched) == len(intervals),
    }


@dataclass(frozen=True, eq=False)
class StudyRow:
    radius: tuple[float, ...]
    epsilon: float
    cell_bands: BandStructure  # unscaled
    bands: BandStructure  # scaled by epsilon**-2
    dev_sigma: tuple[float, ...]  # |eps^-2 D_k - sigma_k| / sigma_k
    dev_mu: tuple[float, ...]  # |eps^-2 N_{k+1} - mu_k| / mu_k
    certified: tuple[bool, ...]  # D_k < N_{k+1}, k = 1..m


@dataclass(frozen=True, eq=False)
class StudyResult:
    spec: LimitSpectrum
    rows: tuple[StudyRow, ...]
    h_max: float
    hole_refine: float

    @staticmethod
    def _decreasing(seq: Sequence[float]) -> bool:
        return all(b < a for a, b in zip(seq, seq[1:]))

    @property
    def trend_sigma(self) -> tuple[bool, ...]:
        return tuple(self._decreasing([r.dev_sigma[k] for r in self.rows]) for k in range(self.spec.m))

    @property
    def trend_mu(self) -> tuple[bool, ...]:
        return tuple(self._decreasing([r.dev_mu[k] for r in self.rows]) for k in range(self.spec.m))

    @property
    def trend_ok(self) -> bool:
        return all(self.trend_sigma) and all(self.trend_mu)

    @property
    def all_certified(self) -> bool:
        return all(all(r.certified) for r in self.rows)

    def summary(self) -> dict:
        return {
            "sigma": list(self.spec.sigma),
            "mu": list(self.spec.mu),
            "h_max": self.h_max,
            "hole_refine": self.hole_refine,
            "radii": [list(r.radius) for r in self.rows],
            "epsilon": [r.epsilon for r in self.rows],
            "certified": [list(r.certified) for r in self.rows],
            "trend_sigma": list(self.trend_sigma),
            "trend_mu": list(self.trend_mu),
            "all_certified": self.all_certified,
            "trend_ok": self.trend_ok,
        }


def _radius_vector(r, m: int) -> tuple[float, ...]:
    if np.ndim(r) == 0:
        return (float(r),) * m
    r = tuple(float(v) for v in r)
    if len(r) != m:
        raise ValueError(f"expected {m} radii per row, got {len(r)}")
    return r


def common_epsilon(design: DesignParams, radius: Sequence[float]) -> float:
    """The single ``eps`` that produces hole radii ``radius``; all traps must agree."""
    eps = [epsilon_from_radius(r, d, design.n) for r, d in zip(radius, design.d)]
    if max(eps) - min(eps) > EPS_AGREEMENT * max(eps):
        raise InconsistentEpsilon(f"hole radii {list(radius)} imply different epsilons {eps}")
    return eps[0]


def convergence_study(
    design: DesignParams,
    spec: LimitSpectrum,
    radii: Sequence,
    h_max: float = 0.02,
    tol: float = 1e-8,
    hole_refine: float = 16.0,
    faces="auto",
    k_max: int | None = None,
) -> StudyResult:
    """Compare scaled cell eigenvalues with ``(sigma, mu)`` along a shrinking-radius sweep.

    Each entry of ``radii`` is a common hole radius or one radius per trap.
    Mesh knobs stay fixed over the sweep, so the first radius below
    ``h_max / hole_refine`` fails with :class:`MeshFailure`.
    """
    if design.n != 2:
        raise UnsupportedDimension(f"studies need an n=2 design, got n={design.n}")
    m = design.m
    if spec.m != m:
        raise ValueError(f"design has {m} traps but the spectrum has {spec.m} gaps")
    rows_r = [_radius_vector(r, m) for r in radii]
    if not rows_r:
        raise ValueError("empty radius sweep")
    if any(not max(b) < min(a) for a, b in zip(rows_r, rows_r[1:])):
        raise ValueError("radii must be strictly decreasing along the sweep")
    k_max = k_max or m + 2
    family = boxes_from_volumes(design.b, 2)
    rows = []
    for r in rows_r:
        eps = common_epsilon(design, r)
        cell = build_cell(family, r, faces=faces)
        raw = band_enclosures(cell, h_max, k_max, tol, hole_refine)
        bs = physical_spectrum(raw, eps)
        dev_s = tuple(abs(bs.lam_d[k] - s) / s for k, s in enumerate(spec.sigma))
        dev_m = tuple(abs(bs.lam_n[k + 1] - u) / u for k, u in enumerate(spec.mu))
        cert = tuple(bool(bs.lam_d[k] < bs.lam_n[k + 1]) for k in range(m))
        rows.append(StudyRow(radius=r, epsilon=eps, cell_bands=raw, bands=bs, dev_sigma=dev_s, dev_mu=dev_m, certified=cert))
    return StudyResult(spec=spec, rows=tuple(rows), h_max=h_max, hole_refine=hole_refine)


def sealed_reference(design: DesignParams, h_max: float = 0.02, k_max: int | None = None, tol: float = 1e-8) -> np.ndarray:
    """Neumann eigenvalues of the cell with every trap fully closed."""
    family = boxes_from_volumes(design.b, 2)
    cell = build_cell(family, [0.0] * design.m, allow_sealed=True)
    mesh = triangulate(cell, h_max=h_max, hole_refine=1.0)
    raw = assemble(mesh)
    return solve_lowest(apply_bc(raw, mesh, Variant.NEUMANN), k_max or design.m + 2, tol).values


def neumann_trend(study: StudyResult, reference: np.ndarray) -> dict:
    """Zero block ``N_2..N_{m+1}`` shrinks along the sweep; ``N_{m+2}`` stays above half its sealed value.

    Uses the unscaled cell eigenvalues.
    """
    m = study.spec.m
    unscaled = [r.cell_bands.lam_n for r in study.rows]
    zero_block = [[float(u[k]) for u in unscaled] for k in range(1, m + 1)]
    decreasing = [StudyResult._decreasing(seq) for seq in zero_block]
    top = [float(u[m + 1]) for u in unscaled]
    floor = 0.5 * float(reference[m + 1])
    return {
        "zero_block": zero_block,
        "zero_block_decreasing": decreasing,
        "lambda_m_plus_2": top,
        "reference_m_plus_2": float(reference[m + 1]),
        "bounded_below": [v >= floor for v in top],
        "ok": all(decreasing) and all(v >= floor for v in top),
    }


def _csv(header: list[str], rows: list[list], with_header: bool) -> str:
    def cell(v) -> str:
        if v is None:
            return ""
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (float, np.floating)):
            return format(float(v), ".17g")
        return str(v)

    lines = [",".join(header)] if with_header else []
    lines += [",".join(cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def bands_csv(bs: BandStructure, header: bool = True) -> str:
    rows = [[k + 1, *q] for k, q in enumerate(bs.quadruples())]
    return _csv(["k", "lamN", "lamT1", "lamT2", "lamD"], rows, header)


def gaps_csv(report: dict, header: bool = True) -> str:
    rows = [[g["lo"], g["hi"], g["certified"], g["matched_target"], g["deviation"]] for g in report["gaps"]]
    return _csv(["lo", "hi", "certified", "matched_target", "deviation"], rows, header)


def study_csv(study: StudyResult, header: bool = True) -> str:
    m = study.spec.m
    cols = ["r", "eps"]
    for k in range(1, m + 1):
        cols += [f"eps2_lamD_{k}", f"sigma_{k}", f"dev_sigma_{k}", f"eps2_lamN_{k + 1}", f"mu_{k}", f"dev_mu_{k}", f"certified_{k}"]
    cols += [f"trend_sigma_{k}" for k in range(1, m + 1)] + [f"trend_mu_{k}" for k in range(1, m + 1)]
    ts, tm = study.trend_sigma, study.trend_mu
    rows = []
    for row in study.rows:
        r = row.radius[0] if len(set(row.radius)) == 1 else ";".join(format(v, ".17g") for v in row.radius)
        vals = [r, row.epsilon]
        for k in range(m):
            vals += [
                row.bands.lam_d[k], study.spec.sigma[k], row.dev_sigma[k],
                row.bands.lam_n[k + 1], study.spec.mu[k], row.dev_mu[k], row.certified[k],
            ]
        rows.append(vals + list(ts) + list(tm))
    return _csv(cols, rows, header)
