"""Batch command-line front end.

Every subcommand reads one JSON input (a path, or the name of a shipped
config such as ``reference-m1``), writes its result to ``--out`` or stdout,
and reports failures as a single JSON line on stderr.

Exit codes: 0 success, 1 selftest failure, 2 invalid input or violated
invariant, 3 targets not designable, 4 mesh or solver failure, 5 failed
verification (missing gap certificate or a false trend flag).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from . import __version__, bands, geometry, jsonio, limits, mesh
from .errors import (
    ConvergenceFailure,
    DegenerateTriangle,
    MeshFailure,
    NotInG,
    TrapGapError,
)

EXIT_OK = 0
EXIT_SELFTEST = 1
EXIT_INPUT = 2
EXIT_NOT_IN_G = 3
EXIT_NUMERICS = 4
EXIT_VERIFY = 5

SHIPPED = ("reference-m1", "reference-m2", "empty-cell")


class UsageError(TrapGapError, ValueError):
    pass


class VerificationFailed(TrapGapError):
    pass


@dataclass
class RunConfig:
    design: limits.DesignParams | None = None
    targets: limits.GapTargets | None = None
    empty_cell: bool = False
    n: int = 2
    kappa: float | None = None
    radii: list[tuple[float, ...] | float] = field(default_factory=list)
    h_max: float = 0.02
    hole_refine: float = 16.0
    tol: float = 1e-8
    k_max: int | None = None
    faces: str = "auto"

    def validate(self) -> "RunConfig":
        if not 0 < self.h_max <= 0.2:
            raise UsageError(f"--h-max must lie in (0, 0.2], got {self.h_max}")
        if not self.hole_refine >= 1:
            raise UsageError(f"--hole-refine must be >= 1, got {self.hole_refine}")
        if not 1e-12 <= self.tol <= 1e-2:
            raise UsageError(f"--tol must lie in [1e-12, 1e-2], got {self.tol}")
        if self.k_max is not None and not 1 <= self.k_max <= 64:
            raise UsageError(f"--k-max must lie in 1..64, got {self.k_max}")
        if self.n < 2:
            raise UsageError(f"--n must be >= 2, got {self.n}")
        if self.kappa is not None and not self.kappa > 0:
            raise UsageError(f"--kappa must be positive, got {self.kappa}")
        for r in self.radii:
            if any(not v > 0 for v in np.atleast_1d(r)):
                raise UsageError(f"radii must be positive, got {r}")
        if self.faces not in ("auto", *geometry.FACES):
            raise UsageError(f"unknown hole face {self.faces!r}")
        return self

    def spectrum(self) -> limits.LimitSpectrum:
        if self.design is not None:
            return limits.forward(self.design)
        return self.targets.to_spectrum()

    def resolved_design(self) -> limits.DesignParams:
        if self.design is not None:
            return self.design
        if self.targets is None:
            raise UsageError("input carries neither a design nor gap targets")
        return limits.inverse_design(self.targets.to_spectrum(), self.n, self.kappa)

    def resolved_targets(self) -> limits.GapTargets:
        if self.targets is not None:
            return self.targets
        spec = self.spectrum()
        return limits.GapTargets(spec.gaps, 1.5 * spec.mu[-1])


def _read_input(name: str) -> dict:
    if name in SHIPPED and not os.path.exists(name):
        text = resources.files("trapgap").joinpath("data", f"{name}.json").read_text()
    else:
        if not os.path.isfile(name):
            raise UsageError(f"input file not found: {name}")
        with open(name, encoding="utf-8") as fh:
            text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{name}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{name}: top-level JSON value must be an object")
    return doc


def config_from_doc(doc: dict) -> RunConfig:
    """Accept a run config, a design file (bare or as written by ``design``), or a targets file."""
    cfg = RunConfig()
    try:
        if doc.get("empty_cell"):
            cfg.empty_cell = True
        elif "design" in doc:
            cfg.design = limits.DesignParams.from_dict(doc["design"])
        elif {"d", "b", "n"} <= doc.keys():
            cfg.design = limits.DesignParams.from_dict(doc)
        if isinstance(doc.get("targets"), dict):
            cfg.targets = limits.GapTargets.from_dict(doc["targets"])
        elif "targets" in doc:
            cfg.targets = limits.GapTargets.from_dict(doc)
        for key in ("n", "kappa", "h_max", "hole_refine", "tol", "k_max", "faces"):
            if doc.get(key) is not None:
                setattr(cfg, key, doc[key])
        cfg.radii = [tuple(r) if isinstance(r, list) else float(r) for r in doc.get("radii", [])]
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed input: {exc!r}") from None
    if cfg.design is not None:
        cfg.n = cfg.design.n
    return cfg


def parse_radii(text: str) -> list[tuple[float, ...] | float]:
    """``"0.05,0.02"`` is a sweep of common radii; ``"0.02:0.01"`` gives one radius per trap."""
    out = []
    try:
        for entry in text.split(","):
            parts = [float(v) for v in entry.split(":")]
            out.append(parts[0] if len(parts) == 1 else tuple(parts))
    except ValueError:
        raise UsageError(f"cannot parse radii {text!r}") from None
    return out


def _stamp(args) -> str | None:
    if args.no_header:
        return None
    now = _dt.datetime.now(_dt.timezone.utc).replace(microsecond=0).isoformat()
    return f"trapgap {__version__} {now}"


def _json_out(doc: dict, args) -> str:
    stamp = _stamp(args)
    if stamp is not None:
        doc = {"generated": stamp, **doc}
    return jsonio.dumps(doc)


def _csv_out(text: str, args) -> str:
    stamp = _stamp(args)
    return text if stamp is None else f"# {stamp}\n{text}"


def _emit(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _check_out(path: str | None, directory: bool = False) -> None:
    if path is None:
        return
    if directory:
        if os.path.exists(path) and not os.path.isdir(path):
            raise UsageError(f"--out {path} exists and is not a directory")
        parent = os.path.dirname(os.path.abspath(path))
    else:
        if os.path.isdir(path):
            raise UsageError(f"--out {path} is a directory")
        parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise UsageError(f"output directory does not exist: {parent}")


def load(args) -> RunConfig:
    """Merge the input document with command-line overrides and validate the result."""
    cfg = config_from_doc(_read_input(args.input))
    overrides = {
        "n": args.n,
        "kappa": args.kappa,
        "h_max": args.h_max,
        "hole_refine": args.hole_refine,
        "tol": args.tol,
        "k_max": args.k_max,
        "faces": getattr(args, "hole_face", None),
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.radii is not None:
        cfg.radii = parse_radii(args.radii)
    _check_out(args.out, directory=args.command == "verify")
    return cfg.validate()


def _single_radius(cfg: RunConfig, m: int) -> tuple[float, ...]:
    if not cfg.radii:
        raise UsageError("no hole radius given (use --radii)")
    return bands._radius_vector(cfg.radii[-1], m)


def _cell(cfg: RunConfig) -> tuple[geometry.CellGeometry, float | None]:
    if cfg.empty_cell:
        return geometry.empty_cell(), None
    design = cfg.resolved_design()
    r = _single_radius(cfg, design.m)
    eps = bands.common_epsilon(design, r)
    family = geometry.boxes_from_volumes(design.b, design.n)
    return geometry.build_cell(family, r, faces=cfg.faces), eps


def cmd_design(args) -> int:
    cfg = load(args)
    if cfg.targets is None:
        raise UsageError("design needs a targets file with keys 'targets' and 'L'")
    spec = cfg.targets.to_spectrum()
    design = limits.inverse_design(spec, cfg.n, cfg.kappa)
    back = limits.forward(design)
    doc = {
        "design": design.to_dict(),
        "sigma": list(spec.sigma),
        "mu": list(spec.mu),
        "targets": cfg.targets.to_dict(),
        "round_trip_error": limits.round_trip_error(spec, cfg.n, cfg.kappa),
        "forward_check": back.to_dict(),
    }
    _emit(_json_out(doc, args), args.out)
    return EXIT_OK


def cmd_forward(args) -> int:
    cfg = load(args)
    design = cfg.resolved_design()
    spec = limits.forward(design)
    via_m = limits.mu_via_matrix(spec.sigma, design.b)
    agreement = max(abs(a - c) / abs(a) for a, c in zip(spec.mu, via_m))
    doc = {
        "design": design.to_dict(),
        "sigma": list(spec.sigma),
        "mu": list(spec.mu),
        "mu_matrix_path": list(via_m),
        "path_agreement": agreement,
        "maxwell_gaps": [list(g) for g in limits.maxwell_gap_map(spec)],
    }
    _emit(_json_out(doc, args), args.out)
    return EXIT_OK


def cmd_geometry(args) -> int:
    cfg = load(args)
    cell, eps = _cell(cfg)
    doc = geometry.geometry_to_dict(cell)
    doc["epsilon"] = eps
    doc["conditions"] = geometry.validate_conditions(cell.boxes)
    _emit(_json_out(doc, args), args.out)
    return EXIT_OK


def cmd_mesh(args) -> int:
    cfg = load(args)
    cell, _ = _cell(cfg)
    msh = mesh.triangulate(cell, cfg.h_max, cfg.hole_refine)
    report = mesh.validate_mesh(msh)
    if not report["ok"]:
        raise MeshFailure(f"generated mesh failed validation: {report['violations']}")
    _emit(mesh.export_mesh(msh), args.out)
    return EXIT_OK


def cmd_bands(args) -> int:
    cfg = load(args)
    cell, eps = _cell(cfg)
    k_max = cfg.k_max or cell.m + 2
    bs = bands.band_enclosures(cell, cfg.h_max, k_max, cfg.tol, cfg.hole_refine)
    if eps is not None:
        bs = bands.physical_spectrum(bs, eps)
    _emit(_csv_out(bands.bands_csv(bs), args), args.out)
    return EXIT_OK


def _study(cfg: RunConfig) -> bands.StudyResult:
    design = cfg.resolved_design()
    if not cfg.radii:
        raise UsageError("no radius sweep given (use --radii)")
    return bands.convergence_study(
        design, cfg.spectrum(), cfg.radii, cfg.h_max, cfg.tol, cfg.hole_refine, cfg.faces, cfg.k_max
    )


def cmd_study(args) -> int:
    study = _study(load(args))
    _emit(_csv_out(bands.study_csv(study), args), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = load(args)
    if cfg.n != 2:
        raise UsageError(f"verification runs the n=2 pipeline only, got n={cfg.n}")
    if cfg.empty_cell:
        bs = bands.band_enclosures(geometry.empty_cell(), cfg.h_max, cfg.k_max or 4, cfg.tol, cfg.hole_refine)
        gaps = bs.certified_gaps()
        doc = {"empty_cell": True, "certified_gaps": [list(g) for g in gaps], "ok": bool(gaps)}
        outputs = {"bands.csv": _csv_out(bands.bands_csv(bs), args), "report.json": _json_out(doc, args)}
        study = None
    else:
        study = _study(cfg)
        targets = cfg.resolved_targets()
        finest = study.rows[-1].bands
        report = bands.gap_report(finest, targets)
        doc = {"study": study.summary(), "finest_radius": list(study.rows[-1].radius), "gap_report": report}
        doc["ok"] = study.all_certified and study.trend_ok
        outputs = {
            "study.csv": _csv_out(bands.study_csv(study), args),
            "gaps.csv": _csv_out(bands.gaps_csv(report), args),
            "report.json": _json_out(doc, args),
        }
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        for name, text in outputs.items():
            _emit(text, os.path.join(args.out, name))
    sys.stdout.write(outputs["report.json"])
    if not doc["ok"]:
        if study is None:
            detail = "no certified gap"
        else:
            missing = [list(r.radius) for r in study.rows if not all(r.certified)]
            detail = f"uncertified rows {missing}, trend_sigma={list(study.trend_sigma)}, trend_mu={list(study.trend_mu)}"
        raise VerificationFailed(detail)
    return EXIT_OK


def cmd_selftest(args) -> int:
    """Randomized round-trip and two-path checks of the design algebra."""
    rng = np.random.default_rng(args.seed)
    count = args.count
    t0 = time.perf_counter()
    worst_round_trip = 0.0
    worst_paths = 0.0
    for _ in range(count):
        m = int(rng.integers(1, 7))
        spec = limits.random_spectrum(rng, m)
        worst_round_trip = max(worst_round_trip, limits.round_trip_error(spec))
        design = limits.inverse_design(spec)
        sigma = limits.sigma_from_design(design)
        a = limits.solve_mu(sigma, design.b)
        c = limits.mu_via_matrix(sigma, design.b)
        worst_paths = max(worst_paths, max(abs(x - y) / abs(x) for x, y in zip(a, c)))
    ok = worst_round_trip <= 1e-9 and worst_paths <= 1e-9
    doc = {
        "seed": args.seed,
        "count": count,
        "max_round_trip_error": worst_round_trip,
        "max_path_disagreement": worst_paths,
        "ok": ok,
    }
    if not args.no_header:
        doc["seconds"] = time.perf_counter() - t0
    _emit(_json_out(doc, args), args.out)
    return EXIT_OK if ok else EXIT_SELFTEST


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, VerificationFailed):
        return EXIT_VERIFY
    if isinstance(exc, NotInG):
        return EXIT_NOT_IN_G
    if isinstance(exc, (MeshFailure, ConvergenceFailure, DegenerateTriangle, bands.EnclosureViolation)):
        return EXIT_NUMERICS
    if isinstance(exc, (TrapGapError, ValueError, ArithmeticError, OSError)):
        return EXIT_INPUT
    raise exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trapgap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"trapgap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, with_input: bool = True) -> None:
        if with_input:
            p.add_argument("input", help="JSON input file or shipped config name (" + ", ".join(SHIPPED) + ")")
        p.add_argument("--n", type=int, help="dimension (default 2)")
        p.add_argument("--kappa", type=float, help="capacity constant override for n >= 3")
        p.add_argument("--h-max", type=float, help="largest element size, in (0, 0.2]")
        p.add_argument("--hole-refine", type=float, help="h_max / (element size at hole tips), >= 1")
        p.add_argument("--tol", type=float, help="eigen-residual tolerance, in [1e-12, 1e-2]")
        p.add_argument("--k-max", type=int, help="bands per variant, 1..64")
        p.add_argument("--radii", help="radius sweep, e.g. 0.05,0.02 or per trap 0.02:0.01")
        p.add_argument("--hole-face", choices=("auto", *geometry.FACES), help="box face carrying each hole")
        p.add_argument("--out", help="output path (a directory for verify)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")
        p.add_argument("--no-header", action="store_true", help="omit the version/timestamp line")

    for name, func, text in (
        ("design", cmd_design, "gap targets -> trap design"),
        ("forward", cmd_forward, "trap design -> limit gap endpoints"),
        ("geometry", cmd_geometry, "design + radius -> cell geometry JSON"),
        ("mesh", cmd_mesh, "design + radius -> mesh text"),
        ("bands", cmd_bands, "design + radius -> band enclosure CSV"),
        ("verify", cmd_verify, "full pipeline with gap certificates and trend flags"),
        ("study", cmd_study, "radius sweep -> study CSV"),
    ):
        p = sub.add_parser(name, help=text)
        common(p)
        p.set_defaults(func=func)
    p = sub.add_parser("selftest", help="randomized round-trip and path-equivalence checks")
    common(p, with_input=False)
    p.add_argument("--count", type=int, default=1000, help="number of random spectra")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream reader (e.g. head) closed early; not an error of ours
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - mapped to documented exit codes
        code = exit_code(exc)
        diag = {"error": type(exc).__name__, "message": str(exc), "exit": code}
        sys.stderr.write(json.dumps(diag) + "\n")
        return code


if __name__ == "__main__":
    sys.exit(main())
