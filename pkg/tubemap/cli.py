"""
tubemap command line: parameterize, bend, generate and sweep tube meshes.

Subcommands:
  param   run the fixed- or free-boundary pipeline on OBJ/OFF files or a corpus manifest;
          per mesh writes <id>_tube.obj, <id>_distortion.csv (per face) and <id>_tube.json
          (L*, u, z, diagnostics), plus one row in report.csv / report.json
  bend    bend tube coordinates from <id>_tube.json onto a torus, write <id>_bent.obj and
          an added-distortion row
  synth   write the synthetic corpus (default: 42 meshes) and its manifest
  sweep   ablations over a corpus: strip width d, free-boundary omega / K, bending radius

Exit codes: 0 success, 1 at least one mesh failed, 2 configuration error.
Worker threads for batches come from the TUBEMAP_THREADS environment variable (default 1).

Usage:
  tubemap synth --out corpus/
  tubemap param corpus/straight_0_clean.obj --out runs/
  tubemap param --manifest corpus/manifest.json --mode free --K 1 --omega 0.5 --out runs/
  tubemap bend runs/straight_0_clean_tube.json --mode minor --rho 5 --out runs/
  tubemap sweep --manifest corpus/manifest.json --d-values 0,0.05,0.65 --out sweeps/
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import pandas as pd
from tqdm import tqdm

from tubemap import config
from tubemap.bending import added_distortion, bend
from tubemap.exceptions import TubemapError
from tubemap.free_boundary import ExtensionConfig, parameterize_free
from tubemap.mesh_core import TriMesh
from tubemap.mesh_io import load_mesh, write_obj
from tubemap.metrics import aggregate_reports, emit_face_field, emit_report
from tubemap.synth import TubeSpec, default_corpus, generate_tube, read_manifest, write_corpus, write_manifest
from tubemap.tube_param import TubeCoords, parameterize_fixed, tube_distortion

try:
    from dotenv import load_dotenv
except ImportError:  # pragma: no cover
    load_dotenv = None

logger = logging.getLogger("tubemap.cli")

MODES = ("fixed", "free")
BEND_MODES = ("none", "major", "minor")
REPORT_FORMATS = ("csv", "json")


def _check_rho(bend_mode: str, rho: float) -> None:
    if bend_mode == "major" and not 0.0 < rho < 1.0:
        raise ValueError(f"--rho for major bending must lie in (0, 1), got {rho}")
    if bend_mode == "minor" and not rho > 1.0:
        raise ValueError(f"--rho for minor bending must exceed 1, got {rho}")


def default_rho(bend_mode: str) -> Optional[float]:
    return {"major": config.DEFAULT_RHO_MAJOR, "minor": config.DEFAULT_RHO_MINOR}.get(bend_mode)


@dataclass(frozen=True)
class RunConfig:
    """Parameters of one ``param`` run; invalid values raise ValueError (exit code 2)."""

    inputs: Tuple[Path, ...] = ()
    manifest: Optional[Path] = None
    mode: str = "fixed"
    d: float = config.DEFAULT_STRIP_WIDTH
    extension: ExtensionConfig = field(default_factory=ExtensionConfig)
    bend: str = "none"
    rho: Optional[float] = None
    out: Path = Path("tubemap_out")
    report: str = "csv"
    strict_mu: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"--mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.d <= 1.0:
            raise ValueError(f"--d must lie in [0, 1], got {self.d}")
        if self.bend not in BEND_MODES:
            raise ValueError(f"--bend must be one of {BEND_MODES}, got {self.bend!r}")
        if self.report not in REPORT_FORMATS:
            raise ValueError(f"--report must be one of {REPORT_FORMATS}, got {self.report!r}")
        if self.rho is None and self.bend != "none":
            object.__setattr__(self, "rho", default_rho(self.bend))
        if self.bend != "none":
            _check_rho(self.bend, self.rho)
        if not self.inputs and self.manifest is None:
            raise ValueError("give mesh files or --manifest")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        return cls(
            inputs=tuple(args.inputs),
            manifest=args.manifest,
            mode=args.mode,
            d=args.d,
            extension=ExtensionConfig(K=args.K, tau=args.tau, omega=args.omega),
            bend=args.bend,
            rho=args.rho,
            out=args.out,
            report=args.report,
            strict_mu=args.strict_mu,
        )


@dataclass(frozen=True)
class MeshJob:
    mesh_id: str
    source: Union[Path, TubeSpec]
    subset: str = ""

    def load(self) -> TriMesh:
        if isinstance(self.source, TubeSpec):
            return generate_tube(self.source)
        return load_mesh(self.source)


def collect_jobs(inputs: Sequence[Path], manifest: Optional[Path]) -> List[MeshJob]:
    jobs = [MeshJob(Path(p).stem, Path(p)) for p in inputs]
    if manifest is not None:
        jobs += [MeshJob(s.mesh_id, s, s.subset) for s in read_manifest(manifest)]
    return jobs


def worker_count() -> int:
    try:
        return max(1, int(os.getenv(config.THREADS_ENV, "1")))
    except ValueError:
        logger.warning("ignoring non-integer %s=%r", config.THREADS_ENV, os.getenv(config.THREADS_ENV))
        return 1


def run_batch(fn: Callable, jobs: Sequence, desc: str) -> List:
    """Apply ``fn`` to every job on the worker pool; results keep the job order."""
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(tqdm(pool.map(fn, jobs), total=len(jobs), desc=desc, disable=len(jobs) < 2))


def setup_logging(log_dir: Path, verbose: bool = False) -> None:
    log_dir.mkdir(parents=True, exist_ok=True)
    ts = datetime.now().strftime("%Y%m%d_%H%M%S")
    fmt = logging.Formatter("%(asctime)s %(levelname)s %(message)s")
    root = logging.getLogger()
    root.setLevel(logging.DEBUG if verbose else logging.INFO)
    root.handlers.clear()
    console = logging.StreamHandler()
    console.setFormatter(fmt)
    root.addHandler(console)
    fileh = logging.FileHandler(log_dir / f"tubemap_{ts}.log", encoding="utf-8")
    fileh.setFormatter(fmt)
    root.addHandler(fileh)


def _failure_row(mesh_id: str, stage_label: str, exc: Exception, **extra) -> Dict:
    logger.error("FAILED %s: %s", mesh_id, exc)
    return {"mesh_id": mesh_id, "stage_label": stage_label, "status": "failed", "error": str(exc), **extra}


# ── param ───────────────────────────────────────────────────────────────────────
def parameterize(mesh: TriMesh, cfg: RunConfig) -> Tuple[TubeCoords, Dict]:
    if cfg.mode == "free":
        return parameterize_free(mesh, cfg.extension, d=cfg.d, strict=cfg.strict_mu)
    return parameterize_fixed(mesh, d=cfg.d, strict=cfg.strict_mu)


def process_mesh(job: MeshJob, cfg: RunConfig) -> Dict:
    """Parameterize one mesh and write its artifacts; returns its report row."""
    t_start = time.perf_counter()
    try:
        mesh = job.load()
        source_path = job.source
        if isinstance(job.source, TubeSpec):
            source_path = write_obj(cfg.out / f"{job.mesh_id}.obj", mesh.vertices, mesh.faces)
        tube, diagnostics = parameterize(mesh, cfg)
        report = tube_distortion(mesh, tube, mesh_id=job.mesh_id, stage_label=cfg.mode)

        write_obj(cfg.out / f"{job.mesh_id}_tube.obj", tube.positions(), mesh.faces, comment=f"L*={tube.L_star:.9g}")
        emit_face_field(report.face_deg, cfg.out / f"{job.mesh_id}_distortion.csv")
        row = {**report.to_row(), "subset": job.subset, "status": "ok", "error": ""}
        row.update({k: diagnostics[k] for k in ("L_star", "seam_length", "distortion_init", "distortion_corrected")})

        if cfg.bend != "none":
            t0 = time.perf_counter()
            bent, spec = bend(tube, cfg.bend, rho=cfg.rho)
            added, _ = added_distortion(mesh, tube, bent, mesh_id=job.mesh_id)
            diagnostics["timings"]["bending"] = time.perf_counter() - t0
            write_obj(cfg.out / f"{job.mesh_id}_bent.obj", bent, mesh.faces, comment=f"{spec.mode} R={spec.R:.9g}")
            row.update({"bend_mode": spec.mode, "R": spec.R, "rho": spec.rho, "added_deg": added})

        sidecar = {
            "mesh_id": job.mesh_id,
            "source": str(Path(source_path).resolve()),
            "mode": cfg.mode,
            **tube.to_dict(),
            "diagnostics": diagnostics,
        }
        (cfg.out / f"{job.mesh_id}_tube.json").write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
        row["time_s"] = time.perf_counter() - t_start
        logger.info("%s: mean %.4f deg, L*=%.6g", job.mesh_id, report.mean_deg, tube.L_star)
        return row
    except (TubemapError, OSError, ValueError) as exc:
        return _failure_row(job.mesh_id, cfg.mode, exc, subset=job.subset)


def _finish(rows: List[Dict], out: Path, fmt: str, name: str = "report") -> int:
    path = emit_report(rows, out / f"{name}.{fmt}", format=fmt)
    failed = sum(1 for r in rows if r.get("status") == "failed")
    logger.info("=" * 60)
    logger.info("Done - done=%d failed=%d report=%s", len(rows) - failed, failed, path)
    logger.info("=" * 60)
    return 0 if failed == 0 else 1


def cmd_param(cfg: RunConfig) -> int:
    cfg.out.mkdir(parents=True, exist_ok=True)
    jobs = collect_jobs(cfg.inputs, cfg.manifest)
    logger.info("param: %d meshes, mode=%s d=%.3g bend=%s", len(jobs), cfg.mode, cfg.d, cfg.bend)
    rows = run_batch(lambda job: process_mesh(job, cfg), jobs, desc="param")
    return _finish(rows, cfg.out, cfg.report)


# ── bend ────────────────────────────────────────────────────────────────────────
def bend_sidecar(path: Path, mode: str, rho: Optional[float], out: Path) -> Dict:
    mesh_id = path.stem[: -len("_tube")] if path.stem.endswith("_tube") else path.stem
    try:
        sidecar = json.loads(path.read_text(encoding="utf-8"))
        mesh_id = sidecar.get("mesh_id", mesh_id)
        mesh = load_mesh(sidecar["source"])
        tube = TubeCoords.from_dict(sidecar)
        if len(tube) != mesh.n_vertices:
            raise ValueError(f"sidecar has {len(tube)} vertices, source mesh has {mesh.n_vertices}")
        if mode == "none":
            write_obj(out / f"{mesh_id}_bent.obj", mesh.vertices, mesh.faces)
            return {"mesh_id": mesh_id, "stage_label": "bend_none", "status": "ok", "error": "",
                    "n_vertices": mesh.n_vertices, "n_faces": mesh.n_faces, "added_deg": 0.0}
        bent, spec = bend(tube, mode, rho=rho)
        added, report = added_distortion(mesh, tube, bent, mesh_id=mesh_id)
        write_obj(out / f"{mesh_id}_bent.obj", bent, mesh.faces, comment=f"{mode} R={spec.R:.9g}")
        report.stage_label = f"bend_{mode}"
        logger.info("%s: %s R=%.6g added %.4f deg", mesh_id, mode, spec.R, added)
        return {**report.to_row(), "status": "ok", "error": "", "R": spec.R, "rho": rho, "added_deg": added}
    except (TubemapError, OSError, ValueError, KeyError) as exc:
        return _failure_row(mesh_id, f"bend_{mode}", exc)


def cmd_bend(args: argparse.Namespace) -> int:
    rho = args.rho if args.rho is not None else default_rho(args.mode)
    if args.mode != "none":
        _check_rho(args.mode, rho)
    args.out.mkdir(parents=True, exist_ok=True)
    rows = run_batch(lambda p: bend_sidecar(Path(p), args.mode, rho, args.out), args.sidecars, desc="bend")
    return _finish(rows, args.out, args.report, name="bend_report")


# ── synth ───────────────────────────────────────────────────────────────────────
def cmd_synth(args: argparse.Namespace) -> int:
    specs = read_manifest(args.manifest) if args.manifest else default_corpus(n_u=args.n_u, n_z=args.n_z)
    args.out.mkdir(parents=True, exist_ok=True)
    write_manifest(specs, args.out / "manifest.json")
    paths = write_corpus(specs, args.out)
    logger.info("=" * 60)
    logger.info("Corpus complete - %d meshes in %s", len(paths), args.out)
    logger.info("=" * 60)
    return 0


# ── sweep ───────────────────────────────────────────────────────────────────────
def _floats(text: Optional[str]) -> List[float]:
    return [float(x) for x in text.split(",") if x.strip()] if text else []


def _ints(text: Optional[str]) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()] if text else []


def sweep_mesh(job: MeshJob, args: argparse.Namespace) -> List[Dict]:
    """Every requested setting on one mesh; one row per (sweep, setting)."""
    rows: List[Dict] = []
    base = {"mesh_id": job.mesh_id, "subset": job.subset}
    try:
        mesh = job.load()
    except (TubemapError, OSError, ValueError) as exc:
        return [_failure_row(job.mesh_id, "load", exc, sweep="load", subset=job.subset)]

    def attempt(sweep: str, setting: str, fn: Callable[[], float]) -> None:
        try:
            rows.append({**base, "sweep": sweep, "setting": setting, "mean_deg": float(fn()), "status": "ok"})
        except (TubemapError, ValueError) as exc:
            rows.append(_failure_row(job.mesh_id, setting, exc, sweep=sweep, setting=setting, subset=job.subset))

    def fixed_mean(d: float) -> float:
        tube, _ = parameterize_fixed(mesh, d=d, strict=args.strict_mu)
        return tube_distortion(mesh, tube).mean_deg

    for d in _floats(args.d_values):
        attempt("strip_width", f"d={d:g}", lambda d=d: fixed_mean(d))

    omegas = _floats(args.omega_values)
    layers = _ints(args.K_values)
    if omegas or layers:
        attempt("free_boundary", "fixed", lambda: fixed_mean(args.d))
        for K in layers or [config.DEFAULT_LAYERS]:
            for omega in omegas or [config.DEFAULT_OMEGA]:
                def free_mean(K=K, omega=omega) -> float:
                    ext = ExtensionConfig(K=K, tau=args.tau, omega=omega)
                    tube, _ = parameterize_free(mesh, ext, d=args.d, strict=args.strict_mu)
                    return tube_distortion(mesh, tube).mean_deg
                attempt("free_boundary", f"K={K} omega={omega:g}", free_mean)

    radii = [("major", r) for r in _floats(args.rho_major)] + [("minor", r) for r in _floats(args.rho_minor)]
    if radii:
        try:
            tube, _ = parameterize_fixed(mesh, d=args.d, strict=args.strict_mu)
        except (TubemapError, ValueError) as exc:
            rows.append(_failure_row(job.mesh_id, "bending", exc, sweep="bending", subset=job.subset))
            return rows
        for mode, rho in radii:
            attempt("bending", f"{mode} rho={rho:g}", lambda m=mode, r=rho: added_distortion(mesh, tube, bend(tube, m, rho=r)[0])[0])
    return rows


def cmd_sweep(args: argparse.Namespace) -> int:
    specs = read_manifest(args.manifest) if args.manifest else default_corpus()
    if args.limit is not None:
        specs = specs[: max(0, args.limit)]
    jobs = [MeshJob(s.mesh_id, s, s.subset) for s in specs]
    args.out.mkdir(parents=True, exist_ok=True)
    logger.info("sweep: %d meshes", len(jobs))
    per_mesh = [row for rows in run_batch(lambda job: sweep_mesh(job, args), jobs, desc="sweep") for row in rows]
    df = pd.DataFrame(per_mesh)
    df.to_csv(args.out / "sweep_per_mesh.csv", index=False, float_format=f"%.{config.FLOAT_DIGITS}g")

    ok = df[df["status"] == "ok"] if "status" in df else df
    baselines = {"strip_width": "d=0", "free_boundary": "fixed", "bending": None}
    for sweep, group in ok.groupby("sweep"):
        baseline = baselines.get(sweep)
        if baseline is not None and baseline not in set(group["setting"]):
            baseline = None
        summary = aggregate_reports(group, baseline=baseline)
        overall = aggregate_reports(group.assign(subset="all"), baseline=baseline)
        summary = pd.concat([summary, overall], ignore_index=True)
        summary.to_csv(args.out / f"sweep_{sweep}_summary.csv", index=False, float_format="%.6g")
        logger.info("sweep %s:\n%s", sweep, summary.to_string(index=False))

    failed = int((df["status"] == "failed").sum()) if "status" in df else 0
    logger.info("=" * 60)
    logger.info("Sweep complete - rows=%d failed=%d", len(df), failed)
    logger.info("=" * 60)
    return 0 if failed == 0 else 1


# ── entry point ─────────────────────────────────────────────────────────────────
def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, default=Path("tubemap_out"), help="Output directory.")
    p.add_argument("--report", choices=REPORT_FORMATS, default="csv", help="Report file format.")
    p.add_argument("--log-dir", type=Path, default=None, help="Log directory (default: --out).")
    p.add_argument("--verbose", action="store_true", help="DEBUG logging.")
    p.add_argument("--env-file", type=Path, default=None, help="Path to a .env to load.")


def _pipeline(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=float, default=config.DEFAULT_STRIP_WIDTH, help="Seam-strip width in [0, 1].")
    p.add_argument("--tau", type=float, default=config.DEFAULT_TAU, help="Normal blend of the ring extension.")
    p.add_argument("--strict-mu", action="store_true", help="Reject |mu| >= 1 - 1e-8 instead of clamping.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tubemap", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("param", help="Parameterize tube meshes.")
    p.add_argument("inputs", nargs="*", type=Path, help="OBJ/OFF mesh files.")
    p.add_argument("--manifest", type=Path, default=None, help="Corpus manifest JSON (meshes generated on the fly).")
    p.add_argument("--mode", choices=MODES, default="fixed")
    p.add_argument("--K", type=int, default=config.DEFAULT_LAYERS, help="Extension layers (free mode).")
    p.add_argument("--omega", type=float, default=config.DEFAULT_OMEGA, help="Ring smoothing weight (free mode).")
    p.add_argument("--bend", choices=BEND_MODES, default="none", help="Also bend the result onto a torus.")
    p.add_argument("--rho", type=float, default=None, help="Radius control (major: (0,1), minor: >1).")
    _pipeline(p)
    _common(p)

    b = sub.add_parser("bend", help="Bend tube coordinates from param sidecars.")
    b.add_argument("sidecars", nargs="+", type=Path, help="<id>_tube.json files written by param.")
    b.add_argument("--mode", choices=BEND_MODES, default=config.DEFAULT_BEND_MODE)
    b.add_argument("--rho", type=float, default=None, help="Radius control (major: (0,1), minor: >1).")
    _common(b)

    s = sub.add_parser("synth", help="Write the synthetic corpus.")
    s.add_argument("--manifest", type=Path, default=None, help="Manifest to generate (default: built-in 42).")
    s.add_argument("--n-u", type=int, default=64)
    s.add_argument("--n-z", type=int, default=32)
    _common(s)

    w = sub.add_parser("sweep", help="Ablation sweeps over a corpus.")
    w.add_argument("--manifest", type=Path, default=None, help="Corpus manifest (default: built-in 42).")
    w.add_argument("--limit", type=int, default=None, help="Use only the first N meshes.")
    w.add_argument("--d-values", default=None, help="Comma-separated strip widths, e.g. 0,0.05,0.65,1.")
    w.add_argument("--omega-values", default=None, help="Comma-separated smoothing weights.")
    w.add_argument("--K-values", default=None, help="Comma-separated extension layer counts.")
    w.add_argument("--rho-major", default=None, help="Comma-separated rho_major values in (0, 1).")
    w.add_argument("--rho-minor", default=None, help="Comma-separated rho_minor values > 1.")
    _pipeline(w)
    _common(w)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_dir or args.out, verbose=args.verbose)
    if load_dotenv is not None:
        load_dotenv(dotenv_path=args.env_file)

    try:
        if args.command == "param":
            cfg = RunConfig.from_args(args)
            return cmd_param(cfg)
        if args.command == "bend":
            return cmd_bend(args)
        if args.command == "synth":
            return cmd_synth(args)
        return cmd_sweep(args)
    except (ValueError, OSError) as exc:
        # bad flags, unreadable or invalid manifests, invalid tube records
        logger.error("configuration error: %s", exc)
        return 2


def _main(argv: Optional[List[str]] = None) -> int:
    return main(argv)


if __name__ == "__main__":
    sys.exit(main())
