import json

import pandas as pd
import pytest

from conftest import make_cylinder, make_square
from tubemap.cli import RunConfig, build_parser, main, worker_count
from tubemap.mesh_io import write_obj
from tubemap.synth import TubeSpec, write_manifest


@pytest.fixture
def cylinder_obj(tmp_path):
    mesh = make_cylinder(n_u=12, n_z=6)
    return write_obj(tmp_path / "cyl.obj", mesh.vertices, mesh.faces)


@pytest.fixture
def manifest(tmp_path):
    specs = [
        TubeSpec("straight_small", n_u=12, n_z=6),
        TubeSpec("wavy_small", family="wavy", n_u=12, n_z=6, wave_amplitude=0.1, noise=0.2, seed=3),
    ]
    return write_manifest(specs, tmp_path / "manifest.json")


def _run(tmp_path, *argv):
    return main([*argv, "--log-dir", str(tmp_path / "logs")])


def test_param_writes_artifacts(tmp_path, cylinder_obj):
    out = tmp_path / "run"
    assert _run(tmp_path, "param", str(cylinder_obj), "--out", str(out)) == 0
    for name in ("cyl_tube.obj", "cyl_distortion.csv", "cyl_tube.json", "report.csv"):
        assert (out / name).exists(), name
    report = pd.read_csv(out / "report.csv")
    assert list(report["status"]) == ["ok"]
    assert report.loc[0, "L_star"] > 0
    sidecar = json.loads((out / "cyl_tube.json").read_text())
    assert len(sidecar["u"]) == 72
    assert sidecar["mode"] == "fixed"
    assert "timings" in sidecar["diagnostics"]
    assert list(tmp_path.joinpath("logs").glob("tubemap_*.log"))


def test_param_from_manifest_in_free_mode_with_bending(tmp_path, manifest):
    out = tmp_path / "run"
    code = _run(
        tmp_path, "param", "--manifest", str(manifest), "--mode", "free", "--K", "1", "--omega", "0.5",
        "--bend", "minor", "--report", "json", "--out", str(out),
    )
    assert code == 0
    rows = json.loads((out / "report.json").read_text())
    assert [r["mesh_id"] for r in rows] == ["straight_small", "wavy_small"]
    assert [r["subset"] for r in rows] == ["clean", "noisy"]
    assert all(r["bend_mode"] == "minor" for r in rows)
    assert (out / "wavy_small_bent.obj").exists()
    assert (out / "wavy_small.obj").exists()


def test_failed_mesh_does_not_stop_the_batch(tmp_path, cylinder_obj):
    square = make_square(n=4)
    bad = write_obj(tmp_path / "square.obj", square.vertices, square.faces)
    out = tmp_path / "run"
    assert _run(tmp_path, "param", str(bad), str(cylinder_obj), "--out", str(out)) == 1
    report = pd.read_csv(out / "report.csv")
    assert list(report["mesh_id"]) == ["square", "cyl"]
    assert list(report["status"]) == ["failed", "ok"]
    assert "boundary loops" in report.loc[0, "error"]


@pytest.mark.parametrize(
    "argv",
    [
        ["param", "x.obj", "--d", "1.5"],
        ["param", "x.obj", "--omega", "-1"],
        ["param", "x.obj", "--bend", "major", "--rho", "1.5"],
        ["param"],
        ["bend", "x_tube.json", "--mode", "minor", "--rho", "0.5"],
    ],
)
def test_configuration_errors_exit_2(tmp_path, argv):
    assert _run(tmp_path, *argv, "--out", str(tmp_path / "run")) == 2


def test_unknown_flag_is_rejected(tmp_path):
    with pytest.raises(SystemExit) as info:
        _run(tmp_path, "param", "--frobnicate")
    assert info.value.code == 2


def test_bend_from_sidecar(tmp_path, cylinder_obj):
    out = tmp_path / "run"
    assert _run(tmp_path, "param", str(cylinder_obj), "--out", str(out)) == 0
    sidecar = out / "cyl_tube.json"
    assert _run(tmp_path, "bend", str(sidecar), "--mode", "major", "--rho", "0.9", "--out", str(out)) == 0
    assert (out / "cyl_bent.obj").exists()
    report = pd.read_csv(out / "bend_report.csv")
    assert report.loc[0, "stage_label"] == "bend_major"
    assert report.loc[0, "R"] > 1.0

    assert _run(tmp_path, "bend", str(sidecar), "--mode", "none", "--out", str(out)) == 0
    assert pd.read_csv(out / "bend_report.csv").loc[0, "added_deg"] == 0.0


def test_bend_missing_sidecar_fails(tmp_path):
    assert _run(tmp_path, "bend", str(tmp_path / "nope_tube.json"), "--out", str(tmp_path)) == 1


def test_synth(tmp_path, manifest):
    out = tmp_path / "corpus"
    assert _run(tmp_path, "synth", "--manifest", str(manifest), "--out", str(out)) == 0
    assert sorted(p.name for p in out.glob("*.obj")) == ["straight_small.obj", "wavy_small.obj"]
    assert (out / "manifest.json").exists()


def test_sweep(tmp_path, manifest):
    out = tmp_path / "sweep"
    code = _run(
        tmp_path, "sweep", "--manifest", str(manifest), "--d-values", "0,0.1",
        "--omega-values", "0,0.5", "--rho-minor", "2,5", "--out", str(out),
    )
    assert code == 0
    per_mesh = pd.read_csv(out / "sweep_per_mesh.csv")
    assert set(per_mesh["sweep"]) == {"strip_width", "free_boundary", "bending"}
    strip = pd.read_csv(out / "sweep_strip_width_summary.csv")
    assert set(strip["setting"]) == {"d=0", "d=0.1"}
    assert {"n", "mean", "median", "best", "improved"} <= set(strip.columns)
    assert "all" in set(strip["subset"])
    free = pd.read_csv(out / "sweep_free_boundary_summary.csv")
    assert {"fixed", "K=1 omega=0", "K=1 omega=0.5"} <= set(free["setting"])
    assert (out / "sweep_bending_summary.csv").exists()


def test_run_config_defaults_rho():
    cfg = RunConfig(inputs=("a.obj",), bend="minor")
    assert cfg.rho == 5.0
    with pytest.raises(ValueError):
        RunConfig(inputs=("a.obj",), mode="loose")


def test_parser_subcommands():
    args = build_parser().parse_args(["sweep", "--K-values", "1,2"])
    assert args.K_values == "1,2"
    assert args.d == pytest.approx(0.05)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("TUBEMAP_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("TUBEMAP_THREADS", "many")
    assert worker_count() == 1
    monkeypatch.delenv("TUBEMAP_THREADS")
    assert worker_count() == 1
