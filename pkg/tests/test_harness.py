import json
import os
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from rotorbound import harness
from rotorbound.cli import main
from rotorbound.harness import (
    FrameMismatchError,
    load_config,
    verify_trace,
)
from rotorbound.invariant import Ellipsoid, SdpResult
from rotorbound.sim import SimTrace
from rotorbound.svgplot import SvgFigure, ellipse_outline

FAST_CFG = {
    "sim": {"duration_s": 3.0},
    "synthesis": {"tau2_points": 8, "tau2_decades": [-2.0, 0.0], "refine_iters": 4},
    "controllers": [{"architecture": "cg"}],
}


def _write_cfg(tmp_path, extra=None, name="cfg.json"):
    cfg = json.loads(json.dumps(FAST_CFG))
    if extra:
        cfg = harness._merge(cfg, extra)
    cfg["outputs"] = {"dir": str(tmp_path / "out")}
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth + simulate once; several tests read the artifacts."""
    tmp = tmp_path_factory.mktemp("pipeline")
    cfg_path = _write_cfg(tmp)
    assert main(["synth", "--config", cfg_path]) == 0
    assert main(["simulate", "--config", cfg_path]) == 0
    return tmp, cfg_path


def test_cli_verify_and_plot(pipeline):
    tmp, cfg_path = pipeline
    assert main(["verify", "--config", cfg_path]) == 0
    assert main(["plot", "--config", cfg_path]) == 0
    report = json.loads((tmp / "out" / "verify" / "report.json").read_text())
    assert report[0]["status"] == "pass"
    assert report[0]["t_entry"] == 0.0


def test_synth_artifacts_roundtrip(pipeline):
    tmp, _ = pipeline
    base = tmp / "out" / "synth" / "cg"
    full = SdpResult.from_json((base / "ellipsoid_full.json").read_text())
    assert full.ellipsoid.dim == 15
    summary = json.loads((base / "summary.json").read_text())
    assert summary["n_vertices"] == 1
    # position bounds are x/y symmetric for the geodetic architecture
    bw = summary["buffer_widths"]
    assert bw["e_p_x"] == pytest.approx(bw["e_p_y"], abs=1e-6)
    pos = json.loads((base / "ellipsoid_pos.json").read_text())
    assert np.array(pos["P"]).shape == (3, 3)


def test_membership_column_matches_verify(pipeline):
    tmp, cfg_path = pipeline
    trace = SimTrace.from_csv(str(tmp / "out" / "sim" / "cg_a.csv"))
    result = SdpResult.from_json(
        (tmp / "out" / "synth" / "cg" / "ellipsoid_full.json").read_text()
    )
    labels = result.ellipsoid.labels
    X = np.stack([trace.column(l) for l in labels], axis=1)
    recomputed = result.ellipsoid.membership_values(X)
    assert np.allclose(recomputed, trace.column("eTPe"), atol=1e-12)


def test_simulate_deterministic_bytes(tmp_path):
    cfg_path = _write_cfg(tmp_path, {"sim": {"duration_s": 1.0}})
    main(["simulate", "--config", cfg_path])
    first = (tmp_path / "out" / "sim" / "cg_a.csv").read_bytes()
    main(["simulate", "--config", cfg_path])
    second = (tmp_path / "out" / "sim" / "cg_a.csv").read_bytes()
    assert first == second


def test_seed_changes_trace(tmp_path):
    cfg_path = _write_cfg(tmp_path, {"sim": {"duration_s": 1.0},
                                     "wind": {"gust_max_mps2": 0.5}})
    main(["simulate", "--config", cfg_path])
    first = (tmp_path / "out" / "sim" / "cg_a.csv").read_bytes()
    main(["simulate", "--config", cfg_path, "--seed", "999"])
    second = (tmp_path / "out" / "sim" / "cg_a.csv").read_bytes()
    assert first != second


def test_degenerate_bounds_exit_code(tmp_path, capsys):
    cfg_path = _write_cfg(
        tmp_path,
        {"bounds": {"dbar_override_mps2": 0.0}},
    )
    assert main(["synth", "--config", cfg_path]) == harness.EXIT_SYNTH_INFEASIBLE


def test_adversarial_injection_reports_assumption_violation(tmp_path):
    cfg_path = _write_cfg(
        tmp_path,
        {
            "sim": {"duration_s": 3.0, "injection_amplitude_deg": 14.0},
            "synthesis": {"tau2_points": 6, "refine_iters": 2},
        },
    )
    assert main(["synth", "--config", cfg_path]) == 0
    assert main(["simulate", "--config", cfg_path]) == 0
    rc = main(["verify", "--config", cfg_path])
    assert rc == harness.EXIT_ASSUMPTIONS_VIOLATED
    report = json.loads(
        (tmp_path / "out" / "verify" / "report.json").read_text()
    )
    assert report[0]["status"] == "assumptions_violated"
    assert report[0]["assumption_maxima"]["tilt_deg"] == pytest.approx(14.0, abs=1e-6)


def test_frame_mismatch_rejected():
    trace = SimTrace(columns=["t", "e_p_x"], data=np.zeros((2, 2)))
    result = SdpResult(
        ellipsoid=Ellipsoid(np.eye(2), labels=("e_pH_x", "e_pH_y")),
        tau1=0.0, tau2=0.1, objective=0.0, feasible=True, residual=-1.0,
    )
    with pytest.raises(FrameMismatchError):
        verify_trace(trace, result, load_config({}).bounds)


def test_certificate_falsified_status():
    # A tiny certified set that the trace exits while assumptions hold.
    t = np.linspace(0.0, 1.0, 11)
    e = np.linspace(0.0, 2.0, 11)
    cols = ["t", "e_p_x", "tilt_deg", "f", "psid_sched", "psidd_sched",
            "w_x", "w_y", "w_z"]
    data = np.zeros((11, len(cols)))
    data[:, 0] = t
    data[:, 1] = e
    data[:, 3] = 9.81
    trace = SimTrace(columns=cols, data=data)
    result = SdpResult(
        ellipsoid=Ellipsoid(np.eye(1), labels=("e_p_x",)),
        tau1=0.0, tau2=0.1, objective=0.0, feasible=True, residual=-1.0,
    )
    rep = verify_trace(trace, result, load_config({}).bounds)
    assert rep.status == "certificate_falsified"
    assert rep.t_entry == 0.0
    assert rep.first_violation_t is not None


def test_plot_outline_points_satisfy_quadratic(pipeline):
    tmp, cfg_path = pipeline
    main(["plot", "--config", cfg_path])
    rows = (tmp / "out" / "plot" / "sets_posvel.csv").read_text().strip().splitlines()
    pts = np.array([
        [float(x) for x in r.split(",")[2:]] for r in rows[1:] if r.startswith("cg,x")
    ])
    pv = json.loads(
        (tmp / "out" / "synth" / "cg" / "ellipsoid_posvel_x.json").read_text()
    )
    P = np.array(pv["P"])
    vals = np.einsum("ij,jk,ik->i", pts, P, pts)
    assert np.max(np.abs(vals - 1.0)) < 1e-9


def test_plot_svgs_are_valid_xml(pipeline):
    tmp, cfg_path = pipeline
    main(["plot", "--config", cfg_path])
    for name in ("sets_posvel.svg", "path_snapshots_cg.svg", "errors_in_sets.svg"):
        tree = ET.parse(str(tmp / "out" / "plot" / name))
        assert tree.getroot().tag.endswith("svg")


def test_empty_trace_renders_svg_skeleton():
    fig = SvgFigure(title="empty")
    fig.polyline(np.zeros((0, 2)))
    text = fig.render()
    root = ET.fromstring(text)
    assert root.tag.endswith("svg")


def test_snapshot_rotation_follows_heading_only_for_ch(tmp_path):
    cfg_path = _write_cfg(
        tmp_path,
        {
            "controllers": [{"architecture": "cg"}, {"architecture": "ch"}],
            "sim": {"duration_s": 12.0},
            "synthesis": {"tau2_points": 6, "refine_iters": 2},
        },
    )
    assert main(["synth", "--config", cfg_path]) == 0
    assert main(["simulate", "--config", cfg_path]) == 0
    assert main(["plot", "--config", cfg_path]) == 0

    def snapshot_spread(arch):
        rows = (tmp_path / "out" / "plot" / f"path_snapshots_{arch}.csv").read_text()
        by_t = {}
        for r in rows.strip().splitlines()[1:]:
            parts = r.split(",")
            if parts[0] != "snapshot":
                continue
            t = float(parts[1])
            x, y = float(parts[3]), float(parts[4])
            by_t.setdefault(t, []).append((x, y))
        # principal-axis angle of each snapshot outline, modulo pi
        angles = []
        for t, pts in sorted(by_t.items()):
            P = np.array(pts)
            P = P - P.mean(axis=0)
            _, _, Vt = np.linalg.svd(P)
            ang = np.arctan2(Vt[0, 1], Vt[0, 0]) % np.pi
            angles.append(ang)
        angles = np.unwrap(np.array(angles) * 2) / 2
        return np.ptp(angles)

    # The geodetic set is x/y-symmetric and yaw-invariant; the heading
    # set's principal axis tracks the vehicle heading across snapshots.
    assert snapshot_spread("ch") > 0.5


def test_ellipse_outline_exact():
    P = np.array([[2.0, 0.4], [0.4, 1.0]])
    pts = ellipse_outline(P, 128)
    vals = np.einsum("ij,jk,ik->i", pts, P, pts)
    assert np.max(np.abs(vals - 1.0)) < 1e-12


def test_cross_field_warning_for_ch(tmp_path):
    cfg_path = _write_cfg(
        tmp_path,
        {
            "controllers": [{"architecture": "ch"}],
            "trajectory": {"speed_mps": 18.0},  # psid = 0.6 > 0.5
        },
    )
    with pytest.warns(UserWarning):
        load_config(cfg_path)


def test_atomic_write_replaces(tmp_path):
    path = tmp_path / "x" / "file.txt"
    harness.atomic_write(str(path), "one")
    harness.atomic_write(str(path), "two")
    assert path.read_text() == "two"
    assert not os.path.exists(str(path) + ".tmp")
