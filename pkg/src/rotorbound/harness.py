"""Configuration-driven experiment orchestration.

One JSON document describes the trajectory, wind, drag, controllers,
certification bounds, and simulation settings; the four commands
(synthesize, simulate, verify, plot) consume it and exchange files:

    <out>/synth/<arch>/ellipsoid_full.json      certified set + multipliers
    <out>/synth/<arch>/ellipsoid_pos.json       position-subspace projection
    <out>/synth/<arch>/ellipsoid_posvel_<i>.json  per-axis pos-vel projections
    <out>/synth/<arch>/summary.json             buffer widths, tau1/tau2, ...
    <out>/sim/<arch>_<fidelity>.csv             SimTrace
    <out>/sim/<arch>_<fidelity>.meta.json       run metadata + maxima
    <out>/verify/report.json                    VerificationReport per run
    <out>/plot/*.svg, *.csv                     figure data

All field names carry explicit units. File writes are atomic
(temp + rename); identical seeds reproduce identical bytes.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .attitude import AttitudeRefModel
from .control import ARCHITECTURES, TABLE_GAINS, GainSet
from .errorsys import (
    ErrorSystemSpec,
    attitude_disturbance_bound,
    drag_split,
    error_system_to_json_dict,
    build_error_system,
)
from .flatness import DragModel
from .invariant import (
    DegenerateSystemError,
    Ellipsoid,
    NoRpiFoundError,
    SdpResult,
    axis_bound,
    project_ellipsoid,
    solve_rpi,
)
from .plant import InjectionConfig, WindModel
from .sim import SimSetup, SimTrace, run_simulation
from .svgplot import PALETTE, SvgFigure, ellipse_outline
from .trajectory import HoverTrajectory, LoiterSpec, LoiterTrajectory, StraightLineTrajectory

EXIT_PASS = 0
EXIT_CERTIFICATE_FALSIFIED = 2
EXIT_ASSUMPTIONS_VIOLATED = 3
EXIT_SYNTH_INFEASIBLE = 4

_BOUND_SLACK = 1e-9  # float slack for monitors that sit exactly on a bound


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    """Parsed experiment description; see DEFAULT_CONFIG for the schema."""

    raw: dict
    trajectory: object
    wind: WindModel
    drag: DragModel
    controllers: list[dict]
    bounds: dict
    att_model: AttitudeRefModel
    sim: dict
    synthesis: dict
    out_dir: str
    warnings: list[str] = field(default_factory=list)


DEFAULT_CONFIG = {
    "trajectory": {
        "type": "loiter",
        "radius_m": 30.0,
        "speed_mps": 15.0,
        "center_m": [0.0, 0.0, -50.0],
        "entry_duration_s": 6.0,
        "total_duration_s": 60.0,
        "heading0_rad": 0.0,
    },
    "wind": {
        "mean_mps": [4.949747468305833, -4.949747468305833, 0.0],
        "gust_max_mps2": 0.5,
        "gust_components": 8,
        "seed": 2024,
    },
    "drag": {"coeffs_per_s": [-0.05, -0.45, -0.10]},
    "controllers": [
        {"architecture": "cg"},
        {"architecture": "cgh"},
        {"architecture": "ch"},
    ],
    "bounds": {
        "delta_max_deg": 7.0,
        "f_max_mps2": 16.0,
        "w_max_mps2": 0.5,
        "psid_max_rps": 0.5,
        "psidd_max_rps2": 0.5,
        "dbar_override_mps2": None,
        "planar": False,
        "cgh_hull": "hex",
    },
    "attitude_model": {
        "omega_rps": [8.0, 8.0, 12.0],
        "xi": [1.0, 1.0, 1.0],
        "omega_r_rps": 6.0,
    },
    "sim": {
        "dt_s": 0.002,
        "duration_s": 60.0,
        "fidelity": "a",
        "injection_amplitude_deg": 0.0,
        "injection_frequency_hz": 0.3,
        "injection_mode": "cone",
    },
    "synthesis": {
        "tau2_points": 40,
        "tau2_decades": [-3.0, 1.0],
        "refine_iters": 8,
        "feas_tol": 1e-7,
    },
    "outputs": {"dir": "out"},
}


def _merge(defaults: dict, override: dict) -> dict:
    out = dict(defaults)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _build_trajectory(tc: dict):
    kind = tc.get("type", "loiter")
    if kind == "loiter":
        spec = LoiterSpec(
            radius=tc["radius_m"],
            speed=tc["speed_mps"],
            center=np.asarray(tc["center_m"], dtype=float),
            entry_duration=tc["entry_duration_s"],
            total_duration=tc["total_duration_s"],
            altitude=tc.get("altitude_m"),
        )
        return LoiterTrajectory(spec, heading0=tc.get("heading0_rad", 0.0))
    if kind == "hover":
        return HoverTrajectory(
            np.asarray(tc["point_m"], dtype=float),
            tc["total_duration_s"],
            yaw=tc.get("yaw_rad", 0.0),
        )
    if kind == "line":
        return StraightLineTrajectory(
            np.asarray(tc["start_m"], dtype=float),
            np.asarray(tc["end_m"], dtype=float),
            tc["total_duration_s"],
            yaw=tc.get("yaw_rad", 0.0),
        )
    raise ConfigError(f"unknown trajectory type {kind!r}")


def _gain_set(cc: dict) -> GainSet:
    arch = cc["architecture"]
    if arch not in ARCHITECTURES:
        raise ConfigError(f"unknown architecture {arch!r}")
    base = TABLE_GAINS[arch]
    return GainSet(
        kp=np.asarray(cc.get("kp", base.kp), dtype=float),
        kv=np.asarray(cc.get("kv", base.kv), dtype=float),
        ka=np.asarray(cc.get("ka", base.ka), dtype=float),
        omega_a=np.asarray(cc.get("omega_a_rps", base.omega_a), dtype=float),
        xi_a=np.asarray(cc.get("xi_a", base.xi_a), dtype=float),
        l_obs=np.asarray(cc.get("l_obs", base.l_obs), dtype=float),
        k_psi=cc.get("k_psi", base.k_psi),
        omega_psi=cc.get("omega_psi_rps", base.omega_psi),
    )


def load_config(source) -> ExperimentConfig:
    """Parse a config dict or JSON file path, applying defaults."""
    if isinstance(source, str):
        with open(source) as f:
            raw = json.load(f)
    else:
        raw = dict(source)
    cfg = _merge(DEFAULT_CONFIG, raw)
    trajectory = _build_trajectory(cfg["trajectory"])
    wc = cfg["wind"]
    wind = WindModel(
        v_w=np.asarray(wc["mean_mps"], dtype=float),
        w_max=wc["gust_max_mps2"],
        n_components=wc.get("gust_components", 8),
        seed=wc.get("seed", 0),
        bias=np.asarray(wc["gust_bias_mps2"], float) if wc.get("gust_bias_mps2") else None,
    )
    drag = DragModel(np.asarray(cfg["drag"]["coeffs_per_s"], dtype=float))
    am = cfg["attitude_model"]
    att_model = AttitudeRefModel(
        omega=np.asarray(am["omega_rps"], dtype=float),
        xi=np.asarray(am["xi"], dtype=float),
        omega_r=am["omega_r_rps"],
    )
    out = ExperimentConfig(
        raw=cfg,
        trajectory=trajectory,
        wind=wind,
        drag=drag,
        controllers=cfg["controllers"],
        bounds=cfg["bounds"],
        att_model=att_model,
        sim=cfg["sim"],
        synthesis=cfg["synthesis"],
        out_dir=cfg["outputs"]["dir"],
    )
    _cross_check(out)
    return out


def _cross_check(cfg: ExperimentConfig):
    """Cross-field consistency warnings (never auto-fixed)."""
    tc = cfg.raw["trajectory"]
    if tc.get("type", "loiter") == "loiter":
        psid_needed = tc["speed_mps"] / tc["radius_m"]
        if any(c["architecture"] == "ch" for c in cfg.controllers):
            if psid_needed > cfg.bounds["psid_max_rps"] + 1e-12:
                msg = (
                    f"loiter yaw rate {psid_needed:.3f} rad/s exceeds the "
                    f"certified psid_max {cfg.bounds['psid_max_rps']:.3f}"
                )
                cfg.warnings.append(msg)
                warnings.warn(msg)


def error_spec_for(cfg: ExperimentConfig, controller: dict) -> ErrorSystemSpec:
    b = cfg.bounds
    return ErrorSystemSpec(
        architecture=controller["architecture"],
        gains=_gain_set(controller),
        drag=cfg.drag,
        delta_max=math.radians(b["delta_max_deg"]),
        f_max=b["f_max_mps2"],
        w_max=b["w_max_mps2"],
        psid_max=b["psid_max_rps"],
        psidd_max=b["psidd_max_rps2"],
        planar=b["planar"],
        dbar_override=b.get("dbar_override_mps2"),
        cgh_hull=b.get("cgh_hull", "hex"),
        coriolis_compensation=controller.get("coriolis_compensation", False),
    )


def sim_setup_for(
    cfg: ExperimentConfig, controller: dict, fidelity: str | None = None,
    seed: int | None = None,
) -> SimSetup:
    sc = cfg.sim
    wind = cfg.wind
    if seed is not None and seed != wind.seed:
        wind = WindModel(
            v_w=wind.v_w, w_max=wind.w_max, n_components=wind.n_components,
            seed=seed, bias=wind.bias if np.any(wind.bias) else None,
        )
    return SimSetup(
        trajectory=cfg.trajectory,
        wind=wind,
        drag=cfg.drag,
        gains=_gain_set(controller),
        architecture=controller["architecture"],
        att_model=cfg.att_model,
        fidelity=fidelity or sc["fidelity"],
        dt=sc["dt_s"],
        duration=sc["duration_s"],
        injection=InjectionConfig(
            amplitude=math.radians(sc.get("injection_amplitude_deg", 0.0)),
            frequency_hz=sc.get("injection_frequency_hz", 0.3),
            mode=sc.get("injection_mode", "cone"),
        ),
        ch_coriolis_compensation=controller.get("coriolis_compensation", False),
    )


def atomic_write(path: str, text: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = path + ".tmp"
    with open(tmp, "w") as f:
        f.write(text)
    os.replace(tmp, path)


def _dump_json(path: str, obj):
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _pos_indices(labels) -> list[int]:
    return [i for i, l in enumerate(labels) if l.startswith("e_p")]


def _vel_indices(labels) -> list[int]:
    return [i for i, l in enumerate(labels) if l.startswith("e_v")]


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(cfg: ExperimentConfig, archs=None, out_dir: str | None = None) -> dict:
    """Certify the configured architectures; write set artifacts.

    Returns {architecture: SdpResult}. Raises the solver errors upward;
    the CLI maps them to exit code 4 with per-grid diagnostics.
    """
    out = out_dir or cfg.out_dir
    sc = cfg.synthesis
    results: dict[str, SdpResult] = {}
    for controller in cfg.controllers:
        arch = controller["architecture"]
        if archs and arch not in archs:
            continue
        spec = error_spec_for(cfg, controller)
        system = build_error_system(spec)
        lo, hi = sc["tau2_decades"]
        # A zero disturbance bound is rejected inside solve_rpi.
        scale = system.dbar**2 if system.dbar > 0.0 else 1.0
        grid = np.logspace(lo, hi, sc["tau2_points"]) / scale
        result = solve_rpi(
            system,
            tau2_grid=grid,
            feas_tol=sc["feas_tol"],
            refine_iters=sc["refine_iters"],
        )
        results[arch] = result
        base = os.path.join(out, "synth", arch)
        _dump_json(os.path.join(base, "ellipsoid_full.json"), result.to_json_dict())
        ell = result.ellipsoid
        pos = _pos_indices(system.labels)
        vel = _vel_indices(system.labels)
        _dump_json(
            os.path.join(base, "ellipsoid_pos.json"),
            project_ellipsoid(ell, pos).to_json_dict(),
        )
        for axis_i, (ip, iv) in enumerate(zip(pos, vel)):
            _dump_json(
                os.path.join(base, f"ellipsoid_posvel_{'xyz'[axis_i]}.json"),
                project_ellipsoid(ell, [ip, iv]).to_json_dict(),
            )
        gamma_dmax = drag_split(cfg.drag)
        summary = {
            "architecture": arch,
            "n_states": system.n,
            "n_vertices": len(system.vertices),
            "tau1": result.tau1,
            "tau2": result.tau2,
            "objective_neg_logdet": result.objective,
            "residual": result.residual,
            "gamma": system.gamma,
            "dbar_mps2": system.dbar,
            "d_max_per_s": gamma_dmax[0],
            "buffer_widths": {
                system.labels[i]: axis_bound(ell, i) for i in range(system.n)
            },
        }
        _dump_json(os.path.join(base, "summary.json"), summary)
        _dump_json(
            os.path.join(base, "error_system.json"),
            error_system_to_json_dict(system),
        )
    return results


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _trace_path(out: str, arch: str, fidelity: str) -> str:
    return os.path.join(out, "sim", f"{arch}_{fidelity}.csv")


def cmd_simulate(
    cfg: ExperimentConfig,
    archs=None,
    fidelities=None,
    out_dir: str | None = None,
    sets_dir: str | None = None,
    seed: int | None = None,
) -> list[str]:
    """Run the closed loop per (architecture, fidelity); write traces."""
    out = out_dir or cfg.out_dir
    fids = fidelities or [cfg.sim["fidelity"]]
    written = []
    for controller in cfg.controllers:
        arch = controller["architecture"]
        if archs and arch not in archs:
            continue
        ell = None
        set_path = os.path.join(sets_dir or out, "synth", arch, "ellipsoid_full.json")
        if os.path.exists(set_path):
            with open(set_path) as f:
                ell = Ellipsoid.from_json_dict(json.load(f))
        for fid in fids:
            setup = sim_setup_for(cfg, controller, fidelity=fid, seed=seed)
            trace = run_simulation(setup, ellipsoid=ell)
            path = _trace_path(out, arch, fid)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            trace.to_csv(path + ".tmp")
            os.replace(path + ".tmp", path)
            meta = dict(trace.meta)
            meta.update(
                max_tilt_deg=float(np.max(trace.column("tilt_deg"))),
                max_f_mps2=float(np.max(trace.column("f"))),
                max_psid_sched=float(np.max(np.abs(trace.column("psid_sched")))),
                max_psidd_sched=float(np.max(np.abs(trace.column("psidd_sched")))),
                max_gust_mps2=float(
                    np.max(np.linalg.norm(
                        np.stack([trace.column(f"w_{c}") for c in "xyz"], axis=1), axis=1
                    ))
                ),
            )
            if trace.has_column("eTPe"):
                meta["max_eTPe"] = float(np.max(trace.column("eTPe")))
            _dump_json(path.replace(".csv", ".meta.json"), meta)
            written.append(path)
    return written


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


@dataclass
class VerificationReport:
    """Per-run certificate check; see the module docstring for semantics."""

    run: str
    architecture: str
    status: str  # "pass" | "certificate_falsified" | "assumptions_violated"
    max_membership: float
    t_entry: float | None
    first_violation_t: float | None
    assumption_maxima: dict
    assumption_bounds: dict
    assumptions_ok: bool
    buffer_widths: dict

    def to_json_dict(self) -> dict:
        return {
            "run": self.run,
            "architecture": self.architecture,
            "status": self.status,
            "max_membership": self.max_membership,
            "t_entry": self.t_entry,
            "first_violation_t": self.first_violation_t,
            "assumption_maxima": self.assumption_maxima,
            "assumption_bounds": self.assumption_bounds,
            "assumptions_ok": self.assumptions_ok,
            "buffer_widths": self.buffer_widths,
        }


class FrameMismatchError(ValueError):
    """Trace columns do not carry the certified state labels."""


def verify_trace(
    trace: SimTrace, result: SdpResult, bounds: dict
) -> VerificationReport:
    """Recompute membership and assumption monitors for one trace."""
    ell = result.ellipsoid
    labels = ell.labels
    if labels is None:
        raise FrameMismatchError("certified set carries no state labels")
    missing = [l for l in labels if not trace.has_column(l)]
    if missing:
        raise FrameMismatchError(
            f"trace lacks certified state columns {missing}; refusing to "
            "reinterpret frames"
        )
    X = np.stack([trace.column(l) for l in labels], axis=1)
    m = ell.membership_values(X)
    t = trace.column("t")

    inside = m <= 1.0 + 1e-12
    t_entry = None
    if np.any(inside):
        entry_idx = int(np.argmax(inside))
        t_entry = float(t[entry_idx])
        violated = ~inside & (np.arange(len(m)) >= entry_idx)
    else:
        violated = np.ones_like(inside)
    first_violation_t = float(t[np.argmax(violated)]) if np.any(violated) else None

    gust = np.stack([trace.column(f"w_{c}") for c in "xyz"], axis=1)
    maxima = {
        "tilt_deg": float(np.max(trace.column("tilt_deg"))),
        "f_mps2": float(np.max(trace.column("f"))),
        "psid_rps": float(np.max(np.abs(trace.column("psid_sched")))),
        "psidd_rps2": float(np.max(np.abs(trace.column("psidd_sched")))),
        "gust_mps2": float(np.max(np.linalg.norm(gust, axis=1))),
    }
    limits = {
        "tilt_deg": bounds["delta_max_deg"],
        "f_mps2": bounds["f_max_mps2"],
        "psid_rps": bounds["psid_max_rps"],
        "psidd_rps2": bounds["psidd_max_rps2"],
        "gust_mps2": bounds["w_max_mps2"],
    }
    viol_times = []
    for key in maxima:
        sig = {
            "tilt_deg": trace.column("tilt_deg"),
            "f_mps2": trace.column("f"),
            "psid_rps": np.abs(trace.column("psid_sched")),
            "psidd_rps2": np.abs(trace.column("psidd_sched")),
            "gust_mps2": np.linalg.norm(gust, axis=1),
        }[key]
        over = sig > limits[key] + _BOUND_SLACK
        if np.any(over):
            viol_times.append(float(t[np.argmax(over)]))
    assumptions_ok = not viol_times
    first_assumption_t = min(viol_times) if viol_times else None

    if first_violation_t is None:
        status = "pass" if assumptions_ok else "assumptions_violated"
    else:
        prior_assumption = (
            first_assumption_t is not None
            and first_assumption_t <= first_violation_t
        )
        status = "assumptions_violated" if prior_assumption else "certificate_falsified"

    n = len(labels)
    widths = {labels[i]: axis_bound(ell, i) for i in range(n)}
    return VerificationReport(
        run=str(trace.meta.get("run", "")),
        architecture=str(trace.meta.get("architecture", "")),
        status=status,
        max_membership=float(np.max(m)),
        t_entry=t_entry,
        first_violation_t=first_violation_t,
        assumption_maxima=maxima,
        assumption_bounds=limits,
        assumptions_ok=assumptions_ok,
        buffer_widths=widths,
    )


def cmd_verify(
    cfg: ExperimentConfig,
    archs=None,
    fidelities=None,
    out_dir: str | None = None,
) -> tuple[list[VerificationReport], int]:
    """Check every configured trace against its certified set."""
    out = out_dir or cfg.out_dir
    fids = fidelities or [cfg.sim["fidelity"]]
    reports = []
    exit_code = EXIT_PASS
    for controller in cfg.controllers:
        arch = controller["architecture"]
        if archs and arch not in archs:
            continue
        set_path = os.path.join(out, "synth", arch, "ellipsoid_full.json")
        with open(set_path) as f:
            result = SdpResult.from_json(f.read())
        for fid in fids:
            path = _trace_path(out, arch, fid)
            trace = SimTrace.from_csv(path)
            trace.meta.update(architecture=arch, run=f"{arch}_{fid}")
            rep = verify_trace(trace, result, cfg.bounds)
            reports.append(rep)
            if rep.status == "certificate_falsified":
                exit_code = EXIT_CERTIFICATE_FALSIFIED
            elif rep.status == "assumptions_violated" and exit_code == EXIT_PASS:
                exit_code = EXIT_ASSUMPTIONS_VIOLATED
    _dump_json(
        os.path.join(out, "verify", "report.json"),
        [r.to_json_dict() for r in reports],
    )
    lines = []
    for r in reports:
        lines.append(
            f"{r.run}: {r.status} (max eTPe {r.max_membership:.4g}, "
            f"entry t {r.t_entry}, assumptions "
            f"{'ok' if r.assumptions_ok else 'VIOLATED'})"
        )
    atomic_write(os.path.join(out, "verify", "report.txt"), "\n".join(lines) + "\n")
    return reports, exit_code


# ---------------------------------------------------------------------------
# plot
# ---------------------------------------------------------------------------


def _load_proj(out: str, arch: str, name: str) -> Ellipsoid | None:
    path = os.path.join(out, "synth", arch, name)
    if not os.path.exists(path):
        return None
    with open(path) as f:
        return Ellipsoid.from_json_dict(json.load(f))


def cmd_plot(cfg: ExperimentConfig, out_dir: str | None = None) -> list[str]:
    """Emit figure SVGs plus their underlying CSV data."""
    out = out_dir or cfg.out_dir
    plot_dir = os.path.join(out, "plot")
    os.makedirs(plot_dir, exist_ok=True)
    written = []
    archs = [c["architecture"] for c in cfg.controllers]

    # Set projections onto per-axis position-velocity subspaces.
    fig = SvgFigure(title="RPI set projections (position-velocity)")
    csv_rows = ["arch,axis,e_p,e_v"]
    for ci, arch in enumerate(archs):
        for axis_name in ("x", "y"):
            proj = _load_proj(out, arch, f"ellipsoid_posvel_{axis_name}.json")
            if proj is None:
                continue
            pts = ellipse_outline(proj.P)
            fig.polyline(pts, color=PALETTE[ci % len(PALETTE)],
                         dash="4 3" if axis_name == "y" else "")
            csv_rows += [f"{arch},{axis_name},{p[0]:.17g},{p[1]:.17g}" for p in pts]
    path = os.path.join(plot_dir, "sets_posvel.svg")
    atomic_write(path, fig.render())
    atomic_write(os.path.join(plot_dir, "sets_posvel.csv"), "\n".join(csv_rows) + "\n")
    written += [path]

    # x-y path with heading ticks and projected position-ellipse snapshots.
    fid = cfg.sim["fidelity"]
    for ci, arch in enumerate(archs):
        trace_path = _trace_path(out, arch, fid)
        if not os.path.exists(trace_path):
            continue
        trace = SimTrace.from_csv(trace_path)
        fig = SvgFigure(title=f"x-y path with set snapshots ({arch})")
        rows = ["kind,snapshot_t,psi,x,y"]
        if trace.data.size:
            px, py = trace.column("p_x"), trace.column("p_y")
            fig.polyline(np.stack([px, py], axis=1), color="#444444", width=1.0)
            rows += [f"path,,,{x:.17g},{y:.17g}" for x, y in zip(px[::50], py[::50])]
            proj = _load_proj(out, arch, "ellipsoid_pos.json")
            if proj is not None:
                idx = np.linspace(0, len(px) - 1, 8).astype(int)
                # Horizontal block of the position projection.
                Pxy = np.linalg.inv(np.linalg.inv(proj.P)[:2, :2])
                outline = ellipse_outline(0.5 * (Pxy + Pxy.T))
                for k in idx:
                    psi = trace.column("psi_r")[k]
                    # Heading-frame sets rotate with the vehicle heading.
                    if arch == "ch":
                        c, s = np.cos(psi), np.sin(psi)
                        R = np.array([[c, -s], [s, c]])
                        o = outline @ R.T
                    else:
                        o = outline
                    center = np.array([px[k], py[k]])
                    fig.polyline(o + center, color=PALETTE[ci % len(PALETTE)], width=1.0)
                    rows += [
                        f"snapshot,{trace.column('t')[k]:.17g},{psi:.17g},"
                        f"{p[0]:.17g},{p[1]:.17g}"
                        for p in (o + center)
                    ]
                    tick = np.stack([center, center + 3.0 * np.array([np.cos(psi), np.sin(psi)])])
                    fig.polyline(tick, color="#999999", width=0.8)
        path = os.path.join(plot_dir, f"path_snapshots_{arch}.svg")
        atomic_write(path, fig.render())
        atomic_write(
            os.path.join(plot_dir, f"path_snapshots_{arch}.csv"), "\n".join(rows) + "\n"
        )
        written.append(path)

    # Error trajectories inside the position projections (horizontal plane).
    fig = SvgFigure(title="position errors vs certified sets")
    rows = ["arch,kind,x,y"]
    for ci, arch in enumerate(archs):
        proj = _load_proj(out, arch, "ellipsoid_pos.json")
        trace_path = _trace_path(out, arch, fid)
        color = PALETTE[ci % len(PALETTE)]
        if proj is not None:
            Pinv = np.linalg.inv(proj.P)
            Pxy = np.linalg.inv(Pinv[:2, :2])
            outline = ellipse_outline(0.5 * (Pxy + Pxy.T))
            fig.polyline(outline, color=color, width=1.8)
            rows += [f"{arch},set,{p[0]:.17g},{p[1]:.17g}" for p in outline]
        if os.path.exists(trace_path):
            trace = SimTrace.from_csv(trace_path)
            if trace.data.size:
                pre = "e_pH" if arch == "ch" else "e_p"
                ex = trace.column(f"{pre}_x")
                ey = trace.column(f"{pre}_y")
                fig.polyline(np.stack([ex, ey], axis=1), color=color, width=0.8)
                rows += [
                    f"{arch},error,{x:.17g},{y:.17g}" for x, y in zip(ex[::25], ey[::25])
                ]
    path = os.path.join(plot_dir, "errors_in_sets.svg")
    atomic_write(path, fig.render())
    atomic_write(os.path.join(plot_dir, "errors_in_sets.csv"), "\n".join(rows) + "\n")
    written.append(path)

    # Time series: heading-frame velocity, disturbance estimate, tilt, yaw error.
    rows = ["arch,t,v_hx,v_hy,dhat_x,dhat_y,tilt_deg,yaw_err_rad"]
    for arch in archs:
        trace_path = _trace_path(out, arch, fid)
        if not os.path.exists(trace_path):
            continue
        trace = SimTrace.from_csv(trace_path)
        if not trace.data.size:
            continue
        t = trace.column("t")
        psi_r = trace.column("psi_r")
        vx, vy = trace.column("v_x"), trace.column("v_y")
        v_hx = np.cos(psi_r) * vx + np.sin(psi_r) * vy
        v_hy = -np.sin(psi_r) * vx + np.cos(psi_r) * vy
        pre = "dhatH" if arch == "ch" else "dhat"
        dx = trace.column(f"{pre}_x")
        dy = trace.column(f"{pre}_y")
        yaw_err = trace.column("psi") - psi_r
        tilt = trace.column("tilt_deg")
        for k in range(0, len(t), 10):
            rows.append(
                f"{arch},{t[k]:.17g},{v_hx[k]:.17g},{v_hy[k]:.17g},"
                f"{dx[k]:.17g},{dy[k]:.17g},{tilt[k]:.17g},{yaw_err[k]:.17g}"
            )
    atomic_write(os.path.join(plot_dir, "timeseries.csv"), "\n".join(rows) + "\n")
    written.append(os.path.join(plot_dir, "timeseries.csv"))
    return written
