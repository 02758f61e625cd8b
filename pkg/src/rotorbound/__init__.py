"""Certified trajectory-tracking error bounds for autonomous helicopters.

Builds the flatness-based tracking stack (reference trajectories,
feedforward, attitude interface, three outer-loop architectures with a
disturbance observer), casts the closed-loop error dynamics into
polytopic disturbance systems, computes ellipsoidal robust positive
invariant sets by semidefinite programming, and validates the certified
bounds in nonlinear closed-loop simulation.
"""

from .attitude import (
    AttitudeRefModel,
    AttitudeRefState,
    accel_to_attitude,
    invert_reference_model,
    step_attitude_reference,
    yaw_channel_inversion,
)
from .control import (
    ARCHITECTURES,
    TABLE_GAINS,
    ControllerState,
    GainSet,
    control_cg,
    control_cgh,
    control_ch,
    feedforward_nu,
    yaw_control,
)
from .errorsys import (
    ErrorSystemSpec,
    attitude_disturbance_bound,
    build_error_system,
    closed_loop_vector_field,
    drag_split,
)
from .flatness import (
    DEFAULT_DRAG,
    DragModel,
    FlatnessOutput,
    feedforward_signals,
    flatness_output,
    reference_attitude,
    reference_rates,
)
from .invariant import (
    DegenerateSystemError,
    Ellipsoid,
    NoRpiFoundError,
    NonHurwitzVertexError,
    PolytopicErrorSystem,
    SdpResult,
    assemble_lmi_block,
    axis_bound,
    project_ellipsoid,
    solve_rpi,
    worst_case_vdot,
)
from .plant import InjectionConfig, PlantState, WindModel, sample_wind, step_plant_A, step_plant_B
from .sim import SimSetup, SimTrace, run_lpv_cosim, run_simulation
from .trajectory import (
    HoverTrajectory,
    LoiterSpec,
    LoiterTrajectory,
    ReferenceSample,
    StraightLineTrajectory,
    eval_loiter,
    yaw_from_velocity,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
