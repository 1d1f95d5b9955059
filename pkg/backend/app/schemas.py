import math
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

STATE_NAMES = (
    "X", "Y", "Z", "theta_x", "theta_z",
    "X_dot", "Y_dot", "Z_dot", "theta_x_dot", "theta_z_dot",
)


class TireConstants(BaseModel):
    """Magic-formula constants (units as used by the formula chain, slip in degrees, load in kN)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    c_t: float = 1.30
    delta_sh: float = 0.0
    a1: float = -22.1
    a2: float = 1011.0
    a3: float = 1078.0
    a4: float = 1.82
    a5: float = 0.208
    a6: float = 0.0
    a7: float = -0.354
    a8: float = 0.707


class VehicleConfig(BaseModel):
    """Physical, tire and limit parameters of the roll model. Defaults describe the reference passenger car."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    mass: float = Field(1400.0, gt=0)            # M, kg
    track: float = Field(1.5, gt=0)              # T, m
    stiffness: float = Field(30000.0, gt=0)      # K, kg/s^2
    damping: float = Field(4000.0, gt=0)         # C, kg/s
    inertia_xx: float = Field(1300.0, gt=0)      # I_XX, kg m^2
    inertia_zz: float = Field(4000.0, gt=0)      # I_ZZ, kg m^2
    cg_to_front: float = Field(1.4, gt=0)        # a, m
    cg_to_rear: float = Field(1.5, gt=0)         # b, m
    gravity: float = Field(9.8, gt=0)            # g, m/s^2
    friction: float = Field(1.3, gt=0, le=2)     # mu
    cg_height: float = Field(0.7, gt=0)          # h, m
    z0: Optional[float] = None                   # Z0, m; defaults to cg_height
    z_min: float = 0.5
    z_max: float = 0.9
    f_max: float = Field(10000.0, gt=0)          # N
    initial_speed: float = 200.0 / 9.0           # X_dot(0), m/s
    speed_eps: float = Field(1e-6, gt=0)         # degenerate-speed threshold, m/s
    height_eps: float = Field(1e-3, gt=0)        # geometric-singularity threshold on Z, m
    tire: TireConstants = TireConstants()

    @model_validator(mode="before")
    @classmethod
    def _default_z0(cls, data):
        if isinstance(data, dict) and data.get("z0") is None:
            data = dict(data)
            data["z0"] = data.get("cg_height", 0.7)
        return data

    @model_validator(mode="after")
    def _check_travel(self):
        if not (self.z_min < self.z0 < self.z_max):
            raise ValueError(f"travel limits must bracket Z0: {self.z_min} < {self.z0} < {self.z_max} violated")
        return self

    @property
    def r_x(self) -> np.ndarray:
        """Longitudinal wheel offsets r_X1..r_X4"""
        return np.array([self.cg_to_front, self.cg_to_front, -self.cg_to_rear, -self.cg_to_rear])

    @property
    def r_y(self) -> np.ndarray:
        """Lateral wheel offsets r_Y1..r_Y4 (left wheels 1, 3 at +T/2)"""
        half = self.track / 2.0
        return np.array([half, -half, half, -half])

    @property
    def static_loads(self) -> np.ndarray:
        """Static vertical share per wheel, front b/(2(a+b))Mg, rear a/(2(a+b))Mg"""
        weight = self.mass * self.gravity
        wheelbase = self.cg_to_front + self.cg_to_rear
        front = self.cg_to_rear / (2.0 * wheelbase) * weight
        rear = self.cg_to_front / (2.0 * wheelbase) * weight
        return np.array([front, front, rear, rear])


class VehicleState(BaseModel):
    """10-component first-order state in canonical order"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    X: float = 0.0
    Y: float = 0.0
    Z: float = 0.7
    theta_x: float = 0.0
    theta_z: float = 0.0
    X_dot: float = 0.0
    Y_dot: float = 0.0
    Z_dot: float = 0.0
    theta_x_dot: float = 0.0
    theta_z_dot: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        values = self.to_array()
        if not np.all(np.isfinite(values)):
            raise ValueError("state components must be finite")
        if abs(self.theta_x) >= math.pi / 2:
            raise ValueError("|theta_x| must stay below pi/2")
        return self

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in STATE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values) -> "VehicleState":
        return cls(**{name: float(v) for name, v in zip(STATE_NAMES, values)})


class ControlInput(BaseModel):
    """Active suspension forces (N)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    f_left: float = 0.0
    f_right: float = 0.0

    def to_array(self) -> np.ndarray:
        return np.array([self.f_left, self.f_right], dtype=float)


class WheelLoads(BaseModel):
    """Vertical reactions and lateral tire forces per wheel (N)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    fz: Tuple[float, float, float, float]
    fy: Tuple[float, float, float, float]


class PhiCoefficients(BaseModel):
    """Gains of F_l = phi1 theta_x + phi2 theta_x_dot + phi3 theta_z_dot + phi4 (Z - Z0) + phi5 Z_dot"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    phi1: float = 0.0
    phi2: float = 0.0
    phi3: float = 0.0
    phi4: float = 0.0
    phi5: float = 0.0

    @field_validator("*")
    @classmethod
    def _finite(cls, value):
        if not math.isfinite(value):
            raise ValueError("phi coefficients must be finite")
        return value

    def to_array(self) -> np.ndarray:
        return np.array([self.phi1, self.phi2, self.phi3, self.phi4, self.phi5], dtype=float)

    @classmethod
    def from_array(cls, values) -> "PhiCoefficients":
        values = [float(v) for v in values]
        return cls(phi1=values[0], phi2=values[1], phi3=values[2], phi4=values[3], phi5=values[4])


# Run configuration sections


class SimulationSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t0: float = 0.0
    tf: float = 1.5
    n_nodes: int = Field(151, ge=2)
    rho: float = Field(0.5, ge=0.0, lt=1.0)

    @model_validator(mode="after")
    def _check_interval(self):
        if self.tf <= self.t0:
            raise ValueError("tf must be greater than t0")
        return self


class FishhookParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    start: float = Field(0.1, ge=0)
    ramp_time: float = Field(0.25, gt=0)
    peak_deg: float = 6.0
    dwell: float = Field(0.25, ge=0)
    reversal_time: float = Field(0.3, gt=0)
    reverse_deg: float = -6.0
    hold: Optional[float] = Field(None, gt=0)       # counter-steer hold before returning to center; None holds to the end
    recovery_time: float = Field(0.3, gt=0)


class SteeringSection(BaseModel):
    """Exactly one of profile / breakpoints / fishhook is used (breakpoints first, then fishhook, then profile)"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    profile: Optional[str] = "fishhook"
    breakpoints: Optional[List[Tuple[float, float]]] = None
    fishhook: Optional[FishhookParams] = None


class InitialGuess(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["zero", "constant", "antisymmetric", "trajectory"] = "zero"
    value: float = 1000.0
    path: Optional[str] = None

    @model_validator(mode="after")
    def _check_path(self):
        if self.kind == "trajectory" and not self.path:
            raise ValueError("initial guess of kind 'trajectory' needs a path")
        return self


class ScenarioConfig(BaseModel):
    """Constraint/force mode axes and the initial guess of one transcription run"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    constraint_mode: Literal["disjunctive", "conservative"] = "disjunctive"
    force_mode: Literal["free", "anti-symmetric", "phi-parameterized", "phi3-only"] = "free"
    initial_guess: InitialGuess = InitialGuess()
    phi_guess: Tuple[float, float, float, float, float] = (0.0, 0.0, 0.0, 0.0, 0.0)
    phi_bound: float = Field(1.0e5, gt=0)
    tire_smoothing: Optional[float] = Field(50.0, gt=0)

    @property
    def uses_phi(self) -> bool:
        return self.force_mode in ("phi-parameterized", "phi3-only")

    @property
    def antisymmetric(self) -> bool:
        return self.force_mode != "free"


class SolverOptions(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    engine: str = "sqp"
    kkt_tol: float = Field(1e-4, gt=0)
    feas_tol: float = Field(1e-6, gt=0)
    max_iter: int = Field(500, ge=1)


class OutputSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    directory: str = "results"
    formats: List[Literal["csv", "json", "plot"]] = ["csv", "json", "plot"]


class ValidationSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    phi3: Optional[float] = -4796.2
    phi3_conservative: Optional[float] = -4761.2
    lookup_table: Optional[str] = None
    lookup_key: Optional[float] = None
    profiles: List[str] = ["fishhook", "fishhook_fast", "fishhook_severe"]
    integrator: Literal["alpha", "rk4"] = "alpha"
    step: float = Field(1e-3, gt=0)
    tolerance: float = Field(1e-6, ge=0)


class SweepSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    profile: str = "fishhook"
    parameter: str = "peak_deg"
    values: List[float] = [5.0, 6.0, 7.0]
    mirror_reverse: bool = True
    parallelism: int = Field(1, ge=1)

    @field_validator("values")
    @classmethod
    def _non_empty(cls, values):
        if not values:
            raise ValueError("sweep grid is empty")
        return values


class AnalysisSection(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    theta_cap: float = Field(0.35, gt=0)
    trajectory: Optional[str] = None


class RunConfig(BaseModel):
    """One config file describes one run"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    vehicle: VehicleConfig = VehicleConfig()
    simulation: SimulationSection = SimulationSection()
    steering: SteeringSection = SteeringSection()
    scenario: ScenarioConfig = ScenarioConfig()
    solver: SolverOptions = SolverOptions()
    output: OutputSection = OutputSection()
    validation: ValidationSection = ValidationSection()
    sweep: SweepSection = SweepSection()
    analysis: AnalysisSection = AnalysisSection()
    seed: int = 0


class SolveReport(BaseModel):
    """Outcome of one NLP solve"""

    status: Literal["converged", "max-iterations", "infeasible", "evaluation-failure"]
    iterations: int = 0
    stationarity: float = float("inf")
    feasibility: float = float("inf")
    complementarity: float = float("inf")
    objective: float = float("nan")
    message: str = ""
    engine: str = "sqp"
    merit_history: List[Tuple[float, float]] = []

    @property
    def converged(self) -> bool:
        return self.status == "converged"
