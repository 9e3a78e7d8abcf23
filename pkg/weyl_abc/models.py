from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import Annotated, List, Literal, Optional, Union
from enum import Enum


class Side(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def sign(self) -> int:
        """-1 on the right boundary, +1 on the left (the sign in front of sqrt(-lambda))."""
        return -1 if self is Side.RIGHT else 1


class RiccatiInit(str, Enum):
    FROZEN_COEFFICIENT = "frozen_coefficient"
    FREE_FIELD = "free_field"


class WeightMode(str, Enum):
    DK = "dk"
    DLAMBDA = "dlambda"


class BoundaryTimeLevel(str, Enum):
    AVERAGED = "averaged"
    IMPLICIT = "implicit"


class ConvolutionMode(str, Enum):
    FAST = "fast"
    DIRECT = "direct"


class ErrorReference(str, Enum):
    AUTO = "auto"
    EXACT = "exact"
    REFERENCE = "reference"
    NONE = "none"


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


# Potential models
class FreePotential(StrictModel):
    type: Literal["free"] = "free"


class ConstantPotential(StrictModel):
    type: Literal["constant"] = "constant"
    V0: float = 0.0


class HarmonicPotential(StrictModel):
    type: Literal["harmonic"] = "harmonic"


class BargmannPotential(StrictModel):
    type: Literal["bargmann"] = "bargmann"
    beta: float = Field(..., gt=0)
    gamma: float = Field(..., ge=0)


class CoulombLikePotential(StrictModel):
    type: Literal["coulomb_like"] = "coulomb_like"


class GaussianBarrierPotential(StrictModel):
    type: Literal["gaussian_barrier"] = "gaussian_barrier"
    height: float = 30.0
    width_coeff: float = 36.0
    center: float = 8.0


class TabulatedPotential(StrictModel):
    type: Literal["tabulated"] = "tabulated"
    x_nodes: List[float]
    values: List[float]
    extrapolation: Literal["constant"] = "constant"

    @model_validator(mode="after")
    def check_table(self) -> "TabulatedPotential":
        if len(self.x_nodes) != len(self.values):
            raise ValueError("x_nodes and values must have the same length")
        if len(self.x_nodes) < 2:
            raise ValueError("a tabulated potential needs at least two nodes")
        if any(b <= a for a, b in zip(self.x_nodes, self.x_nodes[1:])):
            raise ValueError("x_nodes must be strictly increasing")
        return self


Potential = Annotated[
    Union[
        FreePotential,
        ConstantPotential,
        HarmonicPotential,
        BargmannPotential,
        CoulombLikePotential,
        GaussianBarrierPotential,
        TabulatedPotential,
    ],
    Field(discriminator="type"),
]


# Run configuration sections
class DomainConfig(StrictModel):
    x_minus: float = -5.0
    x_plus: float = 5.0

    @model_validator(mode="after")
    def check_order(self) -> "DomainConfig":
        if not self.x_minus < self.x_plus:
            raise ValueError("x_minus must be smaller than x_plus")
        return self


class MeshConfig(StrictModel):
    order: int = Field(4, ge=1, le=16)
    elements: int = Field(256, gt=0)


class InitialCondition(StrictModel):
    type: Literal["gaussian_beam"] = "gaussian_beam"
    center: float = 0.0
    wavenumber: float = 4.0
    width: float = Field(1.0, gt=0)


class TimeConfig(StrictModel):
    dt: float = Field(1e-4, gt=0)
    T: float = Field(1.0, gt=0)
    snapshot_times: List[float] = Field(default_factory=lambda: [0.5, 0.6, 0.7, 0.8, 0.9])
    boundary_time_level: BoundaryTimeLevel = BoundaryTimeLevel.AVERAGED
    convolution: ConvolutionMode = ConvolutionMode.FAST
    soe_eps: float = Field(1e-10, gt=0)
    error_reference: ErrorReference = ErrorReference.AUTO
    error_stride: int = Field(100, gt=0)

    @model_validator(mode="after")
    def check_snapshots(self) -> "TimeConfig":
        for t in self.snapshot_times:
            if not 0 < t <= self.T:
                raise ValueError(f"snapshot time {t} outside (0, T]")
        return self


class FreqConfig(StrictModel):
    # None means sigma = 1/T
    sigma: Optional[float] = Field(1.0, gt=0)
    f_cutoff: float = Field(256.0, gt=0)
    n_quad: int = Field(8097, ge=3)
    filter_scale: float = Field(1.2, gt=0)
    filter_power: int = Field(20, gt=0)
    filter_enabled: bool = True
    # leading large-s terms of u_hat handled in closed form by the inverse transform
    asymptotic_terms: int = Field(2, ge=0, le=2)
    output_times: List[float] = Field(default_factory=lambda: [0.5, 0.6, 0.7, 0.8, 0.9])

    @field_validator("n_quad")
    @classmethod
    def check_odd(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError("n_quad must be odd for composite Simpson quadrature")
        return v

    @field_validator("filter_power")
    @classmethod
    def check_even(cls, v: int) -> int:
        if v % 2:
            raise ValueError("filter_power must be even")
        return v

    @field_validator("output_times")
    @classmethod
    def check_times(cls, v: List[float]) -> List[float]:
        if any(t <= 0 for t in v):
            raise ValueError("output times must be positive")
        return v

    def resolved_sigma(self, T: float) -> float:
        return self.sigma if self.sigma is not None else 1.0 / T


class RiccatiConfig(StrictModel):
    x_far: float = Field(200.0, gt=0, description="Magnitude; the sign is chosen per side")
    step: float = Field(1e-3, gt=0)
    init: RiccatiInit = RiccatiInit.FROZEN_COEFFICIENT
    prefer_closed_form: bool = True


class AbcConfig(StrictModel):
    eps0: float = Field(1e-8, gt=0)
    d_max: int = Field(40, ge=0)
    contour_points: int = Field(513, ge=3)
    sigma: float = Field(1.0, gt=0)
    f_cutoff: float = Field(256.0, gt=0)
    x_far: float = Field(200.0, gt=0)
    riccati_step: float = Field(1e-3, gt=0)
    init: RiccatiInit = RiccatiInit.FROZEN_COEFFICIENT
    prefer_closed_form: bool = True
    weight: WeightMode = WeightMode.DK
    real_coefficients: bool = True
    polish: bool = True
    max_iter: int = Field(20, gt=0)

    def riccati(self) -> RiccatiConfig:
        return RiccatiConfig(
            x_far=self.x_far,
            step=self.riccati_step,
            init=self.init,
            prefer_closed_form=self.prefer_closed_form,
        )


class ReferenceConfig(StrictModel):
    half_width: float = Field(50.0, gt=0)
    refinement: int = Field(10, ge=1)
    containment_tol: float = Field(1e-8, gt=0)


class OutputConfig(StrictModel):
    directory: str = "out"
    formats: List[Literal["csv", "json"]] = Field(default_factory=lambda: ["csv", "json"])


class RunConfig(StrictModel):
    potential: Potential = Field(default_factory=FreePotential)
    domain: DomainConfig = Field(default_factory=DomainConfig)
    mesh: MeshConfig = Field(default_factory=MeshConfig)
    initial: InitialCondition = Field(default_factory=InitialCondition)
    time: TimeConfig = Field(default_factory=TimeConfig)
    freq: FreqConfig = Field(default_factory=FreqConfig)
    abc: AbcConfig = Field(default_factory=AbcConfig)
    reference: ReferenceConfig = Field(default_factory=ReferenceConfig)
    outputs: OutputConfig = Field(default_factory=OutputConfig)

    @model_validator(mode="after")
    def check_sections(self) -> "RunConfig":
        if self.reference.half_width * 0.9 <= max(abs(self.domain.x_minus), abs(self.domain.x_plus)):
            raise ValueError("reference.half_width must exceed the interior domain by more than 10%")
        late = [t for t in self.freq.output_times if t > self.time.T]
        if late:
            raise ValueError(f"freq.output_times {late} lie beyond time.T = {self.time.T}")
        return self


# Response models
class ComplexValue(BaseModel):
    re: float
    im: float

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexValue":
        return cls(re=float(z.real), im=float(z.imag))


class RationalReport(BaseModel):
    side: Side
    degree: int
    eps: float
    eps0: float
    sigma: float
    f_cutoff: float
    poles: List[ComplexValue]
    residues: List[ComplexValue]
    herglotz_min_im: Optional[float] = None
    converged: bool = True
    warnings: List[str] = []


class MDiagnosticsReport(BaseModel):
    herglotz_violations: int = Field(..., alias="herglotzViolations")
    symmetry_residual: Optional[float] = Field(None, alias="symmetryResidual")
    min_im: float = Field(..., alias="minIm")

    model_config = ConfigDict(populate_by_name=True)


class ContourSampleOut(BaseModel):
    f: float
    side: Side
    lam: ComplexValue = Field(..., alias="lambda")
    m: ComplexValue

    model_config = ConfigDict(populate_by_name=True)


class ErrorSeries(BaseModel):
    times: List[float]
    rel_l2: List[float] = Field(..., alias="relL2")

    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def check_lengths(self) -> "ErrorSeries":
        if len(self.times) != len(self.rel_l2):
            raise ValueError("times and rel_l2 must have equal lengths")
        if any(e < 0 for e in self.rel_l2):
            raise ValueError("relative errors are non-negative")
        return self

    @property
    def max_error(self) -> Optional[float]:
        return max(self.rel_l2) if self.rel_l2 else None


class RunSummary(BaseModel):
    subcommand: str
    wall_time_sec: float = Field(..., alias="wallTimeSec")
    max_error: Optional[float] = Field(None, alias="maxError")
    pole_count: Optional[dict] = Field(None, alias="poleCount")
    flags: List[str] = []
    outputs: List[str] = []

    model_config = ConfigDict(populate_by_name=True)

    def one_line(self) -> str:
        parts = [self.subcommand, f"wall_time={self.wall_time_sec:.3f}s"]
        if self.max_error is not None:
            parts.append(f"max_error={self.max_error:.3e}")
        if self.pole_count:
            parts.append("poles=" + ",".join(f"{k}:{v}" for k, v in sorted(self.pole_count.items())))
        if self.flags:
            parts.append("flags=" + ",".join(self.flags))
        return " ".join(parts)


class ErrorResponse(BaseModel):
    error: str
    details: Optional[dict] = None
