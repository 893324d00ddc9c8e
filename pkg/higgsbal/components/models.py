"""Models used to validate and structure run configurations and reports."""

from fractions import Fraction
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from higgsbal.config import (
    BURN_IN_STEPS,
    DEFAULT_ELL,
    DEFAULT_MAX_ITER,
    DEFAULT_SEED,
    DEFAULT_TOL,
    DEGENERATION_THRESHOLD,
    SCHEMA_VERSION,
)
from higgsbal.core.model import HiggsInstance
from higgsbal.validation import (
    ConfigValidationError,
    key_position,
    parse_level_range,
    parse_orders,
    parse_rational,
    read_json,
)

Check = Literal["bergman", "expansion", "hitchin", "hormander", "weakly_geometric"]
ALL_CHECKS: tuple[Check, ...] = ("bergman", "expansion", "hitchin", "hormander", "weakly_geometric")
HIGGS_CHECKS: frozenset[str] = frozenset({"expansion", "hitchin", "hormander", "weakly_geometric"})

Coefficient = float | str


def _to_complex(value: Coefficient) -> complex:
    """Coefficients are real numbers or strings such as "1+2j"."""
    return complex(str(value).replace(" ", "")) if isinstance(value, str) else complex(value)


class InstancePayload(BaseModel):
    """Payload model for a twisted Higgs bundle on the projective line."""

    model_config = ConfigDict(extra="forbid")

    twist_degree: int = Field(ge=0)
    bundle_degrees: list[int] = Field(min_length=1)
    # Entry [i][j] lists the coefficients of phi_ij in ascending powers of z.
    phi: list[list[list[Coefficient] | Coefficient]] | None = None
    label: str = ""

    @field_validator("phi")
    @classmethod
    def check_coefficients(cls, value):
        """Rejects coefficients that do not parse as complex numbers."""
        for row in value or []:
            for entry in row:
                for coefficient in entry if isinstance(entry, list) else [entry]:
                    try:
                        _to_complex(coefficient)
                    except ValueError as e:
                        raise ValueError(f"'{coefficient}' is not a complex number") from e
        return value

    def to_instance(self) -> HiggsInstance:
        """Builds the (unvalidated) library instance.

        Returns:
            HiggsInstance: The instance.
        """
        phi = None
        if self.phi is not None:
            phi = [
                [
                    (
                        [_to_complex(c) for c in entry]
                        if isinstance(entry, list)
                        else _to_complex(entry)
                    )
                    for entry in row
                ]
                for row in self.phi
            ]
        return HiggsInstance.build(self.twist_degree, self.bundle_degrees, phi, self.label)


class OneParamPayload(BaseModel):
    """Payload model for a one-parameter subgroup.

    Either explicit integer weights on the monomial basis or the one-based summands of a
    summand subsheaf F are given.
    """

    model_config = ConfigDict(extra="forbid")

    weights: list[int] | None = None
    subsheaf_summands: list[int] | None = None
    k: int | None = None
    special_linear: bool = True

    @model_validator(mode="after")
    def check_exclusive(self) -> "OneParamPayload":
        """Exactly one of weights and subsheaf_summands must be set."""
        if (self.weights is None) == (self.subsheaf_summands is None):
            raise ValueError("Give exactly one of 'weights' and 'subsheaf_summands'")
        if self.subsheaf_summands is not None and min(self.subsheaf_summands, default=1) < 1:
            raise ValueError("Summands are numbered from 1")
        return self

    def zero_based(self) -> list[int] | None:
        """The subsheaf summands as library indices."""
        if self.subsheaf_summands is None:
            return None
        return [s - 1 for s in self.subsheaf_summands]


class RunConfig(BaseModel):
    """Run configuration loaded from JSON and overridden by command line flags."""

    model_config = ConfigDict(extra="forbid")

    instance: InstancePayload
    k: int | None = None
    k_range: str | None = None
    ell: str | int | float = DEFAULT_ELL
    quadrature: str | None = None
    tol: float = Field(default=DEFAULT_TOL, gt=0)
    max_iter: int = Field(default=DEFAULT_MAX_ITER, ge=0)
    degeneration_threshold: float = Field(default=DEGENERATION_THRESHOLD, gt=1)
    burn_in: int = Field(default=BURN_IN_STEPS, ge=0)
    seed: int = DEFAULT_SEED
    out: str = "out"
    one_param: OneParamPayload | None = None
    checks: list[Check] = Field(default_factory=lambda: list(ALL_CHECKS))
    expansion_order: int = Field(default=1, ge=0, le=6)
    t_steps: int = Field(default=1, ge=0)
    bergman_metric: Literal["reference", "conformal"] = "reference"
    metric_amplitude: float = 0.5

    @field_validator("k_range")
    @classmethod
    def check_k_range(cls, value):
        """The level range must read A:B."""
        if value is not None:
            try:
                parse_level_range(value)
            except ConfigValidationError as e:
                raise ValueError(str(e)) from e
        return value

    @field_validator("quadrature")
    @classmethod
    def check_quadrature(cls, value):
        """Quadrature orders must read NPOLAR:NAZ."""
        if value is not None:
            try:
                parse_orders(value)
            except ConfigValidationError as e:
                raise ValueError(str(e)) from e
        return value

    @field_validator("ell")
    @classmethod
    def check_ell(cls, value):
        """l must be a positive rational."""
        try:
            parse_rational(value)
        except ConfigValidationError as e:
            raise ValueError(str(e)) from e
        return value

    @property
    def ell_fraction(self) -> Fraction:
        """l as an exact fraction."""
        return parse_rational(self.ell)

    @property
    def levels(self) -> list[int]:
        """Levels of the sweep, the single level k when no range is set."""
        if self.k_range is not None:
            return parse_level_range(self.k_range)
        return [self.k] if self.k is not None else []

    @property
    def orders(self) -> tuple[int, int] | None:
        """Quadrature orders, None for the per-level defaults."""
        return parse_orders(self.quadrature) if self.quadrature is not None else None

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        """Loads a configuration file.

        Arguments:
            path (str | Path): The JSON file.

        Returns:
            RunConfig: The validated configuration.

        Raises:
            ConfigValidationError: With a file:line:column message on any problem.
        """
        data, text = read_json(path)
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            error = e.errors()[0]
            line, column = key_position(text, tuple(error["loc"]))
            location = ".".join(str(part) for part in error["loc"])
            raise ConfigValidationError(
                f"{Path(path).name}:{line}:{column}: {location}: {error['msg']}"
            ) from e


class RunTiming(BaseModel):
    """Wall clock information kept out of the deterministic report."""

    started: int
    finished: int
    elapsed: float
    per_level: dict[str, float] = Field(default_factory=dict)


class RunReport(BaseModel):
    """Schema-versioned result of a command."""

    schema_version: str = SCHEMA_VERSION
    command: Literal["balance", "weight", "asymptotics", "validate"]
    version: str
    config: dict[str, Any]
    results: dict[str, Any] = Field(default_factory=dict)
    verdicts: dict[str, str] = Field(default_factory=dict)
    exit_code: int = 0
