"""Configuration settings for tpms_etr.

Uses pydantic-settings for environment variable management.
- Every value has a default mirroring the module defaults
- A .env file in the working directory overrides the defaults
- CLI flags and --config files override both (see tpms_etr.cli)
"""

import logging
import sys
from functools import lru_cache
from typing import Any

from pydantic import ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from tpms_etr.models.reports import OptimizerConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Environment variables with descriptions, used in configuration error reports
SETTING_DESCRIPTIONS = {
    "SPLINE_DEGREE": "B-spline degree used on every axis (e.g., 3)",
    "LATTICE_DIMS": "Control coefficients per axis (e.g., 10)",
    "FIT_SAMPLES": "Samples per axis for half-unit fitting (e.g., 60)",
    "PERSISTENCE_GRID": "Vertices per axis of the 2x2x2-unit persistence grid (>= 2)",
    "MESH_RESOLUTION": "Samples per axis for marching tetrahedra (>= 8)",
    "SIMILARITY_WEIGHT": "Weight alpha of the similarity loss, in [0, 1]",
    "LEARNING_RATE": "Adaptive gradient step size (> 0)",
    "LOG_LEVEL": "Logging level name (DEBUG, INFO, WARNING, ERROR)",
}


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    # Run Settings
    LOG_LEVEL: str = "INFO"
    RANDOM_SEED: int = 0
    THREADS: int | None = None

    # Fitting Settings
    SPLINE_DEGREE: int = 3
    LATTICE_DIMS: int = 10
    FIT_SAMPLES: int = 60
    LSPIA_MAX_ITERS: int = 500
    LSPIA_TOL: float = 1e-6

    # Analysis Settings
    PERSISTENCE_GRID: int = 64
    MESH_RESOLUTION: int = 96
    FILTER_EPSILON: float = 0.1
    FILTER_SIGMA: int = 1

    # Optimizer Settings
    EXPANSION_RATIO: float = 0.5
    SIMILARITY_WEIGHT: float = 0.5
    LEARNING_RATE: float = 0.3
    OPTIMIZER_MAX_ITERS: int = 500
    CONVERGENCE_TOL: float = 1e-6
    CONVERGENCE_WINDOW: int = 5
    DIVERGENCE_FACTOR: float = 10.0
    INDICATOR_RESOLUTION: int = 60
    QUADRATURE_RESOLUTION: int = 48
    SIMILARITY_SAMPLES: int = 100_000

    @field_validator("SIMILARITY_WEIGHT")
    @classmethod
    def validate_weight(cls, v: float) -> float:
        """Validate that the similarity weight lies in [0, 1]."""
        if not 0.0 <= v <= 1.0:
            raise ValueError("SIMILARITY_WEIGHT must lie in [0, 1]")
        return v

    @field_validator("LEARNING_RATE", "LSPIA_TOL", "FILTER_EPSILON", "DIVERGENCE_FACTOR")
    @classmethod
    def validate_positive(cls, v: float) -> float:
        """Validate that rates and tolerances are strictly positive."""
        if v <= 0:
            raise ValueError("value must be positive")
        return v

    @field_validator("PERSISTENCE_GRID", "FIT_SAMPLES")
    @classmethod
    def validate_grid(cls, v: int) -> int:
        """Validate that sampling grids have at least two points per axis."""
        if v < 2:
            raise ValueError("grid needs at least 2 points per axis")
        return v

    @field_validator("MESH_RESOLUTION")
    @classmethod
    def validate_mesh_resolution(cls, v: int) -> int:
        """Validate that the density mesh is fine enough to be meaningful."""
        if v < 8:
            raise ValueError("MESH_RESOLUTION must be at least 8")
        return v

    @field_validator("LOG_LEVEL")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate the logging level name."""
        name = v.upper()
        if name not in logging._nameToLevel:  # getLevelNamesMapping() is 3.11+
            raise ValueError(f"unknown log level '{v}'")
        return name

    def optimizer_config(self, **overrides: Any) -> OptimizerConfig:
        """Build an OptimizerConfig from these settings.

        Args:
            **overrides: Field values replacing the settings-derived ones.

        Returns:
            The validated optimizer configuration.
        """
        values: dict[str, Any] = {
            "expansion_ratio": self.EXPANSION_RATIO,
            "weight": self.SIMILARITY_WEIGHT,
            "learning_rate": self.LEARNING_RATE,
            "max_iters": self.OPTIMIZER_MAX_ITERS,
            "convergence_tol": self.CONVERGENCE_TOL,
            "convergence_window": self.CONVERGENCE_WINDOW,
            "divergence_factor": self.DIVERGENCE_FACTOR,
            "persistence_grid": self.PERSISTENCE_GRID,
            "indicator_resolution": self.INDICATOR_RESOLUTION,
            "quadrature_resolution": self.QUADRATURE_RESOLUTION,
            "mesh_resolution": self.MESH_RESOLUTION,
            "epsilon": self.FILTER_EPSILON,
            "sigma": self.FILTER_SIGMA,
            "similarity_samples": self.SIMILARITY_SAMPLES,
            "seed": self.RANDOM_SEED,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return OptimizerConfig(**values)


def configure_logging(level: str = "INFO") -> None:
    """Install a single stream handler on the root logger.

    Args:
        level: Logging level name.
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())


def _log_configuration_error(errors: list[dict]) -> None:
    """Log a helpful error message for configuration errors."""
    logger.error("=" * 60)
    logger.error("CONFIGURATION ERROR: Invalid environment variables")
    logger.error("=" * 60)

    for error in errors:
        field = error["loc"][0] if error["loc"] else "unknown"
        msg = error.get("msg", "")
        logger.error(f"  - {field}: {msg}")
        desc = SETTING_DESCRIPTIONS.get(str(field))
        if desc:
            logger.error(f"    {desc}")

    logger.error("Fix the variable in the environment or in .env and retry.")
    logger.error("=" * 60)


def validate_settings() -> Settings:
    """Validate and load settings with helpful error messages.

    Returns:
        Settings instance if validation succeeds.

    Raises:
        SystemExit: If validation fails, exits with code 1.
    """
    try:
        return Settings()
    except ValidationError as e:
        _log_configuration_error(e.errors())
        sys.exit(1)


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance with validation."""
    return validate_settings()
