"""Project configuration system.

Settings are loaded from environment variables (prefix ``CKFF_``) and,
optionally, a ``.env`` file in the working directory.

Example .env
------------
CKFF_DEFAULT_TOL_REL=1e-8
CKFF_SUITE_INSTANCES=20
CKFF_SUITE_WORKERS=4
"""

from __future__ import annotations

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

from kfusion_lab.models import Tolerance


class Settings(BaseSettings):
    """Application settings.

    All fields can be overridden via environment variables with the
    ``CKFF_`` prefix (case-insensitive), e.g. ``CKFF_DEFAULT_TOL_REL=1e-8``.
    Malformed values raise a ``ValidationError``; nothing falls back
    silently to the default.
    """

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        env_prefix="CKFF_",
        case_sensitive=False,
        extra="ignore",
    )

    # --- Tolerance policy ---------------------------------------------
    default_tol_rel: float = Field(
        default=1e-9,
        gt=0,
        allow_inf_nan=False,
        description="Relative threshold of the tolerance scale (CKFF_DEFAULT_TOL_REL).",
    )

    default_tol_abs: float = Field(
        default=1e-12,
        ge=0,
        allow_inf_nan=False,
        description="Absolute floor of the tolerance scale (CKFF_DEFAULT_TOL_ABS).",
    )

    # --- Randomized checks --------------------------------------------
    default_seed: int = Field(
        default=0,
        ge=0,
        description="Seed used when a command is given no --seed.",
    )

    verify_trials: int = Field(
        default=10_000,
        ge=1,
        description="Unit vectors sampled by the definition check.",
    )

    # --- Theorem suite ------------------------------------------------
    suite_instances: int = Field(
        default=100,
        ge=0,
        description="Instances generated per theorem by the suite.",
    )

    suite_max_dim: int = Field(
        default=6,
        ge=2,
        description="Largest ambient dimension drawn by the suite.",
    )

    suite_workers: int = Field(
        default=1,
        ge=1,
        description="Worker threads evaluating suite instances.",
    )

    def tolerance(self) -> Tolerance:
        """Return the :class:`Tolerance` described by the two tolerance fields."""
        return Tolerance(rel=self.default_tol_rel, abs=self.default_tol_abs)


# ---------------------------------------------------------------------------
# Module-level singleton with lazy initialisation
# ---------------------------------------------------------------------------

_settings: Settings | None = None


def get_settings() -> Settings:
    """Return the application-wide Settings singleton.

    Instantiated lazily on first call so that tests can patch environment
    variables before the object is constructed.
    """
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


def reset_settings() -> None:
    """Discard the cached singleton.

    Intended for use in tests that need to vary environment variables
    between test cases.
    """
    global _settings
    _settings = None
