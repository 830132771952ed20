from functools import lru_cache

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Engine settings loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore"
    )

    # Application
    APP_NAME: str = "wildgrad"
    APP_ENV: str = "development"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"  # DEBUG, INFO, WARNING, ERROR

    # Concurrency
    WILDGRAD_THREADS: int = Field(default=4, ge=1, description="Worker cap for per-cube work")

    # Scenario tolerances
    GRAPH_TOL: float = Field(default=1e-8, gt=0, le=1e-4)
    DECOMPOSE_STARTS: int = Field(default=32, ge=1)
    DECOMPOSE_TOL: float = 1e-9
    SOLVER_TOL: float = 1e-8

    # Construction caps
    PERIOD_CAP: int = 2**20  # oscillation count per block side
    SLAB_PERIOD_CAP: int = 2**22  # periods summed in exact slab volumes
    COVER_DEPTH: int = 12  # dyadic subdivision depth

    # Verification
    MC_SAMPLES: int = 4096
    VERIFY_SAMPLES: int = 512
    DEFAULT_SEED: int = 42
    SAFETY_FACTOR: float = Field(default=0.5, gt=0, le=1)

    @field_validator("LOG_LEVEL")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        return value.upper()


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


config = get_settings()
