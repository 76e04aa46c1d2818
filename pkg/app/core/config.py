from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # Mittag-Leffler evaluation
    ML_SERIES_RADIUS: float = Field(default=5.0, gt=0)
    ML_SERIES_TAIL_TOL: float = Field(default=1e-14, gt=0)
    ML_SERIES_MAX_TERMS: int = Field(default=1_000_000, gt=0)
    ML_EXTENDED_RADIUS: float = Field(default=60.0, gt=0)
    ML_SERIES_MAX_DPS: int = Field(default=3000, ge=50)
    ML_INTEGRAL_TOL: float = Field(default=1e-8, gt=0)
    ML_QUAD_MAX_DEPTH: int = Field(default=40, gt=0)
    ML_MAX_DERIV: int = Field(default=6, ge=0)

    # Laplace transforms
    TALBOT_NODES: int = Field(default=48, ge=16)
    LAPLACE_TOL: float = Field(default=1e-10, gt=0)

    # Time stepping
    L1_MAX_STEPS: int = Field(default=2**14, ge=2)
    L1_CORRECTION_GAIN_MAX: float = Field(default=0.5, ge=0)
    DUHAMEL_QUAD_STEPS: int = Field(default=512, ge=8)

    # Parametrix
    SG_MAX_J: int = Field(default=3, ge=0)

    THREADS: int = Field(default=1, ge=1)
    OUTPUT_DIR: str = Field(default="out")
    LOG_LEVEL: str = Field(default="INFO")
    LOG_FILE: str | None = Field(default=None)

    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="FRACLAB_", extra="ignore"
    )


settings = Settings()
