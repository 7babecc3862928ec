"""Configuration module using Pydantic Settings."""

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables."""

    # Logging
    SPECMINE_LOG: str = "INFO"
    SPECMINE_LOG_FILE: str = ""  # Empty disables the file sink
    SPECMINE_LOG_ROTATION: str = "10 MB"
    SPECMINE_LOG_RETENTION: str = "14 days"

    # Randomness
    SPECMINE_SEED: int = 0

    # Run ledger (SQLAlchemy URL, e.g. sqlite:///./data/runs.db)
    SPECMINE_LEDGER_URL: str = ""

    # Sentence generation
    SPECMINE_MAX_SENTENCES: int = 10000
    SPECMINE_MIN_COVERAGE: int = 20
    SPECMINE_MAX_LEN_FACTOR: int = 2

    # Decision procedure and refinement limits
    SPECMINE_MAX_CONJUNCTS: int = 4096
    SPECMINE_MAX_CONJUNCT_ATOMS: int = 64
    SPECMINE_MAX_PRED_DISJUNCTS: int = 256
    SPECMINE_MAX_PATHS: int = 100000

    # Invariant templates
    SPECMINE_MAX_CONSTANTS: int = 20

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore"
    )


# Global settings instance
settings = Settings()
