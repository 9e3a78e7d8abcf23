from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="WEYL_ABC_",
        case_sensitive=False,
        extra="ignore",
    )

    # App settings
    app_name: str = "Weyl ABC Schrodinger Solver"
    debug: bool = False
    log_level: str = "INFO"

    # Execution
    threads: int = 1
    output_dir: str = "out"

    # Frequency method: frequencies per reduction block, and the share of
    # failed per-frequency solves that aborts a run
    freq_chunk_size: int = 64
    max_failure_ratio: float = 1e-3


@lru_cache()
def get_settings() -> Settings:
    return Settings()
