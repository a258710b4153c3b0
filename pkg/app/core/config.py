from pydantic_settings import BaseSettings
from pydantic import ConfigDict
from functools import lru_cache
from pathlib import Path


class Settings(BaseSettings):
    app_name: str = "CBSF Group Recommender"
    app_version: str = "0.1.0"
    debug: bool = False
    environment: str = "development"  # development, staging, production

    # Logging goes to stderr; CSV reports own stdout
    log_level: str = "INFO"

    # Thread count for table builds, prediction rows and group evaluation
    workers: int = 1

    # Dataset and report locations (relative config paths resolve against data_dir)
    data_dir: str = "./data"
    output_dir: str = "./outputs"

    default_seed: int = 42

    # Run ledger
    run_audit_enabled: bool = True
    run_audit_database_url: str = "sqlite:///./cbsf_runs.db"

    model_config = ConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
    )

    @property
    def data_path(self) -> Path:
        return Path(self.data_dir)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)


@lru_cache
def get_settings() -> Settings:
    return Settings()
