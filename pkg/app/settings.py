from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        case_sensitive=False, frozen=True, env_file=".env", env_ignore_empty=True
    )

    log_level: str = "WARNING"
    # radial quadrature
    rel_tol: float = 1e-10
    max_evaluations: int = 1_000_000
    quad_limit: int = 200  # initial subdivision limit, doubled on retry
    # quasi-Monte-Carlo
    qmc_samples: int = 2**18
    qmc_replicates: int = 16
    seed: int = 20240101
    workers: int = 1


settings = Settings()
