import os
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

class Settings(BaseSettings):
    # Application Settings
    APP_NAME: str = "helmstab"
    VERSION: str = "0.1.0"
    DEBUG: bool = os.getenv("DEBUG", "False").lower() in ("true", "1", "t")

    # Logging Configuration
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")

    # Worker pool
    HELMSTAB_THREADS: int = int(os.getenv("HELMSTAB_THREADS", str(os.cpu_count() or 1)))

    # Output
    OUTPUT_DIR: str = os.getenv("HELMSTAB_OUTPUT_DIR", "runs")

    # Forward solver
    CONDITION_CAP: float = 1e12
    NEAR_SINGULAR_GAP: float = 1e-3
    GMRES_TOL: float = 1e-10
    GMRES_MAX_ITER: int = 2000
    DIRECT_SOLVER_MAX_N: int = 129  # n = 2 only; n = 3 always goes iterative

    # Boundary projection
    TAIL_FRACTION: float = 0.10
    CGO_TAIL_FRACTION: float = 0.50  # hard limit for CGO traces; tails past TAIL_FRACTION are logged

    # Faddeev solver / fixed point
    SYMBOL_TAU: float = 1e-3
    SYMBOL_SHELL_FRACTION: float = 0.02
    FIXED_POINT_TOL: float = 1e-10
    FIXED_POINT_MAX_ITER: int = 200

    # Reconstruction
    MAX_RADIUS: float = float(os.getenv("HELMSTAB_MAX_RADIUS", "24"))

    class Config:
        env_file = ".env"
        case_sensitive = True

# Create settings instance
settings = Settings()

if settings.HELMSTAB_THREADS < 1:
    raise ValueError("HELMSTAB_THREADS must be a positive integer")
