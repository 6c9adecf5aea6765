"""
Central configuration for the CertiPGO backend.
"""
import os
from typing import Dict
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


class Settings:
    """Application settings and numerical constants."""

    # Application Info
    APP_NAME: str = os.getenv("APP_NAME", "CertiPGO")
    APP_VERSION: str = os.getenv("APP_VERSION", "1.0.0")
    LOG_LEVEL: str = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE: str = os.getenv("LOG_FILE", "")

    # Graph conventions
    ROBOT_ID_STRIDE: int = int(os.getenv("ROBOT_ID_STRIDE", "100000"))
    ROTATION_TOL: float = float(os.getenv("ROTATION_TOL", "1e-9"))
    QUATERNION_NORM_TOL: float = float(os.getenv("QUATERNION_NORM_TOL", "1e-3"))
    WEIGHT_EPSILON: float = float(os.getenv("WEIGHT_EPSILON", "1e-8"))

    # Output precision
    G2O_DIGITS: int = int(os.getenv("G2O_DIGITS", "17"))
    TUM_DIGITS: int = int(os.getenv("TUM_DIGITS", "9"))

    # Block solver
    ARMIJO_C: float = float(os.getenv("ARMIJO_C", "1e-4"))
    MAX_BACKTRACKS: int = int(os.getenv("MAX_BACKTRACKS", "40"))
    CG_MAX_ITERS: int = int(os.getenv("CG_MAX_ITERS", "200"))
    PRECONDITIONER_SHIFT_REL: float = float(os.getenv("PRECONDITIONER_SHIFT_REL", "1e-6"))
    POWER_ITERATIONS: int = int(os.getenv("POWER_ITERATIONS", "60"))

    # Certification
    CERTIFICATE_TOL_REL: float = float(os.getenv("CERTIFICATE_TOL_REL", "1e-6"))
    STATIONARITY_TOL_REL: float = float(os.getenv("STATIONARITY_TOL_REL", "1e-5"))
    DENSE_EIGEN_MAX_DIM: int = int(os.getenv("DENSE_EIGEN_MAX_DIM", "1200"))
    RANK_COLLAPSE_TOL: float = float(os.getenv("RANK_COLLAPSE_TOL", "1e-12"))

    # Gauss-Newton baseline
    GN_MAX_ITERS: int = int(os.getenv("GN_MAX_ITERS", "100"))
    GN_INITIAL_DAMPING: float = float(os.getenv("GN_INITIAL_DAMPING", "1e-4"))
    GN_MAX_DAMPING: float = float(os.getenv("GN_MAX_DAMPING", "1e10"))
    GN_GRAD_TOL_REL: float = float(os.getenv("GN_GRAD_TOL_REL", "1e-8"))

    # Network simulation
    RETRANSMIT_TIMEOUT_TICKS: int = int(os.getenv("RETRANSMIT_TIMEOUT_TICKS", "3"))
    BYTES_PER_ENTRY: int = int(os.getenv("BYTES_PER_ENTRY", "8"))

    # CLI exit codes
    EXIT_CODES: Dict[str, int] = {
        "success": 0,
        "input_error": 2,
        "uncertified": 3,
    }

    @classmethod
    def validate_config(cls) -> bool:
        """Validate that numerical configuration is consistent."""
        positive_keys = [
            "ROBOT_ID_STRIDE", "ROTATION_TOL", "QUATERNION_NORM_TOL", "WEIGHT_EPSILON",
            "CERTIFICATE_TOL_REL", "STATIONARITY_TOL_REL", "RETRANSMIT_TIMEOUT_TICKS",
            "BYTES_PER_ENTRY", "GN_INITIAL_DAMPING", "GN_MAX_DAMPING",
        ]
        bad_keys = [key for key in positive_keys if not getattr(cls, key) > 0]

        if bad_keys:
            raise ValueError(f"Configuration values must be positive: {bad_keys}")
        if not 0 < cls.ARMIJO_C < 1:
            raise ValueError("ARMIJO_C must lie in (0, 1)")

        return True


# Global settings instance
settings = Settings()
