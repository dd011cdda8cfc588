"""
Configuration for the query engine, loaded from the environment
"""
import os
from dataclasses import dataclass
from dotenv import load_dotenv


@dataclass
class Config:
    log_level: str = "INFO"
    seed: int = 0
    threads: int = 1
    treewidth_exact_limit: int = 25
    search_limit: int = 30
    cover_bound: float = 2.0
    vertex_cover_bound: int = 2
    augment_treewidth: int = 1
    augment_domain_limit: int = 400
    listcolor_treewidth: int = 3
    colorcode_reps: int = 0
    colorcode_failure: float = 0.01
    exhaustive_domain_limit: int = 8
    output_directory: str = "data/output"


def _int_env(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def _float_env(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


def load_config() -> Config:
    """
    Load configuration from environment variables (and a .env file if present)
    """
    load_dotenv()  # Load variables from .env file

    failure = _float_env("CQI_COLORCODE_FAILURE", 0.01)
    if not 0 < failure < 1:
        raise ValueError("CQI_COLORCODE_FAILURE must lie strictly between 0 and 1")

    return Config(
        log_level=os.getenv("CQI_LOG_LEVEL", "INFO"),
        seed=_int_env("CQI_SEED", 0),
        threads=max(1, _int_env("CQI_THREADS", 1)),
        treewidth_exact_limit=_int_env("CQI_TREEWIDTH_EXACT_LIMIT", 25),
        search_limit=_int_env("CQI_SEARCH_LIMIT", 30),
        cover_bound=_float_env("CQI_COVER_BOUND", 2.0),
        vertex_cover_bound=_int_env("CQI_VERTEX_COVER_BOUND", 2),
        augment_treewidth=_int_env("CQI_AUGMENT_TREEWIDTH", 1),
        augment_domain_limit=_int_env("CQI_AUGMENT_DOMAIN_LIMIT", 400),
        listcolor_treewidth=_int_env("CQI_LISTCOLOR_TREEWIDTH", 3),
        colorcode_reps=_int_env("CQI_COLORCODE_REPS", 0),
        colorcode_failure=failure,
        exhaustive_domain_limit=_int_env("CQI_EXHAUSTIVE_DOMAIN_LIMIT", 8),
        output_directory=os.getenv("CQI_OUTPUT_DIR", "data/output"),
    )
