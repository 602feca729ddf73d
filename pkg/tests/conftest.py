import os
from pathlib import Path


def dataset_path(name: str) -> Path | None:
    """Locate a benchmark CSV under $MPPN_DATA_DIR (default ./data)."""
    root = Path(os.environ.get("MPPN_DATA_DIR", "data"))
    path = root / f"{name}.csv"
    return path if path.exists() else None


def full_runs_enabled() -> bool:
    """Multi-minute training reproductions run only when MPPN_FULL=1."""
    return os.environ.get("MPPN_FULL", "") == "1"
