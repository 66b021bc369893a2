import hashlib
import json
import sys
import concurrent.futures
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar

import click
import numpy as np
import pandas as pd
from loguru import logger

from .errors import FileError

T = TypeVar("T")
R = TypeVar("R")

# Round-trip exact float formatting for every CSV the package writes
FLOAT_FORMAT = "%.17g"


# ============================================================================
# Logging and progress
# ============================================================================

def configure_logging(verbose: bool = False) -> None:
    """Install the stderr sink used by the CLI (library code never calls this)."""
    logger.remove()
    logger.add(
        sys.stderr,
        level="DEBUG" if verbose else "INFO",
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {name}:{function} - {message}",
    )


def log_progress(step_num: int, description: str, status: str):
    """Log progress of pipeline steps"""
    emoji_map = {
        "start": "🚀",
        "complete": "✅",
        "skip": "⏭️",
        "fail": "❌",
    }
    emoji = emoji_map.get(status, "📋")
    click.echo(f"{emoji} Step {step_num}: {description} - {status.upper()}", err=True)


# ============================================================================
# Hashing and seeds
# ============================================================================

def canonical_json(data: Any) -> str:
    """JSON dump with sorted keys and no whitespace variation."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def hash_payload(data: Any, length: int = 16) -> str:
    """Short SHA-256 digest of the canonical JSON form of ``data``."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:length]


def hash_array(array: np.ndarray, length: int = 16) -> str:
    """Short SHA-256 digest of an array's shape and little-endian float64 bytes."""
    arr = np.ascontiguousarray(np.asarray(array, dtype="<f8"))
    digest = hashlib.sha256(str(arr.shape).encode("utf-8"))
    digest.update(arr.tobytes())
    return digest.hexdigest()[:length]


def child_seeds(seed: int, count: int) -> List[np.random.SeedSequence]:
    """Deterministically split one seed into ``count`` independent streams."""
    return np.random.SeedSequence(seed).spawn(count)


# ============================================================================
# File helpers
# ============================================================================

def _json_default(obj: Any) -> Any:
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def write_json(path: Path, data: Dict[str, Any]) -> Path:
    """Write a JSON sidecar deterministically (sorted keys, 2-space indent)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return path


def read_json(path: Path) -> Dict[str, Any]:
    """Read a JSON file, raising FileError naming the path on failure."""
    path = Path(path)
    if not path.exists():
        raise FileError(f"File not found: {path}", path=str(path))
    try:
        with open(path, "r") as f:
            return json.load(f)
    except (json.JSONDecodeError, OSError) as e:
        raise FileError(f"Cannot read {path}: {e}", path=str(path)) from e


def write_matrix_csv(path: Path, matrix: np.ndarray, row_labels: Optional[Sequence[str]] = None,
                     col_labels: Optional[Sequence[str]] = None) -> Path:
    """Write a 2-D matrix as CSV with round-trip exact floats."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    df = pd.DataFrame(matrix, index=row_labels, columns=col_labels)
    df.to_csv(path, float_format=FLOAT_FORMAT, index=row_labels is not None,
              header=col_labels is not None, lineterminator="\n")
    return path


def read_matrix_csv(path: Path, has_row_labels: bool = False, has_header: bool = False) -> np.ndarray:
    """Read a matrix written by :func:`write_matrix_csv`."""
    path = Path(path)
    if not path.exists():
        raise FileError(f"File not found: {path}", path=str(path))
    try:
        df = pd.read_csv(path, header=0 if has_header else None,
                         index_col=0 if has_row_labels else None, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, OSError) as e:
        raise FileError(f"Cannot parse {path}: {e}", path=str(path)) from e
    return df.to_numpy(dtype=float)


def sidecar_paths(path: Path) -> tuple[Path, Path]:
    """Return the (json, csv) pair for a sidecar stem or either file."""
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".csv") else path
    return stem.with_suffix(".json"), stem.with_suffix(".csv")


# ============================================================================
# Parallel map
# ============================================================================

def parallel_map(func: Callable[[T], R], items: Iterable[T], n_jobs: int = 1) -> List[R]:
    """
    Apply ``func`` to every item, optionally on a thread pool.

    Results are returned in input order, so callers writing into disjoint
    slots get identical output for any worker count.
    """
    items = list(items)
    if n_jobs is None or n_jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=n_jobs) as executor:
        return list(executor.map(func, items))
