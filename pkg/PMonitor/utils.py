# import
## batteries
import os
import json
import enum
import hashlib
import logging
import dataclasses
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Sequence, TypeVar
## 3rd party
import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)
T = TypeVar("T")
R = TypeVar("R")

# functions
def json_default(obj: Any) -> Any:
    """
    Fallback serializer for json.dumps: numpy values, enums, dataclasses and pydantic models.
    """
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        if hasattr(obj, "to_dict"):
            return obj.to_dict()
        return dataclasses.asdict(obj)
    if hasattr(obj, "model_dump"):
        return obj.model_dump(mode="json")
    if isinstance(obj, (set, frozenset, tuple)):
        return list(obj)
    raise TypeError(f"Object of type {type(obj)} is not JSON serializable")

def to_json(obj: Any, indent: Optional[int] = 2, canonical: bool = False) -> str:
    """
    Convert an object to a JSON string.
    Args:
        obj: object to serialize
        indent: indentation; ignored for canonical output
        canonical: sorted keys and compact separators (stable digests)
    Returns:
        JSON string
    """
    if canonical:
        return json.dumps(obj, default=json_default, sort_keys=True, separators=(",", ":"))
    return json.dumps(obj, default=json_default, indent=indent)

def sha256_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()

def write_csv(df: pd.DataFrame, outfile: str) -> str:
    """
    Write a table with full double precision, UTF-8 and a header row.
    Args:
        df: table to write
        outfile: path of the CSV file
    Returns:
        The path written
    """
    outdir = os.path.dirname(outfile)
    if outdir and outdir != ".":
        os.makedirs(outdir, exist_ok=True)
    df.to_csv(outfile, index=False, float_format="%.17g", encoding="utf-8", lineterminator="\n")
    return outfile

def write_json(obj: Any, outfile: str) -> str:
    outdir = os.path.dirname(outfile)
    if outdir and outdir != ".":
        os.makedirs(outdir, exist_ok=True)
    with open(outfile, "w", encoding="utf-8") as f:
        f.write(to_json(obj, indent=2))
        f.write("\n")
    return outfile

def map_concurrent(func: Callable[[T], R], items: Sequence[T], threads: int = 1) -> List[R]:
    """
    Apply func to every item, optionally on a thread pool.
    Results keep the input order, so the output does not depend on scheduling.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(func, items))

def flatten_matrix(X: np.ndarray, prefix: str = "omega") -> dict:
    """Row-major matrix entries as {prefix_i_j: value} (1-based indices)."""
    X = np.atleast_2d(X)
    return {
        f"{prefix}_{i + 1}_{j + 1}": float(X[i, j])
        for i in range(X.shape[0]) for j in range(X.shape[1])
    }
