"""
Shared utilities: ensemble statistics, log-slope fitting, matrix checks
and file output.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np
import pandas as pd

from .config import engine_config
from .exceptions import ValidationError


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with standard error; unpacks as (value, stderr)."""

    value: float
    stderr: float

    def __iter__(self) -> Iterator[float]:
        yield self.value
        yield self.stderr

    def lower(self, sigmas: float = 2.0) -> float:
        return self.value - sigmas * self.stderr

    def upper(self, sigmas: float = 2.0) -> float:
        return self.value + sigmas * self.stderr


class EnsembleStatistics:
    """Means and standard errors of Monte Carlo output."""

    @staticmethod
    def batch_means(values: np.ndarray, weights: Optional[np.ndarray] = None) -> Tuple[float, float]:
        """
        Weighted mean of a (possibly autocorrelated) sample sequence and its
        batch-means standard error with floor(sqrt(n)) consecutive batches.

        Args:
            values: samples in time order
            weights: nonnegative weights summing to one (equal when None)

        Returns:
            (mean, stderr); stderr is nan with fewer than two batches
        """
        values = np.asarray(values, dtype=float).reshape(-1)
        n = values.size
        if n == 0:
            raise ValidationError("cannot average an empty sample")
        if np.all(values == values[0]):
            return float(values[0]), 0.0
        if weights is None:
            mean = math.fsum(values) / n
        else:
            mean = math.fsum(np.asarray(weights, dtype=float).reshape(-1) * values)

        n_batches = math.isqrt(n)
        if n_batches < 2:
            return mean, float("nan")
        size = n // n_batches
        batches = values[: n_batches * size].reshape(n_batches, size).mean(axis=1)
        return mean, float(batches.std(ddof=1) / math.sqrt(n_batches))

    @staticmethod
    def mean_stderr(values: np.ndarray) -> Tuple[float, float]:
        """Mean and standard error of independent samples."""
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size == 0:
            raise ValidationError("cannot average an empty sample")
        mean = math.fsum(values) / values.size
        if values.size < 2:
            return mean, float("nan")
        return mean, float(values.std(ddof=1) / math.sqrt(values.size))


class LogSlopeFitter:
    """Least-squares growth rates of ln|X(t)| over the second half of the horizon."""

    @staticmethod
    def absorption_floor(initial_norm: float, horizon: float) -> float:
        """Slope of a path that reaches the absorption level exactly at the horizon."""
        return (math.log(engine_config.ABSORPTION_LEVEL) - math.log(max(initial_norm, engine_config.ABSORPTION_LEVEL))) / horizon

    @staticmethod
    def fit(times: np.ndarray, norms: np.ndarray, floor: float) -> Tuple[np.ndarray, np.ndarray]:
        """
        Args:
            times: record grid (R,)
            norms: |X| per path on the grid (P, R)
            floor: slope reported for paths absorbed at zero

        Returns:
            (slopes (P,), absorbed mask (P,))
        """
        times = np.asarray(times, dtype=float)
        norms = np.atleast_2d(np.asarray(norms, dtype=float))
        window = times >= 0.5 * times[-1]
        if window.sum() < 2:
            window[-2:] = True
        t = times[window]
        tail = norms[:, window]
        absorbed = np.any(tail < engine_config.ABSORPTION_LEVEL, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            y = np.log(np.where(absorbed[:, None], 1.0, tail))
        tc = t - t.mean()
        slopes = (y - y.mean(axis=1, keepdims=True)) @ tc / (tc @ tc)
        slopes = np.where(absorbed, floor, slopes)
        return slopes, absorbed


class MatrixUtils:
    """Checks on small dense matrices."""

    @staticmethod
    def as_square(matrix: Any, name: str, size: Optional[int] = None) -> np.ndarray:
        values = np.atleast_2d(np.asarray(matrix, dtype=float))
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValidationError(f"{name} must be square, got shape {values.shape}")
        if size is not None and values.shape[0] != size:
            raise ValidationError(f"{name} must be {size}x{size}, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError(f"{name} has non-finite entries")
        return values

    @staticmethod
    def is_symmetric(matrix: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.allclose(matrix, matrix.T, rtol=0.0, atol=tol * max(1.0, float(np.abs(matrix).max(initial=0.0)))))

    @staticmethod
    def symmetric_part(matrix: np.ndarray) -> np.ndarray:
        return 0.5 * (matrix + matrix.T)


class CSVFileUtils:
    """Utilities for CSV output with byte-stable float formatting."""

    @staticmethod
    def write_frame(frame: pd.DataFrame, output_path: str) -> bool:
        """
        Write a frame with 17 significant digits and Unix line endings.

        Args:
            frame: data to write
            output_path: destination file

        Returns:
            True if successful, False otherwise
        """
        try:
            output_file = Path(output_path)
            output_file.parent.mkdir(parents=True, exist_ok=True)
            frame.to_csv(output_file, index=False, float_format=engine_config.FLOAT_FORMAT, lineterminator="\n")
            logging.info(f"CSV written to: {output_path}")
            return True
        except Exception as e:
            logging.error(f"Error writing CSV to {output_path}: {e}")
            return False


class JSONFileUtils:
    """Utilities for JSON file operations."""

    @staticmethod
    def sanitize(data: Any) -> Any:
        """Convert numpy scalars/arrays and non-finite floats to JSON-safe values."""
        if isinstance(data, dict):
            return {str(k): JSONFileUtils.sanitize(v) for k, v in data.items()}
        if isinstance(data, (list, tuple)):
            return [JSONFileUtils.sanitize(item) for item in data]
        if isinstance(data, np.ndarray):
            return JSONFileUtils.sanitize(data.tolist())
        if isinstance(data, np.generic):
            data = data.item()
        if isinstance(data, float) and not math.isfinite(data):
            return None
        return data

    @staticmethod
    def write_json_result(result: Dict[str, Any], output_path: str) -> bool:
        """
        Write a result dictionary to a JSON file.

        Args:
            result: data to write
            output_path: path for output JSON file

        Returns:
            True if successful, False otherwise
        """
        try:
            output_file = Path(output_path)
            output_file.parent.mkdir(parents=True, exist_ok=True)
            with open(output_file, "w", encoding="utf-8") as f:
                json.dump(JSONFileUtils.sanitize(result), f, indent=2, ensure_ascii=False)
            logging.info(f"JSON result written to: {output_path}")
            return True
        except Exception as e:
            logging.error(f"Error writing JSON result to {output_path}: {e}")
            return False


def evaluate_field(fn: Callable[[np.ndarray], Any], points: np.ndarray) -> np.ndarray:
    """
    Evaluate a scalar function on points (M, dim).

    Vectorised functions returning (M,) are used as is, constants are
    broadcast, anything else is evaluated point by point.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.asarray(fn(points), dtype=float)
    if out.shape == points.shape[:1]:
        return out
    if out.size == 1:
        return np.full(points.shape[0], float(out))
    return np.array([float(np.asarray(fn(p), dtype=float)) for p in points])


def frame_from_rows(rows: Sequence[Dict[str, Any]], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Report rows in a fixed column order."""
    frame = pd.DataFrame(list(rows))
    if columns is not None:
        frame = frame.reindex(columns=list(columns))
    return frame
