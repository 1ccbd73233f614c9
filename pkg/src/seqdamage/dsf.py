"""Damage-sensitive feature extraction.

A raw acceleration record is split into fixed-size chunks, each chunk is
standardized by its own mean and standard deviation, and an AR(p) model is
fitted to every chunk by conditional least squares. Selected AR coefficients
of each chunk form one feature vector, so a record of ``L`` samples becomes a
stream of ``L // chunk_size`` vectors.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateChunkError, IllConditionedFitError

COND_LIMIT = 1e12
MIN_SAMPLES_PER_LAG = 10


@dataclass(frozen=True)
class RawSignal:
    sensor_id: object
    samples: np.ndarray
    sample_rate_hz: float = 1.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise DataError(f"sensor {self.sensor_id}: samples must be a nonempty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"sensor {self.sensor_id}: non-finite samples")
        if not self.sample_rate_hz > 0:
            raise DataError(f"sensor {self.sensor_id}: sample rate must be positive")
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class Chunk:
    sensor_id: object
    index: int
    values: np.ndarray


@dataclass(frozen=True)
class ArFit:
    order: int
    coefficients: np.ndarray
    residual_variance: float
    aic: float


@dataclass(frozen=True)
class DsfStream:
    """Feature vectors ``x[1..n]`` of one sensor, stored as an ``(n, m)`` array."""

    sensor_id: object
    features: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        if feats.ndim != 2 or feats.shape[1] == 0:
            raise DataError(f"sensor {self.sensor_id}: features must be an (n, m) array")
        object.__setattr__(self, "features", feats)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]


def chunk_and_normalize(signal: RawSignal, chunk_size: int) -> list[Chunk]:
    """Split ``signal`` into ``len // chunk_size`` standardized chunks.

    Trailing samples that do not fill a whole chunk are dropped. Chunk indices
    start at 1.
    """
    if chunk_size < 2:
        raise DataError("chunk_size must be at least 2")
    n_chunks = signal.samples.size // chunk_size
    if n_chunks == 0:
        raise DataError(
            f"sensor {signal.sensor_id}: {signal.samples.size} samples is shorter than one chunk ({chunk_size})"
        )
    blocks = signal.samples[: n_chunks * chunk_size].reshape(n_chunks, chunk_size)
    chunks = []
    for k, block in enumerate(blocks, start=1):
        mu = block.mean()
        centered = block - mu
        sd = np.sqrt(np.mean(centered**2))
        # relative test so tiny-amplitude but genuine signals are kept
        if sd == 0 or sd <= 1e-12 * max(abs(mu), np.finfo(float).tiny):
            raise DegenerateChunkError(k, signal.sensor_id)
        chunks.append(Chunk(signal.sensor_id, k, centered / sd))
    return chunks


def _lag_matrix(a: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    n = a.size
    X = np.column_stack([a[p - k : n - k] for k in range(1, p + 1)])
    return X, a[p:]


def fit_ar(chunk: Chunk | np.ndarray, order: int) -> ArFit:
    """Conditional least-squares AR fit without intercept.

    AIC is ``n_eff * ln(residual_variance) + 2 * order`` with
    ``n_eff = len(chunk) - order``.
    """
    a = np.asarray(chunk.values if isinstance(chunk, Chunk) else chunk, dtype=float)
    p = int(order)
    if p < 1:
        raise DataError("AR order must be a positive integer")
    if a.size <= MIN_SAMPLES_PER_LAG * p:
        raise DataError(f"chunk of {a.size} samples is too short for AR({p}); need more than {MIN_SAMPLES_PER_LAG * p}")
    X, y = _lag_matrix(a, p)
    gram = X.T @ X
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedFitError(f"AR({p}) normal equations are ill-conditioned (cond={cond:.3g})")
    theta = np.linalg.solve(gram, X.T @ y)
    resid = y - X @ theta
    n_eff = y.size
    sigma2 = float(resid @ resid) / n_eff
    aic = n_eff * np.log(sigma2) + 2 * p if sigma2 > 0 else -np.inf
    return ArFit(p, theta, sigma2, float(aic))


def select_order_aic(chunk: Chunk | np.ndarray, max_order: int) -> int:
    if max_order < 1:
        raise DataError("max_order must be at least 1")
    best_p, best_aic = 1, np.inf
    for p in range(1, max_order + 1):
        aic = fit_ar(chunk, p).aic
        if aic < best_aic:  # strict: ties keep the smaller order
            best_p, best_aic = p, aic
    return best_p


def extract_dsf_stream(
    signal: RawSignal,
    chunk_size: int,
    order: int,
    coeff_indices: Sequence[int] = (1,),
) -> DsfStream:
    """Feature stream of selected AR coefficients (1-based indices), one row per chunk."""
    idx = sorted(set(int(k) for k in coeff_indices))
    if not idx:
        raise DataError("coeff_indices must be nonempty")
    if idx[0] < 1 or idx[-1] > order:
        raise DataError(f"coefficient indices {idx} outside 1..{order}")
    rows = [fit_ar(c, order).coefficients[np.array(idx) - 1] for c in chunk_and_normalize(signal, chunk_size)]
    return DsfStream(
        signal.sensor_id,
        np.vstack(rows),
        meta={"chunk_size": chunk_size, "order": order, "coeff_indices": idx},
    )


# ---------------------------------------------------------------------------
# CSV surfaces


def _data_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"no such file: {path}") from None
    with fh:
        lines = [ln for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    reader = csv.reader(lines)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    return header, [r for r in reader if r]


def read_signal_csv(path, sample_rate_hz: float | None = None) -> list[RawSignal]:
    """Read ``t,value`` or ``t,sensor_1,...,sensor_M`` into raw signals.

    For the single-column layout the sensor id is the file stem. The sample
    rate is inferred from the ``t`` column unless given.
    """
    path = Path(path)
    header, rows = _data_rows(path)
    if len(header) < 2 or header[0] != "t":
        raise DataError(f"{path}: expected header 't,value' or 't,sensor_1,...'")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.size == 0:
        raise DataError(f"{path}: no samples")
    if sample_rate_hz is None:
        dt = np.diff(data[:, 0])
        sample_rate_hz = 1.0 / float(np.median(dt)) if dt.size and np.median(dt) > 0 else 1.0
    if header[1:] == ["value"]:
        ids = [path.stem]
    else:
        ids = [h.removeprefix("sensor_") for h in header[1:]]
    return [RawSignal(sid, data[:, k + 1], sample_rate_hz) for k, sid in enumerate(ids)]


def write_dsf_csv(stream: DsfStream, path, comments: Sequence[str] = ()) -> None:
    with open(path, "w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n"] + [f"x_{k}" for k in range(1, stream.dim + 1)])
        for n, row in enumerate(stream.features, start=1):
            w.writerow([n] + [repr(float(v)) for v in row])


def read_dsf_csv(path, sensor_id=None) -> DsfStream:
    path = Path(path)
    header, rows = _data_rows(path)
    if not header or header[0] != "n" or len(header) < 2:
        raise DataError(f"{path}: expected header 'n,x_1,...,x_m'")
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if data.size == 0:
        raise DataError(f"{path}: no feature rows")
    if not np.array_equal(data[:, 0], np.arange(1, data.shape[0] + 1)):
        raise DataError(f"{path}: row indices must run 1..n contiguously")
    return DsfStream(sensor_id if sensor_id is not None else path.stem, data[:, 1:])
