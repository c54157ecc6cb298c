"""Slice annotations and their propagation into spuriousness probabilities.

Experts mark individual slices as ``core`` (0) or ``spurious`` (1); label
spreading on a similarity graph over the 2D coordinates turns those few marks
into a per-point probability field:

    1. affinity   w_ij = exp(-||x_i - x_j||^2 / (2 sigma^2)),   w_ii = 0
    2. transition T = D^-1 W  (row-stochastic)
    3. init       Y0 rows one-hot over (core, spurious) for members of
                  annotated slices, zero elsewhere
    4. iterate    Y <- alpha T Y + (1 - alpha) Y0   until stable

The fixed point equals (1 - alpha) (I - alpha T)^-1 Y0, and the update is an
alpha-contraction in the max norm, so convergence takes only a handful of
sweeps at the default alpha = 0.2.  A point's spuriousness is the spurious
share of its converged mass, 0.5 when essentially no mass reached it; a
slice's score is the mean over its members.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

VERDICTS = ("core", "spurious")
_MASS_EPS = 1e-12


class SpuriousnessError(ValueError):
    pass


class IsolatedNode(SpuriousnessError):
    pass


class NoAnnotations(SpuriousnessError):
    pass


class UnknownSlice(SpuriousnessError):
    pass


class AnnotationLogError(SpuriousnessError):
    pass


@dataclass(frozen=True)
class Annotation:
    timestamp: str  # RFC-3339
    slice_id: int
    verdict: str    # "core" | "spurious"
    note: str = ""
    author: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise SpuriousnessError(f"verdict must be one of {VERDICTS}")

    @property
    def numeric_label(self) -> int:
        return VERDICTS.index(self.verdict)


@dataclass(frozen=True)
class SpreadConfig:
    alpha: float = 0.2
    sigma_mode: str = "median_heuristic"  # or "fixed"
    sigma_value: float | None = None
    knn: int = 50
    tol: float = 1e-6
    max_iter: int = 1000
    dense_limit: int = 2000

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise SpuriousnessError("alpha must be in (0, 1)")
        if self.knn < 1:
            raise SpuriousnessError("knn must be >= 1")
        if self.sigma_mode not in ("median_heuristic", "fixed"):
            raise SpuriousnessError("sigma_mode must be median_heuristic or fixed")
        if self.sigma_mode == "fixed" and not (
            self.sigma_value and self.sigma_value > 0
        ):
            raise SpuriousnessError("fixed sigma_mode needs a positive sigma_value")


@dataclass
class SpuriousnessField:
    per_point: np.ndarray
    per_slice: dict[int, float]
    version: int
    config: SpreadConfig
    annotations: list[Annotation] = field(default_factory=list)


def append_annotation(log_path: str | Path, annotation: Annotation) -> None:
    """Append one annotation to the line-delimited log (creates the file)."""
    record = {
        "timestamp": annotation.timestamp,
        "slice_id": annotation.slice_id,
        "verdict": annotation.verdict,
        "note": annotation.note,
        "author": annotation.author,
    }
    with open(log_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def replay_annotations(log_path: str | Path) -> list[Annotation]:
    """Read the log back in order; a malformed line reports its 1-based index."""
    path = Path(log_path)
    if not path.is_file():
        return []
    out = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out.append(
                Annotation(
                    timestamp=str(rec["timestamp"]),
                    slice_id=int(rec["slice_id"]),
                    verdict=str(rec["verdict"]),
                    note=str(rec.get("note", "")),
                    author=str(rec.get("author", "")),
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError, SpuriousnessError) as exc:
            raise AnnotationLogError(f"bad annotation at line {lineno}: {exc}") from exc
    return out


def effective_annotations(annotations: list[Annotation]) -> dict[int, str]:
    """Collapse the log to one verdict per slice, last write wins."""
    verdicts: dict[int, str] = {}
    for ann in annotations:
        verdicts[ann.slice_id] = ann.verdict
    return verdicts


def _median_sigma(coords: np.ndarray) -> float:
    n = len(coords)
    take = min(n, 1024)
    idx = np.unique(np.linspace(0, n - 1, take).astype(int))
    sub = coords[idx]
    d2 = np.sum((sub[:, None, :] - sub[None, :, :]) ** 2, axis=-1)
    dist = np.sqrt(d2[np.triu_indices(len(sub), k=1)])
    med = float(np.median(dist)) if len(dist) else 0.0
    return max(med, 1e-12)


def build_affinity(coords: np.ndarray, config: SpreadConfig):
    """Gaussian-kernel affinity over the 2D coordinates, zero diagonal.

    Dense below ``dense_limit`` points; otherwise kNN-sparsified (keeping the
    ``knn`` strongest neighbors per point) and symmetrized by the elementwise
    maximum.
    """
    coords = np.asarray(coords, dtype=np.float64)
    n = len(coords)
    if n < 2:
        raise SpuriousnessError("need at least 2 points")
    if config.sigma_mode == "fixed":
        sig = float(config.sigma_value)
    else:
        sig = _median_sigma(coords)
    denom = 2.0 * sig * sig

    if n <= config.dense_limit:
        d2 = np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=-1)
        w = np.exp(-d2 / denom)
        np.fill_diagonal(w, 0.0)
        return w

    knn = min(config.knn, n - 1)
    rows, cols, vals = [], [], []
    for i in range(n):
        d2 = np.sum((coords - coords[i]) ** 2, axis=1)
        d2[i] = np.inf
        neigh = np.argpartition(d2, knn)[:knn]
        rows.extend([i] * knn)
        cols.extend(neigh.tolist())
        vals.extend(np.exp(-d2[neigh] / denom).tolist())
    w = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return w.maximum(w.T)


def transition(affinity):
    """Row-normalize the affinity into a stochastic matrix T = D^-1 W."""
    if sparse.issparse(affinity):
        rowsum = np.asarray(affinity.sum(axis=1)).ravel()
        if (rowsum <= 0.0).any():
            raise IsolatedNode("affinity matrix has an all-zero row")
        inv = sparse.diags(1.0 / rowsum)
        return inv @ affinity
    w = np.asarray(affinity, dtype=np.float64)
    rowsum = w.sum(axis=1)
    if (rowsum <= 0.0).any():
        raise IsolatedNode("affinity matrix has an all-zero row")
    return w / rowsum[:, None]


@dataclass(frozen=True)
class SpreadResult:
    labels: np.ndarray
    iterations: int
    converged: bool


def spread(T, y0: np.ndarray, alpha: float, tol: float = 1e-6,
           max_iter: int = 1000) -> SpreadResult:
    """Iterate Y <- alpha T Y + (1 - alpha) Y0 to its fixed point."""
    if not 0.0 <= alpha < 1.0:
        raise SpuriousnessError("alpha must be in [0, 1)")
    y0 = np.asarray(y0, dtype=np.float64)
    y = y0.copy()
    iterations = 0
    converged = False
    for _ in range(max_iter):
        y_next = alpha * (T @ y) + (1.0 - alpha) * y0
        iterations += 1
        delta = float(np.max(np.abs(y_next - y)))
        y = y_next
        if delta < tol:
            converged = True
            break
    return SpreadResult(labels=y, iterations=iterations, converged=converged)


def contraction_bound(alpha: float, tol: float) -> int:
    """Upper bound on the sweeps needed: log(tol)/log(alpha) + 1."""
    return int(math.floor(math.log(tol) / math.log(alpha) + 1.0))


def propagate(annotations: list[Annotation], slice_set, embedding,
              config: SpreadConfig, previous_version: int = 0) -> SpuriousnessField:
    """Spread slice annotations to every point and aggregate per slice.

    Every member of an annotated slice is initialized one-hot with its
    slice's verdict.  A point's probability is the spurious share of its
    converged mass (0.5 where no measurable mass arrived); a slice's score is
    the mean over members.
    """
    verdicts = effective_annotations(annotations)
    if not verdicts:
        raise NoAnnotations("propagation needs at least one annotation")
    known = {s.id for s in slice_set.slices}
    for sid in verdicts:
        if sid not in known:
            raise UnknownSlice(f"annotation references unknown slice {sid}")

    coords = np.asarray(embedding.coords, dtype=np.float64)
    n = len(coords)
    y0 = np.zeros((n, 2))
    for sid, verdict in verdicts.items():
        col = VERDICTS.index(verdict)
        y0[slice_set.by_id(sid).member_ids, col] = 1.0

    T = transition(build_affinity(coords, config))
    result = spread(T, y0, config.alpha, config.tol, config.max_iter)
    core = result.labels[:, 0]
    spur = result.labels[:, 1]
    mass = core + spur
    per_point = np.where(mass < _MASS_EPS, 0.5, spur / np.maximum(mass, _MASS_EPS))

    per_slice = {
        s.id: float(per_point[s.member_ids].mean()) for s in slice_set.slices
    }
    return SpuriousnessField(
        per_point=per_point,
        per_slice=per_slice,
        version=previous_version + 1,
        config=config,
        annotations=list(annotations),
    )
