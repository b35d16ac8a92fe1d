"""Star-shaped unbalanced benchmark and JSON Lines dataset I/O.

Dataset files are JSON Lines.  The first line is ``{"meta": {...}}`` and
every following line is one observation::

    {"label": 0, "points": [[0.1, -2.3], [1.4, 0.2]]}
    {"label": 3, "points": []}

``label`` may be null when ground truth is unknown.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FormatError, InputError
from .rfs import GaussianParams, PointPattern, PoissonRfsParams, sample_poisson_rfs

CORNER_OFFSET = 10.0
CENTER_VARIANCE = 49.0


def _default_means():
    c = CORNER_OFFSET
    return [[0.0, 0.0], [c, c], [-c, c], [-c, -c], [c, -c]]


def _default_covariances():
    return [np.diag([CENTER_VARIANCE] * 2).tolist()] + [np.eye(2).tolist() for _ in range(4)]


@dataclass
class StarConfig:
    """Mixture of Poisson RFS components used to generate benchmark data.

    The defaults put a dominant rate-100, wide component at the origin and
    four rate-0.5, unit-covariance components at the corners (+-10, +-10).
    """

    num_observations: int = 200
    component_weights: list = field(default_factory=lambda: [0.2] * 5)
    component_rates: list = field(default_factory=lambda: [100.0, 0.5, 0.5, 0.5, 0.5])
    component_means: list = field(default_factory=_default_means)
    component_covariances: list = field(default_factory=_default_covariances)
    seed: int | None = 0

    def __post_init__(self):
        self.component_weights = [float(w) for w in self.component_weights]
        self.component_rates = [float(r) for r in self.component_rates]
        self.component_means = np.asarray(self.component_means, dtype=float).tolist()
        self.component_covariances = np.asarray(self.component_covariances, dtype=float).tolist()
        k = len(self.component_weights)
        if not (len(self.component_rates) == len(self.component_means)
                == len(self.component_covariances) == k):
            raise InputError("weights, rates, means and covariances must have the same length")
        if k < 1:
            raise InputError("need at least one component")
        if self.num_observations < 0:
            raise InputError("num_observations must be nonnegative")
        w = np.asarray(self.component_weights)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InputError(f"component weights must be a probability vector, got {self.component_weights}")
        if any(not r > 0 for r in self.component_rates):
            raise InputError("component rates must be positive")
        # validates shapes and SPD-ness
        self.components()

    @property
    def dim(self) -> int:
        return len(self.component_means[0])

    def components(self) -> list[PoissonRfsParams]:
        return [PoissonRfsParams(r, GaussianParams(m, c)) for r, m, c in
                zip(self.component_rates, self.component_means, self.component_covariances)]

    def to_dict(self) -> dict:
        return asdict(self)


def generate_star(config: StarConfig):
    """Draw ``num_observations`` patterns; returns ``(data, labels)``.

    Each observation picks a component by weight and then samples a Poisson
    RFS from it.
    """
    rng = np.random.default_rng(config.seed)
    comps = config.components()
    labels = rng.choice(len(comps), size=config.num_observations, p=config.component_weights)
    data = [sample_poisson_rfs(comps[k], rng) for k in labels]
    return data, [int(k) for k in labels]


def write_dataset(path, data, labels=None, meta=None):
    data = list(data)
    if labels is not None and len(labels) != len(data):
        raise InputError(f"{len(labels)} labels for {len(data)} patterns")
    if not data and (meta is None or "dim" not in meta):
        raise InputError("cannot infer dimension of an empty dataset")
    dim = data[0].dim if data else meta["dim"]
    header = dict(meta or {})
    header.setdefault("dim", dim)
    header.setdefault("num_observations", len(data))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"meta": header}, sort_keys=True) + "\n")
        for i, x in enumerate(data):
            if x.dim != dim:
                raise InputError(f"pattern {i} has dimension {x.dim}, expected {dim}")
            label = None if labels is None else (None if labels[i] is None else int(labels[i]))
            fh.write(json.dumps({"label": label, "points": x.tolist()}) + "\n")


def read_dataset(path, with_meta=False):
    """Parse a JSON Lines dataset into ``(data, labels)`` (plus ``meta`` on request).

    Unlabeled files give ``labels = None``.
    """
    data, labels, meta = [], [], {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(rec, dict):
                raise FormatError("record must be a JSON object", lineno)
            if "meta" in rec:
                if lineno != 1 or data:
                    raise FormatError("metadata record must come first", lineno)
                meta = rec["meta"]
                dim = meta.get("dim")
                continue
            if "points" not in rec:
                raise FormatError("record has no 'points' field", lineno)
            pts = rec["points"]
            if not isinstance(pts, list):
                raise FormatError("'points' must be a list", lineno)
            try:
                arr = np.asarray(pts, dtype=float)
            except (TypeError, ValueError):
                raise FormatError("points must be equal-length numeric lists", lineno) from None
            if arr.size:
                if arr.ndim != 2:
                    raise FormatError("points must be a list of coordinate lists", lineno)
                if dim is None:
                    dim = arr.shape[1]
                elif arr.shape[1] != dim:
                    raise FormatError(f"point dimension {arr.shape[1]} != dataset dimension {dim}", lineno)
                data.append(PointPattern(arr))
            else:
                data.append(None)  # dimension may only be known later
            label = rec.get("label")
            if label is not None and (not isinstance(label, int) or isinstance(label, bool)):
                raise FormatError(f"label must be an integer or null, got {label!r}", lineno)
            labels.append(label)
    if dim is None and data:
        raise FormatError("cannot determine dimension: no metadata and all patterns empty")
    data = [PointPattern.empty(dim) if x is None else x for x in data]
    if all(lab is None for lab in labels):
        labels = None
    elif any(lab is None for lab in labels):
        raise FormatError("dataset mixes labeled and unlabeled records")
    if with_meta:
        return data, labels, meta
    return data, labels
