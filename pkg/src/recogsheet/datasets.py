"""Feature datasets: in-memory model, on-disk manifest, selection, synthesis.

A dataset is stored column-wise (one array per frame attribute) and is treated
as immutable. Frames of one acquisition session, keyed by
``(object, day, split, variant)``, are kept contiguous and ordered by
``seq``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DataIOError, EmptySelection, InvalidArgument, InvalidData

BIN_MAGIC = b"ICF1"
_BIN_HEADER = struct.Struct("<4sII")
SPLITS = ("train", "test")


@dataclass(frozen=True)
class FrameRecord:
    features: np.ndarray
    class_id: int
    object_name: str
    category_name: str
    day: int
    split: str
    session_seq: int
    variant: str


@dataclass(eq=False)
class FeatureDataset:
    name: str
    class_names: tuple
    categories: tuple
    features: np.ndarray  # (n, d) float32
    class_id: np.ndarray  # (n,) int64
    object_name: np.ndarray  # (n,) str
    day: np.ndarray  # (n,) int64
    split: np.ndarray  # (n,) str
    variant: np.ndarray  # (n,) str
    seq: np.ndarray  # (n,) int64
    origin: tuple = None  # original class id of each current id

    def __post_init__(self):
        self.class_names = tuple(str(c) for c in self.class_names)
        self.categories = tuple(str(c) for c in self.categories)
        if len(self.categories) != len(self.class_names):
            raise InvalidData("categories must list one category per class")
        if self.origin is None:
            self.origin = tuple(range(len(self.class_names)))
        self.origin = tuple(int(o) for o in self.origin)
        self.features = np.asarray(self.features, dtype=np.float32)
        n = self.features.shape[0]
        self.class_id = np.asarray(self.class_id, dtype=np.int64).reshape(n)
        self.object_name = np.asarray(self.object_name, dtype=str).reshape(n)
        self.day = np.asarray(self.day, dtype=np.int64).reshape(n)
        self.split = np.asarray(self.split, dtype=str).reshape(n)
        self.variant = np.asarray(self.variant, dtype=str).reshape(n)
        self.seq = np.asarray(self.seq, dtype=np.int64).reshape(n)
        if self.features.ndim != 2:
            raise InvalidData(f"features must be (n, d), got shape {self.features.shape}")
        if n and (self.class_id.min() < 0 or self.class_id.max() >= self.num_classes):
            raise InvalidData(f"class id outside [0, {self.num_classes})")
        if not np.all(np.isfinite(self.features)):
            row = int(np.flatnonzero(~np.all(np.isfinite(self.features), axis=1))[0])
            raise InvalidData(f"non-finite feature value in frame {row}")
        starts = self.session_starts()
        same = starts[1:] == starts[:-1]
        if np.any(self.seq[1:][same] <= self.seq[:-1][same]):
            raise InvalidData("session_seq must strictly increase within a session")

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def id_map(self) -> dict:
        """Original class id -> current class id."""
        return {o: i for i, o in enumerate(self.origin)}

    def __len__(self):
        return int(self.features.shape[0])

    def __getitem__(self, i) -> FrameRecord:
        c = int(self.class_id[i])
        return FrameRecord(
            features=self.features[i],
            class_id=c,
            object_name=str(self.object_name[i]),
            category_name=self.categories[c],
            day=int(self.day[i]),
            split=str(self.split[i]),
            session_seq=int(self.seq[i]),
            variant=str(self.variant[i]),
        )

    @property
    def frames(self) -> list:
        return [self[i] for i in range(len(self))]

    def session_codes(self) -> np.ndarray:
        """Integer session id per frame, numbered by first appearance."""
        keys = np.char.add(
            np.char.add(np.char.add(self.object_name, "\x1f"), self.day.astype(str)),
            np.char.add(np.char.add("\x1f", self.split), np.char.add("\x1f", self.variant)),
        )
        _, first, inverse = np.unique(keys, return_index=True, return_inverse=True)
        rank = np.empty(first.size, dtype=np.int64)
        rank[np.argsort(first, kind="stable")] = np.arange(first.size)
        return rank[inverse.reshape(-1)]

    def session_starts(self) -> np.ndarray:
        """Index of the first frame of each frame's contiguous session run."""
        n = len(self)
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        codes = self.session_codes()
        boundary = np.ones(n, dtype=bool)
        boundary[1:] = codes[1:] != codes[:-1]
        return np.maximum.accumulate(np.where(boundary, np.arange(n), 0))

    def _take(self, idx, **overrides) -> FeatureDataset:
        fields = dict(
            name=self.name,
            class_names=self.class_names,
            categories=self.categories,
            features=self.features[idx],
            class_id=self.class_id[idx],
            object_name=self.object_name[idx],
            day=self.day[idx],
            split=self.split[idx],
            variant=self.variant[idx],
            seq=self.seq[idx],
            origin=self.origin,
        )
        fields.update(overrides)
        return FeatureDataset(**fields)

    def equals(self, other) -> bool:
        if not isinstance(other, FeatureDataset):
            return False
        meta = ("name", "class_names", "categories", "origin")
        if any(getattr(self, m) != getattr(other, m) for m in meta):
            return False
        arrays = ("class_id", "object_name", "day", "split", "variant", "seq")
        if any(not np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays):
            return False
        return self.features.shape == other.features.shape and (
            self.features.tobytes() == other.features.tobytes()
        )

    __eq__ = equals
    __hash__ = None


def concat(datasets: Iterable[FeatureDataset], name: str | None = None) -> FeatureDataset:
    """Frame-wise concatenation of datasets sharing a class vocabulary."""
    datasets = list(datasets)
    if not datasets:
        raise InvalidArgument("nothing to concatenate")
    head = datasets[0]
    for ds in datasets[1:]:
        check_compatible(head, ds)
    return FeatureDataset(
        name=name or head.name,
        class_names=head.class_names,
        categories=head.categories,
        features=np.concatenate([d.features for d in datasets]),
        class_id=np.concatenate([d.class_id for d in datasets]),
        object_name=np.concatenate([d.object_name for d in datasets]),
        day=np.concatenate([d.day for d in datasets]),
        split=np.concatenate([d.split for d in datasets]),
        variant=np.concatenate([d.variant for d in datasets]),
        seq=np.concatenate([d.seq for d in datasets]),
        origin=head.origin,
    )


def check_compatible(a: FeatureDataset, b: FeatureDataset) -> None:
    if a.dim != b.dim:
        raise InvalidArgument(f"feature dimension mismatch: {a.dim} vs {b.dim}")
    if a.class_names != b.class_names:
        raise InvalidArgument("datasets do not share a class vocabulary")


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def _as_set(value, cast):
    if value is None:
        return None
    if isinstance(value, (str, int, np.integer)):
        return {cast(value)}
    return {cast(v) for v in value}


def select(
    dataset: FeatureDataset,
    days=None,
    split=None,
    variant=None,
    classes=None,
    first_k: int | None = None,
) -> FeatureDataset:
    """Order-preserving sub-dataset.

    ``days``, ``split`` and ``variant`` accept a single value or a collection.
    ``classes`` keeps only those class ids and re-labels them densely in
    ascending order; the mapping is available as ``result.id_map`` (in terms
    of the root dataset's ids). ``first_k`` is applied last and keeps the
    earliest ``k`` frames of every class.
    """
    mask = np.ones(len(dataset), dtype=bool)
    day_set = _as_set(days, int)
    if day_set is not None:
        mask &= np.isin(dataset.day, sorted(day_set))
    split_set = _as_set(split, str)
    if split_set is not None:
        unknown = split_set - set(SPLITS)
        if unknown:
            raise InvalidArgument(f"unknown split {sorted(unknown)}; expected one of {SPLITS}")
        mask &= np.isin(dataset.split, sorted(split_set))
    variant_set = _as_set(variant, str)
    if variant_set is not None:
        mask &= np.isin(dataset.variant, sorted(variant_set))

    overrides = {}
    relabel = None
    class_set = _as_set(classes, int)
    if class_set is not None:
        subset = sorted(class_set)
        if len(subset) < 1 or subset[0] < 0 or subset[-1] >= dataset.num_classes:
            raise InvalidArgument(f"class subset {subset} outside [0, {dataset.num_classes})")
        mask &= np.isin(dataset.class_id, subset)
        relabel = np.full(dataset.num_classes, -1, dtype=np.int64)
        relabel[subset] = np.arange(len(subset))
        overrides = dict(
            class_names=tuple(dataset.class_names[c] for c in subset),
            categories=tuple(dataset.categories[c] for c in subset),
            origin=tuple(dataset.origin[c] for c in subset),
        )

    idx = np.flatnonzero(mask)
    if first_k is not None:
        if int(first_k) != first_k or first_k < 1:
            raise InvalidArgument(f"first_k must be a positive integer, got {first_k!r}")
        ids = dataset.class_id[idx]
        rank = np.zeros(idx.size, dtype=np.int64)
        for c in np.unique(ids):
            pos = np.flatnonzero(ids == c)
            rank[pos] = np.arange(pos.size)
        idx = idx[rank < first_k]
    if idx.size == 0:
        raise EmptySelection(
            f"selection matched no frames (days={days}, split={split}, variant={variant}, "
            f"classes={classes}, first_k={first_k})"
        )
    if relabel is not None:
        overrides["class_id"] = relabel[dataset.class_id[idx]]
    return dataset._take(idx, **overrides)


def class_counts(dataset: FeatureDataset) -> np.ndarray:
    return np.bincount(dataset.class_id, minlength=dataset.num_classes)


def standardize(train: FeatureDataset, *others: FeatureDataset) -> list:
    """Per-dimension zero-mean/unit-variance using ``train`` statistics."""
    X = train.features.astype(np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    out = []
    for ds in (train, *others):
        check_compatible(train, ds)
        z = ((ds.features.astype(np.float64) - mu) / sd).astype(np.float32)
        out.append(ds._take(slice(None), features=z))
    return out


# ---------------------------------------------------------------------------
# On-disk format
# ---------------------------------------------------------------------------


def _read_csv(path: Path, dim: int):
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            rows = [line for line in fh if line.strip()]
    except OSError as exc:
        raise DataIOError(f"cannot read feature file {path}: {exc}") from exc
    expected = ["seq"] + [f"f{j}" for j in range(dim)]
    if header != expected:
        raise InvalidData(f"{path}: header has {len(header) - 1} feature columns, expected {dim}")
    seq = np.empty(len(rows), dtype=np.int64)
    feats = np.empty((len(rows), dim), dtype=np.float32)
    for i, line in enumerate(rows):
        parts = line.rstrip("\n").split(",")
        if len(parts) != dim + 1:
            raise InvalidData(f"{path}: row {i + 1} has {len(parts) - 1} features, expected {dim}")
        try:
            seq[i] = int(parts[0])
            values = np.array([float(p) for p in parts[1:]])
        except ValueError as exc:
            raise InvalidData(f"{path}: row {i + 1}: {exc}") from exc
        if not np.all(np.isfinite(values)):
            raise InvalidData(f"{path}: row {i + 1} contains a non-finite value")
        feats[i] = values
    return seq, feats


def _write_csv(path: Path, seq, feats) -> None:
    d = feats.shape[1]
    lines = ["seq," + ",".join(f"f{j}" for j in range(d))]
    for s, row in zip(seq, feats):
        lines.append(f"{int(s)}," + ",".join("%.9g" % v for v in row.tolist()))
    path.write_text("\n".join(lines) + "\n")


def _read_bin(path: Path, dim: int):
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataIOError(f"cannot read feature file {path}: {exc}") from exc
    if len(raw) < _BIN_HEADER.size:
        raise InvalidData(f"{path}: truncated header")
    magic, n, d = _BIN_HEADER.unpack_from(raw)
    if magic != BIN_MAGIC:
        raise InvalidData(f"{path}: bad magic {magic!r}, expected {BIN_MAGIC!r}")
    if d != dim:
        raise InvalidData(f"{path}: file has {d} features per row, manifest says {dim}")
    if len(raw) != _BIN_HEADER.size + 4 * n * d:
        raise InvalidData(f"{path}: expected {n} rows of {d} f32, size is {len(raw)} bytes")
    feats = np.frombuffer(raw, dtype="<f4", offset=_BIN_HEADER.size).reshape(n, d)
    bad = ~np.all(np.isfinite(feats), axis=1)
    if bad.any():
        raise InvalidData(f"{path}: row {int(np.flatnonzero(bad)[0]) + 1} contains a non-finite value")
    return np.arange(n, dtype=np.int64), feats.astype(np.float32)


def _write_bin(path: Path, feats) -> None:
    n, d = feats.shape
    path.write_bytes(_BIN_HEADER.pack(BIN_MAGIC, n, d) + np.ascontiguousarray(feats, dtype="<f4").tobytes())


def _session_runs(dataset: FeatureDataset):
    starts = dataset.session_starts()
    bounds = np.flatnonzero(np.r_[True, starts[1:] != starts[:-1]])
    ends = np.r_[bounds[1:], len(dataset)]
    return list(zip(bounds.tolist(), ends.tolist()))


def save_dataset(dataset: FeatureDataset, directory, encoding: str = "bin") -> Path:
    """Write ``manifest.json`` plus one feature file per session run.

    ``bin`` stores seq implicitly, so every session must be numbered 0..n-1.
    """
    if encoding not in ("csv", "bin"):
        raise InvalidArgument(f"encoding must be 'csv' or 'bin', got {encoding!r}")
    directory = Path(directory)
    try:
        (directory / "features").mkdir(parents=True, exist_ok=True)
        files = []
        for k, (lo, hi) in enumerate(_session_runs(dataset)):
            c = int(dataset.class_id[lo])
            obj = str(dataset.object_name[lo])
            entry = dict(
                path=f"features/{k:05d}_{obj}_d{int(dataset.day[lo])}_{dataset.split[lo]}_{dataset.variant[lo]}.{encoding}",
                encoding=encoding,
                day=int(dataset.day[lo]),
                split=str(dataset.split[lo]),
                variant=str(dataset.variant[lo]),
                object=obj,
                class_id=c,
            )
            if np.any(dataset.class_id[lo:hi] != c):
                raise InvalidData(f"session {obj} mixes class ids")
            seq = dataset.seq[lo:hi]
            if encoding == "bin":
                if not np.array_equal(seq, np.arange(hi - lo)):
                    raise InvalidArgument(f"session {obj}: bin encoding needs seq 0..n-1")
                _write_bin(directory / entry["path"], dataset.features[lo:hi])
            else:
                _write_csv(directory / entry["path"], seq, dataset.features[lo:hi])
            files.append(entry)
        manifest = dict(
            name=dataset.name,
            dim=dataset.dim,
            num_classes=dataset.num_classes,
            class_names=list(dataset.class_names),
            categories=list(dataset.categories),
            files=files,
        )
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise DataIOError(f"cannot write dataset under {directory}: {exc}") from exc
    return path


def load_dataset(manifest_path) -> FeatureDataset:
    manifest_path = Path(manifest_path)
    try:
        manifest = json.loads(manifest_path.read_text())
    except OSError as exc:
        raise DataIOError(f"cannot read manifest {manifest_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidData(f"{manifest_path}: malformed JSON: {exc}") from exc
    for key in ("dim", "num_classes", "class_names", "files"):
        if key not in manifest:
            raise InvalidData(f"{manifest_path}: missing key {key!r}")
    dim = int(manifest["dim"])
    T = int(manifest["num_classes"])
    class_names = manifest["class_names"]
    categories = manifest.get("categories") or ["" for _ in class_names]
    if len(class_names) != T:
        raise InvalidData(f"{manifest_path}: {len(class_names)} class names for {T} classes")
    root = manifest_path.parent
    parts = []
    for i, entry in enumerate(manifest["files"]):
        path = root / entry["path"]
        c = int(entry["class_id"])
        if not 0 <= c < T:
            raise InvalidData(f"{manifest_path}: file entry {i} ({entry['path']}) has unknown class id {c}")
        if not path.exists():
            raise DataIOError(f"feature file not found: {path} (manifest entry {i})")
        enc = entry.get("encoding", "csv")
        if enc == "csv":
            seq, feats = _read_csv(path, dim)
        elif enc == "bin":
            seq, feats = _read_bin(path, dim)
        else:
            raise InvalidData(f"{manifest_path}: entry {i} has unknown encoding {enc!r}")
        if np.any(np.diff(seq) <= 0):
            raise InvalidData(f"{path}: seq column must strictly increase")
        n = feats.shape[0]
        parts.append((feats, c, entry["object"], int(entry["day"]), entry["split"], entry["variant"], seq, n))
    if not parts:
        feats = np.zeros((0, dim), dtype=np.float32)
        return FeatureDataset(manifest.get("name", ""), class_names, categories, feats, [], [], [], [], [], [])

    def col(k, dtype=None):
        return np.concatenate([np.full(p[7], p[k], dtype=dtype) for p in parts])

    return FeatureDataset(
        name=manifest.get("name", ""),
        class_names=class_names,
        categories=categories,
        features=np.concatenate([p[0] for p in parts]),
        class_id=col(1, np.int64),
        object_name=col(2, object).astype(str),
        day=col(3, np.int64),
        split=col(4, object).astype(str),
        variant=col(5, object).astype(str),
        seq=np.concatenate([p[6] for p in parts]),
    )


# ---------------------------------------------------------------------------
# Synthetic sessions
# ---------------------------------------------------------------------------


@dataclass
class SynthSpec:
    """Parameters of the synthetic session generator.

    Class means are ``anchor[category] + within_category_shrink * offset[class]``
    with anchors and offsets drawn i.i.d. ``N(0, s^2 / (2d) I)`` so that two
    independent draws sit about ``class_separation`` apart. Every
    ``(class, day)`` pair gets its own ``N(0, day_drift_sigma^2 I)`` shift,
    shared by that day's train and test sessions. Frames follow a stationary
    AR(1) around the shifted mean with marginal ``N(0, noise_sigma^2 I)``.

    Because drift is drawn per class it also spreads the class means apart, so
    large drift makes same-day problems easier while cross-day ones degrade.
    """

    num_classes: int = 28
    num_categories: int = 7
    dim: int = 256
    frames_per_session: int = 220
    num_days: int = 4
    class_separation: float = 8.0
    within_category_shrink: float = 0.35
    noise_sigma: float = 1.0
    temporal_rho: float = 0.6
    day_drift_sigma: float = 0.15
    seed: int = 0
    variant: str = "default"
    name: str = "synth"

    def validate(self) -> None:
        if self.num_classes < 2:
            raise InvalidArgument("num_classes must be >= 2")
        if self.num_categories < 1 or self.num_classes % self.num_categories:
            raise InvalidArgument("num_categories must divide num_classes")
        if self.dim < 1 or self.frames_per_session < 1 or self.num_days < 1:
            raise InvalidArgument("dim, frames_per_session and num_days must be positive")
        if not self.class_separation > 0:
            raise InvalidArgument("class_separation must be positive")
        if not 0 < self.within_category_shrink <= 1:
            raise InvalidArgument("within_category_shrink must lie in (0, 1]")
        if not self.noise_sigma >= 0:
            raise InvalidArgument("noise_sigma must be non-negative")
        if not 0 <= self.temporal_rho < 1:
            raise InvalidArgument("temporal_rho must lie in [0, 1)")
        if not self.day_drift_sigma >= 0:
            raise InvalidArgument("day_drift_sigma must be non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidArgument("seed must fit in 64 bits")

    def to_dict(self) -> dict:
        return asdict(self)


def synth_means(spec: SynthSpec) -> np.ndarray:
    """Per-(day, class) session means, shape ``(num_days, T, d)``."""
    return _synth_draw(spec)[0]


def _synth_draw(spec: SynthSpec):
    spec.validate()
    rng = np.random.default_rng(int(spec.seed))
    T, d, D = spec.num_classes, spec.dim, spec.num_days
    per_cat = T // spec.num_categories
    scale = spec.class_separation / math.sqrt(2 * d)
    anchors = rng.normal(0.0, scale, size=(spec.num_categories, d))
    offsets = rng.normal(0.0, scale, size=(T, d))
    base = anchors[np.arange(T) // per_cat] + spec.within_category_shrink * offsets
    drift = rng.normal(0.0, 1.0, size=(D, T, d)) * spec.day_drift_sigma
    return base[None] + drift, rng


def synth_generate(spec: SynthSpec | None = None) -> FeatureDataset:
    """Generate train and test sessions for every (day, class).

    Frame order: day, then split (train before test), then class, then time.
    """
    spec = spec or SynthSpec()
    means, rng = _synth_draw(spec)
    T, d, D, n_f = spec.num_classes, spec.dim, spec.num_days, spec.frames_per_session
    rho = spec.temporal_rho
    innov = math.sqrt(1.0 - rho * rho)
    per_cat = T // spec.num_categories
    class_names = [f"obj{c:02d}" for c in range(T)]
    categories = [f"cat{c // per_cat}" for c in range(T)]

    blocks = []
    for day in range(D):
        for split in SPLITS:
            eta = rng.normal(0.0, spec.noise_sigma, size=(n_f, T, d))
            eps = np.empty_like(eta)
            eps[0] = eta[0]
            for k in range(1, n_f):
                eps[k] = rho * eps[k - 1] + innov * eta[k]
            frames = means[day][None, :, :] + eps  # (n_f, T, d)
            blocks.append((day + 1, split, frames.transpose(1, 0, 2).reshape(T * n_f, d)))

    n_block = T * n_f
    cls = np.repeat(np.arange(T), n_f)
    return FeatureDataset(
        name=spec.name,
        class_names=class_names,
        categories=categories,
        features=np.concatenate([b[2] for b in blocks]).astype(np.float32),
        class_id=np.tile(cls, len(blocks)),
        object_name=np.tile(np.asarray(class_names)[cls], len(blocks)),
        day=np.repeat([b[0] for b in blocks], n_block),
        split=np.repeat([b[1] for b in blocks], n_block),
        variant=np.full(n_block * len(blocks), spec.variant),
        seq=np.tile(np.arange(n_f), T * len(blocks)),
    )
