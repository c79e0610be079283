"""Dataset ingestion, feature standardization, and the synthetic population
generator with planted group/resource heterogeneity.

CSV contract: UTF-8, comma separator, '.' decimal, header row, features
formatted with 9 significant digits. Group labels are opaque strings mapped
to dense ids in first-seen order; rows with missing or non-numeric cells
are rejected with the offending row number.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

FLOAT_FMT = ".9g"


@dataclass(frozen=True)
class DatasetSchema:
    id_column: str
    group_column: str
    outcome_column: str
    feature_columns: tuple[str, ...]
    outcome_kind: str = "continuous"  # or "binary"

    def __post_init__(self):
        cols = [self.id_column, self.group_column, self.outcome_column, *self.feature_columns]
        if len(set(cols)) != len(cols):
            raise ValueError("schema columns must be disjoint")
        if not self.feature_columns:
            raise ValueError("schema needs at least one feature column")
        if self.outcome_kind not in ("continuous", "binary"):
            raise ValueError(f"unknown outcome kind {self.outcome_kind!r}")
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))


@dataclass
class IndividualRecord:
    id: int
    group: int
    features: np.ndarray
    outcome: float
    true_outcome_params: np.ndarray | None = None  # per-resource expected outcomes


@dataclass
class StandardizationStats:
    means: np.ndarray
    sds: np.ndarray
    group_mapping: dict[str, int]
    flags: list[str] = field(default_factory=list)


def identity_stats(n_features: int, group_mapping: dict[str, int]) -> StandardizationStats:
    """No-op standardization with a fixed group mapping (round-trip loads)."""
    return StandardizationStats(np.zeros(n_features), np.ones(n_features), dict(group_mapping))


@dataclass
class Dataset:
    records: list[IndividualRecord]
    n_groups: int
    outcome_kind: str
    group_labels: list[str]
    noise_sd: float = 0.0
    stats: StandardizationStats | None = None

    @property
    def n(self) -> int:
        return len(self.records)

    @property
    def n_features(self) -> int:
        return int(self.records[0].features.size)

    def features_matrix(self) -> np.ndarray:
        return np.asarray([r.features for r in self.records])

    def outcomes(self) -> np.ndarray:
        return np.asarray([r.outcome for r in self.records])

    def groups(self) -> np.ndarray:
        return np.asarray([r.group for r in self.records], dtype=int)

    def group_sizes(self) -> dict[int, int]:
        sizes: dict[int, int] = {k: 0 for k in range(self.n_groups)}
        for r in self.records:
            sizes[r.group] += 1
        return sizes

    def true_means(self) -> np.ndarray:
        return np.asarray([r.true_outcome_params for r in self.records])


def compute_stats(features: np.ndarray, group_mapping: dict[str, int]) -> StandardizationStats:
    means = features.mean(axis=0)
    sds = features.std(axis=0)
    flags = []
    for j in np.where(sds == 0.0)[0]:
        flags.append(f"feature column {j} is constant; using sd=1")
    sds = np.where(sds == 0.0, 1.0, sds)
    return StandardizationStats(means, sds, dict(group_mapping), flags)


def _parse_rows(path: str, schema: DatasetSchema):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [schema.id_column, schema.group_column, schema.outcome_column,
                  *schema.feature_columns]
        missing = [c for c in needed if c not in header]
        if missing:
            raise ValueError(f"missing columns in {path}: {missing}")
        ids, labels, outcomes, feats = [], [], [], []
        for rownum, row in enumerate(reader, start=2):  # header is line 1
            values = []
            for col in schema.feature_columns:
                cell = (row.get(col) or "").strip()
                if cell == "":
                    raise ValueError(f"row {rownum}: missing value in column {col!r}")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValueError(
                        f"row {rownum}: non-numeric value {cell!r} in column {col!r}"
                    ) from None
            out_cell = (row.get(schema.outcome_column) or "").strip()
            if out_cell == "":
                raise ValueError(f"row {rownum}: missing outcome value")
            try:
                outcome = float(out_cell)
            except ValueError:
                raise ValueError(f"row {rownum}: non-numeric outcome {out_cell!r}") from None
            ids.append(row[schema.id_column])
            labels.append(row[schema.group_column])
            outcomes.append(outcome)
            feats.append(values)
    return ids, labels, np.asarray(outcomes), np.asarray(feats, dtype=float)


def load_csv(path: str, schema: DatasetSchema,
             stats: StandardizationStats | None = None) -> tuple[Dataset, StandardizationStats]:
    """Load a schema-conforming CSV into standardized records.

    When `stats` is None the file serves as its own training source and the
    z-scoring statistics are computed from it; pass stats from a training
    load to standardize held-out files without leakage. Unseen group labels
    under a provided mapping are an error.
    """
    _, labels, outcomes, feats = _parse_rows(path, schema)
    if feats.size == 0:
        raise ValueError(f"no data rows in {path}")
    if stats is None:
        mapping: dict[str, int] = {}
        for lab in labels:
            if lab not in mapping:
                mapping[lab] = len(mapping)
        stats = compute_stats(feats, mapping)
    else:
        mapping = stats.group_mapping
        unseen = sorted(set(labels) - set(mapping))
        if unseen:
            raise ValueError(f"unseen group labels {unseen} under the provided mapping")
    z = (feats - stats.means) / stats.sds
    if schema.outcome_kind == "binary":
        outcomes = (outcomes != 0.0).astype(float)
    records = [
        IndividualRecord(id=i, group=mapping[labels[i]], features=z[i], outcome=float(outcomes[i]))
        for i in range(len(labels))
    ]
    group_labels = [lab for lab, _ in sorted(mapping.items(), key=lambda kv: kv[1])]
    ds = Dataset(records=records, n_groups=len(mapping), outcome_kind=schema.outcome_kind,
                 group_labels=group_labels, stats=stats)
    return ds, stats


def write_csv(dataset: Dataset, path: str, schema: DatasetSchema | None = None) -> None:
    """Write records with the documented 9-significant-digit formatting."""
    n_feat = dataset.n_features
    if schema is None:
        schema = DatasetSchema(
            id_column="id",
            group_column="group",
            outcome_column="outcome",
            feature_columns=tuple(f"x{j}" for j in range(n_feat)),
            outcome_kind=dataset.outcome_kind,
        )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([schema.id_column, schema.group_column, schema.outcome_column,
                         *schema.feature_columns])
        for rec in dataset.records:
            label = dataset.group_labels[rec.group]
            writer.writerow(
                [rec.id, label, format(rec.outcome, FLOAT_FMT)]
                + [format(v, FLOAT_FMT) for v in rec.features]
            )


@dataclass(frozen=True)
class SyntheticSpec:
    """Synthetic population with per-(group, resource) effect structure.

    Per-cell effect weights w[k, r] (one vector per cell) drive the linear
    response; `cell_offsets` plants additive (group, resource) effects on
    the logit scale; `group_feature_shift` moves each group's feature cloud
    along a group-specific direction so group membership is visible to the
    outcome model.
    """

    n_individuals: int
    n_groups: int
    n_features: int  # continuous features; one-hot group indicators add n_groups more
    n_resources: int
    outcome_kind: str = "continuous"
    effect_scale: float = 1.0
    group_weight_jitter: float = 0.0  # per-(group, resource) deviation from the shared slope
    group_effect_scales: tuple = ()  # per-group slope multipliers; () means all 1.0
    quad_scale: float = 0.0
    group_feature_shift: float = 0.0
    group_onehot_features: bool = False
    center_group_logits: bool = False  # equalize realized per-(group, resource) mean logits
    cell_offsets: tuple = ()  # ((group, resource, offset), ...)
    noise_sd: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("n_individuals", "n_groups", "n_features", "n_resources"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if self.outcome_kind not in ("continuous", "binary"):
            raise ValueError(f"unknown outcome kind {self.outcome_kind!r}")
        object.__setattr__(self, "cell_offsets", tuple(tuple(c) for c in self.cell_offsets))
        scales = tuple(float(s) for s in self.group_effect_scales)
        if scales and len(scales) != self.n_groups:
            raise ValueError("group_effect_scales must list one multiplier per group")
        object.__setattr__(self, "group_effect_scales", scales)


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -40, 40)))


def generate_synthetic(spec: SyntheticSpec) -> Dataset:
    """Draw a population with known per-(individual, resource) mean outcomes.

    The true mean for individual i under resource r is
    sigmoid(w[k,r].x_i + quad_scale*(u_r.x_i)^2 + offset[k,r]); the
    observed training outcome is the resource-average of those means plus
    Gaussian noise. Ground truth is retained on each record for the
    simulator and the regret oracle.
    """
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n_individuals, spec.n_features
    groups = np.arange(n) % spec.n_groups
    X = rng.normal(size=(n, m))
    if spec.group_feature_shift > 0:
        directions = rng.normal(size=(spec.n_groups, m))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        X = X + spec.group_feature_shift * directions[groups]
    shared = rng.normal(0.0, spec.effect_scale / np.sqrt(m), size=(spec.n_resources, m))
    w = shared[None, :, :] + spec.group_weight_jitter * rng.normal(
        0.0, spec.effect_scale / np.sqrt(m), size=(spec.n_groups, spec.n_resources, m)
    )
    if spec.group_effect_scales:
        w = w * np.asarray(spec.group_effect_scales)[:, None, None]
    u = rng.normal(0.0, 1.0 / np.sqrt(m), size=(spec.n_resources, m))
    offsets = np.zeros((spec.n_groups, spec.n_resources))
    for (k, r, off) in spec.cell_offsets:
        offsets[int(k), int(r)] = float(off)

    logits = np.einsum("krm,nm->nkr", w, X)[np.arange(n), groups, :]  # (n, R)
    if spec.quad_scale != 0.0:
        logits = logits + spec.quad_scale * (X @ u.T) ** 2
    if spec.center_group_logits:
        # remove realized per-group level differences so cell_offsets alone
        # control the planted group structure
        for r in range(spec.n_resources):
            overall = logits[:, r].mean()
            for k in range(spec.n_groups):
                sel = groups == k
                logits[sel, r] += overall - logits[sel, r].mean()
    logits = logits + offsets[groups]
    true_means = _sigmoid(logits)

    observed = true_means.mean(axis=1) + spec.noise_sd * rng.normal(size=n)
    if spec.outcome_kind == "binary":
        observed = (observed >= 0.5).astype(float)

    if spec.group_onehot_features:
        onehot = np.zeros((n, spec.n_groups))
        onehot[np.arange(n), groups] = 1.0
        X = np.concatenate([X, onehot], axis=1)

    records = [
        IndividualRecord(
            id=i,
            group=int(groups[i]),
            features=X[i],
            outcome=float(observed[i]),
            true_outcome_params=true_means[i],
        )
        for i in range(n)
    ]
    return Dataset(
        records=records,
        n_groups=spec.n_groups,
        outcome_kind=spec.outcome_kind,
        group_labels=[f"g{k}" for k in range(spec.n_groups)],
        noise_sd=spec.noise_sd,
    )


def load_csv_split(path: str, schema: DatasetSchema, train_fraction: float,
                   rng) -> tuple[Dataset, list, list]:
    """Leak-free load: parse raw rows, stratify the split, compute z-scoring
    statistics on the train rows only, and standardize everything with them.

    Returns (dataset, train_records, eval_records); the two record lists
    point into the dataset.
    """
    _, labels, outcomes, feats = _parse_rows(path, schema)
    if feats.size == 0:
        raise ValueError(f"no data rows in {path}")
    mapping: dict[str, int] = {}
    for lab in labels:
        if lab not in mapping:
            mapping[lab] = len(mapping)
    raw = Dataset(
        records=[
            IndividualRecord(id=i, group=mapping[labels[i]], features=feats[i],
                             outcome=float(outcomes[i]))
            for i in range(len(labels))
        ],
        n_groups=len(mapping),
        outcome_kind=schema.outcome_kind,
        group_labels=[lab for lab, _ in sorted(mapping.items(), key=lambda kv: kv[1])],
    )
    train_raw, eval_raw = split(raw, train_fraction, rng)
    stats = compute_stats(np.asarray([r.features for r in train_raw]), mapping)
    z = (feats - stats.means) / stats.sds
    if schema.outcome_kind == "binary":
        outcomes = (outcomes != 0.0).astype(float)
    records = [
        IndividualRecord(id=i, group=mapping[labels[i]], features=z[i],
                         outcome=float(outcomes[i]))
        for i in range(len(labels))
    ]
    dataset = Dataset(records=records, n_groups=len(mapping),
                      outcome_kind=schema.outcome_kind,
                      group_labels=raw.group_labels, stats=stats)
    train_ids = {r.id for r in train_raw}
    train = [r for r in records if r.id in train_ids]
    evaluation = [r for r in records if r.id not in train_ids]
    return dataset, train, evaluation


def split(dataset: Dataset, train_fraction: float, rng) -> tuple[list, list]:
    """Group-stratified split into (train, eval) record lists.

    Every group appears in both splits when it has at least 2 members;
    singleton groups go to train with a warning.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train fraction must lie in (0, 1), got {train_fraction}")
    by_group: dict[int, list[IndividualRecord]] = {}
    for rec in dataset.records:
        by_group.setdefault(rec.group, []).append(rec)
    train, evaluation = [], []
    for k in sorted(by_group):
        members = by_group[k]
        if len(members) == 1:
            warnings.warn(f"group {k} has a single member; placing it in train")
            train.extend(members)
            continue
        idx = rng.permutation(len(members))
        n_train = int(round(train_fraction * len(members)))
        n_train = min(max(n_train, 1), len(members) - 1)
        train.extend(members[i] for i in idx[:n_train])
        evaluation.extend(members[i] for i in idx[n_train:])
    train.sort(key=lambda r: r.id)
    evaluation.sort(key=lambda r: r.id)
    return train, evaluation
