"""Feature/task data model, the nearest-class-mean classifier and the
projection onto the subspace spanned by the class means."""

from __future__ import annotations

import numbers
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Optional

import numpy as np
import scipy.linalg

Label = Hashable

RANK_TOL = 1e-10


def label_key(label):
    """Sort key giving the canonical class order: numbers by value, then
    strings lexicographically."""
    if isinstance(label, numbers.Real) and not isinstance(label, bool):
        return (0, float(label), "")
    return (1, 0.0, str(label))


def canonical_labels(labels: Iterable[Label]) -> tuple:
    return tuple(sorted(set(labels), key=label_key))


@dataclass(frozen=True)
class FeatureSet:
    """Labeled feature vectors, stored as an ``(N, d)`` float array."""

    vectors: np.ndarray
    labels: tuple

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        if vectors.ndim != 2:
            raise ValueError("feature vectors must form a 2-D array")
        labels = tuple(self.labels)
        if len(labels) != vectors.shape[0]:
            raise ValueError(
                f"{vectors.shape[0]} vectors but {len(labels)} labels")
        if vectors.shape[1] < 1:
            raise ValueError("feature dimension must be at least 1")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("feature vectors contain NaN or Inf")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self):
        return self.vectors.shape[0]

    @cached_property
    def classes(self) -> tuple:
        return canonical_labels(self.labels)

    def by_class(self) -> dict:
        """Map each label (canonical order) to its ``(k_c, d)`` block,
        preserving input order within a class."""
        labels = np.empty(len(self.labels), dtype=object)
        labels[:] = self.labels
        return {c: self.vectors[labels == c] for c in self.classes}

    @classmethod
    def from_blocks(cls, blocks: Mapping[Label, np.ndarray]) -> "FeatureSet":
        keys = canonical_labels(blocks)
        arrays = [np.atleast_2d(np.asarray(blocks[c], dtype=float)) for c in keys]
        labels = [c for c, a in zip(keys, arrays) for _ in range(a.shape[0])]
        return cls(np.concatenate(arrays, axis=0), tuple(labels))


@dataclass(frozen=True)
class FewShotTask:
    """An n-way k-shot problem. The query set, when present, is only used
    to measure ground-truth accuracy."""

    support: FeatureSet
    query: Optional[FeatureSet] = None

    def __post_init__(self):
        counts = {c: 0 for c in self.support.classes}
        for lab in self.support.labels:
            counts[lab] += 1
        if len(counts) < 1:
            raise ValueError("support set is empty")
        if len(set(counts.values())) != 1:
            raise ValueError(f"unequal shots per class: {counts}")
        if self.query is not None:
            extra = set(self.query.labels) - set(counts)
            if extra:
                raise ValueError(f"query labels absent from support: {sorted(extra, key=label_key)}")
            if self.query.dim != self.support.dim:
                raise ValueError("query and support dimensions differ")

    @property
    def classes(self) -> tuple:
        return self.support.classes

    @property
    def n_ways(self) -> int:
        return len(self.support.classes)

    @property
    def k_shots(self) -> int:
        return len(self.support) // self.n_ways

    @property
    def dim(self) -> int:
        return self.support.dim

    @cached_property
    def support_by_class(self) -> dict:
        return self.support.by_class()

    @classmethod
    def from_blocks(cls, support: Mapping[Label, np.ndarray],
                    query: Optional[Mapping[Label, np.ndarray]] = None) -> "FewShotTask":
        q = FeatureSet.from_blocks(query) if query is not None else None
        return cls(FeatureSet.from_blocks(support), q)


def fit_class_means(support) -> dict:
    """Empirical class centers. Accepts a FeatureSet, a FewShotTask or a
    mapping label -> samples."""
    if isinstance(support, FewShotTask):
        blocks = support.support_by_class
    elif isinstance(support, FeatureSet):
        blocks = support.by_class()
    else:
        blocks = {c: np.atleast_2d(np.asarray(support[c], dtype=float))
                  for c in canonical_labels(support)}
    means = {}
    for c, block in blocks.items():
        if block.shape[0] == 0:
            raise ValueError(f"class {c!r} has no samples")
        means[c] = block.mean(axis=0)
    return means


def _stack_means(means: Mapping[Label, np.ndarray]):
    labels = canonical_labels(means)
    return labels, np.stack([np.asarray(means[c], dtype=float) for c in labels])


def ncm_predict(Z: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """Index of the nearest row of ``centers`` for every row of ``Z``.

    Exact ties go to the lowest index, so ``centers`` must be in canonical
    label order for the documented tie-break to hold.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[1] != centers.shape[1]:
        raise ValueError(f"dimension mismatch: {Z.shape[1]} vs {centers.shape[1]}")
    sq = np.zeros((Z.shape[0], centers.shape[0]))
    for j, mu in enumerate(centers):
        diff = Z - mu
        sq[:, j] = np.einsum("ij,ij->i", diff, diff)
    return np.argmin(sq, axis=1)


def ncm_classify(z, means: Mapping[Label, np.ndarray]) -> Label:
    labels, centers = _stack_means(means)
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.ndim != 1 or z.shape[0] != centers.shape[1]:
        raise ValueError(f"dimension mismatch: {z.shape} vs {centers.shape[1]}")
    z = z[None, :]
    return labels[int(ncm_predict(z, centers)[0])]


@dataclass(frozen=True)
class ErrorEstimate:
    """A predicted probability of error and how it was obtained."""

    p_error: float
    method: str  # analytic | monte_carlo | cv | db_index | oracle
    m_used: Optional[int] = None
    seed: Optional[int] = None
    bound_half_width: Optional[float] = None
    variant: Optional[str] = None
    corrected: Optional[bool] = None

    @property
    def accuracy(self) -> float:
        return 1.0 - self.p_error

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "p_error", "method", "m_used", "seed", "bound_half_width", "variant", "corrected")}
        d["accuracy"] = self.accuracy
        return d


@dataclass(frozen=True)
class ProjectedTask:
    basis: np.ndarray  # (rank, d), orthonormal rows
    support_proj: FeatureSet
    means_proj: dict
    query_proj: Optional[FeatureSet] = field(default=None)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def project(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.basis.T


def class_subspace_basis(means: Mapping[Label, np.ndarray]) -> np.ndarray:
    """Orthonormal basis (rows) of span{mu_c - mu_first} from a
    column-pivoted QR; directions with |R_ii| < 1e-10 * max are dropped."""
    _, M = _stack_means(means)
    if M.shape[0] < 2:
        raise ValueError("projection needs at least two classes")
    diffs = (M[1:] - M[0]).T
    Q, R, _ = scipy.linalg.qr(diffs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag.max() == 0.0:
        raise ValueError("degenerate class centers")
    rank = int(np.sum(diag >= RANK_TOL * diag.max()))
    return Q[:, :rank].T.copy()


def project_to_class_subspace(task: FewShotTask, means: Optional[Mapping] = None) -> ProjectedTask:
    if means is None:
        means = fit_class_means(task)
    basis = class_subspace_basis(means)
    sup = FeatureSet(task.support.vectors @ basis.T, task.support.labels)
    query = None
    if task.query is not None:
        query = FeatureSet(task.query.vectors @ basis.T, task.query.labels)
    means_proj = {c: np.asarray(means[c], dtype=float) @ basis.T for c in canonical_labels(means)}
    return ProjectedTask(basis, sup, means_proj, query)
