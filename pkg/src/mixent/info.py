"""Mutual information from mixture entropies, and Chow-Liu trees.

``MI(Y1, Y2) = H(Y1) + H(Y2) - H(Y1, Y2)`` with each entropy estimated by a
BIC-selected mixture. The Chow-Liu tree is the maximum spanning tree of the
pairwise MI matrix.

Seeds are derived from ``(config.seed, role, column labels)`` so a pair's
estimate does not depend on which other pairs were computed, or in what
order.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed
from .entropy import BoundedTransform, entropy_gmm, fit_bounded
from .mixture import FitConfig, as_data, check_finite, select_model

log = logging.getLogger(__name__)

MODES = ("gmm", "bounded", "gaussian")


class MissingCellError(ValueError):
    pass


def _entropy(x, config: FitConfig, transform: BoundedTransform | None) -> float:
    if transform is not None and transform.bounded:
        return fit_bounded(x, transform, config)[0].value
    return entropy_gmm(x, select_model(x, config)).value


def marginal_entropy(data, col: int, label: int, config: FitConfig, transform=None) -> float:
    x = as_data(data)[:, [col]]
    tr = transform.subset([col]) if transform is not None else None
    return _entropy(x, config.with_seed(derive_seed(config.seed, 1, label)), tr)


def joint_entropy(data, cols: tuple[int, int], labels: tuple[int, int], config: FitConfig, transform=None) -> float:
    # columns in canonical label order so swapping the inputs reproduces the fit exactly
    (ca, la), (cb, lb) = sorted(zip(cols, labels), key=lambda t: t[1])
    x = as_data(data)[:, [ca, cb]]
    tr = transform.subset([ca, cb]) if transform is not None else None
    return _entropy(x, config.with_seed(derive_seed(config.seed, 2, la, lb)), tr)


def mutual_information(
    data,
    config: FitConfig | None = None,
    transform: BoundedTransform | None = None,
    labels: tuple[int, int] = (0, 1),
) -> float:
    """Plug-in MI of the two columns of ``data`` (n x 2), in nats.

    ``labels`` identify the columns for seed derivation; swapping the columns
    together with their labels gives a bit-identical result.
    """
    config = config or FitConfig()
    x = as_data(data)
    check_finite(x)
    if x.shape[1] != 2:
        raise ValueError(f"mutual_information needs exactly two columns, got {x.shape[1]}")
    if x.shape[0] < 50:
        raise ValueError("mutual_information needs at least 50 observations")
    h1 = marginal_entropy(x, 0, labels[0], config, transform)
    h2 = marginal_entropy(x, 1, labels[1], config, transform)
    h12 = joint_entropy(x, (0, 1), labels, config, transform)
    return h1 + h2 - h12


def gaussian_mi(data) -> np.ndarray:
    """Pairwise ``-0.5 log(1 - rho^2)`` from sample correlations."""
    x = as_data(data)
    rho = np.corrcoef(x, rowvar=False)
    rho = np.clip(rho, -1.0, 1.0)
    with np.errstate(divide="ignore"):
        mi = -0.5 * np.log1p(-rho * rho)
    np.fill_diagonal(mi, 0.0)
    return mi


@dataclass
class MIMatrix:
    values: np.ndarray
    method: str
    labels: list[str]
    errors: dict[tuple[int, int], str] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def missing(self) -> list[tuple[int, int]]:
        return sorted(self.errors)


def mi_matrix(
    data,
    config: FitConfig | None = None,
    transform: BoundedTransform | None = None,
    mode: str = "gmm",
    labels: list[str] | None = None,
) -> MIMatrix:
    """All pairwise MI estimates of the columns of ``data``.

    ``mode`` is ``"gmm"`` (plain mixtures), ``"bounded"`` (log transform on
    the columns flagged in ``transform``) or ``"gaussian"`` (correlation
    formula). Failed pairs are recorded in ``errors`` and left as NaN.
    """
    if mode not in MODES:
        raise ValueError(f"unknown MI mode {mode!r}; expected one of {MODES}")
    config = config or FitConfig()
    x = as_data(data)
    check_finite(x)
    d = x.shape[1]
    if d < 2:
        raise ValueError("need at least two columns")
    labels = labels or [f"X{j + 1}" for j in range(d)]
    if mode == "gaussian":
        return MIMatrix(gaussian_mi(x), mode, labels)
    tr = transform if mode == "bounded" else None
    if mode == "bounded" and (tr is None or not tr.bounded):
        raise ValueError("bounded mode needs a transform with at least one bounded column")
    values = np.zeros((d, d))
    errors: dict[tuple[int, int], str] = {}
    marg: dict[int, float | Exception] = {}
    for j in range(d):
        try:
            marg[j] = marginal_entropy(x, j, j, config, tr)
        except Exception as exc:  # recorded per pair below
            marg[j] = exc
    for i in range(d):
        for j in range(i + 1, d):
            try:
                for h in (marg[i], marg[j]):
                    if isinstance(h, Exception):
                        raise h
                mi = marg[i] + marg[j] - joint_entropy(x, (i, j), (i, j), config, tr)
            except Exception as exc:
                log.warning("MI for pair (%d, %d) failed: %s", i, j, exc)
                errors[(i, j)] = f"{type(exc).__name__}: {exc}"
                mi = math.nan
            values[i, j] = values[j, i] = mi
    return MIMatrix(values, mode, labels, errors)


@dataclass(frozen=True)
class Tree:
    labels: tuple[str, ...]
    edges: tuple[tuple[int, int, float], ...]

    @property
    def total_weight(self) -> float:
        return float(sum(w for _, _, w in self.edges))

    def edge_set(self) -> set[tuple[int, int]]:
        return {(i, j) for i, j, _ in self.edges}


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[max(ra, rb)] = min(ra, rb)
        return True


def max_spanning_tree(m: MIMatrix | np.ndarray) -> Tree:
    """Kruskal's algorithm on the MI weights (negatives clamped to zero).

    Equal weights are taken in lexicographic ``(i, j)`` order.
    """
    if isinstance(m, MIMatrix):
        if m.errors:
            (i, j), cause = next(iter(sorted(m.errors.items())))
            raise MissingCellError(f"MI matrix has missing cells, first ({i}, {j}): {cause}")
        values, labels = m.values, m.labels
    else:
        values = np.asarray(m, dtype=float)
        labels = [f"X{j + 1}" for j in range(values.shape[0])]
    d = values.shape[0]
    if d < 2 or values.shape != (d, d):
        raise ValueError("need a square matrix with at least two vertices")
    iu = np.triu_indices(d, 1)
    w = values[iu]
    if not np.all(np.isfinite(w)):
        raise MissingCellError("MI matrix has non-finite cells")
    w = np.maximum(w, 0.0)
    order = sorted(range(len(w)), key=lambda e: (-w[e], iu[0][e], iu[1][e]))
    uf = _UnionFind(d)
    edges = []
    for e in order:
        i, j = int(iu[0][e]), int(iu[1][e])
        if uf.union(i, j):
            edges.append((i, j, float(w[e])))
            if len(edges) == d - 1:
                break
    return Tree(tuple(labels), tuple(edges))


def is_spanning_tree(edges, d: int) -> bool:
    if len(edges) != d - 1:
        return False
    uf = _UnionFind(d)
    for e in edges:
        if not uf.union(e[0], e[1]):
            return False
    return True


def tree_to_dict(tree: Tree) -> dict:
    return {
        "vertices": list(tree.labels),
        "edges": [{"source": i, "target": j, "weight": w} for i, j, w in tree.edges],
        "total_weight": tree.total_weight,
    }


def tree_to_dot(tree: Tree, name: str = "chow_liu") -> str:
    lines = [f"graph {name} {{"]
    for idx, label in enumerate(tree.labels):
        lines.append(f"  n{idx} [label={json.dumps(label)}];")
    for i, j, w in tree.edges:
        lines.append(f'  n{i} -- n{j} [label="{w:.3f}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
