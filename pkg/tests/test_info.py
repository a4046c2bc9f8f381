import itertools
import math
import re

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mixent.benchmarks import LogNormal, sample
from mixent.entropy import BoundedTransform
from mixent.info import (
    MIMatrix,
    MissingCellError,
    gaussian_mi,
    is_spanning_tree,
    max_spanning_tree,
    mi_matrix,
    mutual_information,
    tree_to_dict,
    tree_to_dot,
)
from mixent.mixture import FitConfig

LEAN = FitConfig(k_range=(1, 3), n_init=1, tol=1e-6)


def prufer_trees(d):
    """Every labelled spanning tree of K_d, decoded from Pruefer sequences."""
    if d == 2:
        yield [(0, 1)]
        return
    for seq in itertools.product(range(d), repeat=d - 2):
        degree = [1] * d
        for v in seq:
            degree[v] += 1
        edges = []
        for v in seq:
            leaf = min(i for i in range(d) if degree[i] == 1)
            edges.append(tuple(sorted((leaf, v))))
            degree[leaf] -= 1
            degree[v] -= 1
        u, w = [i for i in range(d) if degree[i] == 1]
        edges.append((u, w))
        yield edges


def brute_force_best(w):
    d = w.shape[0]
    return max(sum(max(w[i, j], 0.0) for i, j in t) for t in prufer_trees(d))


def random_symmetric(r, d):
    a = r.normal(size=(d, d))
    a = (a + a.T) / 2
    np.fill_diagonal(a, 0.0)
    return a


def chain(n, seed, rho=0.7):
    r = np.random.default_rng(seed)
    x1 = r.normal(size=n)
    x2 = rho * x1 + math.sqrt(1 - rho**2) * r.normal(size=n)
    x3 = rho * x2 + math.sqrt(1 - rho**2) * r.normal(size=n)
    return np.c_[x1, x2, x3]


def star(n, seed):
    r = np.random.default_rng(seed)
    x1 = r.normal(size=n)
    leaves = [0.8 * x1 + 0.6 * r.normal(size=n) for _ in range(3)]
    return np.column_stack([x1, *leaves])


class TestPruferOracle:
    @pytest.mark.parametrize("d, count", [(2, 1), (3, 3), (4, 16), (5, 125)])
    def test_cayley_count(self, d, count):
        trees = list(prufer_trees(d))
        assert len(trees) == count
        assert len({frozenset(t) for t in trees}) == len(trees)
        assert all(is_spanning_tree(t, d) for t in trees)


class TestMaxSpanningTree:
    def test_two_vertices(self):
        t = max_spanning_tree(np.array([[0, 0.3], [0.3, 0]]))
        assert t.edges == ((0, 1, 0.3),)

    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    def test_matches_enumeration(self, seed, d):
        w = random_symmetric(np.random.default_rng(seed), d)
        t = max_spanning_tree(w)
        assert is_spanning_tree(t.edges, d)
        assert t.total_weight == pytest.approx(brute_force_best(w), abs=1e-12)

    def test_beats_random_trees(self, rng):
        for _ in range(5):
            d = 7
            w = np.abs(random_symmetric(rng, d))
            best = max_spanning_tree(w).total_weight
            for _ in range(1000):
                seq = rng.integers(d, size=d - 2)
                # decode a random Pruefer sequence
                degree = np.ones(d, int)
                np.add.at(degree, seq, 1)
                total = 0.0
                for v in seq:
                    leaf = int(np.flatnonzero(degree == 1)[0])
                    total += w[leaf, v]
                    degree[leaf] -= 1
                    degree[v] -= 1
                u, x = np.flatnonzero(degree == 1)
                total += w[u, x]
                assert best >= total - 1e-12

    def test_ties_lexicographic(self):
        w = np.ones((3, 3)) - np.eye(3)
        assert max_spanning_tree(w).edge_set() == {(0, 1), (0, 2)}

    def test_negative_weights_clamped(self):
        w = np.array([[0, -0.1, 0.2], [-0.1, 0, -0.3], [0.2, -0.3, 0]])
        t = max_spanning_tree(w)
        assert is_spanning_tree(t.edges, 3)
        assert min(e[2] for e in t.edges) == 0.0

    def test_missing_cell_refused(self):
        m = MIMatrix(np.full((3, 3), np.nan), "gmm", ["a", "b", "c"], {(0, 2): "AllInitsFailed: boom"})
        with pytest.raises(MissingCellError, match=r"\(0, 2\).*boom"):
            max_spanning_tree(m)

    def test_dot_output(self):
        t = max_spanning_tree(MIMatrix(np.array([[0, 0.25], [0.25, 0]]), "gmm", ["x", "y"]))
        dot = tree_to_dot(t)
        assert re.fullmatch(
            r'graph \w+ \{\n(  n\d+ \[label="[^"]*"\];\n)+(  n\d+ -- n\d+ \[label="[0-9.]+"\];\n)*\}\n', dot
        )
        assert 'n0 -- n1 [label="0.250"]' in dot
        assert tree_to_dict(t)["edges"] == [{"source": 0, "target": 1, "weight": 0.25}]


class TestMutualInformation:
    def test_independent(self, rng):
        assert abs(mutual_information(rng.normal(size=(10_000, 2)), LEAN)) < 0.03

    def test_gaussian_rho_09(self, rng):
        x = rng.multivariate_normal([0, 0], [[1, 0.9], [0.9, 1]], size=10_000)
        # -0.5 log(1 - 0.81), mpmath
        assert mutual_information(x, LEAN) == pytest.approx(0.830365603410825594, abs=0.05)

    def test_lognormal_bounded(self):
        y = sample(LogNormal.bivariate(0, 0, 1, 0.25, 0.5), 10_000, 8)
        mi = mutual_information(y, LEAN, BoundedTransform.all_bounded(2))
        assert mi == pytest.approx(0.143841036225890464, abs=0.05)

    def test_symmetry_exact(self, rng):
        x = rng.multivariate_normal([0, 0], [[1, 0.5], [0.5, 2]], size=400)
        a = mutual_information(x, LEAN, labels=(0, 1))
        b = mutual_information(x[:, ::-1], LEAN, labels=(1, 0))
        assert a == b

    def test_needs_two_columns(self, rng):
        with pytest.raises(ValueError):
            mutual_information(rng.normal(size=(100, 3)), LEAN)


class TestMIMatrix:
    def test_d2_equals_pairwise(self, rng):
        x = rng.multivariate_normal([0, 0], [[1, 0.6], [0.6, 1]], size=500)
        m = mi_matrix(x, LEAN)
        assert m.values[0, 1] == m.values[1, 0] == mutual_information(x, LEAN)

    @pytest.mark.slow
    def test_independent_d4(self, rng):
        m = mi_matrix(rng.normal(size=(10_000, 4)), LEAN)
        assert np.all(np.abs(m.values[np.triu_indices(4, 1)]) < 0.05)

    def test_gaussian_mode_exact_correlation(self, rng):
        z = rng.normal(size=(200, 2))
        z -= z.mean(axis=0)
        q, _ = np.linalg.qr(z)
        x = q @ np.linalg.cholesky([[1, 0.6], [0.6, 1]]).T
        # -0.5 log(0.64), mpmath
        assert mi_matrix(x, mode="gaussian").values[0, 1] == pytest.approx(0.223143551314209745, abs=1e-10)

    @given(st.floats(0.1, 100), st.floats(-50, 50))
    def test_gaussian_mode_affine_invariant(self, a, b):
        x = np.random.default_rng(0).multivariate_normal([0, 0, 0], [[1, 0.3, 0], [0.3, 1, 0.5], [0, 0.5, 1]], 300)
        y = x.copy()
        y[:, 1] = a * y[:, 1] + b
        assert np.allclose(gaussian_mi(x), gaussian_mi(y), atol=1e-9)

    def test_failed_pair_recorded(self, rng):
        x = np.c_[rng.normal(size=100), rng.normal(size=100), np.linspace(-1, 1, 100)]
        x[0, 2] = -5.0  # below the bound
        m = mi_matrix(x, LEAN, BoundedTransform.columns(3, [2], lower=-2.0), mode="bounded")
        assert m.missing == [(0, 2), (1, 2)]
        assert math.isnan(m.values[0, 2])
        assert np.isfinite(m.values[0, 1])


class TestStructureRecovery:
    def test_chain(self):
        m = mi_matrix(chain(5000, 1), LEAN)
        assert max_spanning_tree(m).edge_set() == {(0, 1), (1, 2)}

    def test_star(self):
        m = mi_matrix(star(5000, 2), LEAN)
        assert max_spanning_tree(m).edge_set() == {(0, 1), (0, 2), (0, 3)}
