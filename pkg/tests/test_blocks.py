import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockcs import blocks, linops
from blockcs.blocks import DictionaryError, InfeasibleSupportError, SupportModel, draw_support

from oracles import dft_matrix, dyadic_level


def test_isolated_identity():
    d = blocks.isolated_dictionary(linops.identity(4))
    assert d.M == 4
    assert all(g.tolist() == [k] for k, g in enumerate(d.groups))
    assert blocks.verify_isotropy(d) == 0.0


def test_isolated_dft_rows():
    d = blocks.isolated_dictionary(linops.dft1d(8))
    F = dft_matrix(8)
    for k in range(8):
        assert np.allclose(d.block(k), F[k:k + 1], atol=1e-14)


def test_isolated_haar_isotropy():
    assert blocks.verify_isotropy(blocks.isolated_dictionary(linops.haar1d(64))) <= 1e-12


def test_horizontal_lines_counts():
    d = blocks.line_dictionary(linops.dft2d(4), "horizontal")
    assert d.M == 4
    assert all(g.size == 4 for g in d.groups)
    assert d.groups[1].tolist() == [4, 5, 6, 7]


def test_vertical_lines_indexing():
    d = blocks.line_dictionary(linops.dft2d(4), "vertical")
    assert d.groups[1].tolist() == [1, 5, 9, 13]


def test_line_block_gram_structure():
    # B_k^* B_k = (conj(phi_{k,i}) phi_{k,j} Id)_{i,j}
    phi = dft_matrix(4)
    d = blocks.line_dictionary(linops.dft2d(4), "horizontal")
    for k in range(4):
        B = d.block(k)
        expected = np.kron(np.outer(phi[k].conj(), phi[k]), np.eye(4))
        assert np.allclose(B.conj().T @ B, expected, atol=1e-14)


def test_cover_multiplicities_two():
    d = blocks.horizontal_vertical_cover(linops.dft2d(4))
    assert d.mode == "cover"
    assert np.all(d.multiplicities == 2)
    assert blocks.verify_isotropy(d) <= 1e-10


def test_line_dictionary_needs_kron():
    with pytest.raises(DictionaryError):
        blocks.line_dictionary(linops.dft1d(16))
    with pytest.raises(DictionaryError):
        blocks.line_dictionary(linops.kron(linops.dft1d(2), linops.dft1d(4)))


def test_custom_partition_exact():
    d = blocks.custom_dictionary(linops.identity(4), [[0, 1], [2, 3]])
    assert blocks.verify_isotropy(d) == 0.0


def test_custom_cover_ring():
    d = blocks.custom_dictionary(linops.dft1d(4), [[0, 1], [1, 2], [2, 3], [3, 0]], mode="cover")
    assert d.multiplicities.tolist() == [2, 2, 2, 2]
    assert blocks.verify_isotropy(d) <= 1e-12


def test_uncovered_rows_listed():
    with pytest.raises(DictionaryError, match=r"\[2\]"):
        blocks.custom_dictionary(linops.identity(3), [[0], [0, 1]], mode="cover")


def test_partition_overlap_rejected():
    with pytest.raises(DictionaryError, match="several blocks"):
        blocks.custom_dictionary(linops.identity(3), [[0, 1], [1, 2]])


def test_wrong_multiplicity_breaks_isotropy():
    d = blocks.custom_dictionary(linops.identity(4), [[0, 1], [1, 2], [2, 3], [3, 0]], mode="cover")
    assert blocks.verify_isotropy(d) == 0.0
    assert blocks.verify_isotropy_unweighted(d) >= 0.5


@pytest.mark.parametrize("make", [linops.dft2d, linops.haar2d, linops.fourier_haar2d, linops.shannon2d])
@pytest.mark.parametrize("side", [4, 16])
def test_isotropy_all_line_schemes(make, side):
    base = make(side)
    for d in (
        blocks.line_dictionary(base, "horizontal"),
        blocks.line_dictionary(base, "vertical"),
        blocks.horizontal_vertical_cover(base),
    ):
        assert blocks.verify_isotropy(d) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 10**6))
def test_random_cover_isotropy(extra, seed):
    rng = np.random.default_rng(seed)
    n = 8
    groups = [list(range(n))[i::2] for i in range(2)]
    for _ in range(extra):
        groups.append(sorted(rng.choice(n, size=rng.integers(1, n + 1), replace=False).tolist()))
    d = blocks.custom_dictionary(linops.dft1d(n), groups, mode="cover")
    counts = np.zeros(n, int)
    for g in groups:
        counts[g] += 1
    assert np.array_equal(d.multiplicities, counts)
    assert blocks.verify_isotropy(d) <= 1e-10


# supports --------------------------------------------------------------------

def test_explicit_support():
    assert draw_support(SupportModel.explicit(16, [1, 5, 9])).tolist() == [1, 5, 9]


def test_by_levels_counts():
    n = 32
    counts = (1, 1, 0, 2, 3, 5)
    S = draw_support(SupportModel.by_levels(n, counts), seed=4)
    measured = [sum(dyadic_level(i) == j for i in S) for j in range(len(counts))]
    assert measured == list(counts)


def test_by_levels_infeasible():
    with pytest.raises(InfeasibleSupportError, match="level 2"):
        draw_support(SupportModel.by_levels(8, (1, 1, 3, 0)), seed=0)


def test_row_concentrated_full_rows():
    S = draw_support(SupportModel.row_concentrated(64, 2), seed=3)
    rows = np.unique(S // 8)
    assert rows.size == 2
    assert S.size == 16
    assert np.array_equal(blocks.occupied_rows(S, 64), rows)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31))
def test_row_concentrated_partial(q, seed):
    s = q + (seed % (q * 7 + 1))
    S = draw_support(SupportModel.row_concentrated(64, q, s), seed=seed)
    assert S.size == s
    assert np.unique(S // 8).size == q


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_column_capped_hits_caps(seed):
    caps = (1, 1, 2, 3)
    S = draw_support(SupportModel.column_capped(64, caps, fill=0.4), seed=seed)
    mask = np.zeros((8, 8), bool)
    mask.flat[S] = True
    lp = linops.LevelPartition(8)
    for j, rows in enumerate(lp):
        assert mask[rows].sum(axis=0).max() == caps[j]


def test_support_seed_determinism():
    model = SupportModel.uniform_random(64, 6)
    assert np.array_equal(draw_support(model, 7), draw_support(model, 7))


def test_support_seeds_differ():
    model = SupportModel.uniform_random(16, 3)
    differ = sum(not np.array_equal(draw_support(model, 2 * k), draw_support(model, 2 * k + 1)) for k in range(100))
    assert differ >= 99


def test_uniform_random_bounds():
    with pytest.raises(InfeasibleSupportError):
        draw_support(SupportModel.uniform_random(8, 9), 0)
