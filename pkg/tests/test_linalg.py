import io

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from gpcmrh.linalg import (
    ContractError,
    CSRMatrix,
    DenseColumnStore,
    MatrixMarketError,
    PackedUpperTriangular,
    Permutation,
    SingularTriangularError,
    back_substitute,
    read_matrix_market,
    spmv,
    write_matrix_market,
)

EPS = np.finfo(float).eps
HEADER = "%%MatrixMarket matrix coordinate real general\n"


def mm(text, header=HEADER):
    return read_matrix_market(io.StringIO(header + text))


# ---------------------------------------------------------------- CSR / spmv

def test_spmv_identity():
    assert np.array_equal(spmv(CSRMatrix.identity(3), [1.0, 2.0, 3.0]), [1, 2, 3])


def test_spmv_small_dense_reference():
    A = CSRMatrix.from_dense([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(spmv(A, [1.0, 1.0]), [3.0, 7.0])


def test_spmv_zero_operator():
    Z = CSRMatrix.from_dense(np.zeros((2, 3)))
    assert Z.nnz == 0
    assert np.array_equal(spmv(Z, [5.0, 6.0, 7.0]), [0.0, 0.0])


def test_spmv_dimension_mismatch():
    with pytest.raises(ContractError):
        spmv(CSRMatrix.identity(3), np.ones(2))


def test_csr_rejects_duplicate_columns():
    with pytest.raises(ContractError):
        CSRMatrix(1, 3, np.array([0, 2]), np.array([1, 1]), np.array([1.0, 2.0]))


def test_csr_rejects_bad_offsets():
    with pytest.raises(ContractError):
        CSRMatrix(2, 2, np.array([0, 2, 1]), np.array([0, 1]), np.array([1.0, 2.0]))


def test_from_coo_sums_duplicates():
    A = CSRMatrix.from_coo(2, 2, [0, 0, 1], [0, 0, 1], [1.0, 0.5, 2.0])
    assert A.nnz == 2
    assert np.array_equal(A.to_dense(), [[1.5, 0.0], [0.0, 2.0]])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), density=st.floats(0.02, 1.0))
def test_spmv_matches_dense_reference(seed, density):
    rng = np.random.default_rng(seed)
    S = sp.random(50, 40, density=density, random_state=rng, format="csr")
    A = CSRMatrix.from_scipy(S)
    x = rng.standard_normal(40)
    y = spmv(A, x)
    dense = S.toarray()
    nnz_row = np.maximum(np.diff(A.row_offsets), 1)
    bound = 8 * EPS * nnz_row * np.linalg.norm(dense, axis=1) * np.linalg.norm(x)
    assert np.all(np.abs(y - dense @ x) <= bound)


# ---------------------------------------------------------------- Matrix Market

def test_mm_diagonal():
    A = mm("2 2 2\n1 1 1.0\n2 2 2.0\n")
    assert np.array_equal(A.to_dense(), np.diag([1.0, 2.0]))
    assert np.array_equal(A.row_offsets, [0, 1, 2])


def test_mm_symmetric_expansion():
    A = mm("2 2 1\n2 1 3.0\n", header="%%MatrixMarket matrix coordinate real symmetric\n")
    assert A.to_dense()[0, 1] == 3.0 and A.to_dense()[1, 0] == 3.0
    assert A.nnz == 2


def test_mm_duplicates_summed_against_accumulator():
    entries = [(1, 1, 1.0), (1, 1, 0.5), (2, 1, -1.0), (2, 1, 4.0), (1, 2, 7.0)]
    body = "2 2 %d\n" % len(entries) + "".join(f"{i} {j} {v}\n" for i, j, v in entries)
    A = mm(body)
    acc = {}
    for i, j, v in entries:
        acc[(i - 1, j - 1)] = acc.get((i - 1, j - 1), 0.0) + v
    assert A.nnz == len(acc)
    for (i, j), v in acc.items():
        assert A.to_dense()[i, j] == v
    assert A.to_dense()[0, 0] == 1.5


def test_mm_comments_and_bytes():
    text = HEADER + "% a comment\n%\n2 2 1\n% another\n2 2 5\n"
    A = read_matrix_market(io.BytesIO(text.encode()))
    assert A.to_dense()[1, 1] == 5.0


@pytest.mark.parametrize(
    "text, line",
    [
        ("%%MatrixMarket matrix array real general\n2 2\n", 1),
        ("%%MatrixMarket matrix coordinate pattern general\n2 2 1\n1 1\n", 1),
        ("%%MatrixMarket matrix coordinate complex general\n2 2 1\n1 1 1 0\n", 1),
        ("hello\n", 1),
        (HEADER + "2 2 1\n3 1 1.0\n", 3),
        (HEADER + "2 2 1\n1 0 1.0\n", 3),
        (HEADER + "2 2 2\n1 1 1.0\n", None),
        (HEADER + "2 x 1\n", 2),
        (HEADER + "2 2 1\n1 1 abc\n", 3),
    ],
)
def test_mm_errors_name_line(text, line):
    with pytest.raises(MatrixMarketError) as info:
        read_matrix_market(io.StringIO(text))
    if line is not None:
        assert info.value.lineno == line
        assert f"line {line}" in str(info.value)


def test_mm_symmetric_upper_entry_rejected():
    with pytest.raises(MatrixMarketError):
        mm("2 2 1\n1 2 3.0\n", header="%%MatrixMarket matrix coordinate real symmetric\n")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), m=st.integers(1, 12), n=st.integers(1, 12))
def test_mm_roundtrip_idempotent(seed, m, n):
    rng = np.random.default_rng(seed)
    A = CSRMatrix.from_scipy(sp.random(m, n, density=0.4, random_state=rng, format="csr"))
    buf = io.StringIO()
    write_matrix_market(A, buf)
    B = read_matrix_market(io.StringIO(buf.getvalue()))
    buf2 = io.StringIO()
    write_matrix_market(B, buf2)
    C = read_matrix_market(io.StringIO(buf2.getvalue()))
    assert A == B == C


# ---------------------------------------------------------------- containers

def test_column_store_append_and_combine():
    s = DenseColumnStore(3, capacity=1)
    s.append([1.0, 0.0, 0.0])
    s.append([0.0, 2.0, 0.0])
    assert len(s) == 2
    assert np.array_equal(s.matrix(), [[1, 0], [0, 2], [0, 0]])
    assert np.array_equal(s.combine([3.0, 1.0]), [3.0, 2.0, 0.0])
    with pytest.raises(ContractError):
        s.append([1.0, 2.0])


def test_permutation_swap_and_matrix():
    p = Permutation(3)
    p.swap(0, 1)
    assert list(p.map) == [1, 0, 2]
    v = np.array([10.0, 20.0, 30.0])
    assert np.array_equal(p.matrix() @ v, v[p.map])
    with pytest.raises(ContractError):
        Permutation([0, 0, 1])


def test_packed_upper_access_contract():
    R = PackedUpperTriangular.from_dense(np.array([[2.0, 1.0], [0.0, 4.0]]))
    assert R.order == 2
    assert R[0, 1] == 1.0
    with pytest.raises(ContractError):
        R[1, 0]


# ---------------------------------------------------------------- back substitution

def test_back_substitute_identity():
    R = PackedUpperTriangular.from_dense(np.eye(4))
    assert np.array_equal(back_substitute(R, [1.0, 2.0, 3.0, 4.0]), [1, 2, 3, 4])


def test_back_substitute_two_by_two():
    Rd = np.array([[2.0, 1.0], [0.0, 4.0]])
    z = back_substitute(PackedUpperTriangular.from_dense(Rd), [4.0, 8.0])
    assert np.array_equal(z, [1.0, 2.0])
    assert np.array_equal(Rd @ z, [4.0, 8.0])


def test_back_substitute_singular_reports_index():
    R = PackedUpperTriangular.from_dense(np.array([[1.0, 2.0], [0.0, 0.0]]))
    with pytest.raises(SingularTriangularError) as info:
        back_substitute(R, [1.0, 1.0])
    assert info.value.index == 1


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 40))
def test_back_substitute_residual(seed, k):
    rng = np.random.default_rng(seed)
    Rd = np.triu(rng.standard_normal((k, k))) / np.sqrt(k)
    Rd[np.diag_indices(k)] = np.sign(rng.standard_normal(k)) * (1 + rng.random(k))
    t = rng.standard_normal(k)
    z = back_substitute(PackedUpperTriangular.from_dense(Rd), t)
    assert np.linalg.norm(Rd @ z - t) <= 32 * EPS * k * np.linalg.norm(Rd, 2) * np.linalg.norm(z)
