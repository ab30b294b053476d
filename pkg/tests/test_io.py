import numpy as np
import pytest
import scipy.io
from numpy.testing import assert_allclose

from stochinv.errors import ConfigError, MatrixFormatError
from stochinv.io import (
    build_ridge_hessian,
    gen_synthetic,
    load_matrix_market,
    read_libsvm,
    read_matrix_market,
    resolve_matrix,
    write_matrix_market,
)

SYM_COORD = """%%MatrixMarket matrix coordinate real symmetric
% the running example
2 2 3
1 1 2
2 1 1
2 2 2
"""


def write(tmp_path, text, name="m.mtx"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestMatrixMarket:
    def test_symmetric_coordinate(self, tmp_path):
        P = load_matrix_market(write(tmp_path, SYM_COORD))
        assert_allclose(P.data, [[2, 1], [1, 2]])
        assert P.symmetry == "symmetric"

    def test_array_column_major(self, tmp_path):
        M, sym = read_matrix_market(write(tmp_path, "%%MatrixMarket matrix array real general\n2 2\n1\n0\n0\n1\n"))
        assert_allclose(M, np.eye(2))
        assert sym == "general"

    def test_skew(self, tmp_path):
        M, _ = read_matrix_market(write(tmp_path, "%%MatrixMarket matrix coordinate real skew-symmetric\n2 2 1\n2 1 3\n"))
        assert_allclose(M, [[0, -3], [3, 0]])

    def test_truncated_names_count(self, tmp_path):
        with pytest.raises(MatrixFormatError, match="expected 3 entries, found 2") as err:
            read_matrix_market(write(tmp_path, SYM_COORD.rsplit("\n", 2)[0] + "\n"))
        assert err.value.exit_code == 4

    @pytest.mark.parametrize("text,match", [
        ("%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1 0\n", "complex"),
        ("%%MatrixMarket matrix coordinate pattern general\n1 1 1\n1 1\n", "pattern"),
        ("hello\n", "header"),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n", "outside"),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 x\n", "cannot parse"),
        ("%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 2 1.0\n", "above the diagonal"),
        ("%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 1\n2 2 1\n", "more than"),
    ])
    def test_malformed(self, tmp_path, text, match):
        with pytest.raises(MatrixFormatError, match=match):
            read_matrix_market(write(tmp_path, text))

    def test_error_carries_line(self, tmp_path):
        with pytest.raises(MatrixFormatError) as err:
            read_matrix_market(write(tmp_path, "%%MatrixMarket matrix coordinate real general\n%c\n2 2 1\n1 1 x\n"))
        assert err.value.line == 4

    def test_non_square_rejected_for_problems(self, tmp_path):
        with pytest.raises(MatrixFormatError, match="square"):
            load_matrix_market(write(tmp_path, "%%MatrixMarket matrix array real general\n1 2\n1\n2\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            read_matrix_market(str(tmp_path / "none.mtx"))

    @pytest.mark.parametrize("symmetric", [False, True])
    def test_roundtrip_and_scipy(self, tmp_path, rng, symmetric):
        A = rng.standard_normal((5, 5))
        if symmetric:
            A = A + A.T
        path = str(tmp_path / "out.mtx")
        write_matrix_market(path, A, comment="two\nlines")
        M, sym = read_matrix_market(path)
        assert np.array_equal(M, A)
        assert sym == ("symmetric" if symmetric else "general")
        assert_allclose(np.asarray(scipy.io.mmread(path)), A, rtol=0, atol=0)

    def test_reads_what_scipy_writes(self, tmp_path, rng):
        import scipy.sparse

        A = scipy.sparse.random(6, 6, density=0.4, random_state=1, format="coo")
        path = str(tmp_path / "sp.mtx")
        scipy.io.mmwrite(path, A)
        M, _ = read_matrix_market(path)
        assert_allclose(M, A.toarray(), rtol=1e-15)


class TestLibsvm:
    def test_ridge_example(self, tmp_path):
        p = write(tmp_path, "1 1:1\n-1 2:2\n", "d.svm")
        P = build_ridge_hessian(p, 1.0)
        assert_allclose(P.data, [[2, 0], [0, 5]])
        assert P.symmetry == "spd"

    def test_rank_deficient_without_ridge(self, tmp_path):
        P = build_ridge_hessian(write(tmp_path, "1 1:1 2:1\n0 1:2 2:2\n", "d.svm"), 0.0)
        assert P.symmetry == "symmetric"

    def test_empty(self, tmp_path):
        with pytest.raises(MatrixFormatError):
            build_ridge_hessian(write(tmp_path, "", "d.svm"), 1.0)

    def test_negative_lambda(self, tmp_path):
        with pytest.raises(ConfigError):
            build_ridge_hessian(write(tmp_path, "1 1:1\n", "d.svm"), -1.0)

    def test_bad_token(self, tmp_path):
        with pytest.raises(MatrixFormatError, match="index:value") as err:
            read_libsvm(write(tmp_path, "1 1:1\n1 3\n", "d.svm"))
        assert err.value.line == 2

    def test_matches_sklearn(self, tmp_path, rng):
        datasets = pytest.importorskip("sklearn.datasets")
        X = rng.standard_normal((20, 7)) * (rng.random((20, 7)) < 0.5)
        y = rng.integers(0, 2, 20).astype(float)
        path = str(tmp_path / "r.svm")
        datasets.dump_svmlight_file(X, y, path, zero_based=False)
        Xr, yr = read_libsvm(path)
        Xs, ys = datasets.load_svmlight_file(path, n_features=Xr.shape[1], zero_based=False)
        assert_allclose(Xr, Xs.toarray())
        assert_allclose(yr, ys)


class TestSynthetic:
    def test_deterministic(self):
        assert np.array_equal(gen_synthetic(20, 3).data, gen_synthetic(20, 3).data)
        assert not np.array_equal(gen_synthetic(20, 3).data, gen_synthetic(20, 4).data)

    def test_spd(self):
        P = gen_synthetic(30, 1)
        assert P.symmetry == "spd" and P.is_spd()

    def test_hook(self):
        assert_allclose(gen_synthetic(2, base=np.eye(2)).data, np.eye(2))

    def test_too_small(self):
        with pytest.raises(ConfigError):
            gen_synthetic(1)


class TestResolve:
    def test_sources(self, tmp_path):
        assert resolve_matrix("identity:3").n == 3
        assert np.array_equal(resolve_matrix("synthetic:10:2").data, gen_synthetic(10, 2).data)
        path = write(tmp_path, SYM_COORD)
        assert_allclose(resolve_matrix(path).data, [[2, 1], [1, 2]])
        assert_allclose(resolve_matrix("mtx:" + path).data, [[2, 1], [1, 2]])
        svm = write(tmp_path, "1 1:1\n-1 2:2\n", "d.svm")
        assert_allclose(resolve_matrix(f"libsvm:{svm}:0.5").data, [[1.5, 0], [0, 4.5]])
        assert_allclose(resolve_matrix(f"libsvm:{svm}").data, [[2, 0], [0, 5]])

    def test_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            resolve_matrix("synthetic:abc")
        with pytest.raises(MatrixFormatError):
            resolve_matrix(str(tmp_path / "missing.mtx"))
