"""Matrix ingestion: Matrix Market files, LIBSVM ridge Hessians, synthetic matrices.

Everything is densified; this is a desk-scale tool.
"""

import logging
import os

import numpy as np

from .errors import ConfigError, MatrixFormatError
from .linalg import ProblemMatrix
from .sketching import make_rng

log = logging.getLogger(__name__)

SPARSE_WARN_DENSITY = 0.01


def _open(path):
    try:
        return open(path, "r", encoding="ascii", errors="replace")
    except OSError as exc:
        raise MatrixFormatError(f"cannot open {path}: {exc.strerror}") from exc


def _data_lines(fh, start):
    """Yield ``(line_number, tokens)`` of non-comment, non-blank lines."""
    for lineno, line in enumerate(fh, start=start):
        s = line.strip()
        if not s or s.startswith("%"):
            continue
        yield lineno, s.split()


def _parse_header(line):
    parts = line.strip().split()
    if len(parts) != 5 or parts[0].lower() != "%%matrixmarket":
        raise MatrixFormatError("missing '%%MatrixMarket' header", 1)
    obj, fmt, field, sym = (p.lower() for p in parts[1:])
    if obj != "matrix":
        raise MatrixFormatError(f"unsupported object {obj!r}", 1)
    if fmt not in ("coordinate", "array"):
        raise MatrixFormatError(f"unsupported format {fmt!r}", 1)
    if field in ("complex", "pattern"):
        raise MatrixFormatError(f"{field} matrices are not supported (real values only)", 1)
    if field not in ("real", "integer", "double"):
        raise MatrixFormatError(f"unknown field {field!r}", 1)
    if sym not in ("general", "symmetric", "skew-symmetric"):
        raise MatrixFormatError(f"unsupported symmetry {sym!r}", 1)
    return fmt, sym


def _numbers(tokens, lineno, kinds):
    if len(tokens) != len(kinds):
        raise MatrixFormatError(f"expected {len(kinds)} fields, got {len(tokens)}", lineno)
    try:
        return [k(t) for k, t in zip(kinds, tokens)]
    except ValueError as exc:
        raise MatrixFormatError(f"cannot parse {' '.join(tokens)!r}", lineno) from exc


def read_matrix_market(path):
    """Dense array and symmetry qualifier of a real Matrix Market file."""
    with _open(path) as fh:
        header = fh.readline()
        fmt, sym = _parse_header(header)
        lines = _data_lines(fh, 2)
        try:
            lineno, tokens = next(lines)
        except StopIteration:
            raise MatrixFormatError("missing size line") from None
        if fmt == "coordinate":
            m, n, nnz = _numbers(tokens, lineno, (int, int, int))
        else:
            m, n = _numbers(tokens, lineno, (int, int))
        if m < 1 or n < 1:
            raise MatrixFormatError(f"invalid size {m} x {n}", lineno)
        if sym != "general" and m != n:
            raise MatrixFormatError(f"{sym} matrix must be square, got {m} x {n}", lineno)
        M = np.zeros((m, n))
        last = lineno
        if fmt == "coordinate":
            count = 0
            for lineno, tokens in lines:
                if count == nnz:
                    raise MatrixFormatError(f"more than the declared {nnz} entries", lineno)
                i, j, v = _numbers(tokens, lineno, (int, int, float))
                if not (1 <= i <= m and 1 <= j <= n):
                    raise MatrixFormatError(f"index ({i}, {j}) outside {m} x {n}", lineno)
                if sym != "general" and i < j:
                    raise MatrixFormatError(f"entry ({i}, {j}) above the diagonal of a {sym} matrix", lineno)
                M[i - 1, j - 1] += v
                if sym != "general" and i != j:
                    M[j - 1, i - 1] += -v if sym == "skew-symmetric" else v
                count += 1
                last = lineno
            if count != nnz:
                raise MatrixFormatError(f"expected {nnz} entries, found {count}", last)
        else:
            if sym == "general":
                positions = [(i, j) for j in range(n) for i in range(m)]
            elif sym == "symmetric":
                positions = [(i, j) for j in range(n) for i in range(j, m)]
            else:
                positions = [(i, j) for j in range(n) for i in range(j + 1, m)]
            count = 0
            for lineno, tokens in lines:
                if count == len(positions):
                    raise MatrixFormatError(f"more than the expected {len(positions)} entries", lineno)
                (v,) = _numbers(tokens, lineno, (float,))
                i, j = positions[count]
                M[i, j] = v
                if sym != "general":
                    M[j, i] = -v if sym == "skew-symmetric" else v
                count += 1
                last = lineno
            if count != len(positions):
                raise MatrixFormatError(f"expected {len(positions)} entries, found {count}", last)
    if fmt == "coordinate" and m * n > 0 and nnz / (m * n) < SPARSE_WARN_DENSITY:
        log.warning("%s has density %.2g%%; it is densified (desk-scale tool)", path, 100 * nnz / (m * n))
    return M, sym


def load_matrix_market(path):
    """Load a square real Matrix Market file as a :class:`ProblemMatrix`.

    The ``symmetric`` qualifier mirrors the stored triangle and flags the
    result symmetric; positive definiteness is left to be checked on demand.
    """
    M, sym = read_matrix_market(path)
    if M.shape[0] != M.shape[1]:
        raise MatrixFormatError(f"expected a square matrix, got {M.shape[0]} x {M.shape[1]}")
    return ProblemMatrix(M, "symmetric" if sym == "symmetric" else "general")


def write_matrix_market(path, A, symmetric=None, comment=None):
    """Write ``A`` in array format (``symmetric`` stores the lower triangle)."""
    A = A.data if isinstance(A, ProblemMatrix) else np.asarray(A, dtype=float)
    if symmetric is None:
        symmetric = A.shape[0] == A.shape[1] and np.array_equal(A, A.T)
    m, n = A.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"%%MatrixMarket matrix array real {'symmetric' if symmetric else 'general'}\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{m} {n}\n")
        for j in range(n):
            for i in range(j if symmetric else 0, m):
                fh.write(f"{float(A[i, j])!r}\n")


def read_libsvm(path):
    """Feature matrix (dense, rows = samples) and labels of a LIBSVM file.

    Indices are 1-based; the column count is the largest index seen.
    """
    rows, labels = [], []
    n = 0
    with _open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            tokens = s.split()
            try:
                labels.append(float(tokens[0]))
            except ValueError:
                raise MatrixFormatError(f"bad label {tokens[0]!r}", lineno) from None
            entries = {}
            for tok in tokens[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise MatrixFormatError(f"expected index:value, got {tok!r}", lineno)
                if idx == "qid":
                    continue
                try:
                    j, v = int(idx), float(val)
                except ValueError:
                    raise MatrixFormatError(f"cannot parse {tok!r}", lineno) from None
                if j < 1:
                    raise MatrixFormatError(f"feature index {j} is not 1-based", lineno)
                entries[j - 1] = v
                n = max(n, j)
            rows.append(entries)
    if n == 0:
        raise MatrixFormatError(f"{path} contains no features")
    X = np.zeros((len(rows), n))
    for r, entries in enumerate(rows):
        for j, v in entries.items():
            X[r, j] = v
    return X, np.array(labels)


def build_ridge_hessian(path, lam=1.0):
    """``D^T D + lam I`` for the LIBSVM data matrix ``D``.

    Flagged SPD when ``lam > 0`` or ``D`` has full column rank, else symmetric.
    """
    if lam < 0:
        raise ConfigError("the regularization must be nonnegative")
    D, _ = read_libsvm(path)
    H = D.T @ D
    H[np.diag_indices_from(H)] += lam
    P = ProblemMatrix(H, "symmetric")
    if P.is_spd() and (lam > 0 or np.linalg.matrix_rank(D) == D.shape[1]):
        return ProblemMatrix(H, "spd")
    return P


def gen_synthetic(n, seed=0, base=None):
    """``B^T B`` with ``B`` uniform on ``[0, 1)``, flagged SPD.

    ``base`` overrides the random ``B`` (used to pin the output in tests).
    """
    if n < 2:
        raise ConfigError("synthetic matrices need n >= 2")
    B = make_rng(seed).random((n, n)) if base is None else np.asarray(base, dtype=float)
    if B.shape != (n, n):
        raise ConfigError(f"base must be {n} x {n}")
    return ProblemMatrix(B.T @ B, "spd")


def resolve_matrix(source):
    """Parse a matrix source string.

    ``synthetic:N[:SEED]``, ``identity:N``, ``libsvm:PATH[:LAMBDA]``, or a
    path to a Matrix Market file (``mtx:PATH`` also accepted).
    """
    kind, _, rest = source.partition(":")
    try:
        if kind == "synthetic":
            n, _, seed = rest.partition(":")
            return gen_synthetic(int(n), int(seed) if seed else 0)
        if kind == "identity":
            return ProblemMatrix(np.eye(int(rest)), "spd")
    except ValueError as exc:
        raise ConfigError(f"bad matrix source {source!r}") from exc
    if kind == "libsvm":
        path, lam = rest, 1.0
        head, sep, tail = rest.rpartition(":")
        if sep:
            try:
                lam = float(tail)
                path = head
            except ValueError:
                pass
        return build_ridge_hessian(path, lam)
    path = rest if kind == "mtx" else source
    if not os.path.exists(path):
        raise MatrixFormatError(f"no such file: {path}")
    return load_matrix_market(path)
