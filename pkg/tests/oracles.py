"""Brute-force reference implementations used only by the tests."""
from fractions import Fraction
from itertools import permutations, product
from math import gcd

import numpy as np


def brute_flags(alpha, jumps):
    """All distinct prefix-multiset flags over every permutation."""
    out = set()
    for p in permutations(range(len(alpha))):
        vals = [alpha[i] for i in p]
        out.add(tuple(tuple(sorted(vals[:l])) for l in jumps))
    return out


def support(d, jumps):
    """0/1 matrix of the standard parabolic with the given jump set."""
    bounds = [0] + list(jumps) + [d]
    M = np.zeros((d, d), dtype=int)
    for k in range(len(bounds) - 1):
        M[bounds[k]:bounds[k + 1], bounds[k]:] = 1
    return M


def brute_entropy(alpha, jumps, perm):
    d = len(alpha)
    M = support(d, jumps)
    a = [alpha[p - 1] for p in perm]
    return sum((max(a[i] - a[j], 0) for i in range(d) for j in range(d) if i != j and M[i, j]), Fraction(0))


def brute_projection(alpha, jumps, perm):
    """Average of alpha^{wu} over the block permutations u."""
    d = len(alpha)
    bounds = [0] + list(jumps) + [d]
    blocks = [range(bounds[k], bounds[k + 1]) for k in range(len(bounds) - 1)]
    a = [alpha[p - 1] for p in perm]
    acc = [Fraction(0)] * d
    count = 0
    for us in product(*[list(permutations(b)) for b in blocks]):
        u = [i for blk in us for i in blk]
        for i in range(d):
            acc[i] += a[u[i]]
        count += 1
    return tuple(x / count for x in acc)


def brute_rows(alpha, cusp=True):
    """(h, v) for every (P, perm), jumps over all subsets (P=G skipped when cusp)."""
    d = len(alpha)
    out = set()
    for mask in range(2 ** (d - 1)):
        jumps = tuple(j for j in range(1, d) if mask >> (j - 1) & 1)
        if cusp and not jumps:
            continue
        for p in permutations(range(1, d + 1)):
            out.add((brute_entropy(alpha, jumps, p), brute_projection(alpha, jumps, p)))
    return sorted(out)


def grid_minmax(alpha, cusp=True, width=4.0, n=1001, refinements=2, zoom=3):
    """Min over sum-zero c of max_j h_j - <c, v_j>, by a refined grid (d <= 3).

    The objective is convex, so each refinement re-grids a box of +-zoom
    cells around the current best point.
    """
    d = len(alpha)
    R = brute_rows(alpha, cusp)
    H = np.array([float(h) for h, _ in R])
    V = np.array([[float(x) for x in v] for _, v in R])
    # orthonormal basis of the sum-zero plane
    basis = np.linalg.svd(np.ones((1, d)))[2][1:]
    M = V @ basis.T
    center = np.zeros(d - 1)
    half = width
    best = None
    for _ in range(refinements + 1):
        axes = [np.linspace(c - half, c + half, n) for c in center]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d - 1)
        vals = np.empty(len(grid))
        for s in range(0, len(grid), 100000):
            vals[s:s + 100000] = (H[None, :] - grid[s:s + 100000] @ M.T).max(axis=1)
        k = int(vals.argmin())
        best = vals[k]
        center = grid[k]
        half = zoom * 2 * half / (n - 1)
    return float(best)


# ---------------------------------------------------------------- lattices

def _inv(B):
    """Exact inverse of a square Fraction matrix (Gauss-Jordan)."""
    n = len(B)
    A = [[Fraction(x) for x in row] + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(B)]
    for c in range(n):
        p = next(r for r in range(c, n) if A[r][c] != 0)
        A[c], A[p] = A[p], A[c]
        A[c] = [v / A[c][c] for v in A[c]]
        for r in range(n):
            if r != c and A[r][c]:
                f = A[r][c]
                A[r] = [a - f * b for a, b in zip(A[r], A[c])]
    return [row[n:] for row in A]


def _vec(B, y):
    return [sum((B[i][j] * y[j] for j in range(len(y))), Fraction(0)) for i in range(len(B))]


def _norm2(v):
    return sum((x * x for x in v), Fraction(0))


def short_vectors(B, R2):
    """All nonzero coefficient vectors y (both signs) with |B y|^2 <= R2, exactly.

    The box comes from |y_i| <= |row_i(B^-1)| |B y|; the filter runs on the
    integer matrix D B in numpy and survivors are re-checked in Fractions.
    """
    d = len(B)
    Binv = _inv(B)
    bound = [int((float(_norm2(row)) * float(R2)) ** 0.5) + 1 for row in Binv]
    D = 1
    for row in B:
        for x in row:
            D = D * Fraction(x).denominator // gcd(D, Fraction(x).denominator)
    BI = np.array([[int(Fraction(x) * D) for x in row] for row in B], dtype=np.int64)
    limit = int(R2 * D * D) + 1
    assert (int(np.abs(BI).max()) * sum(bound)) ** 2 * d < 2 ** 62, "int64 overflow"
    out = []
    # slice along the first coordinate so the grid stays small in memory
    for y0 in range(-bound[0], bound[0] + 1):
        grids = np.meshgrid(*[np.arange(-b, b + 1) for b in bound[1:]], indexing="ij")
        Y = np.vstack([np.full(grids[0].size, y0, dtype=np.int64)] + [g.ravel() for g in grids])
        V = BI @ Y
        n = np.einsum("ij,ij->j", V, V)
        # D B is an exact integer matrix, so n / D^2 is the exact squared norm
        for k in np.nonzero(n <= limit)[0]:
            y = tuple(int(v) for v in Y[:, k])
            if any(y) and int(n[k]) <= R2 * D * D:
                out.append((int(n[k]), y))
    out.sort()
    return [(Fraction(n, D * D), y) for n, y in out]


def brute_minima_sq(B):
    """Exact squared successive minima by exhaustive enumeration."""
    d = len(B)
    R2 = max(_norm2([B[i][j] for i in range(d)]) for j in range(d))
    echelon = {}  # pivot column -> integer row
    out = []
    for n, y in short_vectors(B, R2):
        v = list(y)
        for c, row in echelon.items():
            if v[c]:
                v = [row[c] * a - v[c] * b for a, b in zip(v, row)]
        if any(v):
            echelon[next(i for i, a in enumerate(v) if a)] = v
            out.append(n)
            if len(out) == d:
                break
    return out


def _gram_det(vectors):
    G = [[sum((a * b for a, b in zip(u, v)), Fraction(0)) for v in vectors] for u in vectors]
    n = len(G)
    M = [row[:] for row in G]
    det = Fraction(1)
    for c in range(n):
        p = next((r for r in range(c, n) if M[r][c] != 0), None)
        if p is None:
            return Fraction(0)
        if p != c:
            M[c], M[p] = M[p], M[c]
            det = -det
        det *= M[c][c]
        for r in range(c + 1, n):
            f = M[r][c] / M[c][c]
            M[r] = [a - f * b for a, b in zip(M[r], M[c])]
    return det


def brute_alpha_sq(B, l):
    """Exact squared alpha_l: min Gram determinant over l-tuples of short vectors.

    A Minkowski-reduced basis of the optimal sublattice has every vector of
    norm^2 at most H prod(lambda_1..lambda_l)^2 / lambda_1^(2(l-1)), with H the
    squared Hermite-type constant (4/3 for planes, 2 for 3-spaces).
    """
    d = len(B)
    lam2 = brute_minima_sq(B)
    if l == d:
        return Fraction(1)
    bound2 = Fraction(4, 3) if l == 2 else Fraction(2)
    for i in range(l):
        bound2 *= lam2[i]
    bound2 /= lam2[0] ** (l - 1)
    vecs = [_vec(B, y) for _, y in short_vectors(B, bound2)]
    # keep one of each +- pair
    half = [v for v in vecs if next(x for x in v if x != 0) > 0]
    best = None
    from itertools import combinations
    if l == 2:
        n2 = [_norm2(v) for v in half]
        for i in range(len(half)):
            for j in range(i + 1, len(half)):
                dot = sum((a * b for a, b in zip(half[i], half[j])), Fraction(0))
                g = n2[i] * n2[j] - dot * dot
                if g > 0 and (best is None or g < best):
                    best = g
        return best
    for tup in combinations(half, l):
        g = _gram_det(list(tup))
        if g > 0 and (best is None or g < best):
            best = g
    return best


def dual_alpha_sq(B):
    """alpha_{d-1}^2 of a unimodular lattice: squared shortest dual vector."""
    Binv = _inv(B)
    dual = [[Binv[j][i] for j in range(len(B))] for i in range(len(B))]
    return brute_minima_sq(dual)[0]


def sampled_grassmann(V, W, n=20000, seed=0):
    """sup over sampled unit v in V of dist(v, W), with numpy."""
    rng = np.random.default_rng(seed)
    V = np.array(V, dtype=float).T
    W = np.array(W, dtype=float).T
    Qw, _ = np.linalg.qr(W)
    c = rng.normal(size=(V.shape[1], n))
    X = V @ c
    X /= np.linalg.norm(X, axis=0)
    R = X - Qw @ (Qw.T @ X)
    return float(np.max(np.linalg.norm(R, axis=0)))
