"""Sparsifying bases: cosine transforms, fractional powers, secret variants.

The fractional cosine transform is obtained from the eigendecomposition of
the DCT matrix; packing a real signal into a half-length complex one and
unpacking after the complex fractional transform yields a real orthogonal
matrix (the reality-preserving fractional cosine transform).  Three
basis-equivalence operators -- column scaling, column permutation and
column mixing -- then turn any such basis into a key-dependent one with
identical sparsifying power.

Orientation note: with the textbook entry formula used here the DCT matrix
has cosine waves as its *columns* (a synthesis matrix), so the
energy-concentrating analysis map of the length-M transform is x -> R^T x.
All coefficient maps in this module use that analysis direction.
"""

from dataclasses import dataclass, field

import numpy as np

from .keyrand import Permutation

__all__ = [
    "EigenSystem",
    "SecretBasisSpec",
    "BasisPair",
    "dct_matrix",
    "dct_eigensystem",
    "dfrct_matrix",
    "rpfrct_matrix",
    "rpfrct2d_forward",
    "rpfrct2d_inverse",
    "rpfrct_basis",
    "rpfrct2d_basis",
    "f1_scale",
    "f2_permute",
    "f3_mix",
    "build_secret_basis",
    "best_s_term",
    "corner_region_1d",
    "corner_region_2d",
]


def dct_matrix(n):
    """Orthogonal DCT matrix with entries (1/sqrt(n)) eps_l cos(2 pi (2i+1) l / 4n).

    Row index i, column index l; eps_0 = 1 and eps_l = sqrt(2) for l > 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    i = np.arange(n)[:, None]
    l = np.arange(n)[None, :]
    eps = np.where(l == 0, 1.0, np.sqrt(2.0))
    return (1.0 / np.sqrt(n)) * eps * np.cos(2.0 * np.pi * (2 * i + 1) * l / (4.0 * n))


@dataclass
class EigenSystem:
    """Unitary eigendecomposition C = U diag(exp(j phi)) U*."""

    U: np.ndarray
    phis: np.ndarray

    def reconstruct(self):
        return self.U @ (np.exp(1j * self.phis)[:, None] * self.U.conj().T)

    def fractional(self, alpha):
        """The alpha-th power via the principal eigenvalue arguments."""
        return self.U @ (np.exp(1j * alpha * self.phis)[:, None] * self.U.conj().T)


_EIG_CACHE = {}
_CLUSTER_TOL = 1e-7
_EIG_RESID_TOL = 1e-10


def dct_eigensystem(n):
    """Eigensystem of dct_matrix(n) with a deterministic ordering convention.

    Eigenvalues are sorted by principal argument in (-pi, pi]; near-equal
    arguments are clustered, re-orthonormalized by QR, and tie-broken by
    lexicographic order on the rounded eigenvector entries.  Results are
    cached per size.
    """
    if n in _EIG_CACHE:
        return _EIG_CACHE[n]
    C = dct_matrix(n)
    lam, U = np.linalg.eig(C.astype(complex))
    phi = np.angle(lam)
    # keep the principal branch (-pi, pi] but fold values hugging -pi onto +pi
    # so a -1 eigenspace is not split across the branch cut
    phi = np.where(phi <= -np.pi + _CLUSTER_TOL, phi + 2.0 * np.pi, phi)
    order = np.argsort(phi, kind="stable")
    phi, U = phi[order], U[:, order]
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and abs(phi[stop] - phi[stop - 1]) < _CLUSTER_TOL:
            stop += 1
        if stop - start > 1:
            block = U[:, start:stop]

            def entry_key(c):
                v = np.round(block[:, c], 12)
                return tuple(np.column_stack([v.real, v.imag]).ravel())

            sub = sorted(range(stop - start), key=entry_key)
            Q, _ = np.linalg.qr(block[:, sub])
            U[:, start:stop] = Q
            phi[start:stop] = np.mean(phi[start:stop])
        start = stop
    sys = EigenSystem(U=U, phis=phi)
    resid = np.max(np.abs(sys.reconstruct() - C))
    unit = np.max(np.abs(U.conj().T @ U - np.eye(n)))
    if resid > _EIG_RESID_TOL or unit > _EIG_RESID_TOL:
        raise ArithmeticError(
            f"eigendecomposition of the size-{n} DCT failed: "
            f"reconstruction residual {resid:.3e}, orthonormality residual {unit:.3e}")
    _EIG_CACHE[n] = sys
    return sys


def dfrct_matrix(n, alpha):
    """Complex unitary fractional cosine transform of order alpha."""
    return dct_eigensystem(n).fractional(alpha)


def rpfrct_matrix(M, alpha):
    """Real orthogonal reality-preserving fractional cosine transform.

    Built by applying the half-length complex fractional transform B to the
    signal packed as first-half + j second-half:

        R = [[Re B, -Im B],
             [Im B,  Re B]]

    M must be even.
    """
    if M < 2 or M % 2 != 0:
        raise ValueError("signal length must be even and >= 2")
    B = dfrct_matrix(M // 2, alpha)
    return np.block([[B.real, -B.imag], [B.imag, B.real]])


def rpfrct2d_forward(X, alpha, beta):
    """Separable 2-D transform S = R_alpha X R_beta^T on an even-sided square."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] % 2 != 0:
        raise ValueError("X must be square with even side")
    n = X.shape[0]
    return rpfrct_matrix(n, alpha) @ X @ rpfrct_matrix(n, beta).T

def rpfrct2d_inverse(S, alpha, beta):
    """Inverse of :func:`rpfrct2d_forward`: X = R_alpha^T S R_beta."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] % 2 != 0:
        raise ValueError("S must be square with even side")
    n = S.shape[0]
    return rpfrct_matrix(n, alpha).T @ S @ rpfrct_matrix(n, beta)


class BasisPair:
    """Invertible basis held as a pair of vector maps.

    ``to_coeffs`` maps a signal to its coefficient vector (the analysis
    direction, Psi^{-1} x) and ``from_coeffs`` maps coefficients back.  Bases
    are composed operator-style; the full matrix is never materialized.
    """

    def __init__(self, to_coeffs, from_coeffs, n):
        self.to_coeffs = to_coeffs
        self.from_coeffs = from_coeffs
        self.n = n


def rpfrct_basis(M, alpha):
    """Length-M basis whose analysis map is x -> R_alpha^T x."""
    R = rpfrct_matrix(M, alpha)
    return BasisPair(lambda x: R.T @ x, lambda s: R @ s, M)

def rpfrct2d_basis(n, alpha, beta):
    """Basis on column-stacked n x n images; analysis map R_alpha^T X R_beta.

    Operates on vectors of length n^2 (column-major stacking).
    """
    Ra = rpfrct_matrix(n, alpha)
    Rb = rpfrct_matrix(n, beta)

    def to_coeffs(x):
        X = np.asarray(x, dtype=float).reshape((n, n), order="F")
        return (Ra.T @ X @ Rb).flatten(order="F")

    def from_coeffs(s):
        S = np.asarray(s, dtype=float).reshape((n, n), order="F")
        return (Ra @ S @ Rb.T).flatten(order="F")

    return BasisPair(to_coeffs, from_coeffs, n * n)


def f1_scale(basis, d):
    """Scale basis columns by the non-zero factors d_j (coefficients scale by 1/d_j)."""
    d = np.asarray(d, dtype=float)
    if d.shape != (basis.n,):
        raise ValueError("need one scale factor per basis column")
    if np.any(d == 0):
        raise ValueError("scale factors must be non-zero")
    return BasisPair(
        lambda x: basis.to_coeffs(x) / d,
        lambda s: basis.from_coeffs(s * d),
        basis.n,
    )

def f2_permute(basis, perm):
    """Permute basis columns: Psi' = Psi P, so coefficients map as s' = P^T s."""
    if perm.n != basis.n:
        raise ValueError("permutation size does not match the basis")
    return BasisPair(
        lambda x: perm.apply_transpose(basis.to_coeffs(x)),
        lambda s: basis.from_coeffs(perm.apply(s)),
        basis.n,
    )

def f3_mix(basis, mixes, region=None):
    """Replace column j with a*psi_j + b*psi_k for each mix record (j, k, a, b).

    For signals supported entirely inside or outside the mixed columns the
    coefficient count is unchanged; the update is s'_j = s_j / a,
    s'_k = s_k - s_j b / a.  When a region is given, every pair must lie
    fully inside or fully outside it.
    """
    mixes = [(int(j), int(k), float(a), float(b)) for j, k, a, b in mixes]
    for j, k, a, b in mixes:
        if a == 0.0:
            raise ValueError("mix factor a must be non-zero")
        if j == k or not (0 <= j < basis.n and 0 <= k < basis.n):
            raise ValueError(f"invalid mix pair ({j}, {k})")
        if region is not None:
            inside = np.isin([j, k], region)
            if inside[0] != inside[1]:
                raise ValueError(f"mix pair ({j}, {k}) crosses the region boundary")

    def to_coeffs(x):
        s = np.array(basis.to_coeffs(x), dtype=float)
        for j, k, a, b in reversed(mixes):
            sj = s[j]
            s[j] = sj / a
            s[k] = s[k] - sj * b / a
        return s

    def from_coeffs(sp):
        s = np.array(sp, dtype=float)
        for j, k, a, b in mixes:
            sj = s[j]
            s[j] = a * sj
            s[k] = s[k] + b * sj
        return basis.from_coeffs(s)

    return BasisPair(to_coeffs, from_coeffs, basis.n)


@dataclass
class SecretBasisSpec:
    """Composition recipe for a key-dependent sparsifying basis.

    The basis is Psi_K = Psi P D Q where Psi is the fractional cosine basis
    of order alpha (and beta along the second axis when two_d is set),
    P permutes columns, D = diag(1/d_j) scales them and Q applies the column
    mixes.  ``region`` indexes the coefficient positions the mixes may touch
    as a group.
    """

    n: int
    alpha: float
    beta: float | None = None
    perm: Permutation | None = None
    scale: np.ndarray | None = None
    mixes: list = field(default_factory=list)
    region: np.ndarray | None = None
    two_d: bool = False

    @property
    def size(self):
        """Length of the coefficient vector the composed basis acts on."""
        return self.n * self.n if self.two_d else self.n


def build_secret_basis(spec):
    """Compose the key-dependent basis and return (forward, inverse) applies.

    ``forward`` is the sparsifying map Psi_K^{-1} (signal to coefficients),
    ``inverse`` is Psi_K (coefficients to signal); both are compositions of
    operator applications.
    """
    if spec.two_d:
        if spec.beta is None:
            raise ValueError("2-D basis needs both fractional orders")
        basis = rpfrct2d_basis(spec.n, spec.alpha, spec.beta)
    else:
        basis = rpfrct_basis(spec.n, spec.alpha)
    if spec.perm is not None:
        basis = f2_permute(basis, spec.perm)
    if spec.scale is not None:
        d = np.asarray(spec.scale, dtype=float)
        if np.any(d <= 0):
            raise ValueError("scale factors d_j must be positive")
        basis = f1_scale(basis, 1.0 / d)
    if spec.mixes:
        basis = f3_mix(basis, spec.mixes, region=spec.region)
    return basis.to_coeffs, basis.from_coeffs


def best_s_term(coeffs, s):
    """Keep the s largest-magnitude entries of coeffs, zeroing the rest."""
    coeffs = np.asarray(coeffs, dtype=float)
    if not 0 <= s <= coeffs.size:
        raise ValueError("s must be between 0 and len(coeffs)")
    out = np.zeros_like(coeffs)
    if s == 0:
        return out
    keep = np.argsort(-np.abs(coeffs), kind="stable")[:s]
    out[keep] = coeffs[keep]
    return out


def corner_region_1d(M, side):
    """Indices of the leading ``side`` entries of each half of a length-M vector."""
    idx = np.arange(M)
    return idx[(idx % (M // 2)) < side]

def corner_region_2d(n, side):
    """Column-stacked indices of the four side x side sub-block corners of an n x n array."""
    r = np.arange(n)
    hit = (r % (n // 2)) < side
    rows, cols = np.meshgrid(r[hit], r[hit], indexing="ij")
    return (cols * n + rows).ravel()
