"""Spectral machinery: symmetric eigendecomposition, graph Fourier transforms,
polynomial frequency filters, cross-domain spectral mixing, and per-class
spectral signatures.

The eigensolver is a cyclic Jacobi sweep. It is deliberately self-contained
(no LAPACK) so that results are bit-reproducible across runs and platforms
given identical input, which the training determinism contract relies on.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import NumericError, Tensor, add, leaky_relu, matmul
from .graph import DomainPair, Graph, normalized_laplacian

__all__ = [
    "SpectralBasis",
    "eig_sym",
    "gft",
    "inverse_gft",
    "FilterBank",
    "SpectralMixConfig",
    "SpectralMixOperators",
    "mix_layer",
    "target_stream_layer",
    "spectral_augment",
    "category_signature",
    "resample_signature",
    "cross_domain_signature_correlation",
]

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 100


@dataclass(frozen=True)
class SpectralBasis:
    """Eigenvectors (columns) and ascending eigenvalues of a symmetric matrix.

    The deterministic sign convention fixes each eigenvector's direction:
    its largest-magnitude component (first such index on ties) is >= 0.
    """

    vectors: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        u, lam = self.vectors, self.values
        n = u.shape[0]
        if u.shape != (n, n) or lam.shape != (n,):
            raise ValueError(f"inconsistent basis shapes {u.shape}, {lam.shape}")
        if np.any(np.diff(lam) < 0.0):
            raise ValueError("eigenvalues must be ascending")
        gram_err = np.max(np.abs(u.T @ u - np.eye(n)))
        if gram_err > 1e-8:
            raise ValueError(f"eigenvector columns not orthonormal (error {gram_err:.3e})")

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _off_diag_norm(a: np.ndarray) -> float:
    # summed entrywise, never as a difference of totals: that cancellation
    # would floor the residual near sqrt(eps)*||A||_F and fake a stall
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def _jacobi(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi sweeps in row-major (p, q) order.

    Converges when the off-diagonal Frobenius norm drops below 1e-12; raises
    after 100 sweeps without convergence.
    """
    n = a.shape[0]
    mat = a.copy()
    vec = np.eye(n)
    for sweep in range(_JACOBI_MAX_SWEEPS + 1):
        off = _off_diag_norm(mat)
        if off <= _JACOBI_TOL:
            break
        if sweep == _JACOBI_MAX_SWEEPS:
            raise NumericError(
                f"Jacobi eigensolver did not converge in {_JACOBI_MAX_SWEEPS} sweeps "
                f"(off-diagonal residual {off:.3e})"
            )
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = mat[p, q]
                if apq == 0.0:
                    continue
                diff = mat[q, q] - mat[p, p]
                if abs(diff) + 100.0 * abs(apq) == abs(diff):
                    # pivot negligible next to the diagonal gap; the exact
                    # formula would overflow theta, and tan collapses to this
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    if theta >= 0.0:
                        t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                    else:
                        t = 1.0 / (theta - np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p = mat[:, p].copy()
                col_q = mat[:, q].copy()
                mat[:, p] = col_p * c - col_q * s
                mat[:, q] = col_p * s + col_q * c
                row_p = mat[p, :].copy()
                row_q = mat[q, :].copy()
                mat[p, :] = row_p * c - row_q * s
                mat[q, :] = row_p * s + row_q * c
                mat[p, q] = 0.0  # annihilated exactly by construction
                mat[q, p] = 0.0
                vcol_p = vec[:, p].copy()
                vcol_q = vec[:, q].copy()
                vec[:, p] = vcol_p * c - vcol_q * s
                vec[:, q] = vcol_p * s + vcol_q * c
    return np.diag(mat).copy(), vec


def eig_sym(matrix: Tensor | np.ndarray) -> SpectralBasis:
    """Full eigendecomposition of a symmetric matrix.

    Eigenvalues come back ascending; eigenvector signs follow the basis'
    deterministic convention. Input must be symmetric within 1e-10.
    """
    a = matrix.data if isinstance(matrix, Tensor) else np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got {a.shape}")
    asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
    if asym > 1e-10:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e})")
    lam, u = _jacobi((a + a.T) / 2.0)
    order = np.argsort(lam, kind="stable")
    lam = lam[order]
    u = u[:, order]
    for j in range(u.shape[1]):
        lead = int(np.argmax(np.abs(u[:, j])))
        if u[lead, j] < 0.0:
            u[:, j] = -u[:, j]
    return SpectralBasis(vectors=u, values=lam)


def gft(basis: SpectralBasis, signal: Tensor | np.ndarray) -> np.ndarray:
    """Graph Fourier coefficients U^T x for an (n, k) signal."""
    x = signal.data if isinstance(signal, Tensor) else np.asarray(signal, dtype=np.float64)
    if x.shape[0] != basis.n:
        raise ValueError(f"signal has {x.shape[0]} rows, basis expects {basis.n}")
    return basis.vectors.T @ x


def inverse_gft(basis: SpectralBasis, coeffs: Tensor | np.ndarray) -> np.ndarray:
    """Synthesis U z; exact inverse of gft up to rounding."""
    z = coeffs.data if isinstance(coeffs, Tensor) else np.asarray(coeffs, dtype=np.float64)
    if z.shape[0] != basis.n:
        raise ValueError(f"coefficients have {z.shape[0]} rows, basis expects {basis.n}")
    return basis.vectors @ z


def _polyval(coeffs: tuple[float, ...], lam: np.ndarray) -> np.ndarray:
    # ascending coefficient order: c0 + c1*lam + c2*lam^2 + ...
    out = np.zeros_like(lam, dtype=np.float64)
    for c in reversed(coeffs):
        out = out * lam + c
    return out


@dataclass(frozen=True)
class FilterBank:
    """Low-pass and high-pass polynomial frequency responses over [0, 2].

    Coefficients are ascending. The combined response g = g_low + g_high is
    the filter the stability bound reasons about; with the defaults
    g_low = 1 - lam/2 and g_high = lam/2 it is identically 1.
    """

    low: tuple[float, ...] = (1.0, -0.5)
    high: tuple[float, ...] = (0.0, 0.5)

    def __post_init__(self):
        if not self.low or not self.high:
            raise ValueError("filter polynomials need at least one coefficient")
        grid = np.linspace(0.0, 2.0, 401)
        lo = _polyval(tuple(float(c) for c in self.low), grid)
        hi = _polyval(tuple(float(c) for c in self.high), grid)
        if np.any(np.diff(lo) > 1e-9):
            raise ValueError("low-pass response must be nonincreasing on [0, 2]")
        if np.any(np.diff(hi) < -1e-9):
            raise ValueError("high-pass response must be nondecreasing on [0, 2]")

    def low_response(self, lam: np.ndarray) -> np.ndarray:
        return _polyval(self.low, np.asarray(lam, dtype=np.float64))

    def high_response(self, lam: np.ndarray) -> np.ndarray:
        return _polyval(self.high, np.asarray(lam, dtype=np.float64))

    def response(self, lam: np.ndarray) -> np.ndarray:
        return self.low_response(lam) + self.high_response(lam)

    def combined(self) -> tuple[float, ...]:
        """Ascending coefficients of g = g_low + g_high."""
        width = max(len(self.low), len(self.high))
        out = [0.0] * width
        for i, c in enumerate(self.low):
            out[i] += float(c)
        for i, c in enumerate(self.high):
            out[i] += float(c)
        return tuple(out)

    def drop_low(self) -> "FilterBank":
        return FilterBank(low=(0.0,), high=self.high)

    def drop_high(self) -> "FilterBank":
        return FilterBank(low=self.low, high=(0.0,))


@dataclass(frozen=True)
class SpectralMixConfig:
    """Mixing weights for the cross-domain spectral encoder.

    alpha weights the source high-frequency coefficients against the
    target's, beta does the same for the low-frequency band, and k caps how
    many (lowest-eigenvalue) components take part in the mixing. k=None
    resolves to min(n_source, n_target) at build time.
    """

    alpha: float = 0.8
    beta: float = 0.8
    k: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.k is not None and self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class SpectralMixOperators:
    """Constant vertex-domain operators realizing one spectral mixing layer.

    own_source   (n_s, n_s): source components weighted alpha*g_H + beta*g_L
    cross        (n_s, n_t): target components weighted (1-alpha)*g_H +
                             (1-beta)*g_L, lifted into the source basis
    own_target   (n_t, n_t): the target's full-band filter, used to advance
                             the target-side stream between stacked layers
    """

    own_source: np.ndarray
    cross: np.ndarray
    own_target: np.ndarray

    @classmethod
    def build(
        cls,
        basis_source: SpectralBasis,
        basis_target: SpectralBasis,
        cfg: SpectralMixConfig,
        filters: FilterBank,
    ) -> "SpectralMixOperators":
        n_s, n_t = basis_source.n, basis_target.n
        k = cfg.k if cfg.k is not None else min(n_s, n_t)
        if not 1 <= k <= min(n_s, n_t):
            raise ValueError(f"k={k} outside [1, {min(n_s, n_t)}]")
        u_s = basis_source.vectors[:, :k]
        u_t = basis_target.vectors[:, :k]
        lam_s = basis_source.values[:k]
        lam_t = basis_target.values[:k]
        coef_s = cfg.alpha * filters.high_response(lam_s) + cfg.beta * filters.low_response(lam_s)
        coef_t = (1.0 - cfg.alpha) * filters.high_response(lam_t) + (
            1.0 - cfg.beta
        ) * filters.low_response(lam_t)
        coef_t_full = filters.response(lam_t)
        return cls(
            own_source=(u_s * coef_s) @ u_s.T,
            cross=(u_s * coef_t) @ u_t.T,
            own_target=(u_t * coef_t_full) @ u_t.T,
        )


def mix_layer(ops: SpectralMixOperators, h_source: Tensor, h_target: Tensor, w: Tensor) -> Tensor:
    """One source-side mixing layer:
    sigma(own_source @ H_s @ W + cross @ H_t @ W)."""
    mixed = add(
        matmul(Tensor(ops.own_source), matmul(h_source, w)),
        matmul(Tensor(ops.cross), matmul(h_target, w)),
    )
    return leaky_relu(mixed)


def target_stream_layer(ops: SpectralMixOperators, h_target: Tensor, w: Tensor) -> Tensor:
    """Advance the target-side stream with its own full-band filter."""
    return leaky_relu(matmul(Tensor(ops.own_target), matmul(h_target, w)))


def spectral_augment(
    pair: DomainPair,
    bases: tuple[SpectralBasis, SpectralBasis],
    w: Tensor,
    cfg: SpectralMixConfig,
    filters: FilterBank | None = None,
) -> Tensor:
    """Single cross-domain mixing layer applied to the raw features.

    Returns the source-side representation sigma(U_s [alpha g_H(L_s) U_s^T
    X_s W + (1-alpha) g_H(L_t) U_t^T X_t W + beta g_L(...) + (1-beta)
    g_L(...)]), truncated to the k lowest-frequency components per side.
    """
    filters = filters if filters is not None else FilterBank()
    basis_s, basis_t = bases
    if basis_s.n != pair.source.n or basis_t.n != pair.target.n:
        raise ValueError("bases do not match the pair's node counts")
    ops = SpectralMixOperators.build(basis_s, basis_t, cfg, filters)
    return mix_layer(ops, Tensor(pair.source.features), Tensor(pair.target.features), w)


def category_signature(g: Graph, basis: SpectralBasis, class_id: int) -> np.ndarray:
    """L2-normalized magnitude spectrum of the class's centroid-similarity
    signal: s_c = |U^T (X m_c)| / ||.||_2 with m_c the mean feature vector of
    class c.

    Raises for unlabeled graphs, empty classes, and zero-norm signatures
    (all-zero features).
    """
    if g.labels is None:
        raise ValueError("category_signature needs a labeled graph")
    if not 0 <= class_id < g.num_classes:
        raise ValueError(f"class id {class_id} outside [0, {g.num_classes})")
    mask = g.labels == class_id
    if not mask.any():
        raise ValueError(f"class {class_id} has no nodes")
    centroid = g.features[mask].mean(axis=0)
    signal = g.features @ centroid
    coeffs = np.abs(basis.vectors.T @ signal)
    norm = float(np.linalg.norm(coeffs))
    if norm == 0.0:
        raise ValueError(f"class {class_id} has a zero-norm signature")
    return coeffs / norm


def resample_signature(sig: np.ndarray, bins: int) -> np.ndarray:
    """Piecewise-linear resampling over the eigenvalue index rank, so
    signatures from graphs of different sizes become comparable."""
    sig = np.asarray(sig, dtype=np.float64)
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    if sig.shape[0] == bins:
        return sig.copy()
    if sig.shape[0] == 1:
        return np.full(bins, sig[0])
    src = np.linspace(0.0, 1.0, sig.shape[0])
    dst = np.linspace(0.0, 1.0, bins)
    return np.interp(dst, src, sig)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = float(np.linalg.norm(a) * np.linalg.norm(b))
    if denom == 0.0:
        return 0.0
    return float(np.dot(a, b) / denom)


def cross_domain_signature_correlation(
    pair: DomainPair,
    bases: tuple[SpectralBasis, SpectralBasis] | None = None,
) -> np.ndarray:
    """C x C Pearson correlations between source and target class signatures,
    resampled to min(n_s, n_t) bins. Entry (i, j) correlates source class i
    with target class j; both graphs must be labeled."""
    if pair.target.labels is None:
        raise ValueError("target graph must be labeled for signature analysis")
    if bases is None:
        basis_s = eig_sym(normalized_laplacian(pair.source))
        basis_t = eig_sym(normalized_laplacian(pair.target))
    else:
        basis_s, basis_t = bases
    bins = min(pair.source.n, pair.target.n)
    c = pair.num_classes
    sig_s = [resample_signature(category_signature(pair.source, basis_s, i), bins) for i in range(c)]
    sig_t = [resample_signature(category_signature(pair.target, basis_t, j), bins) for j in range(c)]
    out = np.empty((c, c))
    for i in range(c):
        for j in range(c):
            out[i, j] = _pearson(sig_s[i], sig_t[j])
    return out
