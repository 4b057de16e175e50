"""Kernel matrices, kernel centring and Nystrom features."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class SquaredExponential:
    """``k(x, x') = variance * exp(-|x - x'|^2 / (2 lengthscale^2))``."""

    lengthscale: float
    variance: float = 1.0

    def __post_init__(self):
        if not self.lengthscale > 0 or not self.variance > 0:
            raise KernelError("lengthscale and variance must be positive")


@dataclass(frozen=True)
class Polynomial:
    """Inhomogeneous polynomial kernel ``(1 + x x'^T)^degree``."""

    degree: int = 2

    def __post_init__(self):
        if int(self.degree) != self.degree or self.degree < 1:
            raise KernelError("polynomial degree must be an integer >= 1")


@dataclass(frozen=True)
class Linear:
    """Plain inner product ``x x'^T``."""


@dataclass(frozen=True)
class ScaledSE:
    """SE kernel without the 1/2 factor, normalised by sums over ``inducing``.

    See :func:`scaled_se_matrix`.
    """

    lengthscale: float
    inducing: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not self.lengthscale > 0:
            raise KernelError("lengthscale must be positive")
        ind = np.atleast_2d(np.asarray(self.inducing, dtype=float))
        if ind.shape[0] == 0:
            raise KernelError("scaled SE kernel needs a nonempty inducing set")
        object.__setattr__(self, "inducing", ind)


KernelSpec = SquaredExponential | Polynomial | Linear | ScaledSE


def _as_2d(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    return A


def kernel_matrix(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Kernel of every row of ``A`` against every row of ``B`` (``B = A`` if omitted)."""
    A = _as_2d(A)
    B = A if B is None else _as_2d(B)
    if A.shape[1] != B.shape[1]:
        raise KernelError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} columns")
    if isinstance(spec, SquaredExponential):
        d2 = cdist(A, B, "sqeuclidean")
        return spec.variance * np.exp(-0.5 * d2 / spec.lengthscale**2)
    if isinstance(spec, Polynomial):
        return (1.0 + A @ B.T) ** spec.degree
    if isinstance(spec, Linear):
        return A @ B.T
    if isinstance(spec, ScaledSE):
        return scaled_se_matrix(A, spec.inducing, spec.lengthscale, B)
    raise KernelError(f"unsupported kernel spec {spec!r}")


def center_kernel(K) -> np.ndarray:
    """Double centring ``K - P0 K - K P0 + P0 K P0`` with ``P0 = 11^T / n``."""
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise KernelError("center_kernel needs a square matrix")
    row = K.mean(axis=1, keepdims=True)
    col = K.mean(axis=0, keepdims=True)
    return K - row - col + K.mean()


def scaled_se_matrix(X, X_J, lengthscale: float, B=None) -> np.ndarray:
    """Scaled squared-exponential kernel ``D_X^-1 K0(X, B) D_B^-1``.

    ``K0(x, x') = exp(-|x - x'|^2 / l^2)``.  The diagonal normalisers sum
    ``K0`` over the inducing rows: ``D_X[i] = sum_k K0(x_i, X_J[k])`` and
    likewise for ``B`` (which defaults to ``X_J``, giving ``K(X, X_J)``).
    """
    if not lengthscale > 0:
        raise KernelError("lengthscale must be positive")
    X, X_J = _as_2d(X), _as_2d(X_J)
    B = X_J if B is None else _as_2d(B)
    if X_J.shape[0] == 0:
        raise KernelError("empty inducing set")
    if not X.shape[1] == X_J.shape[1] == B.shape[1]:
        raise KernelError("dimension mismatch")

    def k0(P, Q):
        return np.exp(-cdist(P, Q, "sqeuclidean") / lengthscale**2)

    d_x = k0(X, X_J).sum(axis=1)
    d_b = k0(X_J, B).sum(axis=0)
    if np.any(d_x == 0) or np.any(d_b == 0):
        raise KernelError("lengthscale too small: a normalisation sum underflowed to 0")
    return k0(X, B) / d_x[:, None] / d_b[None, :]


@dataclass(frozen=True)
class NystromFeatures:
    """Explicit features with ``phi @ phi.T`` approximating ``K(X, X)``."""

    phi: np.ndarray
    inducing: np.ndarray
    centered: bool

    @property
    def approx_kernel(self) -> np.ndarray:
        return self.phi @ self.phi.T


JITTER = 1e-8
EIG_FLOOR = 1e-12


def inverse_sqrt_psd(K: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Symmetric ``K^{-1/2}`` with eigenvalues floored at ``floor * lambda_max``."""
    lam, V = np.linalg.eigh(K)
    if not np.all(np.isfinite(lam)) or lam[-1] <= 0:
        raise KernelError("inducing kernel is singular")
    lam = np.maximum(lam, floor * lam[-1])
    return (V / np.sqrt(lam)) @ V.T


def nystrom_features(X, X_J, spec: KernelSpec, center: bool = False) -> NystromFeatures:
    """``phi(X) = K(X, X_J) K(X_J, X_J)^{-1/2}`` (optionally column-centred).

    The eigenvalue floor of :func:`inverse_sqrt_psd` handles near-singular
    inducing kernels.  ``1e-8 * mean(diag)`` jitter is added only when the
    eigendecomposition fails, since always adding it shifts eigenvalues near
    downstream rank cut-offs.
    """
    X, X_J = _as_2d(X), _as_2d(X_J)
    if X_J.shape[0] > X.shape[0]:
        raise KernelError("more inducing rows than data rows")
    K_JJ = kernel_matrix(spec, X_J, X_J)
    K_JJ = 0.5 * (K_JJ + K_JJ.T)
    scale = np.mean(np.diag(K_JJ))
    if not scale > 0:
        raise KernelError("inducing kernel is singular (zero diagonal)")
    try:
        root = inverse_sqrt_psd(K_JJ)
    except (np.linalg.LinAlgError, KernelError):
        root = inverse_sqrt_psd(K_JJ + JITTER * scale * np.eye(len(K_JJ)))
    phi = kernel_matrix(spec, X, X_J) @ root
    if center:
        phi = phi - phi.mean(axis=0)
    return NystromFeatures(phi=phi, inducing=X_J, centered=center)


def spectral_basis(K: np.ndarray, mu: float) -> tuple[np.ndarray, np.ndarray]:
    """Unit eigenvectors of symmetric ``K`` with eigenvalue ``>= mu * lambda_max``.

    Returns ``(eigenvalues, eigenvectors)`` in decreasing eigenvalue order.
    """
    lam, V = np.linalg.eigh(0.5 * (K + K.T))
    lam, V = lam[::-1], V[:, ::-1]
    if not lam[0] > 0:
        return lam[:0], V[:, :0]
    keep = lam >= mu * lam[0]
    return lam[keep], V[:, keep]
