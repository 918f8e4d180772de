"""Reduced-rank Hilbert-space approximation of squared-exponential GP priors.

On the box [-L, L]^D the Laplacian eigenfunctions are products of

    phi_k(f) = L^{-1/2} sin(sqrt(lambda_k) (f + L)),  lambda_k = (pi k / (2 L))^2,

and a stationary kernel is approximated by sum_m S(sqrt(lambda_m)) phi_m(f) phi_m(f'),
with S the kernel's spectral density. The weight-space form gives
g(f) = sum_m c_m phi_m(f) with independent c_m ~ N(0, S(sqrt(lambda_m))).

Three feature maps share this interface:

* ``multiplicative``: product kernel over factors, M = M_tilde ** D basis functions
  indexed by all D-tuples (last dimension varies fastest).
* ``additive``: sum of one-dimensional kernels, M = D * M_tilde columns grouped by
  dimension; column (j, k) is phi_k(f_j).
* ``linear``: Phi(F) = F with prior variance xi per column (linear DFM baseline).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError

KERNELS = ("multiplicative", "additive", "linear")
_ALIASES = {"multi": "multiplicative", "m": "multiplicative", "mult": "multiplicative",
            "hybrid": "additive", "a": "additive", "add": "additive",
            "lin": "linear", "l": "linear"}


# smallest weight variance, so extreme lengthscales switch a column off without a zero
VAR_FLOOR = 1e-250


def canonical_kernel(name):
    key = str(name).strip().lower()
    key = _ALIASES.get(key, key)
    if key not in KERNELS:
        raise ConfigError(f"unknown kernel {name!r}; expected one of {KERNELS}")
    return key


@dataclass(frozen=True)
class KernelHyper:
    xi: float
    lengthscales: tuple

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", tuple(ls))
        if not (np.isfinite(self.xi) and self.xi > 0):
            raise ConfigError(f"kernel variance must be positive, got {self.xi}")
        if not np.all(np.isfinite(ls) & (ls > 0)):
            raise ConfigError(f"length scales must be positive, got {ls}")


class BasisSpec:
    """Index set and domain of a reduced-rank basis.

    Parameters
    ----------
    kernel : {'multiplicative', 'additive', 'linear'}
    D : int
        Number of factors.
    M_tilde : int
        Basis functions per factor dimension.
    L : float
        Half-width of the approximation domain [-L, L]^D.
    """

    def __init__(self, kernel, D, M_tilde, L, cap=70_000):
        self.kernel = canonical_kernel(kernel)
        self.D = int(D)
        self.M_tilde = int(M_tilde)
        self.L = float(L)
        if self.D < 1:
            raise ConfigError("D must be at least 1")
        if self.kernel != "linear" and self.M_tilde < 1:
            raise ConfigError("M_tilde must be at least 1")
        if not (np.isfinite(self.L) and self.L > 0):
            raise ConfigError(f"domain half-width L must be positive, got {L}")
        if self.kernel == "multiplicative":
            if self.M_tilde ** self.D > cap:
                raise ConfigError(
                    f"multiplicative basis needs M_tilde**D = {self.M_tilde ** self.D} "
                    f"functions, above the cap {cap}")
            rows = itertools.product(range(1, self.M_tilde + 1), repeat=self.D)
            self.index_set = np.array(list(rows), dtype=int).reshape(-1, self.D)
        elif self.kernel == "additive":
            S = np.zeros((self.D * self.M_tilde, self.D), dtype=int)
            for j in range(self.D):
                S[j * self.M_tilde:(j + 1) * self.M_tilde, j] = np.arange(1, self.M_tilde + 1)
            self.index_set = S
        else:
            self.index_set = np.eye(self.D, dtype=int)
        self.M = self.index_set.shape[0]
        # additive/linear: the single factor each column reads
        self.column_dim = np.argmax(self.index_set != 0, axis=1)
        self.column_freq = np.pi * self.index_set.max(axis=1) / (2.0 * self.L)

    def __repr__(self):
        return (f"BasisSpec(kernel={self.kernel!r}, D={self.D}, M_tilde={self.M_tilde}, "
                f"L={self.L:.6g}, M={self.M})")

    def active_columns(self, mask_row):
        """Columns of Phi an equation may use given its N x D loading-mask row."""
        mask_row = np.asarray(mask_row, dtype=bool)
        if mask_row.all():
            return np.arange(self.M)
        if self.kernel == "multiplicative":
            raise ConfigError("loading masks are only supported for additive and linear kernels")
        return np.flatnonzero(mask_row[self.column_dim])


@dataclass
class BasisMatrix:
    Phi: np.ndarray
    spec: BasisSpec


def eigenvalue(m, L):
    """Laplacian eigenvalue (pi m / (2 L))^2 on [-L, L]."""
    if m < 1 or L <= 0:
        raise ConfigError("eigenvalue needs m >= 1 and L > 0")
    return (np.pi * m / (2.0 * L)) ** 2


def eigenfunction_1d(f, m, L):
    """L^{-1/2} sin(sqrt(lambda_m) (f + L)); evaluated without clamping outside [-L, L]."""
    return np.sin(np.pi * m * (np.asarray(f, dtype=float) + L) / (2.0 * L)) / np.sqrt(L)


def basis_values(F, spec: BasisSpec):
    """Phi(F) as a plain array; ``F`` may be (D,), (T, D) or (..., D)."""
    F = np.asarray(F, dtype=float)
    if F.shape[-1] != spec.D:
        raise ConfigError(f"factor array has {F.shape[-1]} columns, basis expects D={spec.D}")
    if spec.kernel == "linear":
        return F.copy()
    scale = 1.0 / np.sqrt(spec.L)
    if spec.kernel == "additive":
        arg = (F[..., spec.column_dim] + spec.L) * spec.column_freq
        return scale * np.sin(arg)
    # multiplicative: tabulate univariate values, then multiply across dimensions
    k = np.arange(1, spec.M_tilde + 1)
    U = scale * np.sin((F[..., :, None] + spec.L) * (np.pi * k / (2.0 * spec.L)))
    out = U[..., 0, spec.index_set[:, 0] - 1]
    for j in range(1, spec.D):
        out = out * U[..., j, spec.index_set[:, j] - 1]
    return out


def build_phi(F, spec: BasisSpec) -> BasisMatrix:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if not np.all(np.isfinite(F)):
        raise ConfigError("factor values must be finite")
    return BasisMatrix(Phi=basis_values(F, spec), spec=spec)


def spectral_density(spec: BasisSpec, hyper: KernelHyper, omega):
    """Spectral density of the squared-exponential kernel at frequency ``omega``.

    Multiplicative: the scalar density of the product kernel at the D-vector
    ``omega``. Additive: the D per-dimension summands
    xi (2 D^2 pi)^{1/2} l_j exp(-l_j^2 omega_j^2 / 2). Each summand is D times the
    density of a one-dimensional SE kernel with variance xi, so the implied
    covariance is D * xi * sum_j exp(-(f_j - f_j')^2 / (2 l_j^2)); at D = 1 this
    is the plain SE kernel.
    """
    ell = np.asarray(hyper.lengthscales, dtype=float)
    omega = np.asarray(omega, dtype=float)
    D = spec.D
    if spec.kernel == "multiplicative":
        return float(hyper.xi * (2.0 * np.pi) ** (D / 2.0) * np.prod(ell)
                     * np.exp(-0.5 * np.sum(ell ** 2 * omega ** 2)))
    if spec.kernel == "additive":
        return hyper.xi * np.sqrt(2.0 * D ** 2 * np.pi) * ell * np.exp(-0.5 * ell ** 2 * omega ** 2)
    raise ConfigError("the linear feature map has no spectral density")


def prior_weight_variances(spec: BasisSpec, hyper: KernelHyper):
    """Prior variances of the M basis weights."""
    return weight_variances(spec, hyper.xi, hyper.lengthscales)


def weight_variances(spec: BasisSpec, xi, ell):
    """Vectorized form of :func:`prior_weight_variances`.

    ``xi`` may be a scalar or an (n,) array with ``ell`` of shape (n, D);
    returns (M,) or (n, M).
    """
    xi = np.asarray(xi, dtype=float)
    ell = np.asarray(ell, dtype=float)
    D = spec.D
    if spec.kernel == "linear":
        return xi[..., None] * np.ones(spec.M)
    if spec.kernel == "multiplicative":
        sq = (np.pi * spec.index_set / (2.0 * spec.L)) ** 2          # (M, D)
        expo = -0.5 * np.einsum("...d,md->...m", ell ** 2, sq)
        v = (xi * (2.0 * np.pi) ** (D / 2.0) * np.prod(ell, axis=-1))[..., None] * np.exp(expo)
    else:
        lam = spec.column_freq ** 2                                     # (M,)
        ell_col = ell[..., spec.column_dim]                             # (..., M)
        v = (xi[..., None] * np.sqrt(2.0 * D ** 2 * np.pi) * ell_col
             * np.exp(-0.5 * ell_col ** 2 * lam))
    # long lengthscales underflow the high-frequency variances; keep them positive
    return np.maximum(v, VAR_FLOOR)


def approx_gram(F, spec: BasisSpec, hyper: KernelHyper):
    """Truncated-expansion approximation Phi diag(S) Phi' of the kernel Gram matrix."""
    Phi = build_phi(F, spec).Phi
    s = prior_weight_variances(spec, hyper)
    return (Phi * s) @ Phi.T


def exact_gram(F, spec: BasisSpec, hyper: KernelHyper):
    """Exact Gram matrix of the kernel implied by the weight prior.

    For the additive family this carries the factor D noted in
    :func:`spectral_density`.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    ell = np.asarray(hyper.lengthscales, dtype=float)
    diff2 = ((F[:, None, :] - F[None, :, :]) / ell) ** 2
    if spec.kernel == "multiplicative":
        return hyper.xi * np.exp(-0.5 * diff2.sum(axis=-1))
    if spec.kernel == "additive":
        return spec.D * hyper.xi * np.exp(-0.5 * diff2).sum(axis=-1)
    return hyper.xi * F @ F.T
