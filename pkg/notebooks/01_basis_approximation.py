# %% [markdown]
# # Reduced-rank basis for the loading functions
#
# Each loading function g_i is a Gaussian process with a squared-exponential
# kernel. On [-L, L] the kernel is replaced by a finite sum of Laplacian
# eigenfunctions weighted by the spectral density, so g_i becomes a linear
# regression on M basis functions. This script checks how fast the
# approximation converges and what the implied prior functions look like.

# %%
import numpy as np

from gpdfm import basis as gpb

# %% [markdown]
# ## Gram matrix error as the number of basis functions grows

# %%
F = np.linspace(-1, 1, 50)[:, None]
hyper = gpb.KernelHyper(1.0, [1.0])
for m in (4, 8, 16, 32):
    spec = gpb.BasisSpec("additive", 1, m, 5.0)
    err = np.abs(gpb.approx_gram(F, spec, hyper) - gpb.exact_gram(F, spec, hyper)).max()
    print(f"M~={m:3d}  max |K_approx - K| = {err:.2e}")

# %% [markdown]
# The error falls quickly once the basis resolves the length scale. A short
# length scale needs more functions, and so does a wider domain: L sets the
# lowest frequency and the spacing between frequencies. A long length scale
# hits the other limit: the error stops at the boundary effect of the finite
# domain, which only a larger L removes.

# %%
for ell in (0.5, 1.0, 2.0):
    h = gpb.KernelHyper(1.0, [ell])
    row = []
    for m in (8, 16, 32):
        spec = gpb.BasisSpec("additive", 1, m, 5.0)
        row.append(np.abs(gpb.approx_gram(F, spec, h) - gpb.exact_gram(F, spec, h)).max())
    print(f"ell={ell:3.1f}  " + "  ".join(f"{e:.1e}" for e in row))

# %% [markdown]
# ## Prior draws of a loading function
#
# Draw the basis weights from their prior N(0, S(sqrt(lambda_k))) and look at the
# resulting functions on a grid. Values are printed rather than plotted to keep
# the script dependency free.

# %%
rng = np.random.default_rng(0)
spec = gpb.BasisSpec("additive", 1, 16, 5.0)
grid = np.linspace(-3, 3, 7)[:, None]
Phi = gpb.build_phi(grid, spec).Phi
v = gpb.prior_weight_variances(spec, hyper)
for k in range(3):
    g = Phi @ (np.sqrt(v) * rng.standard_normal(spec.M))
    print(np.round(g, 2))

# %% [markdown]
# ## Two factors
#
# The additive kernel sums one basis per factor; the multiplicative kernel uses
# the tensor product and grows as M~^D, which is why the additive form is the
# default.

# %%
for kernel in ("additive", "multiplicative"):
    spec = gpb.BasisSpec(kernel, 2, 8, 4.0)
    print(kernel, "basis functions:", spec.M)
