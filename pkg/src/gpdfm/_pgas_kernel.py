"""Compiled inner loop of the conditional particle filter.

Mirrors the numpy implementation in :mod:`gpdfm.pgas` operation by operation;
all random numbers are drawn beforehand so both paths consume the same stream.
"""
import math

import numpy as np
from numba import njit

LOG2PI = math.log(2.0 * math.pi)
KERNEL_CODES = {"linear": 0, "additive": 1, "multiplicative": 2}


@njit(cache=True)
def _basis_row(f, code, index_set, column_dim, column_freq, L, M_tilde, out, U):
    M = out.shape[0]
    D = f.shape[0]
    if code == 0:
        for m in range(M):
            out[m] = f[m]
        return
    s = 1.0 / math.sqrt(L)
    if code == 1:
        for m in range(M):
            out[m] = s * math.sin((f[column_dim[m]] + L) * column_freq[m])
        return
    for j in range(D):
        for k in range(M_tilde):
            U[j, k] = s * math.sin((f[j] + L) * (math.pi * (k + 1) / (2.0 * L)))
    for m in range(M):
        v = 1.0
        for j in range(D):
            v *= U[j, index_set[m, j] - 1]
        out[m] = v


@njit(cache=True)
def _idio(y, f, C, code, index_set, column_dim, column_freq, L, M_tilde, phi, U, e):
    """e = y - C phi(f)."""
    _basis_row(f, code, index_set, column_dim, column_freq, L, M_tilde, phi, U)
    N, M = C.shape
    for n in range(N):
        acc = 0.0
        for m in range(M):
            acc += C[n, m] * phi[m]
        e[n] = y[n] - acc


@njit(cache=True)
def _lognormalize(logw, out):
    """Log weights shifted to sum to one in probability; returns True if degenerate."""
    H = logw.shape[0]
    mx = -np.inf
    for h in range(H):
        if logw[h] > mx and math.isfinite(logw[h]):
            mx = logw[h]
    if mx == -np.inf:
        for h in range(H):
            out[h] = -math.log(H)
        return True
    tot = 0.0
    for h in range(H):
        if math.isfinite(logw[h]):
            tot += math.exp(logw[h] - mx)
    lse = mx + math.log(tot)
    for h in range(H):
        out[h] = logw[h] - lse if math.isfinite(logw[h]) else -np.inf
    return False


@njit(cache=True)
def _pick(lw, u):
    """Index i with cumsum(w)[i-1] <= u < cumsum(w)[i]."""
    H = lw.shape[0]
    c = 0.0
    for h in range(H):
        c += math.exp(lw[h])
        if u < c:
            return h
    return H - 1


@njit(cache=True)
def pgas_kernel(Y, ref, A, Psi, Pinv, sig2, C, r, rho, code, index_set, column_dim,
                column_freq, L, M_tilde, Z, U_res, U_as, u_final, tau1, systematic,
                force_reference):
    T, N = Y.shape
    D = ref.shape[1]
    K = A.shape[1]
    P = K // D
    q = rho.shape[1]
    H = Z.shape[1]
    M = C.shape[1]
    W = max(P, q)

    log_r_const = 0.0
    for n in range(N):
        log_r_const += LOG2PI + math.log(r[n])

    phi = np.empty(M)
    Ub = np.empty((D, max(M_tilde, 1)))
    e_ref = np.empty((T, N))
    for t in range(T):
        _idio(Y[t], ref[t], C, code, index_set, column_dim, column_freq, L, M_tilde, phi, Ub,
              e_ref[t])

    traj = np.empty((T, H, D))
    anc = np.zeros((T, H), dtype=np.int64)
    fh = np.zeros((H, P, D))
    eh = np.zeros((H, max(q, 1), N))
    fh_new = np.zeros((H, P, D))
    eh_new = np.zeros((H, max(q, 1), N))
    logw = np.zeros(H)
    lw = np.empty(H)
    las = np.empty(H)
    a = np.empty(H, dtype=np.int64)
    x = np.empty(K)
    eps = np.empty(D)
    e = np.empty(N)
    degenerate = 0

    for t in range(T):
        if t > 0:
            degenerate += _lognormalize(logw, lw)
            # ancestors of the free particles
            for h in range(H - 1):
                u = (U_res[t, 0] + h) / (H - 1) if systematic else U_res[t, h]
                a[h] = _pick(lw, u)
            if force_reference:
                a[H - 1] = H - 1
            else:
                Wt = min(tau1, W, T - t)
                for c in range(H):
                    s = lw[c]
                    if s == -np.inf:
                        las[c] = s
                        continue
                    for k in range(min(Wt, P)):
                        tau = t + k
                        for p in range(P):
                            for d in range(D):
                                if p < k:
                                    x[p * D + d] = ref[tau - 1 - p, d]
                                else:
                                    x[p * D + d] = fh[c, p - k, d]
                        for d in range(D):
                            acc = ref[tau, d]
                            for j in range(K):
                                acc -= A[d, j] * x[j]
                            eps[d] = acc
                        for d in range(D):
                            et = 0.0
                            for j in range(d + 1):
                                et += Psi[d, j] * eps[j]
                            s += -0.5 * (LOG2PI + math.log(sig2[tau, d]) + et * et / sig2[tau, d])
                    for k in range(min(Wt, q)):
                        tau = t + k
                        if tau < q:
                            continue
                        quad = 0.0
                        for n in range(N):
                            v = e_ref[tau, n]
                            for j in range(q):
                                lag = e_ref[tau - 1 - j, n] if j < k else eh[c, j - k, n]
                                v -= rho[n, j] * lag
                            quad += v * v / r[n]
                        s += -0.5 * (log_r_const + quad)
                    las[c] = s
                _lognormalize(las, lw)
                a[H - 1] = _pick(lw, U_as[t])
            for h in range(H):
                anc[t, h] = a[h]
        else:
            for h in range(H):
                a[h] = h
        for h in range(H):
            ah = a[h]
            # propagate
            if h == H - 1:
                for d in range(D):
                    traj[t, h, d] = ref[t, d]
            else:
                for d in range(D):
                    acc = 0.0
                    for p in range(P):
                        for j in range(D):
                            acc += A[d, p * D + j] * fh[ah, p, j]
                    for j in range(d + 1):
                        acc += Pinv[d, j] * math.sqrt(sig2[t, j]) * Z[t, h, j]
                    traj[t, h, d] = acc
            _idio(Y[t], traj[t, h], C, code, index_set, column_dim, column_freq, L, M_tilde,
                  phi, Ub, e)
            if t >= q:
                quad = 0.0
                for n in range(N):
                    v = e[n]
                    for j in range(q):
                        v -= rho[n, j] * eh[ah, j, n]
                    quad += v * v / r[n]
                logw[h] = -0.5 * (log_r_const + quad)
            else:
                logw[h] = 0.0
            for d in range(D):
                fh_new[h, 0, d] = traj[t, h, d]
            for p in range(1, P):
                for d in range(D):
                    fh_new[h, p, d] = fh[ah, p - 1, d]
            if q > 0:
                for n in range(N):
                    eh_new[h, 0, n] = e[n]
                for j in range(1, q):
                    for n in range(N):
                        eh_new[h, j, n] = eh[ah, j - 1, n]
        fh, fh_new = fh_new, fh
        eh, eh_new = eh_new, eh

    degenerate += _lognormalize(logw, lw)
    kk = H - 1 if force_reference else _pick(lw, u_final)
    out = np.empty((T, D))
    for t in range(T - 1, -1, -1):
        for d in range(D):
            out[t, d] = traj[t, kk, d]
        kk = anc[t, kk]
    return out, degenerate
