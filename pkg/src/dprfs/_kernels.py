"""Compiled inner loop of the point-level collapsed Gibbs sampler."""

import math

import numpy as np
from numba import njit

LOG_PI = math.log(math.pi)


@njit(cache=True)
def _refresh(k, count, sums, scatter, loc, chol, logc, dof,
             mu0, kappa0, nu0, lam0_plus_m0):
    d = mu0.shape[0]
    n = count[k]
    kappa = kappa0 + n
    t_dof = nu0 + n - d + 1.0
    for a in range(d):
        loc[k, a] = (kappa0 * mu0[a] + sums[k, a]) / kappa
    factor = (kappa + 1.0) / (kappa * t_dof)
    # Cholesky of the Student-t shape matrix
    logdet = 0.0
    for a in range(d):
        for b in range(a + 1):
            v = (lam0_plus_m0[a, b] + scatter[k, a, b] - kappa * loc[k, a] * loc[k, b]) * factor
            for c in range(b):
                v -= chol[k, a, c] * chol[k, b, c]
            if a == b:
                if v <= 0.0:
                    v = 1e-300
                r = math.sqrt(v)
                chol[k, a, a] = r
                logdet += 2.0 * math.log(r)
            else:
                chol[k, a, b] = v / chol[k, b, b]
    dof[k] = t_dof
    logc[k] = (math.lgamma(0.5 * (t_dof + d)) - math.lgamma(0.5 * t_dof)
               - 0.5 * d * (math.log(t_dof) + LOG_PI) - 0.5 * logdet)


@njit(cache=True)
def _log_t(x, k, loc, chol, logc, dof, work):
    d = x.shape[0]
    q = 0.0
    for a in range(d):
        v = x[a] - loc[k, a]
        for c in range(a):
            v -= chol[k, a, c] * work[c]
        v /= chol[k, a, a]
        work[a] = v
        q += v * v
    return logc[k] - 0.5 * (dof[k] + d) * math.log1p(q / dof[k])


@njit(cache=True)
def point_sweep(points, labels, count, sums, scatter, loc, chol, logc, dof,
                live, num_live, mu0, kappa0, nu0, lam0_plus_m0,
                log_eta, prior_lp, uniforms):
    """One collapsed Gibbs sweep over all points; returns the new live count.

    ``live[:num_live]`` lists occupied slots in creation order; NEW takes the
    lowest free slot.
    """
    n, d = points.shape
    cap = count.shape[0]
    logw = np.empty(cap + 1)
    work = np.empty(d)
    for i in range(n):
        x = points[i]
        k_old = labels[i]
        count[k_old] -= 1
        if count[k_old] == 0:
            pos = 0
            while live[pos] != k_old:
                pos += 1
            for j in range(pos, num_live - 1):
                live[j] = live[j + 1]
            num_live -= 1
        else:
            for a in range(d):
                sums[k_old, a] -= x[a]
                for b in range(d):
                    scatter[k_old, a, b] -= x[a] * x[b]
            _refresh(k_old, count, sums, scatter, loc, chol, logc, dof, mu0, kappa0, nu0, lam0_plus_m0)
        wmax = -np.inf
        for j in range(num_live):
            k = live[j]
            w = math.log(count[k]) + _log_t(x, k, loc, chol, logc, dof, work)
            logw[j] = w
            if w > wmax:
                wmax = w
        w = log_eta + prior_lp[i]
        logw[num_live] = w
        if w > wmax:
            wmax = w
        total = 0.0
        for j in range(num_live + 1):
            logw[j] = math.exp(logw[j] - wmax)
            total += logw[j]
        u = uniforms[i] * total
        choice = num_live
        acc = 0.0
        for j in range(num_live + 1):
            acc += logw[j]
            if u < acc:
                choice = j
                break
        if choice == num_live:
            k = 0
            while count[k] != 0:
                k += 1
            live[num_live] = k
            num_live += 1
            for a in range(d):
                sums[k, a] = 0.0
                for b in range(d):
                    scatter[k, a, b] = 0.0
        else:
            k = live[choice]
        count[k] += 1
        for a in range(d):
            sums[k, a] += x[a]
            for b in range(d):
                scatter[k, a, b] += x[a] * x[b]
        _refresh(k, count, sums, scatter, loc, chol, logc, dof, mu0, kappa0, nu0, lam0_plus_m0)
        labels[i] = k
    return num_live
