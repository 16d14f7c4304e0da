"""Reference computations that share no code with the package."""
from __future__ import annotations

import numpy as np
from scipy import integrate, stats


def appa_acceptance_rate(f, beta, x):
    """Mean of ``f(beta (|z| - |x|)_+)`` over ``z ~ U[-1/2, 1/2]`` by quadrature."""
    a = abs(x)
    uphill = 2 * a  # proposals with |z| <= |x|
    val, _ = integrate.quad(lambda s: f(beta * (s - a)), a, 0.5)
    return uphill + 2 * val


def appa_stationary_exceedance(f, beta, eps, M=2000):
    """Stationary mass of ``|x| >= eps`` for the kernel on ``[-1/2, 1/2]`` with
    uniform proposals and acceptance ``f(beta (|z| - |x|)_+)``.

    The chain on ``r = |x|`` is discretised on ``M`` midpoints and the left
    Perron vector of the transition matrix is returned as a distribution.
    """
    r = (np.arange(M) + 0.5) / (2 * M)
    gap = np.maximum(r[None, :] - r[:, None], 0.0)
    P = f(beta * gap) / M
    np.fill_diagonal(P, 0.0)
    P[np.diag_indices(M)] = 1.0 - P.sum(axis=1)
    w, v = np.linalg.eig(P.T)
    pi = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    pi /= pi.sum()
    return float(pi[r >= eps].sum())


def gaussian_ar1_loglik(phi, sigma_v, c, sigma_w, m0, s0, y):
    """Joint-Gaussian log-likelihood of a linear-Gaussian series, no recursion."""
    y = np.asarray(y, dtype=float)
    T = y.size
    mean_s = m0 * phi ** np.arange(T)
    var = np.empty(T)
    var[0] = s0 ** 2
    for t in range(1, T):
        var[t] = phi ** 2 * var[t - 1] + sigma_v ** 2
    cov = np.empty((T, T))
    for i in range(T):
        for j in range(T):
            lo, hi = min(i, j), max(i, j)
            cov[i, j] = phi ** (hi - lo) * var[lo]
    cov_y = c * c * cov + sigma_w ** 2 * np.eye(T)
    return float(stats.multivariate_normal(mean=c * mean_s, cov=cov_y).logpdf(y))
