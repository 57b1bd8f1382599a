"""Closed-form quantities behind the alignment loss and tools to check them.

``markov_nll_core`` is the gradient-relevant part of the Gaussian negative
log-likelihood under a first-order Markov model of the prediction errors;
``discrepancy_psi`` is what the plain squared error misses of it.
``expected_rho`` is the mean sign-inconsistency ratio when predicted
differences carry zero-mean Gaussian error.
"""

from __future__ import annotations

import math

import numpy as np

from .series import SeriesMatrix

PACF_GUARD = 1e-6


def _check(eps, phi):
    eps = np.asarray(eps, dtype=np.float64).ravel()
    phi = np.asarray(phi, dtype=np.float64).ravel()
    if phi.size != max(eps.size - 1, 0):
        raise ValueError(f"need {eps.size - 1} coefficients for {eps.size} errors, got {phi.size}")
    if np.any(np.abs(phi) >= 1.0):
        raise ValueError("partial autocorrelations must satisfy |phi| < 1")
    if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(phi))):
        raise ValueError("non-finite input")
    return eps, phi


def discrepancy_psi(eps, phi) -> float:
    """sum_{i>=2} [phi_i^2 (e_i^2 + e_{i-1}^2) - 2 phi_i e_i e_{i-1}] / (1 - phi_i^2).

    ``phi[j]`` couples ``eps[j + 1]`` to ``eps[j]``.
    """
    eps, phi = _check(eps, phi)
    cur, prev = eps[1:], eps[:-1]
    terms = (phi * phi * (cur * cur + prev * prev) - 2.0 * phi * cur * prev) / (1.0 - phi * phi)
    return float(np.sum(terms))


def markov_nll_core(eps, phi) -> float:
    """e_1^2 + sum_{i>=2} (e_i - phi_i e_{i-1})^2 / (1 - phi_i^2), constants dropped."""
    eps, phi = _check(eps, phi)
    if eps.size == 0:
        return 0.0
    r = eps[1:] - phi * eps[:-1]
    return float(eps[0] ** 2 + np.sum(r * r / (1.0 - phi * phi)))


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function (scalar or array)."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(-float(x) / math.sqrt(2.0))
    arr = np.asarray(x, dtype=np.float64)
    return np.vectorize(lambda v: 0.5 * math.erfc(-v / math.sqrt(2.0)), otypes=[float])(arr)


def expected_rho(d, sigma_e: float) -> float:
    """Mean over steps of Phi(-|d_i| / sigma_e)."""
    if not sigma_e > 0:
        raise ValueError(f"sigma_e must be > 0, got {sigma_e}")
    d = np.abs(np.asarray(d, dtype=np.float64).ravel())
    if d.size == 0:
        raise ValueError("empty difference vector")
    return float(np.mean(std_normal_cdf(-d / sigma_e)))


def monte_carlo_rho(d, sigma_e: float, n_trials: int, seed=0, chunk: int = 65536) -> float:
    """Empirical mean of the sign-inconsistency ratio with dhat = d - e, e ~ N(0, sigma_e^2)."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    d = np.asarray(d, dtype=np.float64).ravel()
    rng = np.random.default_rng(seed)
    sd = np.sign(d)
    mismatches = 0
    done = 0
    while done < n_trials:
        n = min(chunk, n_trials - done)
        dhat = d - rng.normal(0.0, sigma_e, size=(n, d.size))
        mismatches += int(np.count_nonzero(np.sign(dhat) != sd))
        done += n
    return mismatches / (n_trials * d.size)


def estimate_lag1_pacf(series) -> np.ndarray:
    """Lag-1 sample autocorrelation per column, clamped inside (-1, 1).

    At lag one the partial and ordinary autocorrelations coincide.  Constant
    columns give 0.
    """
    x = series.values if isinstance(series, SeriesMatrix) else np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 3:
        raise ValueError("need at least 3 observations")
    xc = x - x.mean(axis=0)
    denom = np.sum(xc * xc, axis=0)
    num = np.sum(xc[1:] * xc[:-1], axis=0)
    out = np.zeros(x.shape[1])
    ok = denom > 0
    out[ok] = num[ok] / denom[ok]
    return np.clip(out, -1.0 + PACF_GUARD, 1.0 - PACF_GUARD)


def run_checks(seed: int = 0, n_identity: int = 1000, n_mc_instances: int = 10,
               mc_trials: int = 1_000_000, horizon: int = 16) -> list[dict]:
    """Randomised identity and Monte Carlo checks; each entry carries its measured error."""
    from .losses import tdt, tdp, tdt_loss

    rng = np.random.default_rng(seed)
    checks = []

    def record(name, error, tol, exact=False):
        ok = error == 0 if exact else error <= tol
        checks.append({"check": name, "max_error": float(error), "tolerance": float(tol),
                       "passed": bool(ok)})

    worst = 0.0
    for _ in range(n_identity):
        h = int(rng.integers(2, horizon + 1))
        eps = rng.normal(size=h)
        phi = rng.uniform(-0.99, 0.99, size=h - 1)
        worst = max(worst, abs(markov_nll_core(eps, phi) - np.sum(eps ** 2) - discrepancy_psi(eps, phi)))
    record("nll_minus_point_equals_psi", worst, 1e-12)

    worst = 0.0
    for _ in range(n_identity):
        h = int(rng.integers(2, horizon + 1))
        worst = max(worst, abs(discrepancy_psi(rng.normal(size=h), np.zeros(h - 1))))
    record("psi_zero_without_coupling", worst, 0.0, exact=True)

    worst = 0.0
    for _ in range(n_identity):
        b, h, n = (int(v) for v in rng.integers(1, (5, horizon + 1, 4)))
        y, yhat, anchor = rng.normal(size=(b, h, n)), rng.normal(size=(b, h, n)), rng.normal(size=(b, n))
        direct = tdt_loss(tdt(y, anchor), tdp(yhat, anchor))
        e = y - yhat
        tele = (np.sum(e[:, 0] ** 2) + np.sum((e[:, 1:] - e[:, :-1]) ** 2)) / e.size
        worst = max(worst, abs(direct - tele))
    record("difference_loss_error_telescoping", worst, 1e-12)

    worst = 0.0
    for i in range(n_mc_instances):
        d = rng.normal(0.0, 1.0, size=horizon)
        sigma = float(rng.uniform(0.2, 2.0))
        mc = monte_carlo_rho(d, sigma, mc_trials, seed=[seed, i])
        worst = max(worst, abs(mc - expected_rho(d, sigma)))
    record("monte_carlo_rho_matches_closed_form", worst, 0.005)

    record("normal_cdf_symmetry", max(abs(std_normal_cdf(x) + std_normal_cdf(-x) - 1.0)
                                      for x in rng.normal(0, 3, size=200)), 1e-12)
    record("normal_cdf_at_1.96", abs(std_normal_cdf(1.96) - 0.9750021048517795), 1e-7)
    return checks
