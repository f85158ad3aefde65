"""Slow, independent reference computations used to check the fast paths."""

import math

import mpmath
import numpy as np


def point_distance(p, q):
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    return math.sqrt(dx * dx + dy * dy)


def monotone_couplings(p, q):
    """Yield every monotone coupling of index ranges ``0..p-1`` and ``0..q-1``.

    A coupling is a lattice path from (0, 0) to (p-1, q-1) using the steps
    (1, 0), (0, 1) and (1, 1).
    """
    def extend(path):
        i, j = path[-1]
        if (i, j) == (p - 1, q - 1):
            yield path
            return
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            if i + di < p and j + dj < q:
                yield from extend(path + [(i + di, j + dj)])

    yield from extend([(0, 0)])


def brute_force_frechet(a, b):
    """Minimum over all monotone couplings of the largest paired distance."""
    a = [tuple(map(float, pt)) for pt in a]
    b = [tuple(map(float, pt)) for pt in b]
    return min(
        max(point_distance(a[i], b[j]) for i, j in coupling)
        for coupling in monotone_couplings(len(a), len(b))
    )


def ridge_by_lstsq(values, times, inducing, ell_t, lambda1, lambda2):
    """Penalised least squares solved as one augmented least-squares problem.

    Minimises ``|c - Phi w|^2 + lambda1 |w|^2 + lambda2 (phi(0) @ w)^2`` by
    stacking the penalties as extra rows, without forming normal equations.
    """
    inducing = np.asarray(inducing, dtype=float)
    times = np.asarray(times, dtype=float)
    phi = np.exp(-((inducing[None, :] - times[:, None]) ** 2) / (2 * ell_t))
    phi0 = np.exp(-(inducing**2) / (2 * ell_t))
    m = len(inducing)
    design = np.vstack([phi, math.sqrt(lambda1) * np.eye(m), math.sqrt(lambda2) * phi0[None, :]])
    rhs = np.concatenate([np.asarray(values, dtype=float), np.zeros(m + 1)])
    w, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    return w


def naive_mixture_nll(alphas, means, sigmas, w, dps=50):
    """``-log sum_r alpha_r prod_m N(w_m; mu_rm, sigma_rm^2)`` at high precision."""
    with mpmath.workdps(dps):
        total = mpmath.mpf(0)
        for a, mu_r, sig_r in zip(alphas, means, sigmas):
            dens = mpmath.mpf(a)
            for wm, mu, sig in zip(w, mu_r, sig_r):
                sig = mpmath.mpf(sig)
                dens *= mpmath.exp(-((mpmath.mpf(wm) - mpmath.mpf(mu)) ** 2) / (2 * sig**2)) / (
                    mpmath.sqrt(2 * mpmath.pi) * sig
                )
            total += dens
        return float(-mpmath.log(total))


def extended_network_nll(arrays, x, w, sigma_floor):
    """Mean mixture NLL of a tanh network, evaluated in extended precision.

    ``arrays`` are the eight weight arrays in storage order. Written out
    from scratch (no shared code with the package) so it can serve both as
    an oracle and as a low-noise loss for finite differences.
    """
    ld = np.longdouble
    assert np.finfo(ld).eps < 1e-18, "extended precision unavailable on this platform"
    hw, hb, aw, ab, mw, mb, sw, sb = (np.asarray(a, dtype=ld) for a in arrays)
    x, w = np.asarray(x, dtype=ld), np.asarray(w, dtype=ld)
    r = ab.size
    k = w.shape[1]
    total = ld(0)
    for xi, wi in zip(x, w):
        h = np.tanh(hw @ xi + hb)
        logits = aw @ h + ab
        log_alpha = logits - logits.max()
        log_alpha = log_alpha - np.log(np.exp(log_alpha).sum())
        mu = (mw @ h + mb).reshape(r, k)
        sig = np.maximum(np.exp(sw @ h + sb), ld(sigma_floor)).reshape(r, k)
        z = (wi - mu) / sig
        log_comp = log_alpha - (ld(0.5) * z * z + np.log(sig)).sum(axis=1) - ld(0.5) * k * np.log(2 * ld(np.pi))
        top = log_comp.max()
        total -= top + np.log(np.exp(log_comp - top).sum())
    return total / len(x)


def random_trajectory(rng, max_len=6, scale=5.0):
    n = int(rng.integers(1, max_len + 1))
    return rng.uniform(-scale, scale, size=(n, 2))
