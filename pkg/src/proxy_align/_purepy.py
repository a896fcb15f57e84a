"""Numpy implementations of the hot kernels.

These are the fallback used when the compiled ``_kernels`` extension is not
available. Signatures and results match the Cython versions.
"""

import numpy as np

TAU = 1e-12


def _last_argmax(values):
    # libsvm-style tie break: the last index among equal maxima wins
    return values.shape[0] - 1 - int(np.argmax(values[::-1]))


def smo_svr(K, y, epsilon, C, tol=1e-6, max_iter=10_000_000):
    """Solve the epsilon-SVR dual with SMO and second-order working-set selection.

    Returns ``(coef, n_iter, converged)`` where ``coef = a - a*`` are the dual
    coefficients of the ``n`` training points. ``K`` is the dense linear
    kernel (Gram) matrix.
    """
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = y.shape[0]
    a = np.zeros(2 * n)
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    p = np.concatenate([epsilon - y, epsilon + y])
    G = p.copy()
    f = np.zeros(n)
    diag = np.diag(K).copy()
    idx = np.arange(2 * n) % n

    n_iter = 0
    converged = False
    while n_iter < max_iter:
        up = ((sign > 0) & (a < C)) | ((sign < 0) & (a > 0))
        low = ((sign > 0) & (a > 0)) | ((sign < 0) & (a < C))
        if not up.any() or not low.any():
            converged = True
            break
        score_up = np.where(up, -sign * G, -np.inf)
        i = _last_argmax(score_up)
        gmax = score_up[i]
        v = np.where(low, sign * G, -np.inf)
        gmax2 = v.max()
        if gmax + gmax2 < tol:
            converged = True
            break
        ki = idx[i]
        grad_diff = gmax + v
        quad = diag[ki] + diag[idx] - 2.0 * K[ki, idx]
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(low & (grad_diff > 0), -(grad_diff * grad_diff) / quad, np.inf)
        j = _last_argmax(-obj)
        if not np.isfinite(obj[j]):
            converged = True
            break
        kj = idx[j]

        ai_old, aj_old = a[i], a[j]
        if sign[i] != sign[j]:
            q = diag[ki] + diag[kj] - 2.0 * K[ki, kj]
            if q <= 0:
                q = TAU
            delta = (-G[i] - G[j]) / q
            diff = a[i] - a[j]
            a[i] += delta
            a[j] += delta
            if diff > 0:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = diff
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = -diff
            if diff > 0:
                if a[i] > C:
                    a[i] = C
                    a[j] = C - diff
            else:
                if a[j] > C:
                    a[j] = C
                    a[i] = C + diff
        else:
            q = diag[ki] + diag[kj] - 2.0 * K[ki, kj]
            if q <= 0:
                q = TAU
            delta = (G[i] - G[j]) / q
            total = a[i] + a[j]
            a[i] -= delta
            a[j] += delta
            if total > C:
                if a[i] > C:
                    a[i] = C
                    a[j] = total - C
            else:
                if a[j] < 0:
                    a[j] = 0.0
                    a[i] = total
            if total > C:
                if a[j] > C:
                    a[j] = C
                    a[i] = total - C
            else:
                if a[i] < 0:
                    a[i] = 0.0
                    a[j] = total

        di = a[i] - ai_old
        dj = a[j] - aj_old
        f += sign[i] * di * K[ki] + sign[j] * dj * K[kj]
        G[:n] = f + p[:n]
        G[n:] = -f + p[n:]
        n_iter += 1

    return a[:n] - a[n:], n_iter, converged


def demean_sweeps(data, codes, n_groups, tol=1e-10, max_sweeps=10_000):
    """Alternating-projection demeaning of ``data`` (rows x columns) in place.

    ``codes`` holds one integer group-code array per factor. Returns the
    number of sweeps performed, or ``-1`` when ``max_sweeps`` was hit first.
    """
    n, m = data.shape
    # empty groups are never looked up; keep them at 1 to avoid 0/0
    counts = [np.maximum(np.bincount(c, minlength=g), 1).astype(np.float64) for c, g in zip(codes, n_groups)]
    for sweep in range(1, max_sweeps + 1):
        change = 0.0
        for c, g, cnt in zip(codes, n_groups, counts):
            for col in range(m):
                means = np.bincount(c, weights=data[:, col], minlength=g) / cnt
                shift = means[c]
                data[:, col] -= shift
                peak = np.abs(shift).max() if n else 0.0
                if peak > change:
                    change = peak
        if change < tol:
            return sweep
    return -1
