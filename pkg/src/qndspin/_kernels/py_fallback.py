"""Pure-numpy implementation of the doublet-fit kernel.

Same algorithm as the compiled extension (Levenberg-Marquardt with analytic
Jacobian on the two-Lorentzian model); used when the extension is not built
or when QNDSPIN_PURE_PYTHON=1.  Parameter order: [x_plus, x_minus, width,
amp_plus, amp_minus, baseline], width = common FWHM.
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"

MAX_ITER = 200
LAMBDA0 = 1e-3
REL_TOL = 1e-12
STEP_TOL = 1e-11


def doublet_model(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    """b + A+ L(x; x+, w) + A- L(x; x-, w), peak-normalized Lorentzians."""
    xp, xm, w, ap, am, b = p
    h = (w / 2.0) ** 2
    return b + ap * h / ((x - xp) ** 2 + h) + am * h / ((x - xm) ** 2 + h)


def _jacobian(p: np.ndarray, x: np.ndarray) -> np.ndarray:
    xp, xm, w, ap, am, _b = p
    h = (w / 2.0) ** 2
    dp_ = x - xp
    dm = x - xm
    lp = h / (dp_**2 + h)
    lm = h / (dm**2 + h)
    jac = np.empty((x.size, 6))
    jac[:, 0] = ap * 2.0 * dp_ * lp**2 / h
    jac[:, 1] = am * 2.0 * dm * lm**2 / h
    jac[:, 2] = (ap * dp_**2 * lp**2 + am * dm**2 * lm**2) / (w / 2.0) ** 3
    jac[:, 3] = lp
    jac[:, 4] = lm
    jac[:, 5] = 1.0
    return jac


def _step_caps(p0: np.ndarray) -> np.ndarray:
    """Per-iteration trust region, sized from the seed: a center or the
    width may move at most one initial linewidth per accepted step, the
    amplitude-like parameters at most twice the seed amplitude scale.
    Without this the exact flat-model degeneracy (w -> inf with amplitudes
    and baseline compensating) can swallow the fit."""
    w0 = abs(p0[2])
    amp = 2.0 * max(abs(p0[3]), abs(p0[4]), abs(p0[5]), 1.0)
    return np.array([w0, w0, w0, amp, amp, amp])


def fit_doublet(x, y, wgt, p0):
    """Weighted LM fit.  Returns (p, cov, chi2, converged, n_iter)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    sw = np.sqrt(np.asarray(wgt, dtype=float))
    p = np.asarray(p0, dtype=float).copy()
    caps = _step_caps(p)

    def residual(pv):
        r = sw * (doublet_model(pv, x) - y)
        return r, float(r @ r)

    r, cost = residual(p)
    lam = LAMBDA0
    converged = False
    it = 0
    for it in range(1, MAX_ITER + 1):
        jac = _jacobian(p, x) * sw[:, None]
        a = jac.T @ jac
        g = jac.T @ r
        stepped = False
        for _ in range(30):
            aug = a + lam * np.diag(np.diag(a))
            try:
                delta = np.linalg.solve(aug, -g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                return p, np.full((6, 6), np.nan), cost, False, it
            over = np.max(np.abs(delta) / caps)
            if over > 1.0:
                delta = delta / over
            p_try = p + delta
            if p_try[2] <= 0.0:  # width must stay positive; reflect
                p_try[2] = abs(p_try[2]) if p_try[2] != 0.0 else 0.5 * p[2]
            r_try, cost_try = residual(p_try)
            if cost_try <= cost:
                rel = (cost - cost_try) / max(cost, 1e-300)
                p, r, cost = p_try, r_try, cost_try
                lam = max(lam / 3.0, 1e-12)
                stepped = True
                if rel < REL_TOL or float(np.max(np.abs(delta))) < STEP_TOL:
                    converged = True
                break
            lam *= 7.0
            if lam > 1e12:
                break
        if not stepped:
            converged = it > 1  # stalled after making progress = at a minimum
            break
        if converged:
            break
    jac = _jacobian(p, x) * sw[:, None]
    a = jac.T @ jac
    try:
        cov = np.linalg.inv(a)
        ok = bool(np.all(np.isfinite(cov)))
    except np.linalg.LinAlgError:
        cov = np.full((6, 6), np.nan)
        ok = False
    return p, cov, cost, bool(converged and ok), it
