"""Statistical pipeline: noise budget, Bayesian conditioning, conditional
variance, squeezing metrics, polynomial fits, and the budget solver.

Units and conventions: J_z and its estimates are in population units,
variances in population^2; P = n_eff/4 is the coherent-state projection
variance; all dB values are 10 log10 of variance ratios.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

def to_db(ratio: float) -> float:
    if ratio <= 0:
        raise InvalidParameterError("dB of a non-positive ratio")
    return 10.0 * math.log10(ratio)


def from_db(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class NoiseBudget:
    """Variance budget of one J_z measurement, population^2 units."""

    projection_var: float   # P = N/4
    readout_var: float      # m, per measurement, uncorrelated between them
    classical_var: float    # c, per measurement, uncorrelated between them

    def __post_init__(self):
        for name in ("projection_var", "readout_var", "classical_var"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be >= 0")

    @classmethod
    def from_fractions(cls, n_eff: float, m_frac: float, c_frac: float) -> "NoiseBudget":
        p = n_eff / 4.0
        return cls(projection_var=p, readout_var=m_frac * p, classical_var=c_frac * p)

    @property
    def bayes_weight(self) -> float:
        """Posterior-mean weight w = P/(P + m + c) (zero prior mean)."""
        total = self.projection_var + self.readout_var + self.classical_var
        return self.projection_var / total if total > 0 else 0.0


@dataclass(frozen=True)
class SqueezingReport:
    var_diff_db: float
    var_cond_db: float
    var_diff_ratio: float
    var_cond_ratio: float
    contrast_i: float
    contrast_f: float
    zeta_direct_db: float
    zeta_inferred_db: float
    n_trials: int
    readout_var_calibrated: float = float("nan")  # empirical DeltaJ_zm^2
    n_flagged: int = 0

    def lines(self):
        yield f"trials                 {self.n_trials}"
        yield f"var(Jz2 - w Jz1)/P     {self.var_diff_ratio:.4f}  ({self.var_diff_db:+.2f} dB)"
        yield f"conditional var/P      {self.var_cond_ratio:.4f}  ({self.var_cond_db:+.2f} dB)"
        yield f"contrast initial/final {self.contrast_i:.4f} / {self.contrast_f:.4f}"
        yield f"zeta^-1 direct         {self.zeta_direct_db:+.2f} dB"
        yield f"zeta^-1 inferred       {self.zeta_inferred_db:+.2f} dB"
        if math.isfinite(self.readout_var_calibrated):
            yield f"DeltaJzm^2 (calib)     {self.readout_var_calibrated:.1f}"
        if self.n_flagged:
            yield f"flagged trials         {self.n_flagged}"


def calibrate_measurement_noise(pairs, g_eff: float) -> float:
    """Measurement-noise variance from adjacent splitting pairs.

    DeltaJ_zm = std((Omega2^2 - Omega1^2) / (8 g^2)); common-mode noise
    (total atom number, drive power, projection noise) cancels in the pair.
    Returns DeltaJ_zm^2.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise InvalidParameterError("need at least 2 (Omega1, Omega2) pairs")
    d = (arr[:, 1] ** 2 - arr[:, 0] ** 2) / (8.0 * g_eff**2)
    return float(np.var(d, ddof=1))


def bayes_estimate(jz1_measured, budget: NoiseBudget, prior_mean: float = 0.0):
    """Posterior-mean estimate of J_z from the first measurement (Gaussian
    model): mu + w (jz1 - mu) with w = P/(P+m+c); the equatorial preparation
    makes the default prior mean 0."""
    w = budget.bayes_weight
    return prior_mean + w * (np.asarray(jz1_measured, dtype=float) - prior_mean)


def conditional_variance(
    trials,
    budget: NoiseBudget,
    weight: float | None = None,
    prior_mean: float = 0.0,
) -> tuple[float, float, float, float]:
    """(var_diff_db, var_cond_db, var_diff_ratio, var_cond_ratio).

    var_diff = Var(jz2 - w jz1) with the budget's Bayesian weight (or an
    explicit `weight`, e.g. the empirical optimum); var_cond subtracts the
    second readout's noise m in quadrature.  Ratios are relative to P.
    """
    arr = np.asarray(trials, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 10:
        raise InvalidParameterError("need (jz1, jz2) rows, at least 10")
    jz1, jz2 = arr[:, 0], arr[:, 1]
    if weight is None:
        diff = jz2 - bayes_estimate(jz1, budget, prior_mean)
    else:
        diff = jz2 - (prior_mean + weight * (jz1 - prior_mean))
    var_diff = float(np.var(diff, ddof=1))
    var_cond = var_diff - budget.readout_var
    p = budget.projection_var

    def db(x):
        return to_db(x) if x > 0 else -math.inf

    return db(var_diff / p), db(var_cond / p), var_diff / p, var_cond / p


def squeezing_metrics(
    contrast_i: float, contrast_f: float, var_diff_ratio: float, var_cond_ratio: float
) -> tuple[float, float]:
    """Wineland spectroscopic gains (dB): directly observed and inferred.

    zeta_m^-1 = C_f^2 (DeltaJ_zCSS)^2 / (C_i Var): variance improvement
    penalized by the contrast cost of the measurement.
    """
    if not (0.0 < contrast_i <= 1.0) or not (0.0 < contrast_f <= 1.0):
        raise InvalidParameterError("contrasts must be in (0, 1]")
    if var_diff_ratio <= 0 or var_cond_ratio <= 0:
        raise InvalidParameterError("variance ratios must be positive")
    direct = contrast_f**2 / (contrast_i * var_diff_ratio)
    inferred = contrast_f**2 / (contrast_i * var_cond_ratio)
    return to_db(direct), to_db(inferred)


def sampled_measurement_gain(extract_fraction: float, var_cond_ratio: float) -> float:
    """dB penalty of destructively detecting an extracted sub-ensemble
    (perfect detection of a fraction f: phase variance 1/(f N), ratio 1/f)
    versus the collective conditional readout (ratio var_cond_ratio)."""
    if not (0.0 < extract_fraction < 1.0):
        raise InvalidParameterError("extract_fraction must be in (0, 1)")
    if var_cond_ratio <= 0:
        raise InvalidParameterError("var_cond_ratio must be positive")
    return to_db((1.0 / extract_fraction) / var_cond_ratio)


def contrast_fit(points):
    """Least-squares fit of C(M) = C_i - k1 M - k2 M^2.

    Returns ((C_i, k1, k2), one-sigma uncertainties).  Linear in the
    parameters, so the fit is closed-form; raises on a rank-deficient design
    (fewer than 4 distinct M values).
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or len(np.unique(arr[:, 0])) < 4:
        raise InvalidParameterError("need at least 4 distinct photon numbers")
    m, c = arr[:, 0], arr[:, 1]
    design = np.column_stack([np.ones_like(m), -m, -(m**2)])
    coef, res, rank, _ = np.linalg.lstsq(design, c, rcond=None)
    if rank < 3:
        raise InvalidParameterError("rank-deficient design")
    dof = max(len(m) - 3, 1)
    s2 = float(res[0]) / dof if res.size else float(
        np.sum((c - design @ coef) ** 2)
    ) / dof
    cov = s2 * np.linalg.inv(design.T @ design)
    return tuple(coef), tuple(np.sqrt(np.diag(cov)))


def fit_projection_scan(n_values, variances) -> tuple[float, np.ndarray]:
    """Quadratic fit Var(J_z1) = a0 + a1 N + a2 N^2; returns the linear
    coefficient over the projection-noise prediction 1/4, plus all
    coefficients (a0 = readout floor, a2 = technical)."""
    n = np.asarray(n_values, dtype=float)
    v = np.asarray(variances, dtype=float)
    if n.size < 3:
        raise InvalidParameterError("need at least 3 atom numbers")
    if n.max() / n.min() < 10.0:
        raise InvalidParameterError("atom numbers must span at least a decade")
    coeffs = np.polynomial.polynomial.polyfit(n, v, 2)
    return float(coeffs[1] / 0.25), coeffs


def solve_budget(var_diff_db: float, var_cond_db: float) -> tuple[float, float]:
    """Close the noise budget from the two reported variance ratios.

    In units of P, with optimal Bayesian weight w = 1/T and T = 1 + m + c:
    Var(diff) = T - 1/T fixes T, and m = Var(diff) - Var(cond).  Returns
    (m_frac, c_frac).
    """
    rd = from_db(var_diff_db)
    rc = from_db(var_cond_db)
    if rc >= rd:
        raise InvalidParameterError("conditional variance must be below var_diff")
    t = (rd + math.sqrt(rd**2 + 4.0)) / 2.0
    m = rd - rc
    c = (t - 1.0) - m
    if c < 0:
        raise InvalidParameterError(
            f"targets imply negative classical noise (m={m:.4f}, m+c={t - 1:.4f})"
        )
    return m, c


def empirical_optimal_weight(trials) -> float:
    """Cov(jz1, jz2)/Var(jz1): the weight minimizing Var(jz2 - w jz1)."""
    arr = np.asarray(trials, dtype=float)
    cov = np.cov(arr[:, 0], arr[:, 1], ddof=1)
    return float(cov[0, 1] / cov[0, 0])
