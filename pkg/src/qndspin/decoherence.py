"""Probe-induced contrast loss, Raman atom loss, and measurement back-action.

Free-space scattering of probe photons collapses individual spins (linear
contrast loss k1 per photon), uncanceled inhomogeneous light shifts dephase
the ensemble (quadratic term k2), and a fraction p_R of free-space scatters
leaves the clock manifold entirely (Raman loss, removed from the probed
population).  Contrast follows the cumulative-photon curve

    C(M_cum) = C_prep - k1 M_cum - k2 M_cum^2

so splitting one photon budget into several scans changes nothing.  The
conjugate azimuthal quadrature takes the measurement back-action: after each
scan conditions the polar variance, the azimuthal variance is kicked up to
hold  var_theta * var_phi = (1/(n_eff C))^2 / q_total,  the minimum-
uncertainty product degraded by the combined quantum/technical efficiency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError
from .state import CollectiveSpinState, jz, set_jz

_MIN_CONTRAST = 1e-9


@dataclass(frozen=True)
class ProbeImpact:
    """Per-scan probe impact parameters."""

    photons: float                 # M, probe photons in this application
    scattered: float               # M_sc, photons scattered into free space
    contrast_factor_linear: float  # k1, per photon
    contrast_factor_quad: float    # k2, per photon^2
    raman_branch: float = 0.5      # p_R, P(scatter leaves the clock manifold)
    backaction_var_added: float = 0.0  # rad^2, extra technical phi noise per kick

    def validate(self) -> None:
        if not (0.0 <= self.raman_branch <= 1.0):
            raise InvalidParameterError("raman_branch must be in [0, 1]")
        if self.scattered > self.photons:
            raise InvalidParameterError("M_sc cannot exceed M")
        if self.backaction_var_added < 0:
            raise InvalidParameterError("backaction_var_added must be >= 0")


def _rescale_contrast(state: CollectiveSpinState, c_new: float) -> CollectiveSpinState:
    """Shrink the Bloch vector while conserving the population fluctuation:
    the quadrature realizations and variances inflate by C_old/C_new (J_z
    itself is held exactly via the population bookkeeping)."""
    c_old = state.contrast
    if c_new <= _MIN_CONTRAST:
        return replace(state, contrast=0.0, clamped=True)
    f = c_old / c_new
    target = jz(state)
    out = replace(
        state,
        contrast=c_new,
        fluct_phi=state.fluct_phi * f,
        var_theta=state.var_theta * f**2,
        var_phi=state.var_phi * f**2,
        cov_tp=state.cov_tp * f**2,
    )
    return set_jz(out, target)


def apply_probe_decoherence(
    state: CollectiveSpinState, impact: ProbeImpact, rng: np.random.Generator | None
) -> CollectiveSpinState:
    """Contrast decay plus binomial Raman loss for one probe application.

    Raman-lost atoms are removed from n_up (the probe addresses the up
    manifold), shifting J_z by -L/2; the loss variance is added to the
    conditional polar variance.
    """
    impact.validate()
    if impact.photons <= 0:
        return state
    m0 = state.photons_cum
    m1 = m0 + impact.photons
    k1 = impact.contrast_factor_linear
    k2 = impact.contrast_factor_quad
    drop = k1 * (m1 - m0) + k2 * (m1**2 - m0**2)
    c_new = state.contrast - drop
    out = _rescale_contrast(state, c_new)
    out = replace(out, photons_cum=m1)
    if out.contrast == 0.0:
        return out

    if impact.raman_branch > 0.0 and impact.scattered > 0.0:
        m_sc = int(round(impact.scattered))
        loss = (
            rng.binomial(m_sc, impact.raman_branch)
            if rng is not None
            else impact.raman_branch * m_sc
        )
        if loss > 0:
            jz_target = jz(out) - loss / 2.0
            n_new = max(out.n_eff - loss, 1.0)
            out = replace(out, n_eff=n_new)
            out = set_jz(out, jz_target)
            loss_var = m_sc * impact.raman_branch * (1.0 - impact.raman_branch) / 4.0
            scale = (n_new * out.contrast / 2.0) ** 2
            out = replace(out, var_theta=out.var_theta + loss_var / scale)
    return out


def predict_k1(n_eff: float, scatter_fraction: float) -> float:
    """Scattering-only contrast slope: each free-space scatter collapses one
    effective spin, so k1 = (M_sc/M) / n_eff."""
    if n_eff <= 0:
        raise InvalidParameterError("n_eff must be positive")
    return scatter_fraction / n_eff


def condition_on_readout(
    state: CollectiveSpinState, sigma_theta_meas: float
) -> CollectiveSpinState:
    """Gaussian conditioning of the polar variance on one readout of angular
    noise sigma_theta_meas (the realization is untouched; only our
    uncertainty about it shrinks)."""
    if sigma_theta_meas <= 0 or not math.isfinite(sigma_theta_meas):
        return state
    v = state.var_theta
    v_new = v * sigma_theta_meas**2 / (v + sigma_theta_meas**2)
    return replace(state, var_theta=v_new)


def backaction_kick(
    state: CollectiveSpinState,
    photons: float,
    q_total: float,
    rng: np.random.Generator | None,
    technical_var: float = 0.0,
) -> CollectiveSpinState:
    """Inject the probe's back-action into the azimuthal quadrature.

    Gaussian noise is added to fluct_phi so the uncertainty product lands at
    (Heisenberg bound)^2 / q_total (plus any additive technical term);
    q_total = 1 reproduces a minimum-uncertainty conditionally squeezed
    state.  One kick per splitting scan (only second moments matter in the
    Gaussian model).
    """
    if not (0.0 < q_total <= 1.0):
        raise InvalidParameterError("q_total must be in (0, 1]")
    if photons <= 0:
        return state
    target = state.heisenberg_bound_sq() / (q_total * state.var_theta) + technical_var
    add = target - state.var_phi
    if add <= 0.0:
        return state
    dphi = rng.normal(0.0, math.sqrt(add)) if rng is not None else 0.0
    return replace(
        state, fluct_phi=state.fluct_phi + dphi, var_phi=state.var_phi + add
    )


def raman_splitting_decay(n_up: float, photons: float, impact: ProbeImpact) -> float:
    """Deterministic expectation of n_up after probing with `photons`
    (calibration-curve form of the binomial loss; the probe addresses the up
    manifold, so the loss is all from n_up)."""
    if n_up < 0 or photons < 0:
        raise InvalidParameterError("n_up and photons must be non-negative")
    if impact.photons <= 0:
        return n_up
    scatter_ratio = impact.scattered / impact.photons
    return max(n_up - impact.raman_branch * scatter_ratio * photons, 0.0)
