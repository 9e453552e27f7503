"""Collective pseudo-spin state in the Gaussian tangent-plane model.

The ensemble of n_eff two-level atoms is reduced to a mean Bloch direction,
a contrast (Bloch vector length fraction), and two Gaussian quadratures
attached to the tangent plane at the mean: the polar fluctuation delta-theta
(latitude, reads out as population difference) and the azimuthal fluctuation
delta-phi (the conjugate, back-action quadrature).  Each trial carries one
realization of the pair plus the conditional variances; every operation
returns a new state (value semantics, trials parallelize trivially).

Conventions (documented because the reference experiment leaves them open):
north pole = spin-up; theta_B is latitude, theta_B ~ J_z/J_max near the
equator; the rotation R[psi, phi, theta] turns the Bloch vector right-handed
about the axis

    a(phi, theta) = (cos(theta) sin(phi), -cos(theta) cos(phi), sin(theta))

so that R[pi/2, 0, 0] carries the south pole onto +x, and a pulse with axis
azimuth phi moves a south-pole state toward equatorial azimuth phi.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidParameterError

_UNIT_TOL = 1e-12
_SMALL_N_WARN = 10.0


@dataclass(frozen=True)
class Rotation:
    """Bloch-sphere rotation R[psi, phi_axis, theta_axis] (radians)."""

    psi: float
    phi_axis: float = 0.0
    theta_axis: float = 0.0

    def axis(self) -> np.ndarray:
        ct = math.cos(self.theta_axis)
        return np.array(
            [
                ct * math.sin(self.phi_axis),
                -ct * math.cos(self.phi_axis),
                math.sin(self.theta_axis),
            ]
        )

    def matrix(self) -> np.ndarray:
        """Rodrigues rotation matrix for this axis/angle."""
        a = self.axis()
        c, s = math.cos(self.psi), math.sin(self.psi)
        ax = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
        return c * np.eye(3) + s * ax + (1.0 - c) * np.outer(a, a)

    def inverse(self) -> "Rotation":
        return replace(self, psi=-self.psi)


@dataclass(frozen=True)
class CollectiveSpinState:
    """Semiclassical collective spin with explicit quantum-noise realization.

    var_theta/var_phi are the current conditional variances of the two
    quadratures; cov_tp is their correlation (created by rotations about a
    non-principal axis, zero for fresh states).  photons_cum tracks the total
    probe photons this state has scattered off, which fixes where it sits on
    the contrast-decay curve.
    """

    n_eff: float
    mean_dir: np.ndarray
    contrast: float
    fluct_theta: float
    fluct_phi: float
    var_theta: float
    var_phi: float
    cov_tp: float = 0.0
    photons_cum: float = 0.0
    clamped: bool = False  # contrast hit 0 under probing

    def latitude(self) -> float:
        return math.asin(max(-1.0, min(1.0, float(self.mean_dir[2]))))

    def heisenberg_bound_sq(self) -> float:
        """(Delta-theta * Delta-phi) lower bound, squared: 1/(n_eff*C)^2."""
        return (1.0 / (self.n_eff * self.contrast)) ** 2

    def uncertainty_product(self) -> float:
        return self.var_theta * self.var_phi

    def validate(self) -> None:
        if abs(np.linalg.norm(self.mean_dir) - 1.0) > 1e-9:
            raise InvalidParameterError("mean_dir is not a unit vector")
        if not (0.0 <= self.contrast <= 1.0):
            raise InvalidParameterError(f"contrast {self.contrast} outside [0, 1]")


def _tangent_frame(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal (e_theta, e_phi) at u; e_theta points to +latitude.

    At the poles the azimuth is degenerate; the phi=0 meridian fixes the
    frame there (e_phi = +y), matching the rotation-axis convention.
    """
    ez = np.array([0.0, 0.0, 1.0])
    ephi = np.cross(ez, u)
    norm = np.linalg.norm(ephi)
    if norm < 1e-12:
        ephi = np.array([0.0, 1.0, 0.0])
    else:
        ephi = ephi / norm
    etheta = np.cross(u, ephi)
    return etheta, ephi


def prepare_css(
    n_eff: float,
    direction,
    contrast: float = 1.0,
    rng: np.random.Generator | None = None,
) -> CollectiveSpinState:
    """Draw a fresh coherent spin state along `direction`.

    The quadrature scale is set so the population projection noise is exactly
    Var(J_z) = n_eff/4 for any preparation contrast (angular variance
    1/(n_eff C^2), which is 1/n_eff for the usual C = 1).
    """
    if n_eff <= 0:
        raise InvalidParameterError(f"n_eff must be positive, got {n_eff}")
    if not (0.0 < contrast <= 1.0):
        raise InvalidParameterError(f"contrast must be in (0, 1], got {contrast}")
    u = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(u)
    if abs(norm - 1.0) > 1e-9:
        raise InvalidParameterError("direction must be a unit vector")
    u = u / norm
    if n_eff < _SMALL_N_WARN:
        warnings.warn(
            f"n_eff = {n_eff} < {_SMALL_N_WARN}: Gaussian tangent-plane model "
            "is a poor approximation at this size",
            stacklevel=2,
        )
    var = 1.0 / (n_eff * contrast**2)
    if rng is None:
        dt = dp = 0.0
    else:
        dt, dp = rng.normal(0.0, math.sqrt(var), size=2)
    return CollectiveSpinState(
        n_eff=float(n_eff),
        mean_dir=u,
        contrast=float(contrast),
        fluct_theta=float(dt),
        fluct_phi=float(dp),
        var_theta=var,
        var_phi=var,
    )


def rotate(state: CollectiveSpinState, r: Rotation) -> CollectiveSpinState:
    """Rotate the mean and transport the quadrature pair with it.

    The fluctuation vector lives in the tangent plane at the mean; the
    rotation maps tangent plane to tangent plane, so the pair transforms by
    the induced 2x2 orthogonal map (quadratures mix whenever the axis is not
    collinear with the mean) and the covariance by its congruence, which
    keeps the transport symplectic.
    """
    rm = r.matrix()
    u = state.mean_dir
    u2 = rm @ u
    u2 = u2 / np.linalg.norm(u2)

    et1, ep1 = _tangent_frame(u)
    et2, ep2 = _tangent_frame(u2)
    ret1, rep1 = rm @ et1, rm @ ep1
    m = np.array([[et2 @ ret1, et2 @ rep1], [ep2 @ ret1, ep2 @ rep1]])

    f = m @ np.array([state.fluct_theta, state.fluct_phi])
    cov = np.array(
        [[state.var_theta, state.cov_tp], [state.cov_tp, state.var_phi]]
    )
    cov2 = m @ cov @ m.T
    return replace(
        state,
        mean_dir=u2,
        fluct_theta=float(f[0]),
        fluct_phi=float(f[1]),
        var_theta=float(cov2[0, 0]),
        var_phi=float(cov2[1, 1]),
        cov_tp=float(cov2[0, 1]),
    )


def populations(state: CollectiveSpinState) -> tuple[float, float]:
    """(n_up, n_down) from the current latitude incl. the quantum fluctuation.

    Pure bookkeeping, adds no noise: n_up = n(1 + C sin(theta_B + dtheta))/2.
    """
    theta = state.latitude() + state.fluct_theta
    n_up = state.n_eff * (1.0 + state.contrast * math.sin(theta)) / 2.0
    return n_up, state.n_eff - n_up


def jz(state: CollectiveSpinState) -> float:
    """J_z = (n_up - n_down)/2 for this trial's realization."""
    n_up, n_down = populations(state)
    return (n_up - n_down) / 2.0


def set_jz(state: CollectiveSpinState, target: float) -> CollectiveSpinState:
    """Adjust fluct_theta so the trial's J_z equals `target` (bookkeeping
    after population-changing events such as Raman loss)."""
    s = 2.0 * target / (state.n_eff * state.contrast)
    s = max(-1.0, min(1.0, s))
    return replace(state, fluct_theta=math.asin(s) - state.latitude())
