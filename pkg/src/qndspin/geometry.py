"""Cavity mode geometry, thermal cloud sampling, effective (N, g) calibration.

Atoms trapped in a 1D intracavity lattice couple inhomogeneously to the
standing-wave probe mode (incommensurate wavelengths), so the probed
sub-ensemble is described by an effective atom number and effective coupling
defined by moment matching: N and g are chosen so that the projection noise
keeps the homogeneous form sqrt(N)/2 while reproducing the observed
collective Rabi splitting.  The two conditions reduce, for an equatorial CSS
of independent atoms (<P_up> = 1/2, Var(P_up) = 1/4), to

    (2g)^2 = <(2g(r))^4> / <(2g(r))^2>        N/N_tot = <(2g(r))^2>^2 / <(2g(r))^4>

with <.> the average over the thermal position distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InvalidParameterError

C_LIGHT = 299_792_458.0   # m/s
PLANCK = 6.62607015e-34   # J s
K_BOLTZ = 1.380649e-23    # J/K


@dataclass(frozen=True)
class CavityConfig:
    """Cavity mode and decay parameters.  All frequencies are plain Hz."""

    fsr: float                 # free spectral range
    finesse: float
    lambda_probe: float        # m
    lambda_lattice: float      # m
    g0_peak: float             # Hz, half of the peak vacuum Rabi frequency 2g0
    w0: float                  # m, mode waist
    z_r: float                 # m, Rayleigh length
    gamma_atom: float          # Hz, atomic natural linewidth (FWHM)
    input_coupling: float = 0.5  # input mirror's share of kappa (0.5 = symmetric)

    @property
    def kappa(self) -> float:
        """Cavity power decay linewidth (FWHM), kappa = FSR/finesse."""
        return self.fsr / self.finesse

    @property
    def length(self) -> float:
        return C_LIGHT / (2.0 * self.fsr)

    def validate(self) -> None:
        w0_expected = math.sqrt(self.lambda_probe * self.z_r / math.pi)
        if abs(self.w0 - w0_expected) > 1e-9 * w0_expected:
            raise InvalidParameterError(
                f"w0 = {self.w0} inconsistent with sqrt(lambda z_R / pi) = {w0_expected}"
            )


@dataclass(frozen=True)
class AtomCloud:
    """Thermal ensemble geometry in the lattice."""

    sigma_z: float        # m, axial rms extent of the cloud
    x_rms: float          # m, radial rms extent (= y_rms, cylindrical symmetry)
    z_site_rms: float     # m, rms axial excursion within one lattice well
    temp_radial: float = 25e-6   # K
    trap_depth: float = 7.4e6    # Hz

    @property
    def y_rms(self) -> float:
        return self.x_rms

    def validate(self) -> None:
        for name in ("sigma_z", "x_rms", "z_site_rms"):
            if getattr(self, name) < 0:
                raise InvalidParameterError(f"{name} must be non-negative")


@dataclass(frozen=True)
class EffectiveParams:
    n_eff_fraction: float   # N / N_tot
    g_eff: float            # Hz, half of the effective 2g
    mc_error: float         # relative bootstrap error on the fraction


def geometry_from_mode_spacings(
    fsr: float, spacing_01: float, lambda_probe: float, spacing_02: float | None = None
) -> tuple[float, float, float]:
    """(z_R, w0, length) of a symmetric cavity from its mode spectrum.

    The transverse mode spacing fixes the one-way Gouy phase
    psi_G = pi * spacing_01 / FSR; for a symmetric two-mirror cavity
    cos(psi_G) = 1 - L/R, from which the mirror radius and Rayleigh length
    follow.  If the second-order spacing is supplied it is checked against
    2 * spacing_01.
    """
    if not (0.0 < spacing_01 < fsr):
        raise InvalidParameterError(
            f"transverse mode spacing {spacing_01} outside (0, FSR = {fsr})"
        )
    length = C_LIGHT / (2.0 * fsr)
    psi_g = math.pi * spacing_01 / fsr
    radius = length / (1.0 - math.cos(psi_g))
    if radius <= length / 2.0:
        raise GeometryError(
            f"mirror radius {radius} <= L/2 = {length / 2}: unstable geometry"
        )
    z_r = (length / 2.0) * math.sqrt((2.0 * radius - length) / length)
    w0 = math.sqrt(lambda_probe * z_r / math.pi)
    if spacing_02 is not None:
        if abs(spacing_02 - 2.0 * spacing_01) > 0.005 * fsr:
            raise GeometryError(
                f"second mode spacing {spacing_02} inconsistent with 2x{spacing_01}"
            )
    return z_r, w0, length


def gouy_spacing(z_r: float, fsr: float) -> float:
    """Inverse of geometry_from_mode_spacings: TEM00-TEM01 spacing from z_R."""
    length = C_LIGHT / (2.0 * fsr)
    # invert z_R^2 = (L/2)^2 (2R - L)/L for the mirror radius
    radius = (4.0 * z_r**2 / length + length) / 2.0
    return fsr * math.acos(1.0 - length / radius) / math.pi


def mode_waist(z: float, cfg: CavityConfig) -> float:
    return cfg.w0 * math.sqrt(1.0 + (z / cfg.z_r) ** 2)


def mode_coupling(position, cfg: CavityConfig):
    """Single-atom coupling g(r) of the standing-wave TEM00 probe mode.

    2g(r) = 2g0 (w0/w(z)) exp(-(x^2+y^2)/w(z)^2) sin(kz), k = 2 pi / lambda.
    Accepts a single 3-vector or an (n, 3) array.
    """
    pos = np.atleast_2d(np.asarray(position, dtype=float))
    x, y, z = pos[:, 0], pos[:, 1], pos[:, 2]
    w = cfg.w0 * np.sqrt(1.0 + (z / cfg.z_r) ** 2)
    k = 2.0 * math.pi / cfg.lambda_probe
    g = cfg.g0_peak * (cfg.w0 / w) * np.exp(-(x**2 + y**2) / w**2) * np.sin(k * z)
    return float(g[0]) if np.ndim(position) == 1 else g


def sample_atom_positions(
    cloud: AtomCloud, cfg: CavityConfig, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample (n, 3) atom positions: Gaussian well occupation along the
    lattice, snap to sites spaced lambda_lattice/2, Gaussian intra-well
    jitter, Gaussian radial spread.

    The probe phase at each site follows from the actual site coordinate and
    the incommensurate 823/795 nm wavelengths; over thousands of occupied
    wells it is effectively uniform.
    """
    if n < 1:
        raise InvalidParameterError("need at least one atom position")
    site = cfg.lambda_lattice / 2.0
    z = rng.normal(0.0, cloud.sigma_z, size=n) if cloud.sigma_z > 0 else np.zeros(n)
    z = np.round(z / site) * site
    if cloud.z_site_rms > 0:
        z = z + rng.normal(0.0, cloud.z_site_rms, size=n)
    x = rng.normal(0.0, cloud.x_rms, size=n) if cloud.x_rms > 0 else np.zeros(n)
    y = rng.normal(0.0, cloud.x_rms, size=n) if cloud.x_rms > 0 else np.zeros(n)
    # center the cloud on an antinode so the zero-size limit is maximally coupled
    z = z + cfg.lambda_probe / 4.0
    return np.column_stack([x, y, z])


def predicted_radial_extent(cloud: AtomCloud, cfg: CavityConfig) -> float:
    """Thermal radial rms extent implied by the lattice: for a particle at
    temperature T in a Gaussian well of depth U and waist w_lat,
    x_rms = (w_lat/2) sqrt(T/U_K); consistency check against the supplied
    x_rms."""
    w_lat = math.sqrt(cfg.lambda_lattice * cfg.z_r / math.pi)
    depth_kelvin = cloud.trap_depth * PLANCK / K_BOLTZ
    return (w_lat / 2.0) * math.sqrt(cloud.temp_radial / depth_kelvin)


def moment_match(coupling_sq: np.ndarray, weights: np.ndarray | None = None):
    """Solve the two moment conditions given samples of (2g(r))^2.

    Returns (n_eff_fraction, g_eff) with g_eff = half of the effective 2g.
    Exact for any discrete coupling distribution.
    """
    u = np.asarray(coupling_sq, dtype=float)
    if u.size == 0:
        raise InvalidParameterError("empty coupling sample")
    if weights is None:
        m1, m2 = u.mean(), (u**2).mean()
    else:
        w = np.asarray(weights, dtype=float)
        w = w / w.sum()
        m1, m2 = w @ u, w @ u**2
    if m2 <= 0.0:
        raise InvalidParameterError("all couplings vanish")
    frac = m1**2 / m2
    two_g_eff = math.sqrt(m2 / m1)
    return frac, two_g_eff / 2.0


def effective_params(
    positions: np.ndarray,
    cfg: CavityConfig,
    rng: np.random.Generator | None = None,
    n_bootstrap: int = 32,
) -> EffectiveParams:
    """Monte Carlo moment-matching calibration over sampled atom positions."""
    pos = np.asarray(positions, dtype=float)
    if pos.size == 0:
        raise InvalidParameterError("empty position list")
    u = (2.0 * mode_coupling(pos, cfg)) ** 2
    frac, g_eff = moment_match(u)
    mc_error = 0.0
    if rng is not None and len(u) > 1:
        fracs = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            sel = rng.integers(0, len(u), size=len(u))
            fracs[b], _ = moment_match(u[sel])
        mc_error = float(fracs.std(ddof=1) / frac)
    return EffectiveParams(n_eff_fraction=float(frac), g_eff=float(g_eff), mc_error=mc_error)
