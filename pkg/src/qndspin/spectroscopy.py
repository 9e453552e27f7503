"""Dressed-mode spectroscopy: sweep synthesis, doublet fitting, conversion.

The cavity mode (power linewidth kappa) couples to the collective atomic
polarization (linewidth Gamma) of the n_up atoms in the probed state with
collective strength sqrt(n_up) * g_eff, producing two dressed resonances at

    omega_pm = delta/2 +/- sqrt(Omega^2 + delta^2)/2,   Omega = sqrt(n_up) * 2 g_eff

relative to the bare cavity (delta = atom - cavity detuning).  Two probe
sidebands scan the two resonances simultaneously with an equal photon-budget
split; detected counts per frequency bin are Poisson with mean
q * |t(x)|^2 * (budget per bin), and the splitting comes from a weighted
two-Lorentzian fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import FitError, InvalidParameterError
from .geometry import CavityConfig

PEAK_EXCLUDE_BINS = 2  # neighborhood excluded when seeding the second peak


@dataclass(frozen=True)
class SweepConfig:
    """One splitting scan.  `photons` is the probe budget of this scan
    (a J_z measurement = two scans, so this is half the per-J_z budget);
    `span` is the window swept by EACH sideband around its resonance."""

    span: float                    # Hz
    photons: float                 # probe photons in this scan
    detection_efficiency: float    # q in (0, 1]
    points: int = 64               # total frequency samples (both sidebands)
    duration: float = 70e-6        # s, bookkeeping only (quasi-static sweep)
    detuning_ac: float = 0.0       # Hz, atom minus bare-cavity detuning

    def validate(self) -> None:
        if self.span <= 0:
            raise InvalidParameterError("span must be positive")
        if self.photons <= 0:
            raise InvalidParameterError("photons must be positive")
        if not (0.0 < self.detection_efficiency <= 1.0):
            raise InvalidParameterError("detection efficiency must be in (0, 1]")
        if self.points < 16:
            raise InvalidParameterError("need at least 16 frequency samples")


@dataclass(frozen=True)
class SpectrumTrace:
    freq: np.ndarray          # Hz offsets from the bare cavity
    power: np.ndarray         # detected photon counts per bin (integers)
    model_power: np.ndarray   # noiseless expectation per bin

    def csv_rows(self):
        """(freq_hz, counts, model) rows for serialization."""
        for f, c, m in zip(self.freq, self.power, self.model_power):
            yield float(f), int(c), float(m)


@dataclass(frozen=True)
class SplittingFit:
    omega_plus: float
    omega_minus: float
    fwhm: float
    splitting: float
    sigma_splitting: float
    converged: bool
    chi2: float
    amp_plus: float = 0.0
    amp_minus: float = 0.0
    baseline: float = 0.0
    n_iter: int = 0

    def record(self) -> dict:
        """Structured record for run manifests."""
        return {
            "omega_plus_hz": self.omega_plus,
            "omega_minus_hz": self.omega_minus,
            "fwhm_hz": self.fwhm,
            "splitting_hz": self.splitting,
            "sigma_splitting_hz": self.sigma_splitting,
            "converged": self.converged,
            "chi2": self.chi2,
        }


def collective_rabi(n_up: float, g_eff: float) -> float:
    """Vacuum Rabi splitting Omega = sqrt(n_up) * 2 g_eff."""
    return math.sqrt(max(n_up, 0.0)) * 2.0 * g_eff


def dressed_modes(
    n_up: float, g_eff: float, detuning_ac: float, cfg: CavityConfig
) -> tuple[float, float, float]:
    """(omega_plus, omega_minus, fwhm) of the dressed resonances.

    Frequencies are offsets from the bare cavity; fwhm = (kappa + Gamma)/2 is
    each dressed mode's linewidth at zero detuning.
    """
    if n_up < 0:
        raise InvalidParameterError("n_up must be non-negative")
    omega = collective_rabi(n_up, g_eff)
    d = detuning_ac
    root = math.sqrt(omega**2 + d**2)
    fwhm = (cfg.kappa + cfg.gamma_atom) / 2.0
    return d / 2.0 + root / 2.0, d / 2.0 - root / 2.0, fwhm


def _denominator(x, n_up: float, g_eff: float, detuning_ac: float, cfg: CavityConfig):
    gn2 = max(n_up, 0.0) * g_eff**2
    atom = gn2 / (cfg.gamma_atom / 2.0 - 1j * (x - detuning_ac))
    return cfg.kappa / 2.0 - 1j * x + atom


def transmission_amplitude(x, n_up: float, g_eff: float, detuning_ac: float, cfg: CavityConfig):
    """Complex amplitude transmission t(x) of the coupled system (linear
    response, two-sided cavity with input-mirror share cfg.input_coupling
    of kappa; x = probe offset from bare cavity)."""
    x = np.asarray(x, dtype=float)
    a = cfg.input_coupling
    return math.sqrt(a * (1.0 - a)) * cfg.kappa / _denominator(
        x, n_up, g_eff, detuning_ac, cfg
    )


def reflection_amplitude(x, n_up: float, g_eff: float, detuning_ac: float, cfg: CavityConfig):
    """Complex amplitude reflection r(x) back through the input mirror."""
    x = np.asarray(x, dtype=float)
    return cfg.input_coupling * cfg.kappa / _denominator(
        x, n_up, g_eff, detuning_ac, cfg
    ) - 1.0


def sweep_bins(n_up: float, g_eff: float, sweep: SweepConfig, cfg: CavityConfig) -> np.ndarray:
    """Frequency bin centers: points/2 per sideband, windows centered on the
    dressed resonances (the experiment tracks the resonances; the window is
    wide relative to the shot-to-shot splitting fluctuations)."""
    wp, wm, _ = dressed_modes(n_up, g_eff, sweep.detuning_ac, cfg)
    m = sweep.points // 2
    lower = np.linspace(wm - sweep.span / 2.0, wm + sweep.span / 2.0, m)
    upper = np.linspace(wp - sweep.span / 2.0, wp + sweep.span / 2.0, sweep.points - m)
    return np.concatenate([lower, upper])


def synthesize_sweep(
    n_up: float,
    g_eff: float,
    sweep: SweepConfig,
    cfg: CavityConfig,
    rng: np.random.Generator | None,
) -> SpectrumTrace:
    """Shot-noise-limited probe sweep across the doublet.

    Expected detected photons per bin: q * |t|^2 * (photons/points); observed
    counts are Poisson draws (rng=None returns the noiseless expectation,
    rounded to the nearest count)."""
    sweep.validate()
    freq = sweep_bins(n_up, g_eff, sweep, cfg)
    t = transmission_amplitude(freq, n_up, g_eff, sweep.detuning_ac, cfg)
    lam = sweep.detection_efficiency * np.abs(t) ** 2 * (sweep.photons / sweep.points)
    counts = rng.poisson(lam) if rng is not None else np.round(lam).astype(np.int64)
    return SpectrumTrace(freq=freq, power=counts.astype(np.int64), model_power=lam)


def _width_from_data(freq: np.ndarray, y: np.ndarray, i_peak: int, base: float) -> float:
    """FWHM estimate: contiguous bins above half max around the peak."""
    half = base + (y[i_peak] - base) / 2.0
    lo = i_peak
    while lo > 0 and y[lo - 1] > half:
        lo -= 1
    hi = i_peak
    while hi < y.size - 1 and y[hi + 1] > half:
        hi += 1
    spacing = float(np.median(np.diff(freq)))
    return max((hi - lo + 1) * spacing, 2.0 * spacing)


def _initial_guess(freq: np.ndarray, counts: np.ndarray, width_hint: float | None) -> np.ndarray:
    """Seed the fit from the two highest local maxima.  The second peak is
    searched outside a +/-2-bin neighborhood of the first (adjacent-bin
    tie-break), widened to the estimated linewidth so a noisy shoulder of
    peak one is never mistaken for peak two."""
    y = counts.astype(float)
    n = y.size
    base = float(np.mean(np.sort(y)[: max(2, n // 4)]))
    interior = np.arange(1, n - 1)
    is_max = (y[interior] >= y[interior - 1]) & (y[interior] >= y[interior + 1])
    cand = interior[is_max]
    if cand.size == 0:
        cand = np.array([int(np.argmax(y))])
    i1 = int(cand[np.argmax(y[cand])])
    if width_hint is None:
        width_hint = _width_from_data(freq, y, i1, base)
    spacing = float(np.median(np.diff(freq)))
    exclude = max(PEAK_EXCLUDE_BINS, int(round(width_hint / spacing)))
    far = cand[np.abs(cand - i1) > exclude]
    if far.size:
        i2 = int(far[np.argmax(y[far])])
    else:
        mask = np.abs(np.arange(n) - i1) > exclude
        idx = np.arange(n)[mask]
        if idx.size == 0:
            idx = np.array([0 if i1 > n // 2 else n - 1])
        i2 = int(idx[np.argmax(y[idx])])
    lo, hi = sorted((i1, i2))
    return np.array(
        [
            freq[hi],
            freq[lo],
            width_hint,
            max(y[hi] - base, 1.0),
            max(y[lo] - base, 1.0),
            base,
        ]
    )


def _plausible(p: np.ndarray, freq: np.ndarray) -> bool:
    """Reject fits that escaped the data (the flat-model direction
    w -> inf is a true degeneracy of the doublet model, and a merged or
    runaway doublet yields a meaningless splitting)."""
    span = freq.max() - freq.min()
    spacing = float(np.median(np.diff(freq)))
    if not np.all(np.isfinite(p)):
        return False
    for center in (p[0], p[1]):
        if not (freq.min() <= center <= freq.max()):
            return False
    # unresolvable doublet: centers closer than 2 bins or half a linewidth
    if abs(p[0] - p[1]) < max(2.0 * spacing, 0.5 * abs(p[2])):
        return False
    if not (0.0 < abs(p[2]) < 2.0 * span):
        return False
    if p[3] <= 0.0 or p[4] <= 0.0:
        return False
    # when the sweep consists of disjoint windows (two sidebands, one
    # resonance each), a fit putting both centers in one window contradicts
    # the measurement design
    gaps = np.flatnonzero(np.diff(freq) > 5.0 * spacing)
    if gaps.size:
        edges = np.concatenate([[freq.min()], (freq[gaps] + freq[gaps + 1]) / 2.0, [freq.max()]])
        seg_plus = np.searchsorted(edges, p[0])
        seg_minus = np.searchsorted(edges, p[1])
        if seg_plus == seg_minus:
            return False
    return True


def fit_splitting(trace: SpectrumTrace, width_hint: float | None = None) -> SplittingFit:
    """Weighted nonlinear least squares of the two-Lorentzian model.

    Weights are 1/max(counts, 1) (Poisson); the reported sigma comes from the
    parameter covariance at the optimum.  Non-convergence is flagged, not
    raised; an all-zero trace raises FitError.
    """
    counts = np.asarray(trace.power, dtype=float)
    if counts.size < 16:
        raise FitError("trace too short to fit a doublet")
    if not np.any(counts > 0):
        raise FitError("degenerate trace: all bins are zero")
    freq = np.asarray(trace.freq, dtype=float)
    p0 = _initial_guess(freq, counts, width_hint)
    wgt = 1.0 / np.maximum(counts, 1.0)
    p, cov, chi2, converged, n_iter = _kernels.fit_doublet(freq, counts, wgt, p0)
    converged = bool(converged) and _plausible(p, freq)
    if p[0] < p[1]:  # enforce omega_plus > omega_minus
        p = np.array([p[1], p[0], p[2], p[4], p[3], p[5]])
        cov = cov[np.ix_([1, 0, 2, 4, 3, 5], [1, 0, 2, 4, 3, 5])]
    var_split = cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1]
    sigma = math.sqrt(var_split) if np.isfinite(var_split) and var_split > 0 else float("nan")
    # a splitting uncertainty beyond the data range marks a degenerate fit
    if not (0.0 < sigma < freq.max() - freq.min()):
        converged = False
    return SplittingFit(
        omega_plus=float(p[0]),
        omega_minus=float(p[1]),
        fwhm=abs(float(p[2])),
        splitting=float(p[0] - p[1]),
        sigma_splitting=float(sigma),
        converged=bool(converged and np.isfinite(sigma)),
        chi2=float(chi2),
        amp_plus=float(p[3]),
        amp_minus=float(p[4]),
        baseline=float(p[5]),
        n_iter=int(n_iter),
    )


def population_from_splitting(fit: SplittingFit, g_eff: float) -> tuple[float, float]:
    """n_up = (splitting / 2g)^2 with first-order error propagation."""
    if not fit.converged:
        raise FitError("cannot convert a non-converged fit to a population")
    two_g = 2.0 * g_eff
    n_up = (fit.splitting / two_g) ** 2
    sigma_n = 2.0 * math.sqrt(max(n_up, 0.0)) * fit.sigma_splitting / two_g
    return n_up, sigma_n


def atomic_loss_share(x, n_up: float, g_eff: float, detuning_ac: float, cfg: CavityConfig):
    """Pointwise loss partition Gamma*n_at / (Gamma*n_at + kappa*n_cav) for a
    drive at offset x: the share of system loss that exits into free space.
    Equals Gamma/(Gamma+kappa) on a dressed resonance (equal admixture)."""
    x = np.asarray(x, dtype=float)
    gn2 = max(n_up, 0.0) * g_eff**2
    ratio = gn2 / ((cfg.gamma_atom / 2.0) ** 2 + (x - detuning_ac) ** 2)
    share = cfg.gamma_atom * ratio / (cfg.gamma_atom * ratio + cfg.kappa)
    return float(share) if np.ndim(x) == 0 else share


def scattered_fraction(
    sweep: SweepConfig, n_up: float, g_eff: float, cfg: CavityConfig
) -> float:
    """M_sc/M over the sweep: free-space-scattered share of the probe budget.

    Per bin, flux conservation of the two-sided cavity gives
    scattered = 1 - |r|^2 - |t|^2, so the scattered and mirror-exit
    fractions sum to one identically; bins are weighted by the (equal)
    photon budget the sweep allocates to them.
    """
    freq = sweep_bins(n_up, g_eff, sweep, cfg)
    t = transmission_amplitude(freq, n_up, g_eff, sweep.detuning_ac, cfg)
    r = reflection_amplitude(freq, n_up, g_eff, sweep.detuning_ac, cfg)
    sc = 1.0 - np.abs(r) ** 2 - np.abs(t) ** 2
    return float(np.mean(sc))


def mirror_loss_fraction(
    sweep: SweepConfig, n_up: float, g_eff: float, cfg: CavityConfig
) -> float:
    """Complement of scattered_fraction: photons leaving through the mirrors
    (transmitted + reflected)."""
    freq = sweep_bins(n_up, g_eff, sweep, cfg)
    t = transmission_amplitude(freq, n_up, g_eff, sweep.detuning_ac, cfg)
    r = reflection_amplitude(freq, n_up, g_eff, sweep.detuning_ac, cfg)
    return float(np.mean(np.abs(r) ** 2 + np.abs(t) ** 2))
