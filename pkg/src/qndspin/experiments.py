"""Experiment drivers: seeded Monte Carlo pipelines over the sequence engine.

Every pipeline draws from counter-based per-trial streams (Philox keyed by
master seed XOR trial index, with the command/scan-point id in the second
key word), so results are independent of execution order and identical for
any worker count.  Trials run on an optional thread pool and are collected
in trial order before any statistics.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import analysis
from .analysis import NoiseBudget, SqueezingReport
from .decoherence import predict_k1
from .errors import InvalidParameterError
from .sequences import (
    CHANNELS,
    MeasurementChain,
    PulseSequence,
    RotationNoiseModel,
    ZERO_NOISE,
    analytic_added_noise,
    backaction_sequence,
    fringe_sequence,
    mc_added_noise,
    run_sequence,
    standard_sequences,
)
from .spectroscopy import scattered_fraction
from .state import prepare_css

SOUTH = np.array([0.0, 0.0, -1.0])

# stream domain ids (second Philox key word, high bits)
DOMAIN_SQUEEZE = 1
DOMAIN_BACKACTION = 2
DOMAIN_PROJECTION = 3
DOMAIN_CONTRAST = 4
DOMAIN_ROTNOISE = 5
DOMAIN_MJZ = 6
DOMAIN_COUPLING = 7


def trial_rng(seed: int, domain: int, point: int, trial: int) -> np.random.Generator:
    """Counter-based stream: the master seed keys the family, the
    (domain, point, trial) triple selects the member, so any trial's stream
    is independent of execution order and of every other stream."""
    stream = ((domain << 48) | (point << 28) | trial) & 0xFFFFFFFFFFFFFFFF
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _run_trials(fn, trials: int, workers: int = 1) -> list:
    """Run fn(trial_index) for each trial, results ordered by index."""
    if workers <= 1:
        return [fn(i) for i in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(trials)))


@dataclass(frozen=True)
class ExperimentSetup:
    """Shared physics inputs for all pipelines."""

    n_eff: float
    contrast_i: float
    chain: MeasurementChain
    budget: NoiseBudget
    noise: RotationNoiseModel = ZERO_NOISE
    seed: int = 0
    workers: int = 1


def _jz_block(rec, up_label: str, dn_label: str, rng, c_sd: float) -> float:
    est = (rec.n_up(up_label) - rec.n_up(dn_label)) / 2.0
    if c_sd > 0 and rng is not None:
        est += rng.normal(0.0, c_sd)
    return est


_SUM_CUT_SIGMAS = 5.0


def _sums_consistent(rec, setup: ExperimentSetup) -> bool:
    """Total-population consistency cut: within a block the quantum
    projection J_z cancels in N_up + N_down, so each block's sum must match
    the known atom number (minus the expected Raman loss) to within fit
    noise.  Catches gross fit outliers that individually look plausible."""
    if setup.chain.ideal_readout:
        return True
    m = rec.measurements
    imp = setup.chain.impact_for(setup.n_eff / 2.0)
    loss = imp.raman_branch * imp.scattered
    expected = {("up1", "dn1"): setup.n_eff, ("dn2", "up2"): setup.n_eff - 2.0 * loss}
    for (a, b), n_exp in expected.items():
        if a not in m or b not in m:
            continue
        sig = math.hypot(m[a].sigma_n, m[b].sigma_n)
        if not math.isfinite(sig):
            return False
        if abs(m[a].n_up_est + m[b].n_up_est - n_exp) > _SUM_CUT_SIGMAS * sig:
            return False
    return True


def squeeze_trial(setup: ExperimentSetup, seq: PulseSequence, rng):
    """One squeeze/back-action trial: (jz1, jz2, contrast_f, record)."""
    state = prepare_css(setup.n_eff, SOUTH, setup.contrast_i, rng)
    rec = run_sequence(seq, state, setup.noise, setup.chain, rng)
    if not _sums_consistent(rec, setup):
        rec.flagged = True
    c_sd = math.sqrt(setup.budget.classical_var)
    jz1 = _jz_block(rec, "up1", "dn1", rng, c_sd)
    jz2 = _jz_block(rec, "up2", "dn2", rng, c_sd)
    contrast_f = rec.measurements["dn2"].contrast
    return jz1, jz2, contrast_f, rec


def run_mjz_calibration(setup: ExperimentSetup, trials: int = 2000) -> float:
    """DeltaJ_zm^2 from the (pi/2, measure, measure) calibration sequence."""
    seq = standard_sequences()["mjz_calibration"]

    def one(i):
        rng = trial_rng(setup.seed, DOMAIN_MJZ, 0, i)
        state = prepare_css(setup.n_eff, SOUTH, setup.contrast_i, rng)
        rec = run_sequence(seq, state, setup.noise, setup.chain, rng)
        if rec.flagged:
            return None
        return (
            rec.measurements["omega1"].splitting,
            rec.measurements["omega2"].splitting,
        )

    pairs = [p for p in _run_trials(one, trials, setup.workers) if p is not None]
    return analysis.calibrate_measurement_noise(pairs, setup.chain.g_eff)


def squeeze_pipeline(
    setup: ExperimentSetup,
    trials: int,
    calibration_trials: int = 2000,
    empirical_weight: bool = False,
) -> tuple[SqueezingReport, np.ndarray]:
    """Full conditional-squeezing pipeline: two QND J_z measurements per
    trial, Bayesian conditioning with the configured budget (or the
    empirical optimum weight), contrast and zeta metrics, plus the empirical
    measurement-noise calibration."""
    seq = standard_sequences()["squeeze"]

    def one(i):
        rng = trial_rng(setup.seed, DOMAIN_SQUEEZE, 0, i)
        jz1, jz2, c_f, rec = squeeze_trial(setup, seq, rng)
        return jz1, jz2, c_f, rec.flagged

    rows = _run_trials(one, trials, setup.workers)
    n_flagged = sum(1 for r in rows if r[3])
    kept = [r for r in rows if not r[3]]  # failed-fit shots are discarded
    jz = np.array([(r[0], r[1]) for r in kept])
    c_f = float(np.mean([r[2] for r in kept]))

    weight = analysis.empirical_optimal_weight(jz) if empirical_weight else None
    var_diff_db, var_cond_db, rd, rc = analysis.conditional_variance(
        jz, setup.budget, weight=weight
    )
    zeta_direct, zeta_inferred = analysis.squeezing_metrics(
        setup.contrast_i, c_f, rd, rc
    )
    mjz = run_mjz_calibration(setup, calibration_trials) if calibration_trials else float("nan")
    report = SqueezingReport(
        var_diff_db=var_diff_db,
        var_cond_db=var_cond_db,
        var_diff_ratio=rd,
        var_cond_ratio=rc,
        contrast_i=setup.contrast_i,
        contrast_f=c_f,
        zeta_direct_db=zeta_direct,
        zeta_inferred_db=zeta_inferred,
        n_trials=trials,
        readout_var_calibrated=mjz,
        n_flagged=n_flagged,
    )
    return report, jz


def backaction_reference(
    setup: ExperimentSetup, psi: float, q_total: float | None = None
) -> float:
    """Predicted Var(jz2 - cos(psi) w jz1)/P from the deterministic state
    bookkeeping (one noiseless half-sequence fixes the kicked azimuthal
    variance; quadrature mixing does the rest).  q_total=1 gives the
    minimum-uncertainty reference."""
    chain = setup.chain
    if q_total is not None:
        chain = replace(chain, q_total=q_total)
    half = PulseSequence("half_block", standard_sequences()["squeeze"].steps[:4])
    state0 = prepare_css(setup.n_eff, SOUTH, setup.contrast_i, rng=None)
    rec = run_sequence(half, state0, ZERO_NOISE, chain, None)
    # invariant fluctuation scales: Z = (nC/2) dtheta, Phi = (nC/2) dphi
    scale_sq = (rec.final_n_eff * rec.final_contrast / 2.0) ** 2
    v_phi = scale_sq * rec.final_var_phi
    p = setup.budget.projection_var
    m_frac = setup.budget.readout_var / p
    c_frac = setup.budget.classical_var / p
    w = setup.budget.bayes_weight
    # the block estimators see (L2 - L1)/2 of the first block's scan losses
    imp = chain.impact_for(setup.n_eff / 2.0)
    loss_var = imp.scattered * imp.raman_branch * (1.0 - imp.raman_branch) / 2.0
    a = (1.0 - w) ** 2 + w**2 * (m_frac + c_frac)
    b = v_phi / p
    const = (m_frac + c_frac) + loss_var / p
    return math.cos(psi) ** 2 * a + math.sin(psi) ** 2 * b + const


def run_backaction_scan(
    setup: ExperimentSetup, psi_values, trials: int
) -> list[dict]:
    """Variance of the conditioned difference versus the inserted rotation
    angle, with the predicted and minimum-uncertainty reference curves and
    the worst-case uncertainty-product ratio per point."""
    rows = []
    w = setup.budget.bayes_weight
    p = setup.budget.projection_var
    for point, psi in enumerate(psi_values):
        seq = backaction_sequence(psi)

        def one(i, seq=seq, point=point):
            rng = trial_rng(setup.seed, DOMAIN_BACKACTION, point, i)
            jz1, jz2, _cf, rec = squeeze_trial(setup, seq, rng)
            return jz1, jz2, rec.uncertainty_product_ratio(), rec.flagged

        res = [r for r in _run_trials(one, trials, setup.workers) if not r[3]]
        jz1 = np.array([r[0] for r in res])
        jz2 = np.array([r[1] for r in res])
        product_min = float(np.nanmin([r[2] for r in res]))
        var = float(np.var(jz2 - math.cos(psi) * w * jz1, ddof=1))
        rows.append(
            {
                "psi": float(psi),
                "variance_ratio": var / p,
                "variance_db": analysis.to_db(var / p),
                "reference_db": analysis.to_db(backaction_reference(setup, psi)),
                "min_uncertainty_db": analysis.to_db(
                    backaction_reference(setup, psi, q_total=1.0)
                ),
                "uncertainty_product_min": product_min,
            }
        )
    return rows


def run_projection_scan(
    setup: ExperimentSetup,
    n_values,
    trials: int,
    sequence_name: str = "table2_b",
    ideal_contrast: float = 1.0,
    sequence: PulseSequence | None = None,
) -> dict:
    """Var(J_z1) versus atom number plus the splitting-pair fluctuation.

    Runs the chosen projection-noise sequence at each N (ideal readout per
    the protocol), fits the quadratic polynomial, and returns the linear
    coefficient over N/4 together with per-point rows.  A custom two-label
    sequence (e.g. from the config's [sequence] section) may be passed
    directly."""
    seq = sequence if sequence is not None else standard_sequences()[sequence_name]
    labels = seq.labels()
    rows = []
    for point, n in enumerate(n_values):
        def one(i, n=n, point=point):
            rng = trial_rng(setup.seed, DOMAIN_PROJECTION, point, i)
            state = prepare_css(n, SOUTH, ideal_contrast, rng)
            rec = run_sequence(seq, state, setup.noise, setup.chain, rng)
            m1, m2 = rec.measurements[labels[0]], rec.measurements[labels[1]]
            return (m1.n_up_est - m2.n_up_est) / 2.0, m1.splitting - m2.splitting

        res = _run_trials(one, trials, setup.workers)
        jz1 = np.array([r[0] for r in res])
        dsplit = np.array([r[1] for r in res])
        rows.append(
            {
                "n_eff": float(n),
                "var_jz1": float(np.var(jz1, ddof=1)),
                "projection_var": n / 4.0,
                "splitting_diff_rms": float(np.sqrt(np.mean(dsplit**2))),
            }
        )
    ratio, coeffs = analysis.fit_projection_scan(
        [r["n_eff"] for r in rows], [r["var_jz1"] for r in rows]
    )
    return {"linear_ratio": ratio, "coefficients": coeffs, "rows": rows}


def measure_contrast(
    setup: ExperimentSetup,
    photons_per_jz: float,
    phases,
    trials_per_phase: int,
    point: int = 0,
) -> float:
    """Fringe-visibility contrast after one J_z measurement block of the
    given photon budget (0 photons: ideal readout, no decoherence)."""
    if photons_per_jz > 0:
        chain = replace(
            setup.chain,
            sweep=replace(setup.chain.sweep, photons=photons_per_jz / 2.0),
            ideal_readout=False,
        )
    else:
        chain = replace(setup.chain, ideal_readout=True)
    sub = replace(setup, chain=chain)

    xs, ys = [], []
    for k, phase in enumerate(phases):
        seq = fringe_sequence(phase)

        def one(i, seq=seq, k=k):
            rng = trial_rng(setup.seed, DOMAIN_CONTRAST, (point << 8) | k, i)
            state = prepare_css(sub.n_eff, SOUTH, sub.contrast_i, rng)
            rec = run_sequence(seq, state, sub.noise, sub.chain, rng)
            return None if rec.flagged else rec.measurements["up2"].n_up_est

        for v in _run_trials(one, trials_per_phase, setup.workers):
            if v is not None:
                xs.append(phase)
                ys.append(v)
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    design = np.column_stack([np.ones_like(xs), np.cos(xs), np.sin(xs)])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    offset, amp = coef[0], math.hypot(coef[1], coef[2])
    return float(amp / offset)


def run_contrast_scan(
    setup: ExperimentSetup,
    m_values,
    phases=None,
    trials_per_phase: int = 40,
) -> dict:
    """Contrast versus probe photon number, the quadratic fit, and the
    scattering-model cross-checks (M_sc/M and the predicted k1)."""
    if phases is None:
        phases = np.linspace(0.0, 2.0 * math.pi, 12, endpoint=False)
    rows = []
    for point, m in enumerate(m_values):
        c = measure_contrast(setup, m, phases, trials_per_phase, point=point)
        rows.append({"photons": float(m), "contrast": c})
    (c_i, k1, k2), sigmas = analysis.contrast_fit(
        [(r["photons"], r["contrast"]) for r in rows]
    )
    frac = scattered_fraction(
        setup.chain.sweep, setup.n_eff / 2.0, setup.chain.g_eff, setup.chain.cavity
    )
    return {
        "rows": rows,
        "fit": {"contrast_i": c_i, "k1": k1, "k2": k2},
        "fit_sigma": {"contrast_i": sigmas[0], "k1": sigmas[1], "k2": sigmas[2]},
        "scattered_fraction": frac,
        "predicted_k1": predict_k1(setup.n_eff, frac),
    }


def run_rotation_noise(
    setup: ExperimentSetup, trials: int = 10_000, n_ref: float = 7e5
) -> list[dict]:
    """Analytic vs Monte Carlo added rotation noise, per sequence and
    channel, plus the all-channels total per sequence."""
    catalog = standard_sequences()
    names = [
        "table1_row1",
        "table1_row2",
        "table1_row3",
        "table1_row4",
        "table2_a",
        "table2_b",
    ]
    rows = []
    for si, name in enumerate(names):
        seq = catalog[name]
        table = analytic_added_noise(seq, setup.noise, n_ref)
        for ci, channel in enumerate(CHANNELS + ("total",)):
            masked = setup.noise if channel == "total" else setup.noise.only(channel)
            point = (si << 8) | ci

            def stream(i, point=point):
                return trial_rng(setup.seed, DOMAIN_ROTNOISE, point, i)

            mc = mc_added_noise(seq, masked, trials, stream, setup.chain, n_ref)
            sql = 1.0 / math.sqrt(n_ref)
            rows.append(
                {
                    "sequence": name,
                    "channel": channel,
                    "analytic_rms": table[channel]["rms_rad"],
                    "mc_rms": mc,
                    "analytic_db": table[channel]["db_rel_projection"],
                    "mc_db": analysis.to_db(mc**2 / sql**2) if mc > 0 else -math.inf,
                }
            )
    return rows
