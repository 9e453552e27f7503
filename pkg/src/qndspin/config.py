"""Run configuration: INI parsing, defaults, overrides, and manifests.

The shipped default_config.ini carries the provenance of every physical
default.  A user config file only needs the keys it overrides; `--set
section.key=value` overrides take final precedence.  The resolved
configuration hashes into the run manifest, from which a run can be
reproduced exactly.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from importlib import resources

from .analysis import NoiseBudget
from .errors import ConfigError, InvalidParameterError
from .geometry import AtomCloud, CavityConfig, geometry_from_mode_spacings
from .sequences import MeasurementChain, RotationNoiseModel
from .spectroscopy import SweepConfig


def _default_parser() -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with resources.files("qndspin.data").joinpath("default_config.ini").open() as fh:
        parser.read_file(fh)
    return parser


def load_config(path: str | None = None, overrides: list[str] | None = None):
    """Parse defaults, then the user file, then --set overrides."""
    parser = _default_parser()
    if path is not None:
        try:
            with open(path) as fh:
                parser.read_file(fh, source=path)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}")
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(str(exc), line=line)
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        key, value = item.split("=", 1)
        section, option = key.split(".", 1)
        if not parser.has_section(section.strip()):
            raise ConfigError(f"unknown config section {section.strip()!r}")
        parser.set(section.strip(), option.strip(), value.strip())
    return RunConfig.from_parser(parser)


@dataclass(frozen=True)
class RunConfig:
    seed: int
    trials: int
    workers: int
    cavity: CavityConfig
    cloud: AtomCloud
    n_eff: float
    n_eff_fraction: float
    g_eff: float
    contrast_i: float
    sweep: SweepConfig
    k1: float
    k2: float
    raman_branch: float
    scatter_fraction: float | None
    q_total: float
    backaction_technical_var: float
    m_frac: float
    c_frac: float
    rotation_noise_enabled: bool
    noise: RotationNoiseModel
    photons_per_jz: float
    spacing01: float
    spacing02: float
    resolved: dict[str, dict[str, str]]

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "RunConfig":
        def get(section, key, conv=float):
            try:
                raw = parser.get(section, key)
                return conv(raw)
            except (configparser.Error, ValueError) as exc:
                raise ConfigError(f"bad value for {section}.{key}: {exc}")

        fsr = get("cavity", "fsr_hz")
        lam_probe = get("cavity", "lambda_probe_m")
        spacing01 = get("cavity", "spacing01_hz")
        spacing02 = get("cavity", "spacing02_hz")
        z_r, w0, _ = geometry_from_mode_spacings(fsr, spacing01, lam_probe)
        cavity = CavityConfig(
            fsr=fsr,
            finesse=get("cavity", "finesse"),
            lambda_probe=lam_probe,
            lambda_lattice=get("cavity", "lambda_lattice_m"),
            g0_peak=get("cavity", "g0_peak_hz"),
            w0=w0,
            z_r=z_r,
            gamma_atom=get("cavity", "gamma_atom_hz"),
            input_coupling=get("cavity", "input_coupling"),
        )
        cloud = AtomCloud(
            sigma_z=get("cloud", "sigma_z_m"),
            x_rms=get("cloud", "x_rms_m"),
            z_site_rms=get("cloud", "z_site_rms_m"),
            temp_radial=get("cloud", "temp_radial_k"),
            trap_depth=get("cloud", "trap_depth_hz"),
        )
        photons_per_jz = get("sweep", "photons_per_jz")
        sweep = SweepConfig(
            span=get("sweep", "span_hz"),
            photons=photons_per_jz / 2.0,
            detection_efficiency=get("sweep", "detection_efficiency"),
            points=get("sweep", "points", int),
            duration=get("sweep", "duration_s"),
            detuning_ac=get("sweep", "detuning_ac_hz"),
        )
        raw_frac = parser.get("impact", "scatter_fraction").strip().lower()
        scatter_fraction = None if raw_frac == "auto" else float(raw_frac)
        offsets = tuple(
            float(x) for x in parser.get("rotation_noise", "phase_offsets").split(",")
        )
        noise = RotationNoiseModel(
            eps_common_rms=get("rotation_noise", "eps_common_rms"),
            eps_diff_rms=get("rotation_noise", "eps_diff_rms"),
            phase_jitter_rms=get("rotation_noise", "phase_jitter_rms"),
            detuning_slow_rms=get("rotation_noise", "detuning_slow_hz"),
            detuning_fast_rms=get("rotation_noise", "detuning_fast_hz"),
            phase_offsets=offsets,
            rabi_freq=get("rotation_noise", "rabi_freq_hz"),
        )
        try:
            cavity.validate()
            cloud.validate()
            noise.validate()
        except InvalidParameterError as exc:
            raise ConfigError(str(exc))
        resolved = {s: dict(parser.items(s)) for s in parser.sections()}
        return cls(
            seed=get("run", "seed", int),
            trials=get("run", "trials", int),
            workers=get("run", "workers", int),
            cavity=cavity,
            cloud=cloud,
            n_eff=get("ensemble", "n_eff"),
            n_eff_fraction=get("ensemble", "n_eff_fraction"),
            g_eff=get("ensemble", "two_g_eff_hz") / 2.0,
            contrast_i=get("ensemble", "contrast_i"),
            sweep=sweep,
            k1=get("impact", "k1_per_photon"),
            k2=get("impact", "k2_per_photon2"),
            raman_branch=get("impact", "raman_branch"),
            scatter_fraction=scatter_fraction,
            q_total=get("backaction", "q_total"),
            backaction_technical_var=get("backaction", "technical_var_added"),
            m_frac=get("budget", "m_frac"),
            c_frac=get("budget", "c_frac"),
            rotation_noise_enabled=parser.getboolean("rotation_noise", "enabled"),
            noise=noise,
            photons_per_jz=photons_per_jz,
            spacing01=spacing01,
            spacing02=spacing02,
            resolved=resolved,
        )

    def chain(self, ideal_readout: bool = False) -> MeasurementChain:
        return MeasurementChain(
            cavity=self.cavity,
            g_eff=self.g_eff,
            sweep=self.sweep,
            k1=self.k1,
            k2=self.k2,
            raman_branch=self.raman_branch,
            q_total=self.q_total,
            scatter_fraction=self.scatter_fraction,
            backaction_technical_var=self.backaction_technical_var,
            ideal_readout=ideal_readout,
        )

    def budget(self) -> NoiseBudget:
        return NoiseBudget.from_fractions(self.n_eff, self.m_frac, self.c_frac)

    def dump(self) -> str:
        lines = []
        for section, items in sorted(self.resolved.items()):
            lines.append(f"[{section}]")
            for key, value in sorted(items.items()):
                lines.append(f"{key} = {value}")
            lines.append("")
        return "\n".join(lines)

    def sha256(self) -> str:
        return hashlib.sha256(self.dump().encode()).hexdigest()
