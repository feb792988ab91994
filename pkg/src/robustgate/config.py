"""Experiment configuration: YAML parsing, canonical serialization, builders.

Configs are plain YAML with nested sections.  Matrices are written as row
lists of "re+imj" strings (anything Python's ``complex()`` parses), or the
system can name a builder such as "heisenberg-chain-3".  Serialization is
canonical (sorted keys, full-precision floats) so serialize -> parse ->
serialize is the identity.  One master seed drives every random choice:
synthesis restart streams and, unless overridden, the Haar target.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .linalg import DegenerateStructureError, StructureError
from .synthesis import SynthesisConfig, build_case_study, haar_random_unitary
from .system import ControlSystem
from .uncertainty import CONTROL, DRIFT, StructureBasis, normalize_structure

__all__ = [
    "ConfigError",
    "SystemSpec",
    "TargetSpec",
    "AnalysisSpec",
    "ExperimentConfig",
    "default_config",
    "encode_matrix",
    "decode_matrix",
    "parse_config",
    "serialize_config",
    "load_config",
    "save_config",
    "build_system",
    "build_target",
]

BUILDERS = ("heisenberg-chain-3",)


class ConfigError(ValueError):
    """Unparseable or inconsistent experiment configuration."""


def encode_matrix(a: np.ndarray) -> list:
    """Complex matrix -> row lists of "re+imj" strings at full precision."""
    a = np.asarray(a, dtype=complex)
    return [
        [f"{z.real:.17g}{z.imag:+.17g}j" for z in row]
        for row in a
    ]


def decode_matrix(rows, what="matrix") -> np.ndarray:
    try:
        data = [[complex(str(entry).replace(" ", "")) for entry in row] for row in rows]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: cannot parse complex entry: {exc}") from exc
    a = np.array(data, dtype=complex)
    if a.ndim != 2:
        raise ConfigError(f"{what}: expected a list of equal-length rows")
    return a


@dataclass(frozen=True)
class SystemSpec:
    """Either a named builder or explicit drift/interaction matrices."""

    kappa: int = 32
    t_f: float = 15.0
    builder: str | None = "heisenberg-chain-3"
    dim: int | None = None
    drift: list | None = None
    interactions: list | None = None


@dataclass(frozen=True)
class TargetSpec:
    """Target gate: "haar" (seeded), "identity", or an explicit "matrix"."""

    kind: str = "haar"
    seed: int | None = None
    matrix: list | None = None


@dataclass(frozen=True)
class AnalysisSpec:
    epsilon: float = 0.01
    sweep_range: tuple = (-0.2, 0.2)
    sweep_points: int = 201
    alg1_step: float = 1e-4
    alg1_cap: int = 10 ** 6


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 12345
    output_dir: str = "out"
    system: SystemSpec = field(default_factory=SystemSpec)
    target: TargetSpec = field(default_factory=TargetSpec)
    synthesis: SynthesisConfig = field(default_factory=SynthesisConfig)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)


def default_config() -> ExperimentConfig:
    """Benchmark defaults: Heisenberg 3-chain, kappa=32, t_f=15, epsilon=0.01."""
    return ExperimentConfig()


def _require_keys(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def _config_to_dict(cfg: ExperimentConfig) -> dict:
    syn = cfg.synthesis
    return {
        "seed": int(cfg.seed),
        "output_dir": str(cfg.output_dir),
        "system": {
            "kappa": int(cfg.system.kappa),
            "t_f": float(cfg.system.t_f),
            "builder": cfg.system.builder,
            "dim": cfg.system.dim,
            "drift": cfg.system.drift,
            "interactions": cfg.system.interactions,
        },
        "target": {
            "kind": cfg.target.kind,
            "seed": cfg.target.seed,
            "matrix": cfg.target.matrix,
        },
        "synthesis": {
            "restarts": int(syn.restarts),
            "max_iterations": int(syn.max_iterations),
            "gradient_tolerance": float(syn.gradient_tolerance),
            "target_error": float(syn.target_error),
            "initial_amplitude": float(syn.initial_amplitude),
            "amplitude_bound": syn.amplitude_bound,
        },
        "analysis": {
            "epsilon": float(cfg.analysis.epsilon),
            "sweep_range": [float(x) for x in cfg.analysis.sweep_range],
            "sweep_points": int(cfg.analysis.sweep_points),
            "alg1_step": float(cfg.analysis.alg1_step),
            "alg1_cap": int(cfg.analysis.alg1_cap),
        },
    }


def _config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration root must be a mapping")
    _require_keys(data, {"seed", "output_dir", "system", "target", "synthesis",
                         "analysis"}, "config")
    base = ExperimentConfig()
    seed = int(data.get("seed", base.seed))
    output_dir = str(data.get("output_dir", base.output_dir))

    sys_d = dict(data.get("system") or {})
    _require_keys(sys_d, {"kappa", "t_f", "builder", "dim", "drift",
                          "interactions"}, "system")
    system = SystemSpec(
        kappa=int(sys_d.get("kappa", 32)),
        t_f=float(sys_d.get("t_f", 15.0)),
        builder=sys_d.get("builder", "heisenberg-chain-3" if "drift" not in sys_d else None),
        dim=sys_d.get("dim"),
        drift=sys_d.get("drift"),
        interactions=sys_d.get("interactions"),
    )
    if system.builder is not None and system.builder not in BUILDERS:
        raise ConfigError(
            f"unknown system builder {system.builder!r}; known: {list(BUILDERS)}"
        )
    if system.builder is None and system.drift is None:
        raise ConfigError("system needs either a builder or explicit drift/interactions")
    if system.builder is not None and system.drift is not None:
        raise ConfigError("system cannot have both a builder and explicit matrices")

    tgt_d = dict(data.get("target") or {})
    _require_keys(tgt_d, {"kind", "seed", "matrix"}, "target")
    target = TargetSpec(
        kind=str(tgt_d.get("kind", "haar")),
        seed=None if tgt_d.get("seed") is None else int(tgt_d["seed"]),
        matrix=tgt_d.get("matrix"),
    )
    if target.kind not in ("haar", "identity", "matrix"):
        raise ConfigError(f"unknown target kind {target.kind!r}")
    if target.kind == "matrix" and target.matrix is None:
        raise ConfigError('target kind "matrix" needs a matrix')

    syn_d = dict(data.get("synthesis") or {})
    _require_keys(syn_d, {"restarts", "max_iterations", "gradient_tolerance",
                          "target_error", "initial_amplitude",
                          "amplitude_bound"}, "synthesis")
    dflt = SynthesisConfig()
    try:
        synthesis = SynthesisConfig(
            restarts=int(syn_d.get("restarts", dflt.restarts)),
            max_iterations=int(syn_d.get("max_iterations", dflt.max_iterations)),
            gradient_tolerance=float(syn_d.get("gradient_tolerance",
                                               dflt.gradient_tolerance)),
            target_error=float(syn_d.get("target_error", dflt.target_error)),
            initial_amplitude=float(syn_d.get("initial_amplitude",
                                              dflt.initial_amplitude)),
            amplitude_bound=(None if syn_d.get("amplitude_bound") is None
                             else float(syn_d["amplitude_bound"])),
            rng_seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"synthesis: {exc}") from exc

    ana_d = dict(data.get("analysis") or {})
    _require_keys(ana_d, {"epsilon", "sweep_range", "sweep_points", "alg1_step",
                          "alg1_cap"}, "analysis")
    rng = ana_d.get("sweep_range", [-0.2, 0.2])
    if not (isinstance(rng, (list, tuple)) and len(rng) == 2):
        raise ConfigError("analysis.sweep_range must be a [low, high] pair")
    analysis = AnalysisSpec(
        epsilon=float(ana_d.get("epsilon", 0.01)),
        sweep_range=(float(rng[0]), float(rng[1])),
        sweep_points=int(ana_d.get("sweep_points", 201)),
        alg1_step=float(ana_d.get("alg1_step", 1e-4)),
        alg1_cap=int(ana_d.get("alg1_cap", 10 ** 6)),
    )
    if not 0.0 < analysis.epsilon <= 1.0:
        raise ConfigError(f"analysis.epsilon must lie in (0, 1], got {analysis.epsilon}")
    if not analysis.sweep_range[0] < analysis.sweep_range[1]:
        raise ConfigError("analysis.sweep_range must be increasing")

    return ExperimentConfig(seed=seed, output_dir=output_dir, system=system,
                            target=target, synthesis=synthesis, analysis=analysis)


def serialize_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(_config_to_dict(cfg), sort_keys=True,
                          default_flow_style=False)


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse a YAML config; errors carry the source name and line/column."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        loc = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError(f"{source}: {exc.problem} at {loc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    if data is None:
        data = {}
    try:
        return _config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def save_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_config(cfg))


def build_system(cfg: ExperimentConfig):
    """Instantiate (ControlSystem, StructureBasis) from the system section."""
    spec = cfg.system
    if spec.builder == "heisenberg-chain-3":
        return build_case_study(kappa=spec.kappa, t_f=spec.t_f)
    drift = decode_matrix(spec.drift, "system.drift")
    if spec.dim is not None and drift.shape[0] != int(spec.dim):
        raise ConfigError(
            f"system.dim = {spec.dim} does not match drift shape {drift.shape}"
        )
    interactions = [
        decode_matrix(rows, f"system.interactions[{m}]")
        for m, rows in enumerate(spec.interactions or [])
    ]
    try:
        system = ControlSystem(h0=drift, interactions=tuple(interactions),
                               kappa=spec.kappa, delta=spec.t_f / spec.kappa)
        elements = [normalize_structure(drift, DRIFT, label="H0")]
        for m, hm in enumerate(interactions, start=1):
            elements.append(
                normalize_structure(hm, CONTROL, control_index=m, label=f"H{m}")
            )
        basis = StructureBasis(elements=tuple(elements))
    except (StructureError, DegenerateStructureError, ValueError) as exc:
        raise ConfigError(f"system: {exc}") from exc
    return system, basis


def build_target(cfg: ExperimentConfig, dim: int) -> np.ndarray:
    """Instantiate the target gate; Haar targets default to the master seed."""
    spec = cfg.target
    if spec.kind == "identity":
        return np.eye(dim, dtype=complex)
    if spec.kind == "matrix":
        m = decode_matrix(spec.matrix, "target.matrix")
        if m.shape != (dim, dim):
            raise ConfigError(f"target.matrix has shape {m.shape}, expected ({dim}, {dim})")
        return m
    seed = cfg.seed if spec.seed is None else spec.seed
    return haar_random_unitary(dim, seed)
