"""Structured configuration for the pipeline and the synthetic generator.

Defaults live in the dataclasses below; a YAML file and `key=value`
overrides are merged on top with OmegaConf, which type-checks every key.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional

from omegaconf import OmegaConf
from omegaconf.errors import OmegaConfBaseException

from nestedshape.errors import ConfigError

logger = logging.getLogger(__name__)

STAGES = ("thin", "distances", "gpa", "pca", "pnss", "cluster", "refit", "arcs", "transitions", "temporal")


@dataclass
class GPAConfig:
    tol: float = 1e-10
    max_iter: int = 200


@dataclass
class PNSSConfig:
    p: Optional[int] = None  # None picks the smallest p reaching variance_threshold
    variance_threshold: float = 0.9
    exact_check: bool = False  # cross-check with exact PNSS when k <= 8


@dataclass
class ClusterConfig:
    k_states: int = 4
    linkage: str = "ward.D"
    pc_components: int = 3
    min_refit_size: int = 0  # 0 means p + 2


@dataclass
class MarkovConfig:
    k_tc: int = 4
    mode: str = "pooled"


@dataclass
class ArcConfig:
    c: float = 1.0
    samples: int = 11
    components: int = 3


@dataclass
class PipelineConfig:
    thin_count: Optional[int] = None  # None keeps every frame
    seed: int = 0
    threads: int = 1
    output_dir: str = "./results"
    stop_after: Optional[str] = None
    distance_times: int = 2
    gpa: GPAConfig = field(default_factory=GPAConfig)
    pnss: PNSSConfig = field(default_factory=PNSSConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    markov: MarkovConfig = field(default_factory=MarkovConfig)
    arcs: ArcConfig = field(default_factory=ArcConfig)


@dataclass
class SyntheticSpec:
    k: int = 8
    m: int = 3
    runs: int = 20
    frames: int = 200
    states: int = 4
    stay_probability: float = 0.9
    transition_matrix: Optional[List[List[float]]] = None  # overrides stay_probability
    template_spread: float = 0.6  # joint-angle spread between templates (radians)
    noise: float = 0.01
    seed: int = 0


def load_config(path=None, overrides=(), schema=PipelineConfig):
    """Merge `schema` defaults, the YAML file at `path` and dotlist overrides."""
    try:
        cfg = OmegaConf.structured(schema)
        if path:
            cfg = OmegaConf.merge(cfg, OmegaConf.load(path))
        if overrides:
            cfg = OmegaConf.merge(cfg, OmegaConf.from_dotlist(list(overrides)))
        config = OmegaConf.to_object(cfg)
    except (OmegaConfBaseException, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    validate(config)
    logger.debug("configuration from %s with %d override(s)", path or "defaults", len(overrides))
    return config


def _require(condition, message):
    if not condition:
        raise ConfigError(message)


def validate(config):
    if isinstance(config, SyntheticSpec):
        return validate_synthetic(config)
    _require(config.thin_count is None or config.thin_count >= 2, "thin_count must be >= 2")
    _require(config.threads >= 1, "threads must be positive")
    _require(config.seed >= 0, "seed must be non-negative")
    _require(config.stop_after is None or config.stop_after in STAGES, f"stop_after must be one of {STAGES}")
    _require(config.distance_times >= 1, "distance_times must be positive")
    _require(config.gpa.tol > 0 and config.gpa.max_iter > 0, "gpa tolerances must be positive")
    _require(config.pnss.p is None or config.pnss.p >= 2, "pnss.p must be >= 2")
    _require(0 < config.pnss.variance_threshold <= 1, "pnss.variance_threshold must lie in (0, 1]")
    _require(config.cluster.k_states >= 1, "cluster.k_states must be positive")
    _require(config.cluster.linkage in ("ward.D", "ward.D2"), "cluster.linkage must be ward.D or ward.D2")
    _require(config.cluster.pc_components >= 1, "cluster.pc_components must be positive")
    _require(config.cluster.min_refit_size >= 0, "cluster.min_refit_size must be non-negative")
    _require(config.markov.k_tc >= 1, "markov.k_tc must be positive")
    _require(config.markov.mode in ("pooled", "averaged"), "markov.mode must be pooled or averaged")
    _require(config.arcs.samples >= 3 and config.arcs.samples % 2 == 1, "arcs.samples must be odd and >= 3")
    _require(config.arcs.components >= 1, "arcs.components must be positive")
    return config


def validate_synthetic(spec):
    _require(spec.m >= 2 and spec.k > spec.m, "synthetic spec needs k > m >= 2")
    _require(spec.runs >= 1 and spec.frames >= 2 and spec.states >= 1, "runs, frames and states must be positive")
    _require(0 <= spec.stay_probability <= 1, "stay_probability must lie in [0, 1]")
    _require(spec.noise >= 0 and spec.template_spread >= 0, "noise and template_spread must be non-negative")
    _require(spec.seed >= 0, "seed must be non-negative")
    if spec.transition_matrix is not None:
        rows = spec.transition_matrix
        _require(len(rows) == spec.states and all(len(r) == spec.states for r in rows),
                 "transition_matrix must be states x states")
        _require(all(x >= 0 for r in rows for x in r), "transition probabilities must be non-negative")
        _require(all(abs(sum(r) - 1.0) < 1e-9 for r in rows), "transition_matrix rows must sum to 1")
    return spec


def to_yaml(config):
    return OmegaConf.to_yaml(OmegaConf.structured(config))
