"""Scenario files: parsing, validation and problem assembly.

A scenario is a YAML (or JSON) mapping with the blocks ``domain``,
``kernel``, ``system``, ``objective``, ``solver`` and ``output`` plus a
top-level ``seed``.  Every error names the offending key.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .domain import (DomainSampleSet, GaussianMixture2D, importance_filter, load_mesh,
                     normal_alignment_scores, offset_along_normals, poses_from_normals,
                     read_samples_csv, sample_density_2d, sample_surface_uniform)
from .kernels import RBF, SE3, KernelSpec, bandwidth_median_heuristic
from .metric import Identity, SelectCoordinates, SE3ExpChart, SerialChainFK
from .optimizer import ProblemSpec, SolverOptions
from .systems import DynamicsModel, RunningCost, SerialChain, standard_constraints, synthetic_arm

SEED_ENV = "ERGMMD_SEED"
DOMAIN_SOURCES = ("mixture", "mesh", "csv")
BLOCKS = ("seed", "domain", "kernel", "system", "objective", "solver", "output")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _require(block: dict, key: str, prefix: str):
    if key not in block:
        raise ConfigError(f"{prefix}.{key}", "missing required key")
    return block[key]


def _block(cfg: dict, name: str) -> dict:
    b = cfg.get(name) or {}
    if not isinstance(b, dict):
        raise ConfigError(name, "must be a mapping")
    return b


def load_config(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"cannot parse {path}: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a mapping")
    unknown = sorted(set(cfg) - set(BLOCKS))
    if unknown:
        raise ConfigError(unknown[0], "unknown top-level key")
    return normalize(cfg, path.parent)


def normalize(cfg: dict, base_dir) -> dict:
    """Resolve relative file paths against ``base_dir`` and check the domain source."""
    cfg = copy.deepcopy(cfg)
    dom = _block(cfg, "domain")
    present = [k for k in DOMAIN_SOURCES if k in dom]
    if len(present) != 1:
        raise ConfigError("domain", f"exactly one of {', '.join(DOMAIN_SOURCES)} is required")
    for key in ("mesh", "csv"):
        if key in dom:
            p = Path(dom[key])
            if not p.is_absolute():
                p = Path(base_dir) / p
            p = p.resolve()
            if not p.exists():
                raise ConfigError(f"domain.{key}", f"file not found: {p}")
            dom[key] = str(p)
    cfg["domain"] = dom
    return cfg


def effective_seed(cfg: dict, override: int | None = None) -> int:
    if override is not None:
        return int(override)
    env = os.environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise ConfigError(SEED_ENV, f"not an integer: {env!r}") from None
    return int(cfg.get("seed", 0))


def build_samples(cfg: dict, seed: int) -> DomainSampleSet:
    """The Euclidean sample set (with normals when available) after importance and offset."""
    dom = _block(cfg, "domain")
    M = int(dom.get("samples", 500))
    if M < 1:
        raise ConfigError("domain.samples", "must be >= 1")
    if "mixture" in dom:
        mix = dom["mixture"] or {}
        try:
            density = GaussianMixture2D(mix.get("weights", []), mix.get("means", []),
                                        mix.get("covariances", []))
        except ValueError as exc:
            raise ConfigError("domain.mixture", str(exc)) from None
        bounds = _require(mix, "bounds", "domain.mixture")
        try:
            samples = sample_density_2d(density, bounds, M, seed)
        except ValueError as exc:
            raise ConfigError("domain.mixture.bounds", str(exc)) from None
    elif "mesh" in dom:
        samples = sample_surface_uniform(load_mesh(dom["mesh"]), M, seed)
    else:
        try:
            samples = read_samples_csv(dom["csv"])
        except ValueError as exc:
            raise ConfigError("domain.csv", str(exc)) from None
    imp = dom.get("importance")
    if imp:
        M_out = int(imp.get("samples", M))
        if "directions" in imp:
            if samples.normals is None:
                raise ConfigError("domain.importance.directions", "sample set has no normals")
            scores = normal_alignment_scores(samples.normals, imp["directions"])
        elif "scores" in imp:
            scores = np.asarray(imp["scores"], dtype=float)
            if len(scores) != len(samples):
                raise ConfigError("domain.importance.scores", f"need {len(samples)} scores")
        else:
            raise ConfigError("domain.importance", "give 'directions' or 'scores'")
        try:
            samples = importance_filter(samples, scores, M_out, seed + 1)
        except ValueError as exc:
            raise ConfigError("domain.importance", str(exc)) from None
    elif samples.weights is not None:
        samples = importance_filter(samples, samples.weights, len(samples), seed + 1)
    buffer = float(dom.get("buffer", 0.0))
    if buffer:
        if samples.normals is None:
            raise ConfigError("domain.buffer", "sample set has no normals")
        samples = offset_along_normals(samples, buffer)
    return samples


def _chain(system: dict) -> SerialChain | None:
    spec = system.get("chain")
    if spec is None:
        return None
    if spec == "synthetic7":
        return synthetic_arm()
    try:
        return SerialChain.from_dict(spec)
    except (KeyError, ValueError) as exc:
        raise ConfigError("system.chain", str(exc)) from None


def _bounds(value, key):
    if value is None:
        return None
    try:
        lo, hi = value
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(key, "expected [lo, hi]") from None
    if np.any(lo >= hi):
        raise ConfigError(key, "need lo < hi")
    return lo, hi


@dataclass
class Scenario:
    config: dict
    seed: int
    problem: ProblemSpec
    samples: DomainSampleSet
    solver: SolverOptions
    init_strategy: str
    coverage_radius: float
    output_dir: Path
    plot: bool


def build_scenario(cfg: dict, seed: int) -> Scenario:
    system = _block(cfg, "system")
    kernel_cfg = _block(cfg, "kernel")
    objective = _block(cfg, "objective")
    solver_cfg = dict(_block(cfg, "solver"))
    output = _block(cfg, "output")

    samples = build_samples(cfg, seed)
    family = kernel_cfg.get("family", RBF)
    if family not in (RBF, SE3):
        raise ConfigError("kernel.family", f"unknown family {family!r}")
    bw = kernel_cfg.get("bandwidth", "auto-median")
    if bw == "auto-median":
        bw = bandwidth_median_heuristic(samples, seed=seed)
    try:
        kernel = KernelSpec(family, float(bw), kernel_cfg.get("tangent_weight", np.ones(6)))
    except (TypeError, ValueError) as exc:
        raise ConfigError("kernel", str(exc)) from None

    chain = _chain(system)
    kind = system.get("dynamics", "single_integrator")
    dim = int(system.get("dim", chain.dof if chain is not None else 2))
    try:
        dyn = DynamicsModel.create(kind, dim, float(system.get("dt", 0.1)))
    except ValueError as exc:
        raise ConfigError("system.dynamics", str(exc)) from None
    horizon = int(system.get("horizon", solver_cfg.pop("horizon", 0)) or 0)
    if horizon < 1:
        raise ConfigError("system.horizon", "must be >= 1")
    solver_cfg.pop("horizon", None)
    x0 = np.asarray(_require(system, "x0", "system"), dtype=float)
    if x0.shape != (dyn.state_dim,):
        raise ConfigError("system.x0", f"expected {dyn.state_dim} entries")

    proj = system.get("projection", {"kind": "identity"})
    if isinstance(proj, str):
        proj = {"kind": proj}
    pk = proj.get("kind", "identity")
    if pk == "identity":
        g = Identity()
    elif pk == "select_coordinates":
        g = SelectCoordinates(_require(proj, "indices", "system.projection"))
    elif pk == "serial_chain_fk":
        if chain is None:
            raise ConfigError("system.chain", "serial_chain_fk projection needs a chain")
        g = SerialChainFK(chain, proj.get("output", "position"))
    elif pk == "se3_exp_chart":
        g = SE3ExpChart(proj.get("base"))
    else:
        raise ConfigError("system.projection.kind", f"unknown projection {pk!r}")

    if kernel.family == SE3:
        if samples.normals is None:
            raise ConfigError("kernel.family", "SE(3) kernel needs samples with normals")
        metric_samples = poses_from_normals(samples)
    else:
        metric_samples = samples.points

    control_bounds = _bounds(system.get("control_limits"), "system.control_limits")
    state_bounds = _bounds(system.get("state_limits"), "system.state_limits")
    if chain is not None:
        if control_bounds is None and chain.velocity_limits is not None:
            control_bounds = (-chain.velocity_limits, chain.velocity_limits)
        if state_bounds is None and chain.joint_limits is not None:
            state_bounds = (chain.joint_limits[:, 0], chain.joint_limits[:, 1])
    final = system.get("final_state")
    cs = standard_constraints(dyn, x0=x0, control_bounds=control_bounds, state_bounds=state_bounds,
                              final_state=final, margin=float(system.get("limit_margin", 0.0)))
    cost = RunningCost(float(objective.get("control_weight", 0.0)),
                       float(objective.get("smoothness_weight", 0.0)))
    try:
        problem = ProblemSpec(dyn, x0, horizon, metric_samples, kernel, g, cs, cost)
    except ValueError as exc:
        raise ConfigError("system.projection", str(exc)) from None

    init = solver_cfg.pop("init", "perturbed")
    unknown = sorted(set(solver_cfg) - set(SolverOptions.__dataclass_fields__))
    if unknown:
        raise ConfigError(f"solver.{unknown[0]}", "unknown solver option")
    solver_cfg["seed"] = seed
    try:
        opts = SolverOptions.from_dict(solver_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError("solver", str(exc)) from None

    radius = output.get("coverage_radius", "auto")
    radius = 2.0 * kernel.bandwidth if radius == "auto" else float(radius)
    return Scenario(cfg, seed, problem, samples, opts, init, radius,
                    Path(output.get("directory", "out")), bool(output.get("plot", True)))
