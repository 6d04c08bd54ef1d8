"""File-backed run configuration: parsing, validation, and provider setup.

A run config is one JSON document describing a complete optimization run.
Parsing resolves every default, so parse -> serialize -> parse is a fixed
point. Validation errors carry the offending field name.

The guidance endpoint of a remote provider can be overridden with the
``PHASESKETCH_ENDPOINT`` environment variable.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path

from .geometry import PhasePlan
from .guidance import RemoteProvider, TargetMatchProvider
from .losses import OverlayConfig
from .optimize import OptimizeConfig
from .raster import RenderConfig
from .targets import build_target

ENDPOINT_ENV_VAR = "PHASESKETCH_ENDPOINT"


class ConfigError(ValueError):
    """Invalid run configuration; the message names the field."""


@dataclass(frozen=True)
class ProviderSpec:
    type: str  # "local-target" | "remote"
    targets: tuple[dict, ...] = ()
    endpoint: str = ""


@dataclass(frozen=True)
class RunConfig:
    prompts: tuple[str, ...]
    stroke_count: int
    boundaries: tuple[int, ...]
    provider: ProviderSpec
    output_dir: str
    optimize: OptimizeConfig

    def plan(self) -> PhasePlan:
        return PhasePlan(self.boundaries, self.prompts)

    def providers(self) -> dict:
        """Instantiate one guidance provider per prompt id."""
        if self.provider.type == "local-target":
            res = self.optimize.render.resolution
            return {
                prompt: TargetMatchProvider(build_target(desc, res))
                for prompt, desc in zip(self.prompts, self.provider.targets)
            }
        endpoint = os.environ.get(ENDPOINT_ENV_VAR, self.provider.endpoint)
        remote = RemoteProvider(endpoint)
        return {prompt: remote for prompt in self.prompts}

    def to_dict(self) -> dict:
        opt = asdict(self.optimize)
        render = opt.pop("render")
        overlay = opt.pop("overlay")
        provider: dict = {"type": self.provider.type}
        if self.provider.type == "local-target":
            provider["targets"] = [dict(t) for t in self.provider.targets]
        else:
            provider["endpoint"] = self.provider.endpoint
        opt["init_offset"] = list(opt["init_offset"])
        lam = overlay["lambda_overlay"]
        if isinstance(lam, tuple):
            overlay["lambda_overlay"] = list(lam)
        return {
            "prompts": list(self.prompts),
            "stroke_count": self.stroke_count,
            "boundaries": list(self.boundaries),
            "provider": provider,
            "output_dir": self.output_dir,
            "optimize": opt,
            "render": render,
            "overlay": overlay,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"


def _require(data: dict, key: str, kind, where: str):
    if key not in data:
        raise ConfigError(f"{where}{key}: missing required field")
    val = data[key]
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind):
        raise ConfigError(
            f"{where}{key}: expected {getattr(kind, '__name__', kind)}, "
            f"got {type(val).__name__}"
        )
    return val


def _sub_config(cls, data: dict, where: str, **overrides):
    try:
        return cls(**{**data, **overrides})
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def run_config_from_dict(data: dict) -> RunConfig:
    prompts = _require(data, "prompts", list, "")
    if not prompts or not all(isinstance(p, str) for p in prompts):
        raise ConfigError("prompts: expected a non-empty list of strings")
    if len(set(prompts)) != len(prompts):
        raise ConfigError("prompts: prompt ids must be unique")
    stroke_count = _require(data, "stroke_count", int, "")
    boundaries = _require(data, "boundaries", list, "")
    if any(not isinstance(b, int) for b in boundaries):
        raise ConfigError("boundaries: expected a list of integers")
    if sorted(boundaries) != boundaries or len(set(boundaries)) != len(boundaries):
        raise ConfigError("boundaries: must be strictly increasing")
    if len(boundaries) != len(prompts):
        raise ConfigError(
            f"boundaries: {len(boundaries)} boundaries for {len(prompts)} prompts"
        )
    if boundaries and boundaries[-1] != stroke_count:
        raise ConfigError(
            f"boundaries: last boundary ({boundaries[-1]}) must equal "
            f"stroke_count ({stroke_count})"
        )

    prov_data = _require(data, "provider", dict, "")
    ptype = _require(prov_data, "type", str, "provider.")
    if ptype == "local-target":
        targets = _require(prov_data, "targets", list, "provider.")
        if len(targets) != len(prompts):
            raise ConfigError(
                f"provider.targets: {len(targets)} targets for "
                f"{len(prompts)} prompts"
            )
        spec = ProviderSpec(type=ptype, targets=tuple(targets))
    elif ptype == "remote":
        endpoint = _require(prov_data, "endpoint", str, "provider.")
        spec = ProviderSpec(type=ptype, endpoint=endpoint)
    else:
        raise ConfigError(
            f"provider.type: expected 'local-target' or 'remote', got {ptype!r}"
        )

    output_dir = _require(data, "output_dir", str, "")

    render = _sub_config(RenderConfig, data.get("render", {}), "render")
    overlay_data = dict(data.get("overlay", {}))
    if isinstance(overlay_data.get("lambda_overlay"), list):
        overlay_data["lambda_overlay"] = tuple(overlay_data["lambda_overlay"])
    overlay = _sub_config(OverlayConfig, overlay_data, "overlay")
    opt_data = dict(data.get("optimize", {}))
    if isinstance(opt_data.get("init_offset"), list):
        opt_data["init_offset"] = tuple(opt_data["init_offset"])
    optimize = _sub_config(
        OptimizeConfig, opt_data, "optimize", render=render, overlay=overlay
    )

    cfg = RunConfig(
        prompts=tuple(prompts),
        stroke_count=stroke_count,
        boundaries=tuple(boundaries),
        provider=spec,
        output_dir=output_dir,
        optimize=optimize,
    )
    try:
        cfg.plan()  # surfaces boundary/prompt inconsistencies early
    except ValueError as exc:
        raise ConfigError(f"boundaries: {exc}") from exc
    if ptype == "local-target":
        for i, desc in enumerate(spec.targets):
            if not isinstance(desc, dict) or "kind" not in desc:
                raise ConfigError(
                    f"provider.targets[{i}]: expected a shape descriptor dict"
                )
    return cfg


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return run_config_from_dict(data)
