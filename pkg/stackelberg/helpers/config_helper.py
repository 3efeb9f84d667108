"""
YAML configuration files for the experiment commands.

A file has two optional sections whose keys are the model field names:

    scenario:
      num_modules: 6
      solver:
        penalty: 1.0
    sweep:
      name: p_max_dbm
      values: [-5, -2.5, 0, 2.5, 5]
      trials: 200
      schemes: [stackelberg, random-pricing, direct-link]
      seed: 2020

Command-line flags are applied on top of the file.
"""

from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from ..exceptions import ConfigError
from ..services.scenario import ScenarioConfig
from ..services.sweep import SweepSpec

SECTIONS = ("scenario", "sweep")


def load_config_file(path: Optional[Union[str, Path]]) -> Dict[str, Any]:
    """Parsed YAML document, or an empty one when no path is given."""
    if not path:
        return {}
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = yaml.safe_load(f) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}: {e}")

    if not isinstance(document, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(document) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    return document


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_scenario(document: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> ScenarioConfig:
    data = _deep_merge(document.get("scenario") or {}, overrides or {})
    return ScenarioConfig.model_validate(data)


def build_sweep_spec(document: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None,
                     scenario_overrides: Optional[Dict[str, Any]] = None) -> SweepSpec:
    """SweepSpec from a config document; None-valued overrides are ignored."""
    scenario = build_scenario(document, scenario_overrides)
    sweep = dict(document.get("sweep") or {})
    sweep.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return SweepSpec.model_validate({**sweep, "scenario": scenario})


def config_document(spec: SweepSpec) -> Dict[str, Any]:
    """The YAML-ready view of a spec (used by print_config)."""
    sweep = spec.model_dump(mode="json", exclude={"scenario"})
    scenario = spec.scenario.model_dump(mode="json")
    return {"scenario": scenario, "sweep": sweep}


def dump_yaml(document: Dict[str, Any]) -> str:
    return yaml.safe_dump(document, sort_keys=False, default_flow_style=None)
