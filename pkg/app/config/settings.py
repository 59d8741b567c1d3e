"""Scenario settings: JSON loading, default merging and validation."""

from __future__ import annotations

import copy
import json
import logging
from pathlib import Path
from typing import Any

from pydantic import ValidationError

from app.config.schema import ScenarioSchema
from app.core.errors import ConfigError

logger = logging.getLogger(__name__)

BUNDLED_DIR = Path(__file__).resolve().parent.parent / "data"


class ScenarioSettings:
    """A validated scenario configuration loaded from a JSON file."""

    DEFAULT_SCENARIO: dict[str, Any] = ScenarioSchema().model_dump()

    def __init__(
        self,
        config_path: str | Path | None = None,
        data: dict[str, Any] | None = None,
    ) -> None:
        self.config_path = Path(config_path) if config_path is not None else None
        self.base_dir = self.config_path.parent if self.config_path else Path.cwd()
        if data is not None:
            self._schema = self._validate(data)
        elif self.config_path is not None:
            self._schema = self._validate(self._read(self.config_path))
        else:
            self._schema = ScenarioSchema()

    @classmethod
    def bundled(cls, name: str) -> ScenarioSettings:
        """Load one of the scenarios shipped in ``app/data``."""
        path = BUNDLED_DIR / (name if name.endswith(".json") else f"{name}.json")
        if not path.exists():
            raise ConfigError(
                f"Unknown bundled scenario {name!r}. Available: {', '.join(cls.available())}"
            )
        return cls(path)

    @staticmethod
    def available() -> list[str]:
        return sorted(p.stem for p in BUNDLED_DIR.glob("*.json"))

    @staticmethod
    def _read(path: Path) -> dict[str, Any]:
        try:
            with open(path, encoding="utf-8") as f:
                loaded = json.load(f)
        except FileNotFoundError as e:
            raise ConfigError("config file not found", path) from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON at line {e.lineno}: {e.msg}", path) from e
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}", path) from e
        if not isinstance(loaded, dict):
            raise ConfigError("top-level JSON value must be an object", path)
        return loaded

    def _validate(self, loaded: dict[str, Any]) -> ScenarioSchema:
        merged = self._deep_merge(copy.deepcopy(self.DEFAULT_SCENARIO), loaded)
        try:
            return ScenarioSchema.model_validate(merged)
        except ValidationError as e:
            raise ConfigError(self._format_errors(e), self.config_path) from e

    @staticmethod
    def _format_errors(error: ValidationError) -> str:
        parts: list[str] = []
        for item in error.errors():
            msg = str(item.get("msg", ""))
            # Pydantic prepends "Value error, "
            if msg.startswith("Value error, "):
                msg = msg[len("Value error, ") :]
            loc = ".".join(str(p) for p in item.get("loc", ()))
            parts.append(f"{loc}: {msg}" if loc else msg)
        return "; ".join(parts)

    def _deep_merge(self, base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
        result = base.copy()
        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = value
        return result

    @property
    def schema(self) -> ScenarioSchema:
        return self._schema

    def resolve_path(self, relative: str) -> Path:
        path = Path(relative)
        return path if path.is_absolute() else self.base_dir / path

    def override(self, changes: dict[str, Any]) -> ScenarioSettings:
        """Return a re-validated copy with ``changes`` deep-merged on top."""
        clone = copy.copy(self)
        clone._schema = self._validate(self._deep_merge(self.to_dict(), changes))
        return clone

    def without_battery(self) -> ScenarioSettings:
        """Same scenario with the battery pinned (capacity = floor = initial)."""
        initial = self._schema.controller.battery_initial_puh
        return self.override(
            {
                "controller": {
                    "battery_floor_puh": initial,
                    "battery_capacity_puh": initial,
                },
                "name": f"{self._schema.name}_no_battery",
            }
        )

    def to_dict(self) -> dict[str, Any]:
        return self._schema.model_dump()

    def save(self, path: str | Path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        except OSError as e:
            raise ConfigError(f"failed to save settings: {e}", path) from e
