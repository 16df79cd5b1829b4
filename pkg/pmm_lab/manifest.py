"""Run manifests: everything needed to regenerate a run's outputs."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import voluptuous as vol

from .const import (
    CONF_CREATED,
    CONF_FINGERPRINT,
    CONF_OUTPUTS,
    CONF_PARAMETERS,
    CONF_SEED,
    CONF_SUBCOMMAND,
    CONF_VERSION,
    VERSION,
)
from .lattice_core import PmmLabError

_LOGGER = logging.getLogger(__name__)


class InvalidManifestError(PmmLabError):
    """Error to indicate an unreadable or malformed run manifest."""


def validate_fingerprint(value: Any) -> str:
    """Validate a hex SHA-256 digest."""
    if not isinstance(value, str) or len(value) != 64:
        raise vol.Invalid("Fingerprint must be a 64-character hex digest")
    try:
        int(value, 16)
    except ValueError as err:
        raise vol.Invalid("Fingerprint must be hexadecimal") from err
    return value


MANIFEST_SCHEMA = vol.Schema(
    {
        vol.Required(CONF_SUBCOMMAND): str,
        vol.Required(CONF_PARAMETERS): dict,
        vol.Required(CONF_SEED): vol.Coerce(int),
        vol.Required(CONF_FINGERPRINT): validate_fingerprint,
        vol.Required(CONF_VERSION): str,
        vol.Optional(CONF_OUTPUTS, default=[]): [str],
        vol.Optional(CONF_CREATED): str,
    }
)


@dataclass
class RunManifest:
    """Subcommand, parameters, seed, family fingerprint, version and outputs of one run."""

    subcommand: str
    parameters: dict[str, Any]
    seed: int
    family_fingerprint: str
    version: str = VERSION
    outputs: list[str] = field(default_factory=list)
    created: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds")
    )

    def as_dict(self) -> dict[str, Any]:
        return {
            CONF_SUBCOMMAND: self.subcommand,
            CONF_PARAMETERS: self.parameters,
            CONF_SEED: self.seed,
            CONF_FINGERPRINT: self.family_fingerprint,
            CONF_VERSION: self.version,
            CONF_OUTPUTS: list(self.outputs),
            CONF_CREATED: self.created,
        }

    def write(self, path: str | Path) -> Path:
        """Write the manifest as sorted JSON and return its path."""
        path = Path(path)
        path.write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n")
        _LOGGER.debug("Wrote manifest %s", path)
        return path

    @classmethod
    def from_dict(cls, data: Any) -> RunManifest:
        try:
            data = MANIFEST_SCHEMA(data)
        except vol.Invalid as err:
            raise InvalidManifestError(f"Invalid manifest: {err}") from err
        manifest = cls(
            subcommand=data[CONF_SUBCOMMAND],
            parameters=data[CONF_PARAMETERS],
            seed=data[CONF_SEED],
            family_fingerprint=data[CONF_FINGERPRINT],
            version=data[CONF_VERSION],
            outputs=data[CONF_OUTPUTS],
        )
        if CONF_CREATED in data:
            manifest.created = data[CONF_CREATED]
        if manifest.version != VERSION:
            _LOGGER.warning(
                "Manifest written by version %s, running %s", manifest.version, VERSION
            )
        return manifest

    @classmethod
    def read(cls, path: str | Path) -> RunManifest:
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise InvalidManifestError(f"Cannot read manifest {path}: {err}") from err
        return cls.from_dict(data)
