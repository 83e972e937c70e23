"""Scenario file ingestion and unit conversion.

Scenario files are JSON or TOML documents with radio quantities in
conventional log units (dB / dBm); everything is converted to linear SI
units at load time. The package ships three ready-made layouts:
``two_user_d10``, ``two_user_d5``, and ``nine_user_20x20``.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .model import Scenario, Tolerances

SHIPPED = ("two_user_d10", "two_user_d5", "nine_user_20x20")

REQUIRED_KEYS = {
    "users", "altitude_m", "beta0_db", "sigma2_dbm",
    "eta", "p_dbm", "vmax_mps", "period_s",
}
OPTIONAL_KEYS = {"tol_structural", "tol_physical", "name"}


class ScenarioError(ValueError):
    """Raised when a scenario document is missing or malformed."""


def db_to_linear(db: float) -> float:
    """Convert a dB power ratio to a linear ratio."""
    return 10.0 ** (db / 10.0)


def dbm_to_watts(dbm: float) -> float:
    """Convert a dBm power level to Watts."""
    return 10.0 ** (dbm / 10.0) / 1000.0


def scenario_from_dict(doc: dict, name: str = "scenario") -> Scenario:
    """Build a Scenario from a parsed document, converting log units."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario document must be a table of keys")
    missing = REQUIRED_KEYS - doc.keys()
    if missing:
        raise ScenarioError(f"missing scenario key: {sorted(missing)[0]}")
    unknown = doc.keys() - REQUIRED_KEYS - OPTIONAL_KEYS
    if unknown:
        raise ScenarioError(f"unknown scenario key: {sorted(unknown)[0]}")
    numeric = {}
    for key in ("altitude_m", "beta0_db", "sigma2_dbm", "eta",
                "p_dbm", "vmax_mps", "period_s"):
        value = doc[key]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScenarioError(f"scenario key must be a number: {key}")
        numeric[key] = float(value)
    try:
        users = np.asarray(doc["users"], dtype=float)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed scenario key: users ({exc})") from exc
    if users.ndim != 2 or users.shape[1] != 2:
        raise ScenarioError("malformed scenario key: users must be a list of [x, y] pairs")
    tol = Tolerances(
        structural=float(doc.get("tol_structural", Tolerances.structural)),
        physical=float(doc.get("tol_physical", Tolerances.physical)),
    )
    try:
        return Scenario(
            users=users,
            altitude=numeric["altitude_m"],
            beta0=db_to_linear(numeric["beta0_db"]),
            sigma2=dbm_to_watts(numeric["sigma2_dbm"]),
            eta=numeric["eta"],
            p=dbm_to_watts(numeric["p_dbm"]),
            vmax=numeric["vmax_mps"],
            period=numeric["period_s"],
            name=str(doc.get("name", name)),
            tol=tol,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc


def load_scenario(path: str | Path) -> Scenario:
    """Load a scenario from a JSON/TOML file or a shipped layout name."""
    path = Path(path)
    if not path.exists() and path.suffix == "" and path.name in SHIPPED:
        return load_shipped(path.name)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        try:
            doc = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ScenarioError(f"TOML parse failure in {path.name}: {exc}") from exc
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"JSON parse failure in {path.name}: {exc}") from exc
    return scenario_from_dict(doc, name=path.stem)


def load_shipped(name: str) -> Scenario:
    if name not in SHIPPED:
        raise ScenarioError(f"unknown shipped scenario: {name}")
    text = resources.files("uavwpcn.data").joinpath(f"{name}.json").read_text()
    return scenario_from_dict(json.loads(text), name=name)


def canonical_dict(scn: Scenario) -> dict:
    """Canonical linear-unit representation used for digests/report JSON."""
    return {
        "name": scn.name,
        "users": [[float(x), float(y)] for x, y in scn.users],
        "altitude": scn.altitude,
        "beta0": scn.beta0,
        "sigma2": scn.sigma2,
        "eta": scn.eta,
        "p": scn.p,
        "vmax": scn.vmax,
        "period": scn.period,
    }


def scenario_digest(scn: Scenario) -> str:
    """Stable sha256 digest of the scenario's physical content."""
    payload = json.dumps(canonical_dict(scn), sort_keys=True,
                         separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()
