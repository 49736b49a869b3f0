"""Run configuration: a flat ``key = value`` document with dotted keys.

A ``[section]`` header is shorthand for prefixing ``section.`` to the keys
below it, so ``[columns]`` followed by ``BTC = Bitcoin`` is the same as
``columns.BTC = Bitcoin``.  Precedence: command-line flags over file values
over defaults.
"""

from __future__ import annotations

import configparser
import datetime as dt
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Mapping

from .strategies import STRATEGY_IDS, StrategyConfig


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


@dataclass(frozen=True)
class RunConfig:
    data_path: Path | None = None
    date_column: str = "Date"
    delimiter: str = ","
    date_format: str = "%Y-%m-%d"
    columns: Mapping[str, str] = field(default_factory=dict)
    shortable: str | None = None
    strategies: tuple[str, ...] = STRATEGY_IDS
    r_f: float = 0.0
    mu_target: float = 2.6e-4
    gamma: float = 5.0
    window_size: int = 90
    w0: float = 1.0
    turnover_mode: str = "target"
    count_initial_turnover: bool = False
    asr_form: str = "paper"
    kurtosis_convention: str = "excess"
    moment_denominator: str = "paper"
    budget_mode: Mapping[str, str] = field(default_factory=dict)
    date_from: dt.date | None = None
    date_to: dt.date | None = None
    universe_mode: str = "with"
    output_dir: Path = Path("out")
    seed: int = 0
    starts: int = 16
    bins: int = 50

    def strategy_config(self) -> StrategyConfig:
        return StrategyConfig(
            r_f=self.r_f,
            mu_target=self.mu_target,
            gamma=self.gamma,
            window_size=self.window_size,
            w0=self.w0,
            budget_modes=dict(self.budget_mode),
            asr_form=self.asr_form,
            kurtosis_convention=self.kurtosis_convention,
            moment_denominator=self.moment_denominator,
            starts=self.starts,
            seed=self.seed,
        )


SCALAR_KEYS = {f.name for f in fields(RunConfig)} - {"columns", "budget_mode"}
# informational keys written into run manifests; accepted and ignored on input
INFO_PREFIX = "manifest."

_OPTIONAL = ("data_path", "shortable", "date_from", "date_to")
_UNIVERSE_ALIASES = {"with_short": "with", "without_short": "without"}

_CHOICES = {
    "turnover_mode": ("target", "drifted"),
    "asr_form": ("paper", "pezier_white"),
    "kurtosis_convention": ("excess", "raw"),
    "moment_denominator": ("paper", "uniform"),
    "universe_mode": ("with", "without", "both"),
}


def read_document(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string("[__root__]\n" + text)
    out: dict[str, str] = {}
    for section in parser.sections():
        prefix = "" if section == "__root__" else section + "."
        for key, value in parser.items(section):
            out[prefix + key] = value.strip()
    return out


def load_document(path: str | Path) -> dict[str, str]:
    return read_document(Path(path).read_text(encoding="utf-8"))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_date(text: str) -> dt.date:
    return dt.date.fromisoformat(text.strip())


def validate_config(raw: Mapping[str, str], base_dir: str | Path | None = None) -> RunConfig:
    """Turn a key/value document into a RunConfig or raise ConfigError listing every problem."""
    errors: list[str] = []
    values: dict = {}
    columns: dict[str, str] = {}
    budget: dict[str, str] = {}
    base = Path(base_dir) if base_dir is not None else None

    def convert(key, fn, text):
        try:
            values[key] = fn(text)
        except ValueError as exc:
            errors.append(f"{key}: {exc}")

    for key, text in raw.items():
        if key.startswith(INFO_PREFIX):
            continue
        if key.startswith("columns."):
            asset = key.split(".", 1)[1]
            if not asset or not text:
                errors.append(f"{key}: empty asset id or column name")
            columns[asset] = text
            continue
        if key.startswith("budget_mode."):
            sid = key.split(".", 1)[1]
            if sid not in STRATEGY_IDS:
                errors.append(f"{key}: unknown strategy {sid!r}")
            elif text not in ("inequality", "equality"):
                errors.append(f"{key}: expected 'inequality' or 'equality', got {text!r}")
            else:
                budget[sid] = text
            continue
        if key not in SCALAR_KEYS:
            errors.append(f"{key}: unknown key")
            continue
        if text == "" and key in _OPTIONAL:
            values[key] = None
        elif key in ("r_f", "mu_target", "gamma", "w0"):
            convert(key, float, text)
        elif key in ("window_size", "seed", "starts", "bins"):
            convert(key, int, text)
        elif key == "count_initial_turnover":
            convert(key, _parse_bool, text)
        elif key in ("date_from", "date_to"):
            convert(key, _parse_date, text)
        elif key in ("data_path", "output_dir"):
            p = Path(text).expanduser()
            if base is not None and not p.is_absolute():
                p = base / p
            values[key] = p
        elif key == "strategies":
            ids = tuple(s.strip() for s in text.split(",") if s.strip())
            bad = [s for s in ids if s not in STRATEGY_IDS]
            if bad:
                errors.append(f"strategies: unknown strategy ids {bad}; expected {list(STRATEGY_IDS)}")
            elif not ids:
                errors.append("strategies: empty list")
            elif len(set(ids)) != len(ids):
                errors.append("strategies: duplicate ids")
            else:
                values[key] = ids
        elif key == "universe_mode":
            values[key] = _UNIVERSE_ALIASES.get(text, text)
        elif key == "delimiter":
            values[key] = {"\\t": "\t", "tab": "\t"}.get(text, text)
            if len(values[key]) != 1:
                errors.append(f"delimiter: must be a single character, got {text!r}")
        else:
            values[key] = text

    for key, choices in _CHOICES.items():
        if key in values and values[key] not in choices:
            errors.append(f"{key}: expected one of {list(choices)}, got {values[key]!r}")
    if "gamma" in values and not values["gamma"] >= 0:
        errors.append(f"gamma: must be >= 0, got {values['gamma']}")
    if "window_size" in values and values["window_size"] < 2:
        errors.append(f"window_size: must be >= 2 (covariance needs two observations), got {values['window_size']}")
    if "starts" in values and values["starts"] < 1:
        errors.append(f"starts: must be >= 1, got {values['starts']}")
    if "bins" in values and values["bins"] < 1:
        errors.append(f"bins: must be >= 1, got {values['bins']}")
    if "w0" in values and not values["w0"] > 0:
        errors.append(f"w0: must be > 0, got {values['w0']}")
    if values.get("date_from") and values.get("date_to") and values["date_from"] > values["date_to"]:
        errors.append("date_from: must not be after date_to")
    if columns and values.get("shortable") and values["shortable"] not in columns:
        errors.append(f"shortable: {values['shortable']!r} is not one of the mapped columns {list(columns)}")
    if values.get("universe_mode") in ("without", "both") and not values.get("shortable"):
        errors.append(f"universe_mode: {values['universe_mode']!r} needs a shortable asset")
    if errors:
        raise ConfigError(errors)
    return RunConfig(columns=columns, budget_mode=budget, **values)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ",".join(value)
    if value is None:
        return ""
    return str(value)


def dump_config(cfg: RunConfig, exclude=("output_dir",)) -> list[tuple[str, str]]:
    """Resolved config as ordered (key, text) pairs that validate_config reads back."""
    pairs = []
    for f in fields(RunConfig):
        if f.name in exclude:
            continue
        value = getattr(cfg, f.name)
        if f.name == "columns":
            pairs.extend((f"columns.{a}", c) for a, c in value.items())
        elif f.name == "budget_mode":
            for sid in STRATEGY_IDS:
                pairs.append((f"budget_mode.{sid}", cfg.strategy_config().budget_mode(sid)))
        elif f.name == "delimiter" and value == "\t":
            pairs.append((f.name, "tab"))
        else:
            pairs.append((f.name, _fmt(value)))
    return pairs
