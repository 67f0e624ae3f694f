"""Label universe: user groups, problems, causes, support focuses, and response strategies.

The full label set lives in a YAML config (two profiles ship with the package:
``cpsdd`` and ``esconv``). Everything downstream -- situation sampling, dialogue
validation, the planner's strategy resolution -- consumes the validated
:class:`LabelSet` loaded here.
"""
from __future__ import annotations

import re
from importlib.resources import files
from pathlib import Path
from typing import List, Optional, Union

import yaml
from pydantic import BaseModel, field_validator

_ID_RE = re.compile(r"^[a-z0-9_]+$")

SECTIONS = ("groups", "problems", "causes", "focuses", "strategies")


class TaxonomyError(Exception):
    """Base class for taxonomy config problems."""


class MissingFileError(TaxonomyError):
    pass


class TaxonomyParseError(TaxonomyError):
    def __init__(self, message: str, line: Optional[int] = None):
        super().__init__(message)
        self.line = line


class DuplicateIdError(TaxonomyError):
    def __init__(self, section: str, label_id: str):
        super().__init__(f"duplicate id {label_id!r} in section {section!r}")
        self.section = section
        self.label_id = label_id


class EmptyListError(TaxonomyError):
    def __init__(self, section: str):
        super().__init__(f"section {section!r} is empty or missing")
        self.section = section


class LabelDef(BaseModel):
    """One label: stable id plus display name (bilingual pairs allowed)."""

    id: str
    name: str
    description: str = ""

    model_config = {"frozen": True}

    @field_validator("id")
    @classmethod
    def _id_format(cls, v: str) -> str:
        if not _ID_RE.match(v):
            raise ValueError(f"id {v!r} must match [a-z0-9_]+")
        return v

    @field_validator("name")
    @classmethod
    def _name_nonempty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("name must be non-empty")
        return v


class StrategyDef(LabelDef):
    """A response strategy, with guidance text the Supporter prompt embeds."""

    guidance: str

    @field_validator("guidance")
    @classmethod
    def _guidance_nonempty(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("guidance must be non-empty")
        return v


class LabelSet(BaseModel):
    """The validated label universe. Immutable after load; safe to share."""

    profile: str = "custom"
    groups: List[LabelDef]
    problems: List[LabelDef]
    causes: List[LabelDef]
    focuses: List[LabelDef]
    strategies: List[StrategyDef]

    model_config = {"frozen": True}

    def section(self, name: str) -> List[LabelDef]:
        if name not in SECTIONS:
            raise KeyError(name)
        return getattr(self, name)

    def ids(self, section: str) -> List[str]:
        return [label.id for label in self.section(section)]

    def strategy(self, strategy_id: str) -> Optional[StrategyDef]:
        for s in self.strategies:
            if s.id == strategy_id:
                return s
        return None


def _normalize(text: str) -> str:
    return " ".join(text.split()).casefold()


def strategy_by_name(label_set: LabelSet, text: str) -> Optional[StrategyDef]:
    """Resolve free text to a strategy, matching id or display name.

    Case-insensitive and whitespace-normalized. Bilingual display names like
    "安慰 / Comforting" match on either half. Returns None when nothing matches.
    """
    needle = _normalize(text)
    if not needle:
        return None
    for s in label_set.strategies:
        candidates = [s.id, s.name] + [part for part in s.name.split("/")]
        if any(_normalize(c) == needle for c in candidates):
            return s
    return None


def _validate_section(section: str, entries, cls):
    if not entries:
        raise EmptyListError(section)
    seen = set()
    out = []
    for entry in entries:
        try:
            label = cls.model_validate(entry)
        except Exception as exc:
            raise TaxonomyParseError(f"bad entry in {section!r}: {entry!r}: {exc}") from exc
        if label.id in seen:
            raise DuplicateIdError(section, label.id)
        seen.add(label.id)
        out.append(label)
    return out


def load_taxonomy(path: Union[str, Path]) -> LabelSet:
    """Load and validate a label-set config file.

    Pure function of the file bytes. Raises instead of silently repairing:
    MissingFileError, TaxonomyParseError, DuplicateIdError, EmptyListError.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"taxonomy config not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        line = None
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        raise TaxonomyParseError(f"cannot parse {path}: {exc}", line=line) from exc
    if not isinstance(raw, dict):
        raise TaxonomyParseError(f"{path}: top level must be a mapping")

    sections = {}
    for section in SECTIONS:
        cls = StrategyDef if section == "strategies" else LabelDef
        sections[section] = _validate_section(section, raw.get(section) or [], cls)
    return LabelSet(profile=str(raw.get("profile", path.stem)), **sections)


def builtin_profile_path(profile: str) -> Path:
    """Path to a shipped taxonomy profile (``cpsdd`` or ``esconv``)."""
    resource = files("cadss").joinpath("configs", f"{profile}.yaml")
    path = Path(str(resource))
    if not path.is_file():
        raise MissingFileError(f"unknown builtin profile {profile!r}")
    return path


def load_builtin(profile: str) -> LabelSet:
    return load_taxonomy(builtin_profile_path(profile))
