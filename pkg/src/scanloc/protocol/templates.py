"""Prompt templates shipped as plain-text data files with ``{placeholder}`` markers."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from string import Formatter
from typing import Any

STAGES = (
    "selection_initial",
    "selection_deeper",
    "region_verify",
    "crossmodal_verify",
    "consensus_select",
    "resolution_enhance",
    "final_decide",
    "locator_ground",
    "baseline_ground",
)

# locator_ground is keyed by the grounding model's prompt family instead of subset
LOCATOR_STYLES = ("os_atlas", "uground", "uground_v1")


class TemplateError(KeyError):
    """Raised for unknown templates or missing/empty placeholder values."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class PromptKind:
    stage: str
    variant: str = "normal"

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise TemplateError(f"unknown prompt stage {self.stage!r}")
        allowed = LOCATOR_STYLES if self.stage == "locator_ground" else ("normal", "special")
        if self.stage == "baseline_ground":
            allowed = ("normal",)
        if self.variant not in allowed:
            raise TemplateError(f"unknown variant {self.variant!r} for stage {self.stage!r}")

    @property
    def name(self) -> str:
        return f"{self.stage}.{self.variant}"

    @classmethod
    def selection(cls, depth: int, special: bool) -> PromptKind:
        stage = "selection_initial" if depth == 0 else "selection_deeper"
        return cls(stage, "special" if special else "normal")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    try:
        text = resources.files("scanloc.protocol").joinpath("templates", f"{name}.txt").read_text(
            encoding="utf-8"
        )
    except FileNotFoundError:
        raise TemplateError(f"no template named {name!r}") from None
    return text[:-1] if text.endswith("\n") else text


def template_fields(template: str) -> list[str]:
    return [f for _, f, _, _ in Formatter().parse(template) if f]


def render_prompt(kind: PromptKind, context: dict[str, Any]) -> str:
    """Instantiate the template for ``kind`` with values from ``context``.

    ``application`` is filled from ``application_name`` when absent, since the
    templates use both spellings for the same value.

    Raises:
        TemplateError: naming the first required field that is missing or empty.
    """
    template = load_template(kind.name)
    values = dict(context)
    if "application" not in values and "application_name" in values:
        values["application"] = values["application_name"]
    for field in template_fields(template):
        value = values.get(field)
        if value is None or (isinstance(value, str) and not value.strip()):
            raise TemplateError(f"missing value for template field {field!r} in {kind.name}")
    return template.format(**values)


def available_templates() -> list[str]:
    root = resources.files("scanloc.protocol").joinpath("templates")
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".txt"))
