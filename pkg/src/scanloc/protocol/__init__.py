"""Prompt rendering and reply parsing for the scanner/locator protocol."""

from scanloc.protocol.parsers import (
    CellZoneChoice,
    ParsedPoint,
    ParseError,
    RegionScores,
    Verdict,
    parse_index_location,
    parse_point,
    parse_point_detailed,
    parse_region_scores,
    parse_tagged_index,
    parse_tagged_yes_no,
    parse_zone,
)
from scanloc.protocol.templates import (
    LOCATOR_STYLES,
    STAGES,
    PromptKind,
    TemplateError,
    available_templates,
    load_template,
    render_prompt,
    template_fields,
)

__all__ = [
    "CellZoneChoice",
    "LOCATOR_STYLES",
    "ParseError",
    "ParsedPoint",
    "PromptKind",
    "RegionScores",
    "STAGES",
    "TemplateError",
    "Verdict",
    "available_templates",
    "load_template",
    "parse_index_location",
    "parse_point",
    "parse_point_detailed",
    "parse_region_scores",
    "parse_tagged_index",
    "parse_tagged_yes_no",
    "parse_zone",
    "render_prompt",
    "template_fields",
]
