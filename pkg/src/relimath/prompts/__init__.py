"""Prompt template registry with placeholder binding.

Templates live as data files under ``templates/``, one per template id
(two files, a removal and a contradiction variant, for the ids whose
wording alternates with the rewrite type). Placeholders use ``<name>``
syntax. Files can be revised without touching code; an alternate template
directory can be supplied for experimentation.
"""
from __future__ import annotations

import hashlib
import logging
import re
from enum import Enum
from importlib import resources
from pathlib import Path

from ..errors import TemplateError
from ..records import RewriteType

logger = logging.getLogger(__name__)


class TemplateId(str, Enum):
    STANDARD = "standard"
    RELIABLE = "reliable"
    REFUSAL_2SHOT = "refusal_2shot"
    EXTRACT_CONDITIONS = "extract_conditions"
    REWRITE_REMOVAL = "rewrite_removal"
    REWRITE_CONTRADICTION = "rewrite_contradiction"
    VERIFY_CONDITION_CHANGE = "verify_condition_change"
    SUMMARIZE_REWRITTEN_CONDITION = "summarize_rewritten_condition"
    VERIFY_UNSOLVABLE = "verify_unsolvable"
    UNSOLVABLE_REASON = "unsolvable_reason"


# Ids whose file is selected by a required "rewrite_type" binding.
VARIANT_TEMPLATES = frozenset(
    {
        TemplateId.VERIFY_CONDITION_CHANGE,
        TemplateId.SUMMARIZE_REWRITTEN_CONDITION,
        TemplateId.VERIFY_UNSOLVABLE,
        TemplateId.UNSOLVABLE_REASON,
    }
)

# Section markers the construction stages split model turns on.
ANALYSIS_MARKER = "### Analysis ###:"
UNSOLVABLE_ANALYSIS_MARKER = "### Unsolvable Analysis ###:"
JUDGEMENT_MARKER = "### Your judgement (True or False) ###:"
REWRITTEN_QUESTION_MARKER = "### Rewritten Mathematical Question ###:"
EXTRACTED_CONDITION_MARKER = "### Extracted Condition ###:"
REWRITTEN_CONDITION_MARKER = "### Rewritten Condition ###:"
UNSOLVABLE_REASON_MARKER = "### Unsolvable Reason ###:"

_PLACEHOLDER_RE = re.compile(r"<([a-z0-9_]+)>")


def _template_filename(template_id: TemplateId, bindings: dict[str, str]) -> str:
    if template_id in VARIANT_TEMPLATES:
        variant = bindings.get("rewrite_type")
        if variant is None:
            raise TemplateError(
                f"template {template_id.value!r} requires a 'rewrite_type' binding"
            )
        variant = variant.value if isinstance(variant, RewriteType) else str(variant)
        if variant not in (RewriteType.REMOVAL.value, RewriteType.CONTRADICTION.value):
            raise TemplateError(f"unknown rewrite_type variant: {variant!r}")
        return f"{template_id.value}_{variant}.txt"
    return f"{template_id.value}.txt"


def load_template(template_id: TemplateId, bindings: dict[str, str] | None = None,
                  template_dir: str | Path | None = None) -> str:
    """Raw template text, variant-selected but with placeholders intact."""
    filename = _template_filename(template_id, bindings or {})
    if template_dir is not None:
        path = Path(template_dir) / filename
        if not path.is_file():
            raise TemplateError(f"template file not found: {path}")
        return path.read_text(encoding="utf-8")
    ref = resources.files(__package__).joinpath("templates").joinpath(filename)
    if not ref.is_file():
        raise TemplateError(f"packaged template missing: {filename}")
    return ref.read_text(encoding="utf-8")


def required_bindings(template_id: TemplateId, rewrite_type: RewriteType | None = None,
                      template_dir: str | Path | None = None) -> set[str]:
    """Placeholder names a full render of this template needs."""
    bindings = {"rewrite_type": rewrite_type.value} if rewrite_type else {}
    text = load_template(template_id, bindings, template_dir)
    names = set(_PLACEHOLDER_RE.findall(text))
    if template_id in VARIANT_TEMPLATES:
        names.add("rewrite_type")
    return names


def _substitute(text: str, bindings: dict[str, str], template_id: TemplateId) -> str:
    placeholders = set(_PLACEHOLDER_RE.findall(text))
    consumed = set(placeholders)
    if template_id in VARIANT_TEMPLATES:
        consumed.add("rewrite_type")
    missing = [name for name in sorted(placeholders) if name not in bindings]
    if missing:
        raise TemplateError(
            f"template {template_id.value!r} missing bindings: {', '.join(missing)}"
        )
    unused = sorted(set(bindings) - consumed)
    if unused:
        logger.warning(
            "template %s ignoring extra bindings: %s", template_id.value, ", ".join(unused)
        )
    return _PLACEHOLDER_RE.sub(lambda m: str(bindings[m.group(1)]), text)


def render(template_id: TemplateId, bindings: dict[str, str],
           template_dir: str | Path | None = None) -> str:
    """Render the full template; every placeholder must be bound."""
    text = load_template(template_id, bindings, template_dir)
    return _substitute(text, bindings, template_id)


def render_prefix(template_id: TemplateId, bindings: dict[str, str], stop_marker: str,
                  template_dir: str | Path | None = None) -> str:
    """Render the template truncated just after ``stop_marker``.

    Used for two-stage templates: the first completion is prompted with
    everything up to the analysis marker, the second with the full template
    and the produced analysis bound in.
    """
    text = load_template(template_id, bindings, template_dir)
    idx = text.find(stop_marker)
    if idx == -1:
        raise TemplateError(
            f"marker {stop_marker!r} not present in template {template_id.value!r}"
        )
    return _substitute(text[: idx + len(stop_marker)], bindings, template_id)


def all_template_files(template_dir: str | Path | None = None) -> dict[str, str]:
    """Filename -> content for every template file, sorted by name."""
    contents: dict[str, str] = {}
    if template_dir is not None:
        for path in sorted(Path(template_dir).glob("*.txt")):
            contents[path.name] = path.read_text(encoding="utf-8")
        return contents
    base = resources.files(__package__).joinpath("templates")
    for ref in sorted(base.iterdir(), key=lambda r: r.name):
        if ref.name.endswith(".txt"):
            contents[ref.name] = ref.read_text(encoding="utf-8")
    return contents


def templates_version(template_dir: str | Path | None = None) -> str:
    """Stable digest over all template files, for run manifests."""
    digest = hashlib.sha256()
    for name, content in all_template_files(template_dir).items():
        digest.update(name.encode("utf-8"))
        digest.update(b"\0")
        digest.update(content.encode("utf-8"))
        digest.update(b"\0")
    return digest.hexdigest()
