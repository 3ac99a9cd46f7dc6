"""Cloze prompt rendering: templates, conjunctions, and prompt assembly.

Prompt bodies are marker strings: ``{subj}`` subject label, ``{phrase}``
derived verb phrase (domain/range probes), ``{mask}`` the mask slot,
``{s1}``..``{s5}`` soft-token placeholders, ``{pwX}``/``{pwY}`` pseudoword
slots.  Rendering substitutes surfaces and parses the result into typed
segments; soft and pseudoword placeholders stay symbolic here and are bound
by the scoring backend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

RELATIONS = ("type", "subclass_of", "subproperty_of", "domain", "range")

MASK_MARKER = "{mask}"
_MARKER_RE = re.compile(r"(\{mask\}|\{s[1-9]\}|\{pw[XY]\})")
_SOFT_RE = re.compile(r"\{s([1-9])\}")
_PSEUDO_RE = re.compile(r"\{pw([XY])\}")


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    relation: str
    kind: str  # manual | soft
    variant: int
    body: str

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise TemplateError(f"unknown relation {self.relation!r}")
        if self.kind not in ("manual", "soft"):
            raise TemplateError(f"kind must be manual or soft, got {self.kind!r}")
        if self.body.count(MASK_MARKER) != 1:
            raise TemplateError(f"template needs exactly one {{mask}}: {self.body!r}")
        if self.kind == "soft":
            stripped = re.sub(r"\{subj\}|\{s[1-9]\}|\{mask\}", "", self.body)
            if stripped.replace(".", "").strip():
                raise TemplateError(
                    f"soft template may only contain subject, soft tokens, mask and period: {self.body!r}"
                )


@dataclass(frozen=True)
class Conjunction:
    kind: str  # manual | soft

    def __post_init__(self):
        if self.kind not in ("manual", "soft"):
            raise TemplateError(f"conjunction kind must be manual or soft, got {self.kind!r}")

    def between_premises(self) -> str:
        return "" if self.kind == "manual" else "{s4}"

    def before_hypothesis(self) -> str:
        return "Therefore," if self.kind == "manual" else "{s5}"


@dataclass(frozen=True)
class Segment:
    kind: str  # text | mask | soft | pseudo
    text: str = ""
    count: int = 0  # mask segments only


@dataclass(frozen=True)
class ClozePrompt:
    segments: tuple[Segment, ...]
    mask_count: int


_SOFT_BODY = "{subj} {s1} {s2} {s3} {mask} ."

BUILTIN_TEMPLATES: dict[tuple[str, str], tuple[str, ...]] = {
    ("type", "manual"): (
        "{subj} is a {mask} .",
        "{subj} has class {mask} .",
        "{subj} is a particular {mask} .",
    ),
    ("subclass_of", "manual"): (
        "{subj} is a {mask} .",
        "{subj} has superclass {mask} .",
        "{subj} is a particular {mask} .",
    ),
    ("subproperty_of", "manual"): ("{subj} implies {mask} .",),
    ("domain", "manual"): ("One has to be a particular {mask} to {phrase} .",),
    ("range", "manual"): ("One has to be a particular {mask} to {phrase} .",),
    ("type", "soft"): (_SOFT_BODY,),
    ("subclass_of", "soft"): (_SOFT_BODY,),
    ("subproperty_of", "soft"): (_SOFT_BODY,),
    ("domain", "soft"): (_SOFT_BODY,),
    ("range", "soft"): (_SOFT_BODY,),
}


class TemplateRegistry:
    """Built-in templates plus any registered from a template TSV."""

    def __init__(self):
        self._templates: dict[tuple[str, str], list[Template]] = {}
        for (relation, kind), bodies in BUILTIN_TEMPLATES.items():
            for i, body in enumerate(bodies, start=1):
                self._templates.setdefault((relation, kind), []).append(
                    Template(relation, kind, i, body)
                )

    def get(self, relation: str, kind: str, variant: int = 1, clamp: bool = False) -> Template:
        variants = self._templates.get((relation, kind))
        if not variants:
            raise TemplateError(f"no {kind} template for relation {relation!r}")
        if clamp:
            variant = min(variant, max(t.variant for t in variants))
        for template in variants:
            if template.variant == variant:
                return template
        raise TemplateError(f"no variant {variant} for {relation}/{kind}")

    def register(self, template: Template) -> None:
        self._templates.setdefault((template.relation, template.kind), []).append(template)

    def load_file(self, path: str | Path) -> int:
        """Register templates from TSV lines ``relation<TAB>kind<TAB>body``."""
        added = 0
        for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise TemplateError(f"{path}:{line_no}: expected 3 columns")
            relation, kind, body = parts
            existing = self._templates.get((relation, kind), [])
            self.register(Template(relation, kind, len(existing) + 1, body))
            added += 1
        return added


def fix_articles(text: str) -> str:
    """Turn ``a`` into ``an`` before a vowel-initial word."""
    return re.sub(r"\b([Aa]) (?=[aeiouAEIOU])", lambda m: m.group(1) + "n ", text)


def capitalize_sentence(text: str) -> str:
    return text[0].upper() + text[1:] if text[:1].isalpha() else text


def indefinite(label: str) -> str:
    article = "an" if label[:1].lower() in "aeiou" else "a"
    return f"{article} {label}"


def domain_phrase(pattern: str | None, label: str, range_label: str | None) -> str:
    """Verb phrase completing "One has to be a particular [MASK] to ..." for a domain probe."""
    if pattern is None:
        return f"have {label}"
    obj = indefinite(range_label) if range_label else "something"
    filled = pattern.replace("[Y]", obj)
    if filled.startswith("[X] is "):
        return "be " + filled[len("[X] is "):]
    return filled.replace("[X]", "").strip()


def range_phrase(pattern: str | None, label: str) -> str:
    """Verb phrase for a range probe; the subject slot becomes "that"."""
    if pattern is None:
        return f"be {label}"
    filled = pattern.replace("[Y]", "that")
    if filled.startswith("[X] is "):
        return "have " + filled[len("[X] is "):]
    return filled.replace("[X]", "").strip()


def pattern_span(pattern: str) -> str:
    """The literal part of a property pattern, i.e. the maskable span of "uuu bbb vvv"."""
    return " ".join(pattern.replace("[X]", " ").replace("[Y]", " ").split())


def fill_template(body: str, subject: str | None = None, phrase: str | None = None) -> str:
    """Substitute subject surfaces into a template body, leaving other markers."""
    text = body
    if "{subj}" in text:
        if subject is None:
            raise TemplateError(f"template needs a subject surface: {body!r}")
        text = text.replace("{subj}", subject)
    if "{phrase}" in text:
        if phrase is None:
            raise TemplateError(f"template needs a derived phrase: {body!r}")
        text = text.replace("{phrase}", phrase)
    return capitalize_sentence(fix_articles(text))


def fill_statement(body: str, subject: str | None, object_surface: str,
                   phrase: str | None = None) -> str:
    """Render a template as a declarative statement: the mask slot takes the object."""
    text = fill_template(body, subject=subject, phrase=phrase)
    text = text.replace(MASK_MARKER, object_surface)
    text = fix_articles(text)
    return text.replace(" .", ".")


def parse_prompt(marker_text: str, mask_count: int = 1, lowercase: bool = False) -> ClozePrompt:
    """Parse a marker string into a ClozePrompt with ``mask_count`` masks."""
    if mask_count < 1:
        raise TemplateError("mask_count must be >= 1")
    if marker_text.count(MASK_MARKER) != 1:
        raise TemplateError(f"prompt needs exactly one {{mask}}: {marker_text!r}")
    segments: list[Segment] = []
    for piece in _MARKER_RE.split(marker_text):
        if not piece:
            continue
        if piece == MASK_MARKER:
            segments.append(Segment("mask", count=mask_count))
        elif _SOFT_RE.fullmatch(piece):
            segments.append(Segment("soft", text="s" + _SOFT_RE.fullmatch(piece).group(1)))
        elif _PSEUDO_RE.fullmatch(piece):
            segments.append(Segment("pseudo", text=_PSEUDO_RE.fullmatch(piece).group(1)))
        else:
            segments.append(Segment("text", text=piece.lower() if lowercase else piece))
    return ClozePrompt(segments=tuple(segments), mask_count=mask_count)


def prompt_text(prompt: ClozePrompt) -> str:
    """Human-readable form: [MASK] for masks, <s1> for soft tokens, [X]/[Y] for pseudowords."""
    out = []
    for seg in prompt.segments:
        if seg.kind == "text":
            out.append(seg.text)
        elif seg.kind == "mask":
            out.append(" ".join(["[MASK]"] * seg.count))
        elif seg.kind == "soft":
            out.append(f"<{seg.text}>")
        else:
            out.append(f"[{seg.text}]")
    return "".join(out)


def render_memorizing(sample, template: Template, mask_count: int = 1,
                      lowercase: bool = False) -> ClozePrompt:
    """Render one memorizing sample against a template."""
    relation = relation_of_subtask(sample.subtask)
    if template.relation != relation:
        raise TemplateError(
            f"template relation {template.relation!r} does not match subtask {sample.subtask}"
        )
    text = fill_template(template.body, subject=sample.subject_label,
                         phrase=sample.subject_phrase)
    return parse_prompt(text, mask_count=mask_count, lowercase=lowercase)


def assemble_reasoning(premise_texts: Iterable[str], hypothesis: str, conj: Conjunction) -> str:
    """Join explicit premise statements and the hypothesis cloze with a conjunction.

    The conjunction before the hypothesis is kept even with no explicit
    premises, so the surrounding template is constant across premise modes.
    """
    premise_texts = [t for t in premise_texts if t]
    joiner = conj.between_premises()
    joined = (f" {joiner} " if joiner else " ").join(premise_texts)
    lead = conj.before_hypothesis()
    if joined:
        return f"{joined} {lead} {hypothesis}"
    return f"{lead} {hypothesis}"


def render_reasoning(instance, conj: Conjunction, mask_count: int = 1,
                     lowercase: bool = False) -> ClozePrompt:
    """Render a reasoning instance: explicit premises (P2 then P1) + hypothesis cloze."""
    texts = [p.text for p in (instance.p2, instance.p1) if p.mode == "EX"]
    marker_text = assemble_reasoning(texts, instance.hypothesis, conj)
    return parse_prompt(marker_text, mask_count=mask_count, lowercase=lowercase)


def relation_of_subtask(subtask: str) -> str:
    mapping = {"TP": "type", "SCO": "subclass_of", "SPO": "subproperty_of",
               "DM": "domain", "RG": "range"}
    if subtask not in mapping:
        raise TemplateError(f"unknown subtask {subtask!r}")
    return mapping[subtask]


MC_STEMS = {
    "TP": "What is the type of {subj}?",
    "SCO": "What is the superclass of {subj}?",
    "SPO": "What does {subj} imply?",
    "DM": "What does one have to be to {phrase}?",
    "RG": "What does one have to be to {phrase}?",
}

CHOICE_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def render_multiple_choice(question) -> str:
    """One-line multiple-choice prompt: stem followed by lettered choices."""
    stem = MC_STEMS[question.subtask]
    stem = stem.replace("{subj}", question.subject_label)
    if "{phrase}" in stem:
        if question.subject_phrase is None:
            raise TemplateError("multiple-choice stem needs a derived phrase")
        stem = stem.replace("{phrase}", question.subject_phrase)
    choices = ", ".join(
        f"({CHOICE_LETTERS[i]}) {choice}" for i, choice in enumerate(question.choices)
    )
    return f"{stem} {choices}"
