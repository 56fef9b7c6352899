"""Caption rendering: key-value serialization and a natural-language grammar.

Captions are the text interface to a system configuration. Two renderers
are provided:

* :func:`render_kv` joins ``key:value`` pairs with ``|`` in schema order.
* :func:`render_nl` expands a seeded grammar: each attribute contributes a
  clause with several surface forms, clauses are grouped into sentences
  whose count is controlled by a length class, and styles change openers
  and connectives. Values may be humanized (1 story becomes
  "single-story") and categorical values may surface as synonyms, so the
  training text distribution already contains the paraphrases the
  generalization suites probe.

Controlled corruption (:func:`corrupt`) and targeted substitution
(:func:`substitute_synonym`) exist so caption-quality metrics can be
calibrated against known ground truth.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Iterable, Mapping, Optional, Sequence

from .schema import CATEGORICAL, AttributeSchema
from .validation import ContractViolation, require

PRESENT = "present"
OMITTED = "omitted"
CORRUPTED = "corrupted"
UNKNOWN = "unknown"

LENGTH_SENTENCES = {"short": (2, 3), "medium": (4, 6), "long": (7, 9)}

STYLE_TAGS = (
    "objective",
    "objective-paraphrase",
    "colleague",
    "classroom",
)


@dataclass
class Caption:
    """A text rendering of a system configuration plus provenance."""

    text: str
    kind: str  # "kv" | "nl"
    coverage: dict[str, str]
    length_class: Optional[str] = None
    style_tag: Optional[str] = None
    source: str = "grammar"  # grammar | llm | template-partial
    system_id: Optional[str] = None
    attributes: Optional[dict] = None
    surfaces: dict[str, str] = field(default_factory=dict)
    render_seed: Optional[int] = None
    family: Optional[str] = None
    truncated: bool = False

    def present_attributes(self) -> list[str]:
        return [a for a, flag in self.coverage.items() if flag == PRESENT]

    def to_record(self) -> dict:
        """Flat JSON record for caption corpus files."""
        return {
            "system_id": self.system_id,
            "kind": self.kind,
            "length_class": self.length_class,
            "style_tag": self.style_tag,
            "source": self.source,
            "text": self.text,
            "coverage": self.coverage,
            "surfaces": self.surfaces,
            "render_seed": self.render_seed,
            "family": self.family,
            "truncated": self.truncated,
        }

    @classmethod
    def from_record(cls, record: Mapping, attributes: Optional[dict] = None) -> "Caption":
        return cls(text=record["text"], kind=record["kind"],
                   coverage=dict(record["coverage"]),
                   length_class=record.get("length_class"),
                   style_tag=record.get("style_tag"),
                   source=record.get("source", "grammar"),
                   system_id=record.get("system_id"),
                   attributes=dict(attributes) if attributes else None,
                   surfaces=dict(record.get("surfaces") or {}),
                   render_seed=record.get("render_seed"),
                   family=record.get("family"),
                   truncated=bool(record.get("truncated", False)))


def format_number(value) -> str:
    """Render a number the way simulation metadata does: comma-grouped
    thousands, decimals preserved for non-integers."""
    if isinstance(value, bool):
        raise ContractViolation("booleans are not caption values")
    if isinstance(value, int):
        return f"{value:,}"
    if isinstance(value, float):
        return f"{value:,}"
    return str(value)


def count_sentences(text: str) -> int:
    return len(re.findall(r"[.!?]+(?:\s|$)", text))


# ---------------------------------------------------------------------------
# synonym table

class SynonymTable:
    """Maps (attribute, value) to alternative surface strings."""

    def __init__(self, table: Mapping[str, Mapping[str, Sequence[str]]],
                 schema: Optional[AttributeSchema] = None):
        self._table = {a: {v: list(syns) for v, syns in values.items()}
                       for a, values in table.items()}
        if schema is not None:
            self._check_collisions(schema)

    def _check_collisions(self, schema: AttributeSchema) -> None:
        for attr, values in self._table.items():
            canonical = set(schema.spec(attr).categories)
            for value, syns in values.items():
                clash = canonical.intersection(syns)
                if clash:
                    raise ContractViolation(
                        f"synonyms for {attr}={value!r} collide with canonical "
                        f"categories: {sorted(clash)}")

    def attributes(self) -> list[str]:
        return list(self._table)

    def lookup(self, attribute: str, value) -> list[str]:
        return list(self._table.get(attribute, {}).get(str(value), []))

    def to_json(self) -> str:
        return json.dumps(self._table, indent=2)

    @classmethod
    def from_json(cls, text: str, schema: Optional[AttributeSchema] = None)\
            -> "SynonymTable":
        return cls(json.loads(text), schema=schema)


@lru_cache(maxsize=1)
def builtin_building_synonyms() -> SynonymTable:
    text = resources.files("surrotext.data").joinpath("building_synonyms.json").read_text()
    return SynonymTable.from_json(text)


# ---------------------------------------------------------------------------
# value surfaces and humanization

HUMANIZED = {
    ("num_stories", 1): ["single-story"],
    ("unoccupied_setpoint_delta", 0.0): ["left unchanged when unoccupied",
                                         "not changed when unoccupied"],
    ("weekend_operation", "closed"): ["closed"],
    ("weekend_operation", "reduced"): ["reduced"],
    ("weekend_operation", "full"): ["full"],
    ("layout_shape", "single_row"): ["single row"],
    ("layout_shape", "offset_rows"): ["offset rows"],
    ("layout_shape", "grid"): ["grid"],
    ("layout_shape", "circular"): ["circular"],
}


def value_surfaces(attribute: str, value, synonyms: Optional[SynonymTable] = None)\
        -> list[str]:
    """Every surface string a caption may legitimately use for a value.

    Humanized forms replace the raw rendering where the grammar needs them
    to scan (a 1 becomes "single-story"); synonyms extend the list.
    Downstream containment checks accept any entry.
    """
    key = (attribute, value)
    if key in HUMANIZED:
        surfaces = list(HUMANIZED[key])
    elif attribute == "num_stories":
        surfaces = [f"{int(value)}-story"]
    elif attribute == "unoccupied_setpoint_delta":
        rendered = format_number(value)
        surfaces = [f"relaxed by {rendered} degrees when unoccupied",
                    f"widened by {rendered} degrees when unoccupied"]
    else:
        surfaces = [format_number(value)]
    if synonyms is not None:
        surfaces.extend(synonyms.lookup(attribute, value))
    return surfaces


# ---------------------------------------------------------------------------
# key-value rendering

def render_kv(attrs: Mapping, schema: AttributeSchema,
              include: Optional[Iterable[str]] = None,
              system_id: Optional[str] = None) -> Caption:
    """``key:value`` pairs joined by ``|`` in schema order."""
    names = _resolve_include(attrs, schema, include)
    pairs, surfaces = [], {}
    for name in names:
        surface = format_number(attrs[name])
        surfaces[name] = surface
        pairs.append(f"{name}:{surface}")
    coverage = {name: PRESENT if name in names else OMITTED
                for name in _caption_universe(attrs, schema)}
    return Caption(text="|".join(pairs), kind="kv", coverage=coverage,
                   system_id=system_id, attributes=dict(attrs), surfaces=surfaces,
                   family=schema.name)


def parse_kv(text: str) -> dict[str, str]:
    """Inverse of render_kv on the included subset (surface strings)."""
    out = {}
    for pair in text.split("|"):
        key, _, value = pair.partition(":")
        if not key or not value:
            raise ContractViolation(f"malformed kv pair {pair!r}")
        out[key] = value
    return out


def _resolve_include(attrs: Mapping, schema: AttributeSchema,
                     include: Optional[Iterable[str]]) -> list[str]:
    if include is None:
        names = [n for n in _caption_universe(attrs, schema)]
    else:
        names = [n for n in schema.attribute_names if n in set(include)]
        unknown = set(include) - set(schema.attribute_names)
        if unknown:
            raise ContractViolation(f"include names not in schema: {sorted(unknown)}")
    require(len(names) > 0, "caption must include at least one attribute")
    for n in names:
        require(n in attrs, f"attribute {n!r} missing from values")
    return names


def _caption_universe(attrs: Mapping, schema: AttributeSchema) -> list[str]:
    """Attributes a caption is accountable for: schema order, restricted to
    the keys the caller actually supplied."""
    return [n for n in schema.attribute_names if n in attrs]


# ---------------------------------------------------------------------------
# natural-language grammar

@dataclass(frozen=True)
class _ClauseSpec:
    attrs: tuple[str, ...]
    templates: tuple[str, ...]


_BUILDING_CLAUSES = (
    _ClauseSpec(("building_type",), (
        "this is a {building_type}",
        "the building operates as a {building_type}",
        "the property is a {building_type}",
        "records describe it as a {building_type}",
    )),
    _ClauseSpec(("sqft",), (
        "it spans {sqft} square feet",
        "the floor area totals {sqft} square feet",
        "it offers {sqft} square feet of space",
    )),
    _ClauseSpec(("num_stories",), (
        "it is a {num_stories} building",
        "the layout is {num_stories}",
        "it presents as a {num_stories} structure",
    )),
    _ClauseSpec(("vintage",), (
        "construction dates to the {vintage} period",
        "it belongs to the {vintage} vintage",
        "the shell was built in the {vintage} era",
    )),
    _ClauseSpec(("weekday_open_hour", "weekday_close_hour"), (
        "weekday operation runs from {weekday_open_hour} to {weekday_close_hour}",
        "it opens at {weekday_open_hour} and closes at {weekday_close_hour} on weekdays",
        "doors are open weekdays between {weekday_open_hour} and {weekday_close_hour}",
    )),
    _ClauseSpec(("weekday_open_hour",), (
        "weekday opening time is {weekday_open_hour}",
    )),
    _ClauseSpec(("weekday_close_hour",), (
        "weekday closing time is {weekday_close_hour}",
    )),
    _ClauseSpec(("weekend_operation",), (
        "weekend operation is {weekend_operation}",
        "on weekends the schedule is {weekend_operation}",
    )),
    _ClauseSpec(("heating_setpoint", "cooling_setpoint"), (
        "occupied setpoints hold {heating_setpoint} degrees for heating and "
        "{cooling_setpoint} degrees for cooling",
        "the thermostat targets {heating_setpoint} degrees in heating mode and "
        "{cooling_setpoint} degrees in cooling mode",
    )),
    _ClauseSpec(("heating_setpoint",), (
        "the occupied heating setpoint is {heating_setpoint} degrees",
        "heating holds {heating_setpoint} degrees during occupancy",
    )),
    _ClauseSpec(("cooling_setpoint",), (
        "the occupied cooling setpoint is {cooling_setpoint} degrees",
        "cooling holds {cooling_setpoint} degrees during occupancy",
    )),
    _ClauseSpec(("unoccupied_setpoint_delta",), (
        "temperature setpoints are {unoccupied_setpoint_delta}",
        "after hours the setpoints are {unoccupied_setpoint_delta}",
    )),
    _ClauseSpec(("hvac_type",), (
        "space conditioning relies on {hvac_type} equipment",
        "the HVAC system type is {hvac_type}",
        "comfort is maintained by {hvac_type} equipment",
    )),
    _ClauseSpec(("lighting_power_density",), (
        "lighting is installed at {lighting_power_density} watts per square foot",
        "the lighting power density measures {lighting_power_density} watts per square foot",
    )),
    _ClauseSpec(("occupant_density",), (
        "occupancy runs about {occupant_density} people per 1,000 square feet",
        "the space houses roughly {occupant_density} occupants per 1,000 square feet",
    )),
)

_WINDFARM_CLAUSES = (
    _ClauseSpec(("layout_shape",), (
        "the turbines are arranged in a {layout_shape} layout",
        "the farm follows a {layout_shape} arrangement",
        "its footprint forms a {layout_shape} pattern",
    )),
    _ClauseSpec(("num_turbines",), (
        "the site counts {num_turbines} turbines",
        "there are {num_turbines} machines on site",
        "the farm operates {num_turbines} turbines",
    )),
    _ClauseSpec(("mean_spacing",), (
        "average spacing comes to {mean_spacing} rotor diameters",
        "turbines sit {mean_spacing} rotor diameters apart on average",
    )),
    _ClauseSpec(("rotor_diameter",), (
        "each rotor measures {rotor_diameter} meters across",
        "the rotor diameter is {rotor_diameter} meters",
    )),
    _ClauseSpec(("rated_power",), (
        "individual turbines are rated at {rated_power} megawatts",
        "each machine delivers up to {rated_power} megawatts",
    )),
)

_FILLERS = {
    "building": (
        "Operations otherwise follow typical patterns for this class of facility.",
        "No unusual equipment loads are reported.",
        "The remaining characteristics match common practice.",
        "Utility interactions are otherwise unremarkable.",
    ),
    "windfarm": (
        "Terrain effects beyond the layout are not modeled.",
        "The electrical collection system is standard.",
        "All machines share the same specification.",
        "No curtailment rules apply to this site.",
    ),
}

_STYLE_OPENERS = {
    "objective": ("", "", ""),
    "objective-paraphrase": ("", "Summarizing the record: ", "In brief: "),
    "colleague": ("Here's what we're looking at: ", "Quick rundown for you: ",
                  "So, about this one: "),
    "classroom": ("Imagine this: ", "Picture the following: ",
                  "Consider an example: "),
}

_STYLE_CONNECTIVES = {
    "objective": (", and ", ", while ", "; ", ", with "),
    "objective-paraphrase": (", and ", "; meanwhile ", "; ", " and "),
    "colleague": (", and ", " - plus ", "; ", ", and note that "),
    "classroom": (", and ", "; remember that ", "; ", ", and "),
}

_GRAMMARS = {"building": _BUILDING_CLAUSES, "windfarm": _WINDFARM_CLAUSES}


def _infer_family(attrs: Mapping) -> str:
    if "building_type" in attrs:
        return "building"
    if "layout_shape" in attrs:
        return "windfarm"
    raise ContractViolation("cannot infer system family from attribute names")


def render_nl(attrs: Mapping, length_class: str, style_tag: str, seed: int,
              schema: Optional[AttributeSchema] = None,
              include: Optional[Iterable[str]] = None,
              synonyms: Optional[SynonymTable] = None,
              system_id: Optional[str] = None,
              family: Optional[str] = None) -> Caption:
    """Seeded grammar expansion of an attribute set into prose."""
    require(length_class in LENGTH_SENTENCES,
            f"unknown length class {length_class!r}; options {sorted(LENGTH_SENTENCES)}")
    require(style_tag in STYLE_TAGS,
            f"unknown style {style_tag!r}; options {list(STYLE_TAGS)}")
    family = family or _infer_family(attrs)
    clauses_spec = _GRAMMARS[family]
    if synonyms is None and family == "building":
        synonyms = builtin_building_synonyms()

    if schema is not None:
        universe = _caption_universe(attrs, schema)
        names = _resolve_include(attrs, schema, include)
    else:
        universe = list(attrs)
        names = list(include) if include is not None else list(attrs)
        require(len(names) > 0, "caption must include at least one attribute")

    rng = random.Random(seed)

    # pick a surface form for every included value
    surfaces: dict[str, str] = {}
    for name in names:
        options = value_surfaces(name, attrs[name], synonyms=synonyms)
        surfaces[name] = rng.choice(options)

    clause_texts = _build_clauses(clauses_spec, names, surfaces, rng,
                                  wide_variety=style_tag == "objective-paraphrase")
    rng.shuffle(clause_texts)

    lo, hi = LENGTH_SENTENCES[length_class]
    target = rng.randint(lo, hi)
    sentences = _assemble_sentences(clause_texts, target, style_tag, rng, family)

    coverage = {name: PRESENT if name in names else OMITTED for name in universe}
    return Caption(text=" ".join(sentences), kind="nl", coverage=coverage,
                   length_class=length_class, style_tag=style_tag,
                   system_id=system_id, attributes=dict(attrs), surfaces=surfaces,
                   render_seed=seed, family=family)


def _build_clauses(specs: Sequence[_ClauseSpec], names: Sequence[str],
                   surfaces: Mapping[str, str], rng: random.Random,
                   wide_variety: bool) -> list[str]:
    remaining = list(names)
    clauses = []
    order = list(names)
    rng.shuffle(order)
    for name in order:
        if name not in remaining:
            continue
        eligible = [s for s in specs
                    if name in s.attrs and all(a in remaining for a in s.attrs)]
        if not eligible:
            raise ContractViolation(f"no clause template covers attribute {name!r}")
        spec = rng.choice(eligible)
        templates = spec.templates if wide_variety else spec.templates[:3]
        template = rng.choice(list(templates))
        clauses.append(template.format(**{a: surfaces[a] for a in spec.attrs}))
        for a in spec.attrs:
            remaining.remove(a)
    return clauses


def _assemble_sentences(clauses: list[str], target: int, style_tag: str,
                        rng: random.Random, family: str) -> list[str]:
    fillers = list(_FILLERS[family])
    rng.shuffle(fillers)
    n_content = min(target, len(clauses))
    sizes = [len(clauses) // n_content] * n_content
    for i in range(len(clauses) % n_content):
        sizes[i] += 1
    rng.shuffle(sizes)

    connectives = _STYLE_CONNECTIVES[style_tag]
    sentences = []
    cursor = 0
    for size in sizes:
        group = clauses[cursor:cursor + size]
        cursor += size
        body = group[0]
        for clause in group[1:]:
            body += rng.choice(connectives) + clause
        sentences.append(body[0].upper() + body[1:] + ".")

    while len(sentences) < target and fillers:
        sentences.append(fillers.pop())

    opener = rng.choice(_STYLE_OPENERS[style_tag])
    if opener:
        sentences[0] = opener + sentences[0][0].lower() + sentences[0][1:]
    return sentences


# ---------------------------------------------------------------------------
# corruption and substitution

def corrupt(cap: Caption, rate: float, seed: int,
            swap_fraction: float = 0.5,
            schema: Optional[AttributeSchema] = None) -> Caption:
    """Independently omit or value-swap each attribute with probability
    ``rate`` and re-render; simulates generation errors for metric
    calibration. Swapped categoricals draw uniformly over all categories,
    so a swap may land on the original value (still flagged corrupted)."""
    require(cap.kind == "nl", "corrupt operates on natural-language captions")
    require(0.0 <= rate <= 1.0, "rate must be in [0, 1]")
    require(cap.attributes is not None, "caption lacks attribute provenance")
    if rate == 0.0:
        return replace(cap, coverage=dict(cap.coverage),
                       attributes=dict(cap.attributes), surfaces=dict(cap.surfaces))

    rng = random.Random(seed)
    attrs = dict(cap.attributes)
    include = cap.present_attributes()
    flags = dict(cap.coverage)
    for name in list(include):
        if rng.random() >= rate:
            continue
        if rng.random() < swap_fraction:
            attrs[name] = _swap_value(name, attrs[name], rng, schema, cap.family)
            flags[name] = CORRUPTED
        else:
            include.remove(name)
            flags[name] = OMITTED

    if not include:
        # a caption needs at least one clause; keep one attribute in the
        # text but with a swapped value, still flagged as corrupted
        name = rng.choice(cap.present_attributes())
        attrs[name] = _swap_value(name, cap.attributes[name], rng, schema, cap.family)
        flags[name] = CORRUPTED
        include = [name]
    rendered = render_nl(attrs, cap.length_class or "medium",
                         cap.style_tag or "objective",
                         cap.render_seed if cap.render_seed is not None else seed,
                         include=include, system_id=cap.system_id,
                         family=cap.family)
    return replace(rendered, coverage=flags, attributes=dict(cap.attributes),
                   source=cap.source)


def _swap_value(name: str, value, rng: random.Random,
                schema: Optional[AttributeSchema], family: Optional[str]):
    spec = None
    if schema is not None:
        spec = schema.spec(name)
    else:
        spec = _default_schema_for(family).spec(name) if family else None
    if spec is None:
        raise ContractViolation(f"cannot swap {name!r} without a schema")
    if spec.kind == CATEGORICAL:
        return rng.choice(list(spec.categories))
    low = spec.low if spec.low is not None else 0.0
    high = spec.high if spec.high is not None else max(float(value) * 4.0, 1.0)
    raw = rng.uniform(low, high)
    if spec.kind == "integer":
        return int(round(raw))
    return float(f"{raw:.3g}")


def _default_schema_for(family: str) -> AttributeSchema:
    from . import simulators
    if family == "building":
        return simulators.building_schema()
    if family == "windfarm":
        return simulators.windfarm_schema()
    raise ContractViolation(f"unknown system family {family!r}")


def substitute_synonym(cap: Caption, attribute: str, table: SynonymTable,
                       mode: str, seed: int) -> Caption:
    """Targeted caption edits for the robustness suites.

    ``synonym`` swaps the rendered surface string in place; ``remove``
    re-renders without the attribute; ``randomize`` surfaces a different
    category chosen uniformly at random (never the original).
    """
    require(mode in ("synonym", "remove", "randomize"), f"unknown mode {mode!r}")
    require(cap.coverage.get(attribute) == PRESENT,
            f"attribute {attribute!r} is not present in this caption")
    require(cap.attributes is not None, "caption lacks attribute provenance")
    rng = random.Random(seed)
    old_surface = cap.surfaces.get(attribute)
    require(old_surface is not None and old_surface in cap.text,
            f"no rendered surface recorded for {attribute!r}")

    if mode == "synonym":
        options = table.lookup(attribute, cap.attributes[attribute])
        require(len(options) > 0, f"no synonyms for {attribute}="
                                  f"{cap.attributes[attribute]!r}")
        new_surface = rng.choice(options)
        flags = dict(cap.coverage)
        new_attrs = dict(cap.attributes)
    elif mode == "randomize":
        spec = _default_schema_for(cap.family or _infer_family(cap.attributes))\
            .spec(attribute)
        require(spec.kind == CATEGORICAL, "randomize applies to categorical attributes")
        others = [c for c in spec.categories if c != cap.attributes[attribute]]
        new_value = rng.choice(others)
        new_surface = new_value
        flags = dict(cap.coverage, **{attribute: CORRUPTED})
        new_attrs = dict(cap.attributes, **{attribute: new_value})
    else:  # remove
        if cap.kind == "kv":
            pairs = [p for p in cap.text.split("|")
                     if not p.startswith(f"{attribute}:")]
            require(len(pairs) > 0, "cannot remove the only attribute")
            flags = dict(cap.coverage, **{attribute: OMITTED})
            surfaces = {k: v for k, v in cap.surfaces.items() if k != attribute}
            return replace(cap, text="|".join(pairs), coverage=flags,
                           surfaces=surfaces, attributes=dict(cap.attributes))
        include = [a for a in cap.present_attributes() if a != attribute]
        require(len(include) > 0, "cannot remove the only attribute")
        rendered = render_nl(cap.attributes, cap.length_class or "medium",
                             cap.style_tag or "objective",
                             cap.render_seed if cap.render_seed is not None else seed,
                             include=include, system_id=cap.system_id,
                             family=cap.family)
        flags = dict(cap.coverage, **{attribute: OMITTED})
        return replace(rendered, coverage=flags, attributes=dict(cap.attributes),
                       source=cap.source)

    text = cap.text.replace(old_surface, new_surface)
    surfaces = dict(cap.surfaces, **{attribute: new_surface})
    return replace(cap, text=text, coverage=flags, surfaces=surfaces,
                   attributes=new_attrs)


# ---------------------------------------------------------------------------
# prompt construction for external caption generators

DEFAULT_SYSTEM_PROMPT = "You are a <CES> expert who provides <CES> descriptions <STYLE>."
DEFAULT_USER_PROMPT = (
    "Write a <CES> description based on the following attributes. Your answer "
    "should be <NUM> sentences. Please note that your response should NOT be a "
    "list of attributes and should be entirely based on the information provided."
)


@dataclass(frozen=True)
class PromptTemplate:
    ces: str
    style: str
    num_sentences: str
    system_text: str = DEFAULT_SYSTEM_PROMPT
    user_text: str = DEFAULT_USER_PROMPT

    def render_system(self) -> str:
        return self.system_text.replace("<CES>", self.ces).replace("<STYLE>", self.style)

    def render_user(self) -> str:
        return self.user_text.replace("<CES>", self.ces).replace("<NUM>", self.num_sentences)


def build_prompt(attrs: Mapping, template: PromptTemplate,
                 schema: Optional[AttributeSchema] = None) -> str:
    """System text, user instruction and the key-value attribute listing."""
    require(len(attrs) > 0, "cannot build a prompt for an empty attribute list")
    for slot, value in (("ces", template.ces), ("style", template.style),
                        ("num_sentences", template.num_sentences)):
        require(bool(value), f"prompt slot {slot!r} is empty")
    if schema is not None:
        listing = render_kv(attrs, schema).text
    else:
        listing = "|".join(f"{k}:{format_number(v)}" for k, v in attrs.items())
    prompt = "\n\n".join([template.render_system(), template.render_user(), listing])
    unresolved = re.findall(r"<[A-Z]+>", prompt)
    require(not unresolved, f"prompt contains unresolved tags: {unresolved}")
    return prompt
