"""Structoid schemas: declarative templates for structural metadata.

A schema prescribes a label vocabulary with ordering and occurrence bounds
(the grammar) and per-label MIME constraints on the referenced datastreams
(the rules). Validation reports findings rather than raising; only
precondition breaches are errors.
"""

from __future__ import annotations

import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from importlib import resources

from .objects import DigitalObject, Structoid

CORNELL_IMAGE_TYPE = "http://www.cornell.edu/structoids/Image#Cornell_ImageType"
TEXT_DOCUMENT_TYPE = "http://www.cornell.edu/structoids/Text#TextDocumentType"

ERROR = "error"
INFO = "info"

UNKNOWN_LABEL = "unknown-label"
LABEL_ORDER = "label-order"
LABEL_COUNT = "label-count"
MIME_RULE = "mime-rule"
MIME_OK = "mime-ok"


class SchemaError(Exception):
    pass


class MalformedSchema(SchemaError):
    pass


class DuplicateLabel(SchemaError):
    def __init__(self, name: str):
        super().__init__(f"duplicate label {name!r}")
        self.name = name


class UnknownSchema(SchemaError):
    def __init__(self, schema_uri: str):
        super().__init__(f"no schema registered for {schema_uri!r}")
        self.schema_uri = schema_uri


class UnresolvedRole(SchemaError):
    """Rule validation was handed a role whose DSID is absent from the object."""


@dataclass(frozen=True)
class LabelSpec:
    """One label in the vocabulary: occurrence bounds and allowed MIME types.

    ``max_occurs`` of None means unbounded; an empty ``allowed_mimes`` accepts
    any MIME type.
    """

    name: str
    min_occurs: int = 1
    max_occurs: int | None = 1
    allowed_mimes: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "allowed_mimes", tuple(self.allowed_mimes))
        if self.min_occurs < 0:
            raise MalformedSchema(f"label {self.name!r}: minOccurs must be non-negative")
        if self.max_occurs is not None and self.max_occurs < 1:
            raise MalformedSchema(f"label {self.name!r}: maxOccurs must be positive")
        if self.max_occurs is not None and self.min_occurs > self.max_occurs:
            raise MalformedSchema(f"label {self.name!r}: minOccurs exceeds maxOccurs")

    def accepts_mime(self, mime: str) -> bool:
        return not self.allowed_mimes or mime in self.allowed_mimes

    def mime_set_text(self) -> str:
        return " or ".join(self.allowed_mimes)


@dataclass(frozen=True)
class StructoidSchema:
    schema_uri: str
    labels: tuple[LabelSpec, ...]
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.labels:
            raise MalformedSchema(f"schema {self.schema_uri!r} declares no labels")
        seen = set()
        for spec in self.labels:
            if spec.name in seen:
                raise DuplicateLabel(spec.name)
            seen.add(spec.name)

    def label(self, name: str) -> LabelSpec | None:
        for spec in self.labels:
            if spec.name == name:
                return spec
        return None

    def label_names(self) -> tuple[str, ...]:
        return tuple(spec.name for spec in self.labels)


@dataclass(frozen=True)
class Finding:
    severity: str
    kind: str
    label: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    grammar_findings: tuple[Finding, ...] = ()
    rule_findings: tuple[Finding, ...] = ()

    @property
    def valid(self) -> bool:
        return not any(
            f.severity == ERROR for f in (*self.grammar_findings, *self.rule_findings)
        )


def parse_schema(document: bytes) -> StructoidSchema:
    """Parse a structoid-schema document (SSD format).

    Root ``StructoidSchema`` with a ``uri`` attribute; ``Label`` children with
    ``name``/``minOccurs``/``maxOccurs`` attributes and ``MIME`` children
    (none = any MIME). An optional leading ``description`` element is allowed.
    """
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise MalformedSchema(f"not well-formed XML: {exc}") from None
    if root.tag != "StructoidSchema":
        raise MalformedSchema(f"unexpected root element {root.tag!r}")
    uri = root.get("uri")
    if not uri:
        raise MalformedSchema("StructoidSchema requires a uri attribute")
    description = ""
    labels: list[LabelSpec] = []
    for child in root:
        if child.tag == "description" and not labels:
            description = child.text or ""
        elif child.tag == "Label":
            labels.append(_parse_label(child))
        else:
            raise MalformedSchema(f"unexpected element {child.tag!r} in schema {uri!r}")
    return StructoidSchema(uri, tuple(labels), description)


def _parse_label(elem: ET.Element) -> LabelSpec:
    name = elem.get("name")
    if not name:
        raise MalformedSchema("Label requires a name attribute")
    try:
        min_occurs = int(elem.get("minOccurs", "1"))
    except ValueError:
        raise MalformedSchema(f"label {name!r}: bad minOccurs") from None
    raw_max = elem.get("maxOccurs", "1")
    if raw_max == "unbounded":
        max_occurs = None
    else:
        try:
            max_occurs = int(raw_max)
        except ValueError:
            raise MalformedSchema(f"label {name!r}: bad maxOccurs") from None
    mimes = []
    for mime_elem in elem:
        if mime_elem.tag != "MIME":
            raise MalformedSchema(f"label {name!r}: unexpected element {mime_elem.tag!r}")
        mimes.append((mime_elem.text or "").strip())
    return LabelSpec(name, min_occurs, max_occurs, tuple(mimes))


def validate_grammar(structoid: Structoid, schema: StructoidSchema) -> list[Finding]:
    """Check the structoid's label sequence against the schema grammar.

    Returns error findings for unknown labels, labels out of declared order,
    and occurrence counts outside [min, max]. Empty iff the sequence is
    accepted by the ordered-occurrence grammar.
    """
    findings: list[Finding] = []
    index = {spec.name: i for i, spec in enumerate(schema.labels)}

    unknown_seen: set[str] = set()
    order_seen: set[str] = set()
    highest = -1
    for label in structoid.labels:
        if label not in index:
            if label not in unknown_seen:
                unknown_seen.add(label)
                findings.append(
                    Finding(ERROR, UNKNOWN_LABEL, label, f"{label} is not a label of {schema.schema_uri}")
                )
            continue
        pos = index[label]
        if pos < highest:
            if label not in order_seen:
                order_seen.add(label)
                findings.append(
                    Finding(ERROR, LABEL_ORDER, label, f"{label} appears out of declared order")
                )
        else:
            highest = pos

    counts = {name: 0 for name in index}
    for label in structoid.labels:
        if label in counts:
            counts[label] += 1
    for spec in schema.labels:
        count = counts[spec.name]
        if count < spec.min_occurs or (spec.max_occurs is not None and count > spec.max_occurs):
            bound = "unbounded" if spec.max_occurs is None else spec.max_occurs
            findings.append(
                Finding(
                    ERROR,
                    LABEL_COUNT,
                    spec.name,
                    f"{spec.name} occurs {count} times; allowed [{spec.min_occurs}, {bound}]",
                )
            )
    return findings


def validate_rules(
    structoid: Structoid, obj: DigitalObject, schema: StructoidSchema
) -> list[Finding]:
    """Check each role's referenced datastream MIME against the label's rule.

    Produces one finding per role: an error when the MIME is outside the
    label's allowed set, an info finding when it passes. Depends only on the
    object's DSID -> MIME map, never on content bytes.
    """
    mimes = obj.mime_map()
    findings: list[Finding] = []
    for role in structoid.roles:
        spec = schema.label(role.label)
        if spec is None:
            continue  # grammar validation reports unknown labels
        if role.target_dsid not in mimes:
            raise UnresolvedRole(
                f"role {role.label!r} of structoid {structoid.sid!r} references "
                f"unknown datastream {role.target_dsid!r}; run check_integrity first"
            )
        if spec.accepts_mime(mimes[role.target_dsid]):
            findings.append(Finding(INFO, MIME_OK, role.label, f"{role.label} -- valid."))
        else:
            findings.append(
                Finding(
                    ERROR,
                    MIME_RULE,
                    role.label,
                    f"{role.label} -- invalid. It must refer to DataStream of MIME "
                    f"{spec.mime_set_text()}.",
                )
            )
    return findings


def validate_structoid(
    structoid: Structoid, obj: DigitalObject, schema: StructoidSchema
) -> ValidationReport:
    grammar = validate_grammar(structoid, schema)
    rules = validate_rules(structoid, obj, schema)
    return ValidationReport(tuple(grammar), tuple(rules))


class SchemaRegistry:
    """Registry of structoid schemas keyed by their canonical identifier.

    Reads are lock-free; registration is serialized.
    """

    def __init__(self):
        self._schemas: dict[str, StructoidSchema] = {}
        self._lock = threading.Lock()

    def register(self, schema: StructoidSchema) -> None:
        with self._lock:
            self._schemas[schema.schema_uri] = schema

    def resolve(self, schema_uri: str) -> StructoidSchema:
        try:
            return self._schemas[schema_uri]
        except KeyError:
            raise UnknownSchema(schema_uri) from None

    def maybe_resolve(self, schema_uri: str) -> StructoidSchema | None:
        return self._schemas.get(schema_uri)

    def uris(self) -> list[str]:
        return list(self._schemas)


_SEED_FILES = ("cornell_image_type.xml", "text_document_type.xml")


def default_registry() -> SchemaRegistry:
    """A fresh registry pre-seeded with the bundled schemas."""
    registry = SchemaRegistry()
    data = resources.files("contextbroker") / "data"
    for name in _SEED_FILES:
        registry.register(parse_schema((data / name).read_bytes()))
    return registry


def resolve_schema(schema_uri: str, registry: SchemaRegistry) -> StructoidSchema:
    return registry.resolve(schema_uri)
