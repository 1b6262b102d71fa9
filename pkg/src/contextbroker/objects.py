"""Digital-object document model.

A digital object is a container aggregating datastreams (typed byte
components), structoids (labeled access points into those components), and
disseminators (static behavior bindings). This module parses, validates,
serializes, and transforms the XML document form of such objects.

All types are immutable after construction and safe to share across
concurrent request handlers.
"""

from __future__ import annotations

import io
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable, Iterator
from urllib.parse import quote
from xml.sax.saxutils import escape, quoteattr

DO_NAMESPACE = "http://www.cornell.edu/DO"
XSI_NAMESPACE = "http://www.w3.org/2001/XMLSchema-instance"
XLINK_NAMESPACE = "http://www.w3.org/TR/xlink"
XLINK_1999_NAMESPACE = "http://www.w3.org/1999/xlink"

_MIME_TOKEN = r"[A-Za-z0-9!#$%&'*+.^_`|~-]+"
_MIME_RE = re.compile(rf"^{_MIME_TOKEN}/{_MIME_TOKEN}$")

# Violation kinds reported by check_integrity
DUPLICATE_ID = "duplicate-id"
DANGLING_REFERENCE = "dangling-reference"
BAD_MIME = "bad-mime"
EMPTY_LABEL = "empty-label"


class ObjectError(Exception):
    """Base class for digital-object document errors."""


class MalformedDocument(ObjectError):
    """Document is not well-formed or not in the expected vocabulary."""


class DuplicateId(ObjectError):
    """A DSID, SID, or DID collides with another in the same object."""

    def __init__(self, identifier: str, message: str | None = None):
        super().__init__(message or f"duplicate identifier {identifier!r}")
        self.identifier = identifier


class DanglingReference(ObjectError):
    """A role DSID or disseminator StructoidID does not resolve."""

    def __init__(self, identifier: str, message: str | None = None):
        super().__init__(message or f"unresolved reference {identifier!r}")
        self.identifier = identifier


@dataclass(frozen=True)
class DataStream:
    dsid: str
    mime: str
    descriptor: str
    bytes_ref: str


@dataclass(frozen=True)
class Role:
    """One labeled access point: label name plus the datastream it targets."""

    label: str
    target_dsid: str


@dataclass(frozen=True)
class Structoid:
    """A unit of structural metadata: labeled access points typed by a schema.

    ``schema_uri`` is the canonical structoid-schema identifier in the form
    ``<namespace>#<TypeName>`` (derived from the instance's xsi:type).
    """

    sid: str
    schema_uri: str
    descriptor: str
    roles: tuple[Role, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(self.roles))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(role.label for role in self.roles)


@dataclass(frozen=True)
class Disseminator:
    did: str
    descriptor: str
    behavior_interface_id: str
    behavior_mechanism_id: str
    structoid_sid: str


@dataclass(frozen=True)
class DigitalObject:
    object_id: str
    datastreams: tuple[DataStream, ...] = ()
    structoids: tuple[Structoid, ...] = ()
    disseminators: tuple[Disseminator, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "datastreams", tuple(self.datastreams))
        object.__setattr__(self, "structoids", tuple(self.structoids))
        object.__setattr__(self, "disseminators", tuple(self.disseminators))

    def datastream(self, dsid: str) -> DataStream | None:
        for ds in self.datastreams:
            if ds.dsid == dsid:
                return ds
        return None

    def structoid(self, sid: str) -> Structoid | None:
        for s in self.structoids:
            if s.sid == sid:
                return s
        return None

    def mime_map(self) -> dict[str, str]:
        """DSID -> declared MIME type for every datastream."""
        return {ds.dsid: ds.mime for ds in self.datastreams}


@dataclass(frozen=True)
class PublicRole:
    """Public access point: dereferenceable URL instead of an internal DSID.

    ``dsid`` is kept only when a harvested record exposed an internal id
    rather than a URL; consumers then fall back to the repository's
    content-fetch URL template.
    """

    label: str
    href: str | None = None
    dsid: str | None = None


@dataclass(frozen=True)
class PublicStructoid:
    sid: str
    schema_uri: str
    descriptor: str
    roles: tuple[PublicRole, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "roles", tuple(self.roles))


@dataclass(frozen=True)
class Violation:
    kind: str
    path: str
    offending_id: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.path}: {self.offending_id!r}"


def _tag(ns: str, local: str) -> str:
    return f"{{{ns}}}{local}"


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _tag_ns(tag: str) -> str:
    if tag.startswith("{"):
        return tag[1:].split("}", 1)[0]
    return ""


def split_schema_uri(schema_uri: str) -> tuple[str, str]:
    """Split a canonical ``namespace#TypeName`` schema identifier."""
    ns, sep, name = schema_uri.rpartition("#")
    if not sep or not ns or not name:
        raise ValueError(
            f"schema identifier {schema_uri!r} is not of the form namespace#TypeName"
        )
    return ns, name


def _stream_events(document: bytes):
    parser = ET.XMLPullParser(events=("start-ns", "start", "end"))
    parser.feed(document)
    parser.close()
    return parser.read_events()


def parse_object(
    document: bytes, *, do_namespaces: Iterable[str] = (DO_NAMESPACE,)
) -> DigitalObject:
    """Parse an XML digital-object document.

    Raises MalformedDocument for well-formedness or vocabulary problems,
    DuplicateId / DanglingReference when key/keyref integrity fails. The
    returned object always satisfies all invariants.
    """
    accepted = tuple(do_namespaces)
    root: ET.Element | None = None
    do_ns = ""
    # xsi:type values resolve against in-scope namespace prefixes, which
    # ElementTree does not retain on the tree; capture them during the event
    # stream, in document order.
    structoid_types: list[str] = []
    ns_stack: list[dict[str, str]] = [{}]
    pending: list[tuple[str, str]] = []
    depth = 0

    try:
        events = _stream_events(document)
    except ET.ParseError as exc:
        raise MalformedDocument(f"not well-formed XML: {exc}") from None

    for kind, payload in events:
        if kind == "start-ns":
            pending.append(payload)
        elif kind == "start":
            elem = payload
            nsmap = {**ns_stack[-1], **dict(pending)} if pending else ns_stack[-1]
            pending = []
            ns_stack.append(nsmap)
            depth += 1
            if depth == 1:
                root = elem
                do_ns = _tag_ns(elem.tag)
                if do_ns not in accepted or _local_name(elem.tag) != "DigitalObject":
                    raise MalformedDocument(
                        f"unexpected root element {elem.tag!r}; expected DigitalObject "
                        f"in one of {accepted}"
                    )
            elif depth == 2 and elem.tag == _tag(do_ns, "Structoid"):
                structoid_types.append(_resolve_xsi_type(elem, nsmap))
        else:  # end
            ns_stack.pop()
            depth -= 1

    if root is None:
        raise MalformedDocument("empty document")

    obj = _build_object(root, do_ns, structoid_types)
    _raise_first_violation(check_integrity(obj))
    return obj


def _resolve_xsi_type(elem: ET.Element, nsmap: dict[str, str]) -> str:
    sid = elem.get("SID", "?")
    value = elem.get(_tag(XSI_NAMESPACE, "type"))
    if value is None:
        raise MalformedDocument(f"Structoid {sid!r} has no xsi:type")
    prefix, _, local = value.rpartition(":")
    ns = nsmap.get(prefix)
    if not ns or not local:
        raise MalformedDocument(
            f"Structoid {sid!r}: cannot resolve xsi:type {value!r} "
            f"(unbound prefix {prefix!r})"
        )
    return f"{ns}#{local}"


def _required_attr(elem: ET.Element, name: str) -> str:
    value = elem.get(name)
    if not value:
        raise MalformedDocument(f"element {_local_name(elem.tag)} missing required attribute {name}")
    return value


def _child_text(elem: ET.Element) -> str:
    if len(elem):
        raise MalformedDocument(f"element {_local_name(elem.tag)} must not have children")
    return elem.text or ""


def _build_object(root: ET.Element, do_ns: str, structoid_types: list[str]) -> DigitalObject:
    object_id = _required_attr(root, "DigitalObjectID")
    datastreams: list[DataStream] = []
    structoids: list[Structoid] = []
    disseminators: list[Disseminator] = []
    # Appendix-A document order: all DataStreams, then Structoids, then
    # Disseminators.
    phase_of = {
        _tag(do_ns, "DataStream"): 0,
        _tag(do_ns, "Structoid"): 1,
        _tag(do_ns, "Disseminator"): 2,
    }
    phase = 0
    type_iter = iter(structoid_types)
    for child in root:
        child_phase = phase_of.get(child.tag)
        if child_phase is None:
            raise MalformedDocument(f"unexpected element {child.tag!r} in DigitalObject")
        if child_phase < phase:
            raise MalformedDocument(
                f"element {_local_name(child.tag)} out of order "
                "(expected DataStream* Structoid* Disseminator*)"
            )
        phase = child_phase
        if child_phase == 0:
            datastreams.append(_build_datastream(child, do_ns))
        elif child_phase == 1:
            structoids.append(_build_structoid(child, do_ns, next(type_iter)))
        else:
            disseminators.append(_build_disseminator(child, do_ns))
    return DigitalObject(object_id, tuple(datastreams), tuple(structoids), tuple(disseminators))


def _build_datastream(elem: ET.Element, do_ns: str) -> DataStream:
    dsid = _required_attr(elem, "DSID")
    expected = [_tag(do_ns, "MIME"), _tag(do_ns, "descriptor"), _tag(do_ns, "bytes")]
    children = list(elem)
    if [c.tag for c in children] != expected:
        raise MalformedDocument(
            f"DataStream {dsid!r} must contain exactly MIME, descriptor, bytes in order"
        )
    mime = _child_text(children[0]).strip()
    descriptor = _child_text(children[1])
    bytes_elem = children[2]
    href = (
        bytes_elem.get(_tag(XLINK_NAMESPACE, "href"))
        or bytes_elem.get(_tag(XLINK_1999_NAMESPACE, "href"))
        or bytes_elem.get("href")
    )
    if not href:
        raise MalformedDocument(f"DataStream {dsid!r}: bytes element has no href locator")
    if len(bytes_elem):
        raise MalformedDocument(f"DataStream {dsid!r}: bytes element must be empty")
    return DataStream(dsid, mime, descriptor, href)


def _build_structoid(elem: ET.Element, do_ns: str, schema_uri: str) -> Structoid:
    sid = _required_attr(elem, "SID")
    children = list(elem)
    if not children or children[0].tag != _tag(do_ns, "descriptor"):
        raise MalformedDocument(f"Structoid {sid!r} must start with a descriptor element")
    descriptor = _child_text(children[0])
    schema_ns, _ = split_schema_uri(schema_uri)
    roles: list[Role] = []
    for role_elem in children[1:]:
        if _tag_ns(role_elem.tag) != schema_ns:
            raise MalformedDocument(
                f"Structoid {sid!r}: role element {role_elem.tag!r} is not in the "
                f"structoid's type namespace {schema_ns!r}"
            )
        if len(role_elem):
            # Appendix-A keyref reaches only one level deep; nested labels are
            # future work and rejected outright.
            raise MalformedDocument(
                f"Structoid {sid!r}: role {_local_name(role_elem.tag)!r} has nested "
                "elements (only one level deep allowed)"
            )
        roles.append(Role(_local_name(role_elem.tag), _required_attr(role_elem, "DSID")))
    return Structoid(sid, schema_uri, descriptor, tuple(roles))


def _build_disseminator(elem: ET.Element, do_ns: str) -> Disseminator:
    did = _required_attr(elem, "DID")
    structoid_sid = _required_attr(elem, "StructoidID")
    expected = [
        _tag(do_ns, "descriptor"),
        _tag(do_ns, "BehaviorInterfaceID"),
        _tag(do_ns, "BehaviorMechanismID"),
    ]
    children = list(elem)
    if [c.tag for c in children] != expected:
        raise MalformedDocument(
            f"Disseminator {did!r} must contain exactly descriptor, "
            "BehaviorInterfaceID, BehaviorMechanismID in order"
        )
    return Disseminator(
        did,
        _child_text(children[0]),
        _child_text(children[1]).strip(),
        _child_text(children[2]).strip(),
        structoid_sid,
    )


def _raise_first_violation(violations: list[Violation]) -> None:
    if not violations:
        return
    first = violations[0]
    if first.kind == DUPLICATE_ID:
        raise DuplicateId(first.offending_id)
    if first.kind == DANGLING_REFERENCE:
        raise DanglingReference(first.offending_id)
    raise MalformedDocument(str(first))


def check_integrity(obj: DigitalObject) -> list[Violation]:
    """Check all object invariants; returns an empty list iff they hold.

    Accepts programmatically built objects, not only parsed ones. Violations
    are data, not errors; the list order is deterministic (duplicates, bad
    MIME, empty labels, dangling references).
    """
    violations: list[Violation] = []

    seen_ds: set[str] = set()
    for i, ds in enumerate(obj.datastreams):
        if ds.dsid in seen_ds:
            violations.append(Violation(DUPLICATE_ID, f"DataStream[{i}]", ds.dsid))
        seen_ds.add(ds.dsid)
    seen_sid: set[str] = set()
    for i, s in enumerate(obj.structoids):
        if s.sid in seen_sid:
            violations.append(Violation(DUPLICATE_ID, f"Structoid[{i}]", s.sid))
        seen_sid.add(s.sid)
    seen_did: set[str] = set()
    for i, d in enumerate(obj.disseminators):
        if d.did in seen_did:
            violations.append(Violation(DUPLICATE_ID, f"Disseminator[{i}]", d.did))
        seen_did.add(d.did)

    for i, ds in enumerate(obj.datastreams):
        if not _MIME_RE.match(ds.mime):
            violations.append(Violation(BAD_MIME, f"DataStream[{ds.dsid}]/MIME", ds.mime))

    for s in obj.structoids:
        for j, role in enumerate(s.roles):
            if not role.label:
                violations.append(Violation(EMPTY_LABEL, f"Structoid[{s.sid}]/role[{j}]", s.sid))

    dsids = {ds.dsid for ds in obj.datastreams}
    for s in obj.structoids:
        for role in s.roles:
            if role.target_dsid not in dsids:
                violations.append(
                    Violation(
                        DANGLING_REFERENCE,
                        f"Structoid[{s.sid}]/{role.label}",
                        role.target_dsid,
                    )
                )
    sids = {s.sid for s in obj.structoids}
    for d in obj.disseminators:
        if d.structoid_sid not in sids:
            violations.append(
                Violation(DANGLING_REFERENCE, f"Disseminator[{d.did}]", d.structoid_sid)
            )
    return violations


def serialize_object(obj: DigitalObject) -> bytes:
    """Serialize to the canonical XML form.

    The output is deterministic: re-parsing yields an equal object, and
    serializing that parse reproduces the same bytes.
    """
    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    attrs = [
        f"DigitalObjectID={quoteattr(obj.object_id)}",
        f"xmlns={quoteattr(DO_NAMESPACE)}",
    ]
    if obj.datastreams:
        attrs.append(f"xmlns:xlink={quoteattr(XLINK_NAMESPACE)}")
    if obj.structoids:
        attrs.append(f"xmlns:xsi={quoteattr(XSI_NAMESPACE)}")
    if not (obj.datastreams or obj.structoids or obj.disseminators):
        out.write(f"<DigitalObject {' '.join(attrs)}/>\n")
        return out.getvalue().encode("utf-8")
    out.write(f"<DigitalObject {' '.join(attrs)}>\n")
    for ds in obj.datastreams:
        out.write(f"  <DataStream DSID={quoteattr(ds.dsid)}>\n")
        out.write(f"    <MIME>{escape(ds.mime)}</MIME>\n")
        out.write(f"    {_text_element('descriptor', ds.descriptor)}\n")
        out.write(f"    <bytes xlink:href={quoteattr(ds.bytes_ref)}/>\n")
        out.write("  </DataStream>\n")
    for s in obj.structoids:
        ns, type_name = split_schema_uri(s.schema_uri)
        out.write(
            f"  <Structoid SID={quoteattr(s.sid)} "
            f"xsi:type={quoteattr('s:' + type_name)} xmlns:s={quoteattr(ns)}>\n"
        )
        out.write(f"    {_text_element('descriptor', s.descriptor)}\n")
        for role in s.roles:
            out.write(f"    <s:{role.label} DSID={quoteattr(role.target_dsid)}/>\n")
        out.write("  </Structoid>\n")
    for d in obj.disseminators:
        out.write(
            f"  <Disseminator DID={quoteattr(d.did)} StructoidID={quoteattr(d.structoid_sid)}>\n"
        )
        out.write(f"    {_text_element('descriptor', d.descriptor)}\n")
        out.write(f"    {_text_element('BehaviorInterfaceID', d.behavior_interface_id)}\n")
        out.write(f"    {_text_element('BehaviorMechanismID', d.behavior_mechanism_id)}\n")
        out.write("  </Disseminator>\n")
    out.write("</DigitalObject>\n")
    return out.getvalue().encode("utf-8")


def _text_element(name: str, text: str) -> str:
    if not text:
        return f"<{name}/>"
    return f"<{name}>{escape(text)}</{name}>"


def datastream_url(base_url: str, object_id: str, dsid: str) -> str:
    """Content-fetch URL for one datastream of one object."""
    return (
        f"{base_url.rstrip('/')}/objects/{quote(object_id, safe='')}"
        f"/datastreams/{quote(dsid, safe='')}"
    )


def public_view(structoid: Structoid, base_url: str, object_id: str) -> PublicStructoid:
    """Rewrite a structoid's access points as dereferenceable content URLs.

    Labels, ordering, and all non-target fields are preserved.
    """
    roles = tuple(
        PublicRole(role.label, href=datastream_url(base_url, object_id, role.target_dsid))
        for role in structoid.roles
    )
    return PublicStructoid(structoid.sid, structoid.schema_uri, structoid.descriptor, roles)


def serialize_public_structoid(ps: PublicStructoid, indent: int = 0) -> str:
    """XML fragment for a public structoid (harvest wire form).

    The schema identifier travels as a plain ``schemaURI`` attribute and roles
    as ``role`` elements, so harvesters need no QName resolution.
    """
    pad = " " * indent
    lines = [f"{pad}<Structoid SID={quoteattr(ps.sid)} schemaURI={quoteattr(ps.schema_uri)}>"]
    lines.append(f"{pad}  {_text_element('descriptor', ps.descriptor)}")
    for role in ps.roles:
        target = (
            f"href={quoteattr(role.href)}" if role.href else f"DSID={quoteattr(role.dsid or '')}"
        )
        lines.append(f"{pad}  <role label={quoteattr(role.label)} {target}/>")
    lines.append(f"{pad}</Structoid>")
    return "\n".join(lines)


def parse_public_structoid(elem: ET.Element) -> PublicStructoid:
    sid = _required_attr(elem, "SID")
    schema_uri = _required_attr(elem, "schemaURI")
    descriptor = ""
    roles: list[PublicRole] = []
    for child in elem:
        local = _local_name(child.tag)
        if local == "descriptor":
            descriptor = child.text or ""
        elif local == "role":
            label = _required_attr(child, "label")
            roles.append(PublicRole(label, href=child.get("href"), dsid=child.get("DSID")))
        else:
            raise MalformedDocument(f"unexpected element {child.tag!r} in public structoid {sid!r}")
    return PublicStructoid(sid, schema_uri, descriptor, tuple(roles))


def iter_public_structoids(container: ET.Element) -> Iterator[PublicStructoid]:
    for child in container:
        if _local_name(child.tag) == "Structoid":
            yield parse_public_structoid(child)
