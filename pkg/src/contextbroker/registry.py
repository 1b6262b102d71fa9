"""Behavior registry: mechanisms, their input templates, and matching.

Each entry records how to obtain a behavior mechanism, the structoid schema
it requires as its input template, and the behaviors it offers. Matching a
set of structoids against the registry is exact schema-identifier equality.
"""

from __future__ import annotations

import json
import threading
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union
from urllib.parse import quote
from xml.sax.saxutils import escape, quoteattr

PARAM_TYPES = ("string", "integer", "boolean")


class RegistryError(Exception):
    pass


class InvalidManifest(RegistryError):
    pass


class UnknownMechanism(RegistryError):
    def __init__(self, mechanism_id: str):
        super().__init__(f"no mechanism registered under {mechanism_id!r}")
        self.mechanism_id = mechanism_id


@dataclass(frozen=True)
class Param:
    name: str
    type: str = "string"
    required: bool = False

    def __post_init__(self):
        if self.type not in PARAM_TYPES:
            raise InvalidManifest(f"param {self.name!r}: unknown type {self.type!r}")


@dataclass(frozen=True)
class BehaviorSignature:
    name: str
    output_mime: str
    params: tuple[Param, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(self.params))
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise InvalidManifest(f"behavior {self.name!r}: duplicate param names")


@dataclass(frozen=True)
class BehaviorInterface:
    interface_id: str
    behaviors: tuple[BehaviorSignature, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "behaviors", tuple(self.behaviors))

    def behavior(self, name: str) -> BehaviorSignature | None:
        for b in self.behaviors:
            if b.name == name:
                return b
        return None


@dataclass(frozen=True)
class BuiltinExecution:
    name: str


@dataclass(frozen=True)
class CommandExecution:
    command: str  # shell-style argv string, split with shlex at run time


@dataclass(frozen=True)
class EndpointExecution:
    url: str


ExecutionSpec = Union[BuiltinExecution, CommandExecution, EndpointExecution]


@dataclass(frozen=True)
class MechanismEntry:
    mechanism_id: str
    required_schema_uri: str
    interface: BehaviorInterface
    execution: ExecutionSpec

    def __post_init__(self):
        if not self.interface.behaviors:
            raise InvalidManifest(f"mechanism {self.mechanism_id!r} offers no behaviors")
        names = [b.name for b in self.interface.behaviors]
        if len(names) != len(set(names)):
            raise InvalidManifest(f"mechanism {self.mechanism_id!r}: duplicate behavior names")


@dataclass(frozen=True)
class MatchResult:
    structoid_sid: str
    schema_uri: str
    mechanism_id: str
    interface_id: str


def match_against(structoids: Sequence, entries: Sequence[MechanismEntry]) -> list[MatchResult]:
    """Exactly the (structoid, mechanism) pairs with equal schema identifiers.

    Accepts anything with ``sid`` and ``schema_uri`` attributes (internal or
    public structoids); content and role targets are never consulted. Result
    order is structoid-major, entry-minor.
    """
    results: list[MatchResult] = []
    for s in structoids:
        for entry in entries:
            if s.schema_uri == entry.required_schema_uri:
                results.append(
                    MatchResult(
                        s.sid, s.schema_uri, entry.mechanism_id, entry.interface.interface_id
                    )
                )
    return results


def parse_manifest(document: bytes) -> MechanismEntry:
    """Parse a mechanism manifest (the XML-wrapped registry entry form)."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        raise InvalidManifest(f"not well-formed XML: {exc}") from None
    if root.tag != "Mechanism":
        raise InvalidManifest(f"unexpected root element {root.tag!r}")
    mechanism_id = root.get("id")
    if not mechanism_id:
        raise InvalidManifest("Mechanism requires an id attribute")

    schema_uri = None
    interface = None
    execution = None
    for child in root:
        if child.tag == "RequiresStructoidSchema":
            schema_uri = (child.text or "").strip()
        elif child.tag == "BehaviorInterface":
            interface = _parse_interface(child)
        elif child.tag == "Execution":
            execution = _parse_execution(child, mechanism_id)
        else:
            raise InvalidManifest(f"unexpected element {child.tag!r} in manifest")
    if not schema_uri:
        raise InvalidManifest(f"mechanism {mechanism_id!r}: RequiresStructoidSchema missing")
    if interface is None:
        raise InvalidManifest(f"mechanism {mechanism_id!r}: BehaviorInterface missing")
    if execution is None:
        raise InvalidManifest(f"mechanism {mechanism_id!r}: Execution missing")
    return MechanismEntry(mechanism_id, schema_uri, interface, execution)


def _parse_interface(elem: ET.Element) -> BehaviorInterface:
    interface_id = elem.get("id")
    if not interface_id:
        raise InvalidManifest("BehaviorInterface requires an id attribute")
    behaviors = []
    for b in elem:
        if b.tag != "Behavior":
            raise InvalidManifest(f"unexpected element {b.tag!r} in BehaviorInterface")
        name = b.get("name")
        output_mime = b.get("outputMime")
        if not name or not output_mime:
            raise InvalidManifest("Behavior requires name and outputMime attributes")
        params = []
        for p in b:
            if p.tag != "Param":
                raise InvalidManifest(f"unexpected element {p.tag!r} in Behavior {name!r}")
            pname = p.get("name")
            if not pname:
                raise InvalidManifest(f"behavior {name!r}: Param requires a name")
            params.append(
                Param(pname, p.get("type", "string"), p.get("required", "false") == "true")
            )
        behaviors.append(BehaviorSignature(name, output_mime, tuple(params)))
    return BehaviorInterface(interface_id, tuple(behaviors))


def _parse_execution(elem: ET.Element, mechanism_id: str) -> ExecutionSpec:
    kids = list(elem)
    if len(kids) != 1:
        raise InvalidManifest(f"mechanism {mechanism_id!r}: Execution must have exactly one child")
    kid = kids[0]
    if kid.tag == "Builtin":
        name = kid.get("name")
        if not name:
            raise InvalidManifest("Builtin execution requires a name attribute")
        return BuiltinExecution(name)
    if kid.tag == "Command":
        command = (kid.text or "").strip()
        if not command:
            raise InvalidManifest("Command execution requires a command line")
        return CommandExecution(command)
    if kid.tag == "Endpoint":
        url = (kid.text or "").strip()
        if not url:
            raise InvalidManifest("Endpoint execution requires a URL")
        return EndpointExecution(url)
    raise InvalidManifest(f"unknown execution kind {kid.tag!r}")


def serialize_manifest(entry: MechanismEntry) -> bytes:
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    lines.append(f"<Mechanism id={quoteattr(entry.mechanism_id)}>")
    lines.append(
        f"  <RequiresStructoidSchema>{escape(entry.required_schema_uri)}"
        "</RequiresStructoidSchema>"
    )
    lines.append(f"  <BehaviorInterface id={quoteattr(entry.interface.interface_id)}>")
    for b in entry.interface.behaviors:
        attrs = f"name={quoteattr(b.name)} outputMime={quoteattr(b.output_mime)}"
        if b.params:
            lines.append(f"    <Behavior {attrs}>")
            for p in b.params:
                lines.append(
                    f"      <Param name={quoteattr(p.name)} type={quoteattr(p.type)} "
                    f"required={quoteattr('true' if p.required else 'false')}/>"
                )
            lines.append("    </Behavior>")
        else:
            lines.append(f"    <Behavior {attrs}/>")
    lines.append("  </BehaviorInterface>")
    ex = entry.execution
    if isinstance(ex, BuiltinExecution):
        lines.append(f"  <Execution><Builtin name={quoteattr(ex.name)}/></Execution>")
    elif isinstance(ex, CommandExecution):
        lines.append(f"  <Execution><Command>{escape(ex.command)}</Command></Execution>")
    else:
        lines.append(f"  <Execution><Endpoint>{escape(ex.url)}</Endpoint></Execution>")
    lines.append("</Mechanism>")
    return ("\n".join(lines) + "\n").encode("utf-8")


def execution_to_json(ex: ExecutionSpec) -> dict:
    if isinstance(ex, BuiltinExecution):
        return {"kind": "builtin", "name": ex.name}
    if isinstance(ex, CommandExecution):
        return {"kind": "command", "command": ex.command}
    return {"kind": "endpoint", "url": ex.url}


def interface_to_json(interface: BehaviorInterface) -> dict:
    return {
        "id": interface.interface_id,
        "behaviors": [
            {
                "name": b.name,
                "outputMime": b.output_mime,
                "params": [
                    {"name": p.name, "type": p.type, "required": p.required} for p in b.params
                ],
            }
            for b in interface.behaviors
        ],
    }


class MechanismRegistry:
    """Ordered collection of mechanism entries, optionally disk-backed.

    When a persistence directory is given, every entry is stored as a
    manifest file plus an ``index.json`` recording registration order, so a
    restarted registry matches in the same deterministic order. Reads take a
    consistent snapshot; register/deregister are serialized.
    """

    def __init__(self, persist_dir: str | Path | None = None):
        self._entries: dict[str, MechanismEntry] = {}
        self._lock = threading.RLock()
        self._persist_dir = Path(persist_dir) if persist_dir else None
        if self._persist_dir is not None:
            self._persist_dir.mkdir(parents=True, exist_ok=True)
            self._load()

    def _manifest_path(self, mechanism_id: str) -> Path:
        assert self._persist_dir is not None
        return self._persist_dir / (quote(mechanism_id, safe="") + ".xml")

    def _load(self) -> None:
        assert self._persist_dir is not None
        index_path = self._persist_dir / "index.json"
        if index_path.exists():
            order = json.loads(index_path.read_text("utf-8"))
        else:
            order = sorted(
                p.stem for p in self._persist_dir.glob("*.xml")
            )  # no index: fall back to filename order
            order = [_unquote(stem) for stem in order]
        for mechanism_id in order:
            path = self._manifest_path(mechanism_id)
            if path.exists():
                self._entries[mechanism_id] = parse_manifest(path.read_bytes())

    def _persist(self, entry: MechanismEntry | None, removed_id: str | None = None) -> None:
        if self._persist_dir is None:
            return
        if entry is not None:
            self._manifest_path(entry.mechanism_id).write_bytes(serialize_manifest(entry))
        if removed_id is not None:
            self._manifest_path(removed_id).unlink(missing_ok=True)
        index_path = self._persist_dir / "index.json"
        tmp = index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(list(self._entries)), "utf-8")
        tmp.replace(index_path)

    def register(self, entry: MechanismEntry) -> str:
        """Add or replace an entry; returns the mechanism id."""
        with self._lock:
            self._entries[entry.mechanism_id] = entry
            self._persist(entry)
        return entry.mechanism_id

    def deregister(self, mechanism_id: str) -> bool:
        with self._lock:
            removed = self._entries.pop(mechanism_id, None) is not None
            if removed:
                self._persist(None, removed_id=mechanism_id)
        return removed

    def get(self, mechanism_id: str) -> MechanismEntry | None:
        with self._lock:
            return self._entries.get(mechanism_id)

    def get_interface(self, mechanism_id: str) -> BehaviorInterface:
        entry = self.get(mechanism_id)
        if entry is None:
            raise UnknownMechanism(mechanism_id)
        return entry.interface

    def entries(self) -> list[MechanismEntry]:
        """Snapshot in registration order."""
        with self._lock:
            return list(self._entries.values())

    def match_structoids(self, structoids: Sequence) -> list[MatchResult]:
        """Match against a consistent snapshot, in registration order."""
        return match_against(structoids, self.entries())


def _unquote(stem: str) -> str:
    from urllib.parse import unquote

    return unquote(stem)
