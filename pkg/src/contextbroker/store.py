"""Digital-object repository: persistent store, content service, OAI provider.

Objects live one directory per version under the repository root, holding
the canonical object document plus blob files keyed by DSID; an index file
maps object ids to the current version directory and datestamp. Writes are
atomic (write new version, then swap the index); a failed ingest leaves the
prior version intact. The OAI surface exposes each object's structoids, in
public view, to harvesters.
"""

from __future__ import annotations

import datetime as dt
import json
import re
import threading
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping
from urllib.parse import quote
from xml.sax.saxutils import escape, quoteattr

import httpx

from .objects import (
    DigitalObject,
    ObjectError,
    PublicStructoid,
    parse_object,
    public_view,
    serialize_object,
    serialize_public_structoid,
)

OAI_NAMESPACE = "http://www.openarchives.org/OAI/2.0/"
METADATA_PREFIX = "structoid"

_DATESTAMP_RE = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z$")


class RepositoryError(Exception):
    pass


class NotFound(RepositoryError):
    def __init__(self, identifier: str, message: str | None = None):
        super().__init__(message or f"{identifier!r} not found")
        self.identifier = identifier


class ValidationFailed(RepositoryError):
    pass


class MissingBlob(RepositoryError):
    def __init__(self, dsid: str):
        super().__init__(
            f"datastream {dsid!r} has a non-URL locator and no blob was supplied"
        )
        self.dsid = dsid


class UpstreamUnavailable(RepositoryError):
    pass


def format_datestamp(moment: dt.datetime) -> str:
    return moment.astimezone(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_datestamp(value: str) -> dt.datetime:
    if not _DATESTAMP_RE.match(value):
        raise ValueError(f"bad UTC datestamp {value!r}")
    return dt.datetime.strptime(value, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=dt.timezone.utc)


@dataclass(frozen=True)
class HarvestRecord:
    """One harvestable record: identifier, datestamp, public structoids."""

    object_id: str
    datestamp: str
    metadata: tuple[PublicStructoid, ...]


@dataclass
class _Entry:
    directory: Path
    datestamp: str
    object: DigitalObject | None = None  # parsed lazily


def _is_http_url(ref: str) -> bool:
    return ref.startswith("http://") or ref.startswith("https://")


class Repository:
    """File-backed store of digital objects and their datastream bytes."""

    def __init__(self, root: str | Path, *, base_url: str = "http://localhost:8000",
                 name: str = "contextbroker repository"):
        self.root = Path(root)
        self.base_url = base_url.rstrip("/")
        self.name = name
        self._lock = threading.Lock()
        self._entries: dict[str, _Entry] = {}
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "objects").mkdir(exist_ok=True)
        self._load_index()

    # -- persistence ------------------------------------------------------

    @property
    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _load_index(self) -> None:
        if not self._index_path.exists():
            return
        raw = json.loads(self._index_path.read_text("utf-8"))
        for object_id, item in raw.get("objects", {}).items():
            self._entries[object_id] = _Entry(self.root / item["dir"], item["datestamp"])

    def _persist_index(self) -> None:
        raw = {
            "objects": {
                object_id: {
                    "dir": str(entry.directory.relative_to(self.root)),
                    "datestamp": entry.datestamp,
                }
                for object_id, entry in self._entries.items()
            }
        }
        tmp = self._index_path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(raw, indent=1), "utf-8")
        tmp.replace(self._index_path)

    # -- write path -------------------------------------------------------

    def ingest(self, document: bytes, blobs: Mapping[str, bytes] | None = None) -> str:
        """Store (or replace) an object document plus locally held bytes.

        Every datastream must either have a supplied blob or an http(s)
        locator that the repository will proxy at fetch time.
        """
        blobs = dict(blobs or {})
        try:
            obj = parse_object(document)
        except ObjectError as exc:
            raise ValidationFailed(str(exc)) from exc
        dsids = {ds.dsid for ds in obj.datastreams}
        for key in blobs:
            if key not in dsids:
                raise ValidationFailed(f"blob supplied for unknown datastream {key!r}")
        for ds in obj.datastreams:
            if ds.dsid not in blobs and not _is_http_url(ds.bytes_ref):
                raise MissingBlob(ds.dsid)

        with self._lock:
            previous = self._entries.get(obj.object_id)
            now = format_datestamp(dt.datetime.now(dt.timezone.utc))
            if previous is not None and now <= previous.datestamp:
                # second granularity: force strict advance on replacement
                bumped = parse_datestamp(previous.datestamp) + dt.timedelta(seconds=1)
                now = format_datestamp(bumped)
            directory = (
                self.root / "objects" / quote(obj.object_id, safe="") / uuid.uuid4().hex[:12]
            )
            blob_dir = directory / "blobs"
            blob_dir.mkdir(parents=True)
            (directory / "object.xml").write_bytes(serialize_object(obj))
            for dsid, payload in blobs.items():
                (blob_dir / quote(dsid, safe="")).write_bytes(payload)
            self._entries[obj.object_id] = _Entry(directory, now, obj)
            self._persist_index()
            if previous is not None:
                _remove_tree(previous.directory)
        return obj.object_id

    # -- read path --------------------------------------------------------

    def _entry(self, object_id: str) -> _Entry:
        with self._lock:
            entry = self._entries.get(object_id)
        if entry is None:
            raise NotFound(object_id, f"object {object_id!r} not found")
        return entry

    def get_object(self, object_id: str) -> DigitalObject:
        entry = self._entry(object_id)
        if entry.object is None:
            entry.object = parse_object((entry.directory / "object.xml").read_bytes())
        return entry.object

    def get_object_document(self, object_id: str) -> bytes:
        """The stored canonical document bytes."""
        return (self._entry(object_id).directory / "object.xml").read_bytes()

    def datestamp(self, object_id: str) -> str:
        return self._entry(object_id).datestamp

    def get_datastream(self, object_id: str, dsid: str) -> tuple[bytes, str]:
        """The stored or proxied bytes plus the MIME declared in the object."""
        entry = self._entry(object_id)
        obj = self.get_object(object_id)
        ds = obj.datastream(dsid)
        if ds is None:
            raise NotFound(dsid, f"object {object_id!r} has no datastream {dsid!r}")
        blob_path = entry.directory / "blobs" / quote(dsid, safe="")
        if blob_path.exists():
            return blob_path.read_bytes(), ds.mime
        if not _is_http_url(ds.bytes_ref):
            raise UpstreamUnavailable(f"datastream {dsid!r} has no local bytes")
        try:
            response = httpx.get(ds.bytes_ref, timeout=10.0)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise UpstreamUnavailable(f"fetching {ds.bytes_ref!r} failed: {exc}") from exc
        return response.content, ds.mime

    def object_ids(self) -> list[str]:
        with self._lock:
            return sorted(self._entries)

    def list_identifiers(
        self, from_: str | None = None, until: str | None = None
    ) -> list[tuple[str, str]]:
        """(object_id, datestamp) pairs in identifier order, range-filtered."""
        out = []
        for object_id in self.object_ids():
            entry = self._entry(object_id)
            if from_ is not None and entry.datestamp < from_:
                continue
            if until is not None and entry.datestamp > until:
                continue
            out.append((object_id, entry.datestamp))
        return out

    def harvest_record(self, object_id: str) -> HarvestRecord:
        """Public view of the object's structoids, regenerated per request."""
        entry = self._entry(object_id)
        obj = self.get_object(object_id)
        metadata = tuple(
            public_view(s, self.base_url, object_id) for s in obj.structoids
        )
        return HarvestRecord(object_id, entry.datestamp, metadata)

    # -- OAI provider -----------------------------------------------------

    def oai_request(self, verb: str | None, arguments: Mapping[str, str]) -> bytes:
        """Answer one OAI request; protocol errors are in-band error elements."""
        handler = _OAI_VERBS.get(verb or "")
        if handler is None:
            return self._oai_error(None, {}, "badVerb", f"unknown verb {verb!r}")
        return handler(self, dict(arguments))

    def _oai_identify(self, args: dict[str, str]) -> bytes:
        if args:
            return self._oai_error("Identify", {}, "badArgument", "Identify takes no arguments")
        stamps = [entry[1] for entry in self.list_identifiers()]
        earliest = min(stamps) if stamps else "1970-01-01T00:00:00Z"
        body = (
            "  <Identify>\n"
            f"    <repositoryName>{escape(self.name)}</repositoryName>\n"
            f"    <baseURL>{escape(self.base_url)}</baseURL>\n"
            "    <protocolVersion>2.0</protocolVersion>\n"
            f"    <earliestDatestamp>{earliest}</earliestDatestamp>\n"
            "  </Identify>\n"
        )
        return self._oai_envelope("Identify", {}, body)

    def _check_record_args(
        self, verb: str, args: dict[str, str], allowed: set[str], required: set[str]
    ) -> bytes | None:
        for name in args:
            if name not in allowed:
                return self._oai_error(verb, args, "badArgument", f"illegal argument {name!r}")
        for name in required:
            if name not in args:
                return self._oai_error(verb, args, "badArgument", f"missing argument {name!r}")
        if args.get("metadataPrefix") != METADATA_PREFIX:
            return self._oai_error(
                verb,
                args,
                "cannotDisseminateFormat",
                f"only metadataPrefix={METADATA_PREFIX!r} is supported",
            )
        for name in ("from", "until"):
            if name in args:
                try:
                    parse_datestamp(args[name])
                except ValueError:
                    return self._oai_error(verb, args, "badArgument", f"bad {name} datestamp")
        return None

    def _oai_list_identifiers(self, args: dict[str, str]) -> bytes:
        bad = self._check_record_args(
            "ListIdentifiers", args, {"metadataPrefix", "from", "until"}, {"metadataPrefix"}
        )
        if bad is not None:
            return bad
        pairs = self.list_identifiers(args.get("from"), args.get("until"))
        lines = ["  <ListIdentifiers>\n" if pairs else "  <ListIdentifiers/>\n"]
        for object_id, datestamp in pairs:
            lines.append(
                "    <header>\n"
                f"      <identifier>{escape(object_id)}</identifier>\n"
                f"      <datestamp>{datestamp}</datestamp>\n"
                "    </header>\n"
            )
        if pairs:
            lines.append("  </ListIdentifiers>\n")
        return self._oai_envelope("ListIdentifiers", args, "".join(lines))

    def _record_fragment(self, record: HarvestRecord, indent: str) -> str:
        lines = [f"{indent}<record>\n"]
        lines.append(
            f"{indent}  <header>\n"
            f"{indent}    <identifier>{escape(record.object_id)}</identifier>\n"
            f"{indent}    <datestamp>{record.datestamp}</datestamp>\n"
            f"{indent}  </header>\n"
        )
        lines.append(f"{indent}  <metadata>\n")
        lines.append(
            f'{indent}    <Structoids xmlns={quoteattr("http://www.cornell.edu/DO")}>\n'
        )
        for ps in record.metadata:
            lines.append(serialize_public_structoid(ps, indent=len(indent) + 6) + "\n")
        lines.append(f"{indent}    </Structoids>\n")
        lines.append(f"{indent}  </metadata>\n")
        lines.append(f"{indent}</record>\n")
        return "".join(lines)

    def _oai_get_record(self, args: dict[str, str]) -> bytes:
        bad = self._check_record_args(
            "GetRecord", args, {"identifier", "metadataPrefix"}, {"identifier", "metadataPrefix"}
        )
        if bad is not None:
            return bad
        try:
            record = self.harvest_record(args["identifier"])
        except NotFound:
            return self._oai_error(
                "GetRecord", args, "idDoesNotExist", f"no object {args['identifier']!r}"
            )
        body = "  <GetRecord>\n" + self._record_fragment(record, "    ") + "  </GetRecord>\n"
        return self._oai_envelope("GetRecord", args, body)

    def _oai_list_records(self, args: dict[str, str]) -> bytes:
        bad = self._check_record_args(
            "ListRecords", args, {"metadataPrefix", "from", "until"}, {"metadataPrefix"}
        )
        if bad is not None:
            return bad
        pairs = self.list_identifiers(args.get("from"), args.get("until"))
        if not pairs:
            return self._oai_envelope("ListRecords", args, "  <ListRecords/>\n")
        parts = ["  <ListRecords>\n"]
        for object_id, _ in pairs:
            parts.append(self._record_fragment(self.harvest_record(object_id), "    "))
        parts.append("  </ListRecords>\n")
        return self._oai_envelope("ListRecords", args, "".join(parts))

    def _oai_envelope(self, verb: str | None, args: Mapping[str, str], body: str) -> bytes:
        stamp = format_datestamp(dt.datetime.now(dt.timezone.utc))
        attrs = ""
        if verb:
            attrs += f" verb={quoteattr(verb)}"
        for name in sorted(args):
            attrs += f" {name}={quoteattr(args[name])}"
        doc = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f"<OAI-PMH xmlns={quoteattr(OAI_NAMESPACE)}>\n"
            f"  <responseDate>{stamp}</responseDate>\n"
            f"  <request{attrs}>{escape(self.base_url + '/oai')}</request>\n"
            f"{body}"
            "</OAI-PMH>\n"
        )
        return doc.encode("utf-8")

    def _oai_error(
        self, verb: str | None, args: Mapping[str, str], code: str, message: str
    ) -> bytes:
        body = f"  <error code={quoteattr(code)}>{escape(message)}</error>\n"
        return self._oai_envelope(verb, args, body)


_OAI_VERBS = {
    "Identify": Repository._oai_identify,
    "ListIdentifiers": Repository._oai_list_identifiers,
    "GetRecord": Repository._oai_get_record,
    "ListRecords": Repository._oai_list_records,
}


def _remove_tree(path: Path) -> None:
    import shutil

    shutil.rmtree(path, ignore_errors=True)
