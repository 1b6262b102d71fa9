"""OAI client side: fetch and parse structoid records from a repository."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import httpx

from .objects import PublicStructoid, iter_public_structoids
from .store import HarvestRecord, METADATA_PREFIX, OAI_NAMESPACE


class HarvestError(Exception):
    pass


class RepositoryUnavailable(HarvestError):
    pass


class OaiProtocolError(HarvestError):
    """The provider answered with an in-band OAI error element."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _oai(tag: str) -> str:
    return f"{{{OAI_NAMESPACE}}}{tag}"


def oai_get(repo_base: str, params: dict[str, str], client: httpx.Client | None = None) -> ET.Element:
    """Issue one OAI request and return the parsed response root.

    Raises RepositoryUnavailable for transport failures and OaiProtocolError
    when the response carries an error element.
    """
    url = repo_base.rstrip("/") + "/oai"
    try:
        if client is not None:
            response = client.get(url, params=params)
        else:
            response = httpx.get(url, params=params, timeout=15.0)
        response.raise_for_status()
        root = ET.fromstring(response.content)
    except (httpx.HTTPError, ET.ParseError) as exc:
        raise RepositoryUnavailable(f"OAI request to {url!r} failed: {exc}") from exc
    error = root.find(_oai("error"))
    if error is not None:
        raise OaiProtocolError(error.get("code", "unknown"), error.text or "")
    return root


def _parse_record(record: ET.Element) -> HarvestRecord:
    header = record.find(_oai("header"))
    metadata = record.find(_oai("metadata"))
    if header is None:
        raise HarvestError("record without header")
    identifier = header.findtext(_oai("identifier"), "")
    datestamp = header.findtext(_oai("datestamp"), "")
    structoids: tuple[PublicStructoid, ...] = ()
    if metadata is not None and len(metadata):
        structoids = tuple(iter_public_structoids(metadata[0]))
    return HarvestRecord(identifier, datestamp, structoids)


def fetch_record(
    repo_base: str, object_id: str, client: httpx.Client | None = None
) -> HarvestRecord:
    root = oai_get(
        repo_base,
        {"verb": "GetRecord", "identifier": object_id, "metadataPrefix": METADATA_PREFIX},
        client,
    )
    record = root.find(f"{_oai('GetRecord')}/{_oai('record')}")
    if record is None:
        raise HarvestError("GetRecord response carries no record")
    return _parse_record(record)


def fetch_records(
    repo_base: str,
    from_: str | None = None,
    until: str | None = None,
    client: httpx.Client | None = None,
) -> list[HarvestRecord]:
    params = {"verb": "ListRecords", "metadataPrefix": METADATA_PREFIX}
    if from_:
        params["from"] = from_
    if until:
        params["until"] = until
    root = oai_get(repo_base, params, client)
    container = root.find(_oai("ListRecords"))
    if container is None:
        return []
    return [_parse_record(r) for r in container.findall(_oai("record"))]


def fetch_identifiers(
    repo_base: str,
    from_: str | None = None,
    until: str | None = None,
    client: httpx.Client | None = None,
) -> list[tuple[str, str]]:
    params = {"verb": "ListIdentifiers", "metadataPrefix": METADATA_PREFIX}
    if from_:
        params["from"] = from_
    if until:
        params["until"] = until
    root = oai_get(repo_base, params, client)
    container = root.find(_oai("ListIdentifiers"))
    if container is None:
        return []
    out = []
    for header in container.findall(_oai("header")):
        out.append(
            (header.findtext(_oai("identifier"), ""), header.findtext(_oai("datestamp"), ""))
        )
    return out


def fetch_identify(repo_base: str, client: httpx.Client | None = None) -> dict[str, str]:
    root = oai_get(repo_base, {"verb": "Identify"}, client)
    identify = root.find(_oai("Identify"))
    if identify is None:
        raise HarvestError("Identify response carries no Identify element")
    return {
        "repositoryName": identify.findtext(_oai("repositoryName"), ""),
        "baseURL": identify.findtext(_oai("baseURL"), ""),
        "protocolVersion": identify.findtext(_oai("protocolVersion"), ""),
        "earliestDatestamp": identify.findtext(_oai("earliestDatestamp"), ""),
    }
