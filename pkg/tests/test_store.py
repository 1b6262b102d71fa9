from __future__ import annotations

import hashlib
import time
import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from contextbroker.objects import public_view
from contextbroker.store import (
    HarvestRecord,
    MissingBlob,
    NotFound,
    Repository,
    UpstreamUnavailable,
    ValidationFailed,
    format_datestamp,
    parse_datestamp,
)

OAI = "{http://www.openarchives.org/OAI/2.0/}"


@pytest.fixture
def repo(tmp_path, figure2_bytes, blobs) -> Repository:
    repo = Repository(tmp_path / "repo", base_url="http://repo.example")
    repo.ingest(figure2_bytes, blobs)
    return repo


def _store_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(str(path.relative_to(root)).encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


class TestIngest:
    def test_figure2_with_blobs(self, repo, figure2_object):
        assert repo.get_object("cornell/sampleDO") == figure2_object

    def test_reingest_advances_datestamp(self, repo, figure2_bytes, blobs):
        first = repo.datestamp("cornell/sampleDO")
        extra = figure2_bytes.replace(
            b"  <Structoid",
            b'  <DataStream DSID="DS-5"><MIME>text/plain</MIME><descriptor/>'
            b'<bytes xlink:href="http://local.secure.storage/DS-5.txt" /></DataStream>\n'
            b"  <Structoid",
            1,
        )
        repo.ingest(extra, blobs)
        second = repo.datestamp("cornell/sampleDO")
        assert parse_datestamp(second) > parse_datestamp(first)
        assert repo.get_object("cornell/sampleDO").datastream("DS-5") is not None

    def test_dangling_role_rejected(self, repo, figure2_bytes, blobs):
        broken = figure2_bytes.replace(b'<image:thumbnail DSID="DS-3"', b'<image:thumbnail DSID="DS-9"')
        with pytest.raises(ValidationFailed):
            repo.ingest(broken, blobs)

    def test_failed_ingest_keeps_previous_version(self, repo, figure2_bytes, blobs):
        before = repo.get_object_document("cornell/sampleDO")
        broken = figure2_bytes.replace(b'<image:thumbnail DSID="DS-3"', b'<image:thumbnail DSID="DS-9"')
        with pytest.raises(ValidationFailed):
            repo.ingest(broken, blobs)
        assert repo.get_object_document("cornell/sampleDO") == before

    def test_opaque_locator_requires_blob(self, tmp_path):
        doc = (
            b'<DigitalObject DigitalObjectID="o" xmlns="http://www.cornell.edu/DO" '
            b'xmlns:xlink="http://www.w3.org/TR/xlink">'
            b'<DataStream DSID="DS-1"><MIME>text/plain</MIME><descriptor/>'
            b'<bytes xlink:href="store:DS-1"/></DataStream></DigitalObject>'
        )
        repo = Repository(tmp_path / "r2")
        with pytest.raises(MissingBlob):
            repo.ingest(doc, {})
        repo.ingest(doc, {"DS-1": b"payload"})
        assert repo.get_datastream("o", "DS-1") == (b"payload", "text/plain")

    def test_blob_for_unknown_datastream_rejected(self, repo, figure2_bytes, blobs):
        with pytest.raises(ValidationFailed, match="DS-99"):
            repo.ingest(figure2_bytes, {**blobs, "DS-99": b"stray"})

    def test_persistence_across_restart(self, tmp_path, figure2_bytes, blobs, figure2_object):
        root = tmp_path / "repo"
        Repository(root, base_url="http://repo.example").ingest(figure2_bytes, blobs)
        reopened = Repository(root, base_url="http://repo.example")
        assert reopened.get_object("cornell/sampleDO") == figure2_object
        assert reopened.get_datastream("cornell/sampleDO", "DS-3") == (blobs["DS-3"], "image/gif")


class TestReads:
    def test_get_object_unknown(self, repo):
        with pytest.raises(NotFound):
            repo.get_object("nobody/home")

    def test_get_datastream(self, repo, blobs):
        body, mime = repo.get_datastream("cornell/sampleDO", "DS-3")
        assert (body, mime) == (blobs["DS-3"], "image/gif")

    def test_get_datastream_unknown_dsid(self, repo):
        with pytest.raises(NotFound):
            repo.get_datastream("cornell/sampleDO", "DS-9")

    def test_unreachable_external_bytes(self, tmp_path):
        doc = (
            b'<DigitalObject DigitalObjectID="o" xmlns="http://www.cornell.edu/DO" '
            b'xmlns:xlink="http://www.w3.org/TR/xlink">'
            b'<DataStream DSID="DS-1"><MIME>text/plain</MIME><descriptor/>'
            b'<bytes xlink:href="http://127.0.0.1:1/none"/></DataStream></DigitalObject>'
        )
        repo = Repository(tmp_path / "r3")
        repo.ingest(doc, {})
        with pytest.raises(UpstreamUnavailable):
            repo.get_datastream("o", "DS-1")

    def test_reads_do_not_change_stored_bytes(self, repo):
        before = _store_digest(repo.root)
        repo.get_object("cornell/sampleDO")
        repo.get_datastream("cornell/sampleDO", "DS-2")
        repo.oai_request("Identify", {})
        repo.oai_request(
            "GetRecord", {"identifier": "cornell/sampleDO", "metadataPrefix": "structoid"}
        )
        repo.oai_request("ListRecords", {"metadataPrefix": "structoid"})
        assert _store_digest(repo.root) == before


class TestHarvestRecord:
    def test_metadata_is_public_view(self, repo, figure2_object):
        record = repo.harvest_record("cornell/sampleDO")
        assert isinstance(record, HarvestRecord)
        expected = tuple(
            public_view(s, "http://repo.example", "cornell/sampleDO")
            for s in figure2_object.structoids
        )
        assert record.metadata == expected


def _oai(repo: Repository, verb: str | None, **args) -> ET.Element:
    return ET.fromstring(repo.oai_request(verb, args))


def _error_code(root: ET.Element) -> str | None:
    err = root.find(f"{OAI}error")
    return err.get("code") if err is not None else None


class TestOai:
    def test_identify(self, repo):
        root = _oai(repo, "Identify")
        identify = root.find(f"{OAI}Identify")
        assert identify.findtext(f"{OAI}repositoryName") == "contextbroker repository"
        assert identify.findtext(f"{OAI}baseURL") == "http://repo.example"
        assert identify.findtext(f"{OAI}protocolVersion") == "2.0"

    def test_get_record_matches_public_view_composition(self, repo):
        # oracle: the record must equal public_view over get_object's structoids
        root = _oai(
            repo, "GetRecord", identifier="cornell/sampleDO", metadataPrefix="structoid"
        )
        record = root.find(f"{OAI}GetRecord/{OAI}record")
        assert record.findtext(f"{OAI}header/{OAI}identifier") == "cornell/sampleDO"
        structoids = record.find(f"{OAI}metadata")[0]
        from contextbroker.objects import iter_public_structoids

        parsed = list(iter_public_structoids(structoids))
        expected = [
            public_view(s, "http://repo.example", "cornell/sampleDO")
            for s in repo.get_object("cornell/sampleDO").structoids
        ]
        assert parsed == expected

    def test_get_record_unknown_id(self, repo):
        root = _oai(repo, "GetRecord", identifier="unknown", metadataPrefix="structoid")
        assert _error_code(root) == "idDoesNotExist"

    def test_bad_verb(self, repo):
        assert _error_code(_oai(repo, "Destroy")) == "badVerb"
        assert _error_code(_oai(repo, None)) == "badVerb"

    def test_bad_metadata_prefix(self, repo):
        root = _oai(repo, "GetRecord", identifier="cornell/sampleDO", metadataPrefix="oai_dc")
        assert _error_code(root) == "cannotDisseminateFormat"

    def test_missing_metadata_prefix(self, repo):
        root = _oai(repo, "ListIdentifiers")
        assert _error_code(root) == "badArgument"

    def test_unknown_argument_rejected(self, repo):
        root = _oai(repo, "ListIdentifiers", metadataPrefix="structoid", resumptionToken="x")
        assert _error_code(root) == "badArgument"

    def test_bad_datestamp_argument(self, repo):
        root = _oai(repo, "ListIdentifiers", metadataPrefix="structoid", **{"from": "yesterday"})
        assert _error_code(root) == "badArgument"

    def test_list_identifiers_window(self, repo):
        stamp = repo.datestamp("cornell/sampleDO")
        root = _oai(repo, "ListIdentifiers", metadataPrefix="structoid")
        headers = root.findall(f"{OAI}ListIdentifiers/{OAI}header")
        assert [h.findtext(f"{OAI}identifier") for h in headers] == ["cornell/sampleDO"]
        assert headers[0].findtext(f"{OAI}datestamp") == stamp

        future = format_datestamp(parse_datestamp(stamp) + __import__("datetime").timedelta(seconds=5))
        root = _oai(repo, "ListIdentifiers", metadataPrefix="structoid", **{"from": future})
        assert root.findall(f"{OAI}ListIdentifiers/{OAI}header") == []

    def test_list_records_is_concatenation_of_get_record(self, repo, figure2_bytes, blobs):
        second = figure2_bytes.replace(b"cornell/sampleDO", b"cornell/another")
        repo.ingest(second, blobs)
        def _snapshot(record: ET.Element) -> bytes:
            record.tail = None  # surrounding indentation is not record content
            return ET.tostring(record)

        list_root = _oai(repo, "ListRecords", metadataPrefix="structoid")
        listed = [
            _snapshot(record)
            for record in list_root.findall(f"{OAI}ListRecords/{OAI}record")
        ]
        singles = []
        for header in _oai(repo, "ListIdentifiers", metadataPrefix="structoid").findall(
            f"{OAI}ListIdentifiers/{OAI}header"
        ):
            object_id = header.findtext(f"{OAI}identifier")
            one = _oai(repo, "GetRecord", identifier=object_id, metadataPrefix="structoid")
            singles.append(_snapshot(one.find(f"{OAI}GetRecord/{OAI}record")))
        assert listed == singles
