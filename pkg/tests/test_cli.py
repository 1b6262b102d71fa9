from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from contextbroker.broker import ContextBroker
from contextbroker.cli import main
from contextbroker.mechanisms import builtin_manifest
from contextbroker.registry import MechanismRegistry, parse_manifest
from contextbroker.store import Repository
from contextbroker.webapp import create_broker_app, create_repository_app

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def stack(tmp_path, live_server, figure2_extended_bytes, blobs):
    """Live repo (extended fixture ingested) + live broker with the gallery."""
    repo = Repository(tmp_path / "repo")
    repo_url = live_server(create_repository_app(repo))
    repo.base_url = repo_url
    repo.ingest(figure2_extended_bytes, blobs)
    registry = MechanismRegistry()
    registry.register(parse_manifest(builtin_manifest("gallery")))
    broker = ContextBroker(registry, default_repository=repo_url)
    broker_url = live_server(create_broker_app(broker))
    return repo_url, broker_url


class TestValidate:
    def test_figure2_valid(self, runner):
        result = runner.invoke(main, ["validate", str(FIXTURES / "figure2.xml")])
        assert result.exit_code == 0, result.output
        assert "description -- valid." in result.output
        assert "thumbnail -- valid." in result.output
        assert "fullImage -- valid." in result.output
        assert result.output.rstrip().endswith("VALID")

    def test_wrong_mime_thumbnail_fails(self, runner, tmp_path, figure2_bytes):
        broken = tmp_path / "broken.xml"
        broken.write_bytes(
            figure2_bytes.replace(b'<image:thumbnail DSID="DS-3"', b'<image:thumbnail DSID="DS-2"')
        )
        result = runner.invoke(main, ["validate", str(broken)])
        assert result.exit_code == 1
        assert "must refer to DataStream of MIME image/jpeg or image/gif" in result.output
        assert "INVALID" in result.output

    def test_dangling_reference_fails(self, runner, tmp_path, figure2_bytes):
        broken = tmp_path / "dangling.xml"
        broken.write_bytes(
            figure2_bytes.replace(b'<image:thumbnail DSID="DS-3"', b'<image:thumbnail DSID="DS-9"')
        )
        result = runner.invoke(main, ["validate", str(broken)])
        assert result.exit_code == 1
        assert "DS-9" in result.output

    def test_unknown_schema_fails(self, runner, tmp_path, figure2_bytes):
        odd = tmp_path / "odd.xml"
        odd.write_bytes(figure2_bytes.replace(b"Cornell_ImageType", b"Mystery_Type"))
        result = runner.invoke(main, ["validate", str(odd)])
        assert result.exit_code == 1
        assert "cannot validate" in result.output

    def test_extra_schema_dir(self, runner, tmp_path, figure2_bytes):
        odd = tmp_path / "odd.xml"
        odd.write_bytes(figure2_bytes.replace(b"Cornell_ImageType", b"Mystery_Type"))
        schema_dir = tmp_path / "schemas"
        schema_dir.mkdir()
        (schema_dir / "mystery.xml").write_bytes(
            b'<StructoidSchema uri="http://www.cornell.edu/structoids/Image#Mystery_Type">'
            b'<Label name="description"/><Label name="thumbnail"/><Label name="fullImage"/>'
            b"</StructoidSchema>"
        )
        result = runner.invoke(main, ["validate", str(odd), "--schema-dir", str(schema_dir)])
        assert result.exit_code == 0, result.output

    def test_usage_error_exit_code(self, runner):
        result = runner.invoke(main, ["validate", "/does/not/exist.xml"])
        assert result.exit_code == 2


class TestIngestCommand:
    def test_ingest_into_local_root(self, runner, tmp_path):
        root = tmp_path / "repo"
        result = runner.invoke(
            main,
            [
                "ingest",
                str(FIXTURES / "figure2.xml"),
                "--repo-root",
                str(root),
                "--blob",
                f"DS-2={FIXTURES / 'ds2.txt'}",
                "--blob",
                f"DS-3={FIXTURES / 'ds3.gif'}",
                "--blob",
                f"DS-4={FIXTURES / 'ds4.gif'}",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "ingested cornell/sampleDO" in result.output
        reopened = Repository(root)
        assert reopened.get_datastream("cornell/sampleDO", "DS-3")[1] == "image/gif"

    def test_ingest_validation_failure(self, runner, tmp_path, figure2_bytes):
        broken = tmp_path / "broken.xml"
        broken.write_bytes(figure2_bytes.replace(b'DSID="DS-4"', b'DSID="DS-2"', 1))
        result = runner.invoke(
            main, ["ingest", str(broken), "--repo-root", str(tmp_path / "repo")]
        )
        assert result.exit_code == 1
        assert "duplicate identifier" in result.output
        assert "DS-2" in result.output


class TestRegistryCommands:
    def test_local_registry_dir(self, runner, tmp_path):
        reg_dir = tmp_path / "registry"
        manifest = tmp_path / "gallery.xml"
        manifest.write_bytes(builtin_manifest("gallery"))
        result = runner.invoke(
            main, ["register-mech", str(manifest), "--registry-dir", str(reg_dir)]
        )
        assert result.exit_code == 0, result.output
        assert MechanismRegistry(reg_dir).get("http://mechanisms.local/gallery") is not None
        result = runner.invoke(
            main,
            ["deregister-mech", "http://mechanisms.local/gallery", "--registry-dir", str(reg_dir)],
        )
        assert result.exit_code == 0
        assert "removed" in result.output
        assert MechanismRegistry(reg_dir).entries() == []

    def test_against_live_broker(self, runner, stack):
        _, broker_url = stack
        manifest = builtin_manifest("translator")
        with runner.isolated_filesystem():
            Path("translator.xml").write_bytes(manifest)
            result = runner.invoke(
                main, ["register-mech", "translator.xml", "--broker", broker_url]
            )
            assert result.exit_code == 0, result.output
            assert "http://mechanisms.local/translator" in result.output
        result = runner.invoke(
            main, ["deregister-mech", "http://mechanisms.local/translator", "--broker", broker_url]
        )
        assert result.exit_code == 0
        assert "removed" in result.output

    def test_network_failure_exit_code(self, runner, tmp_path):
        manifest = tmp_path / "gallery.xml"
        manifest.write_bytes(builtin_manifest("gallery"))
        result = runner.invoke(
            main, ["register-mech", str(manifest), "--broker", "http://127.0.0.1:1"]
        )
        assert result.exit_code == 3


class TestHarvestCommand:
    def test_list_identifiers_xml(self, runner, stack):
        repo_url, _ = stack
        result = runner.invoke(main, ["harvest", "ListIdentifiers", "--repo", repo_url])
        assert result.exit_code == 0, result.output
        assert "cornell/sampleDO" in result.output
        assert "<OAI-PMH" in result.output

    def test_get_record_json(self, runner, stack):
        repo_url, _ = stack
        result = runner.invoke(
            main,
            ["harvest", "GetRecord", "--repo", repo_url, "--identifier", "cornell/sampleDO", "--json"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert payload["records"][0]["identifier"] == "cornell/sampleDO"
        assert payload["records"][0]["structoids"][0]["sid"] == "S-7"

    def test_remote_error_exit_code(self, runner, stack):
        repo_url, _ = stack
        result = runner.invoke(
            main, ["harvest", "GetRecord", "--repo", repo_url, "--identifier", "none", "--json"]
        )
        assert result.exit_code == 1

    def test_unreachable_repo_exit_code(self, runner):
        result = runner.invoke(
            main, ["harvest", "Identify", "--repo", "http://127.0.0.1:1", "--json"]
        )
        assert result.exit_code == 3


class TestBrokerCommands:
    def test_list_behaviors_json(self, runner, stack):
        repo_url, broker_url = stack
        result = runner.invoke(
            main,
            [
                "list-behaviors",
                "--broker",
                broker_url,
                "--repo",
                repo_url,
                "--object",
                "cornell/sampleDO",
                "--json",
            ],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.output)
        assert [b["structoidSID"] for b in payload["bindings"]] == ["S-7"]

    def test_list_behaviors_empty_registry(self, runner, tmp_path, live_server, stack):
        repo_url, _ = stack
        empty_broker = ContextBroker(MechanismRegistry())
        broker_url = live_server(create_broker_app(empty_broker))
        result = runner.invoke(
            main,
            [
                "list-behaviors",
                "--broker", broker_url,
                "--repo", repo_url,
                "--object", "cornell/sampleDO",
                "--json",
            ],
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.output)["bindings"] == []

    def test_perform_writes_output_file(self, runner, stack, tmp_path, blobs):
        repo_url, broker_url = stack
        out = tmp_path / "thumb.gif"
        result = runner.invoke(
            main,
            [
                "perform",
                "--broker", broker_url,
                "--repo", repo_url,
                "--object", "cornell/sampleDO",
                "--mechanism", "http://mechanisms.local/gallery",
                "--behavior", "Thumbnail",
                "--structoid", "S-7",
                "--output", str(out),
            ],
        )
        assert result.exit_code == 0, result.output
        assert out.read_bytes() == blobs["DS-3"]

    def test_perform_text_result_printed(self, runner, stack):
        repo_url, broker_url = stack
        result = runner.invoke(
            main,
            [
                "perform",
                "--broker", broker_url,
                "--repo", repo_url,
                "--object", "cornell/sampleDO",
                "--mechanism", "http://mechanisms.local/gallery",
                "--behavior", "Gallery",
                "--structoid", "S-7",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "<img src=" in result.output

    def test_perform_broker_error_exit_one(self, runner, stack):
        repo_url, broker_url = stack
        result = runner.invoke(
            main,
            [
                "perform",
                "--broker", broker_url,
                "--repo", repo_url,
                "--object", "cornell/sampleDO",
                "--mechanism", "http://mechanisms.local/gallery",
                "--behavior", "Rotate",
                "--structoid", "S-7",
            ],
        )
        assert result.exit_code == 1
        assert "BehaviorNotFound" in result.output
