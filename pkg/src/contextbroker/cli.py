"""Command-line administration and scripting surface.

Exit codes: 0 success, 1 validation failure or remote error reply,
2 usage error, 3 network or I/O failure.
"""

from __future__ import annotations

import base64
import json
import sys
from pathlib import Path

import click
import httpx

from . import harvest
from .invocation import SandboxLimits
from .broker import ContextBroker
from .objects import ObjectError, check_integrity, parse_object
from .registry import MechanismRegistry, parse_manifest
from .schemas import (
    ERROR,
    SchemaRegistry,
    UnknownSchema,
    default_registry,
    parse_schema,
    validate_grammar,
    validate_rules,
)
from .store import Repository
from .webapp import create_broker_app, create_repository_app

EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NETWORK = 3


class NetworkFailure(click.ClickException):
    exit_code = EXIT_NETWORK


class RemoteError(click.ClickException):
    exit_code = EXIT_VALIDATION


def _load_config(ctx: click.Context, param: click.Parameter, value: str | None):
    if value:
        try:
            ctx.default_map = json.loads(Path(value).read_text("utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise click.UsageError(f"cannot read config file {value!r}: {exc}")
    return value


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    callback=_load_config,
    is_eager=True,
    expose_value=False,
    help="JSON config file; keys are subcommand names mapping to option defaults.",
)
def main():
    """Administer digital-object repositories and context brokers."""


def _schema_registry(schema_dir: str | None) -> SchemaRegistry:
    registry = default_registry()
    if schema_dir:
        for path in sorted(Path(schema_dir).glob("*.xml")):
            registry.register(parse_schema(path.read_bytes()))
    return registry


@main.command()
@click.argument("object_xml", type=click.Path(exists=True, dir_okay=False))
@click.option("--schema-dir", type=click.Path(exists=True, file_okay=False),
              help="Directory of extra structoid-schema documents (*.xml).")
def validate(object_xml: str, schema_dir: str | None):
    """Validate a digital-object document: integrity, grammar, and rules."""
    registry = _schema_registry(schema_dir)
    try:
        obj = parse_object(Path(object_xml).read_bytes())
    except ObjectError as exc:
        click.echo(f"{type(exc).__name__}: {exc}")
        click.echo("INVALID")
        sys.exit(EXIT_VALIDATION)
    failed = False
    violations = check_integrity(obj)
    for violation in violations:
        click.echo(str(violation))
        failed = True
    if not violations:
        click.echo(f"{obj.object_id}: integrity OK")
    for structoid in obj.structoids:
        try:
            schema = registry.resolve(structoid.schema_uri)
        except UnknownSchema:
            click.echo(f"{structoid.sid}: unknown structoid schema {structoid.schema_uri} -- cannot validate")
            failed = True
            continue
        grammar = validate_grammar(structoid, schema)
        for finding in grammar:
            click.echo(finding.message)
            failed = True
        if not grammar:
            click.echo(f"{structoid.sid} ({structoid.schema_uri.rsplit('#', 1)[-1]}): grammar OK")
        if violations:
            continue  # rule validation needs resolvable roles
        for finding in validate_rules(structoid, obj, schema):
            click.echo(finding.message)
            if finding.severity == ERROR:
                failed = True
    click.echo("INVALID" if failed else "VALID")
    sys.exit(EXIT_VALIDATION if failed else 0)


@main.command()
@click.argument("object_xml", type=click.Path(exists=True, dir_okay=False))
@click.option("--repo-root", required=True, type=click.Path(file_okay=False),
              help="Repository storage directory.")
@click.option("--blob", "blob_specs", multiple=True, metavar="DSID=PATH",
              help="Attach local bytes for a datastream; repeatable.")
@click.option("--base-url", default="http://localhost:8000", show_default=True,
              help="Public base URL recorded for harvest role links.")
def ingest(object_xml: str, repo_root: str, blob_specs: tuple[str, ...], base_url: str):
    """Ingest a digital-object document (plus blobs) into a local repository."""
    blobs = {}
    for spec in blob_specs:
        dsid, sep, path = spec.partition("=")
        if not sep or not dsid or not path:
            raise click.UsageError(f"--blob expects DSID=PATH, got {spec!r}")
        try:
            blobs[dsid] = Path(path).read_bytes()
        except OSError as exc:
            raise NetworkFailure(f"cannot read blob {path!r}: {exc}")
    repo = Repository(repo_root, base_url=base_url)
    try:
        object_id = repo.ingest(Path(object_xml).read_bytes(), blobs)
    except Exception as exc:
        click.echo(f"{type(exc).__name__}: {exc}")
        sys.exit(EXIT_VALIDATION)
    click.echo(f"ingested {object_id} (datestamp {repo.datestamp(object_id)})")


def _parse_bind(bind: str) -> tuple[str, int]:
    host, sep, port = bind.rpartition(":")
    if not sep:
        raise click.UsageError(f"--bind expects HOST:PORT, got {bind!r}")
    try:
        return host, int(port)
    except ValueError:
        raise click.UsageError(f"bad port in --bind value {bind!r}")


def _serve(app, host: str, port: int):
    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")


@main.command("serve-repo")
@click.option("--repo-root", required=True, type=click.Path(file_okay=False))
@click.option("--bind", default="127.0.0.1:8000", show_default=True)
@click.option("--base-url", default=None,
              help="Public base URL (defaults to http://BIND).")
@click.option("--name", default="contextbroker repository", show_default=True)
@click.option("--with-broker", is_flag=True,
              help="Co-locate a context broker answering for this repository.")
@click.option("--registry-dir", type=click.Path(file_okay=False),
              help="Mechanism manifest directory for the co-located broker.")
@click.option("--timeout-secs", default=10.0, show_default=True)
@click.option("--max-output-bytes", default=16 * 1024 * 1024, show_default=True)
def serve_repo(repo_root, bind, base_url, name, with_broker, registry_dir,
               timeout_secs, max_output_bytes):
    """Run the repository HTTP service."""
    host, port = _parse_bind(bind)
    base = (base_url or f"http://{bind}").rstrip("/")
    repo = Repository(repo_root, base_url=base, name=name)
    broker = None
    if with_broker:
        limits = SandboxLimits(timeout_secs=timeout_secs, max_output_bytes=max_output_bytes)
        broker = ContextBroker(
            MechanismRegistry(registry_dir), limits=limits, default_repository=base
        )
    _serve(create_repository_app(repo, broker), host, port)


@main.command("serve-broker")
@click.option("--bind", default="127.0.0.1:8001", show_default=True)
@click.option("--registry-dir", type=click.Path(file_okay=False),
              help="Mechanism manifest directory (persisted registry).")
@click.option("--default-repo", default=None, help="Repository assumed when requests omit repo=.")
@click.option("--timeout-secs", default=10.0, show_default=True)
@click.option("--max-output-bytes", default=16 * 1024 * 1024, show_default=True)
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None,
              help="Static assets directory for the web UI.")
def serve_broker(bind, registry_dir, default_repo, timeout_secs, max_output_bytes, ui_dir):
    """Run the context-broker HTTP service."""
    host, port = _parse_bind(bind)
    limits = SandboxLimits(timeout_secs=timeout_secs, max_output_bytes=max_output_bytes)
    broker = ContextBroker(
        MechanismRegistry(registry_dir), limits=limits, default_repository=default_repo
    )
    _serve(create_broker_app(broker, ui_dir=ui_dir), host, port)


@main.command("register-mech")
@click.argument("manifest_xml", type=click.Path(exists=True, dir_okay=False))
@click.option("--broker", "broker_url", default=None, help="Broker admin URL.")
@click.option("--registry-dir", type=click.Path(file_okay=False),
              help="Register directly into a local manifest directory.")
def register_mech(manifest_xml: str, broker_url: str | None, registry_dir: str | None):
    """Register a mechanism manifest with a broker (or a local registry dir)."""
    manifest = Path(manifest_xml).read_bytes()
    if broker_url:
        try:
            response = httpx.post(broker_url.rstrip("/") + "/registry", content=manifest,
                                  headers={"content-type": "application/xml"}, timeout=15.0)
        except httpx.HTTPError as exc:
            raise NetworkFailure(str(exc))
        if response.status_code != 201:
            raise RemoteError(f"broker rejected manifest: {response.text.strip()}")
        click.echo(f"registered {response.json()['id']}")
    elif registry_dir:
        entry = parse_manifest(manifest)
        MechanismRegistry(registry_dir).register(entry)
        click.echo(f"registered {entry.mechanism_id}")
    else:
        raise click.UsageError("give --broker or --registry-dir")


@main.command("deregister-mech")
@click.argument("mechanism_id")
@click.option("--broker", "broker_url", default=None, help="Broker admin URL.")
@click.option("--registry-dir", type=click.Path(file_okay=False))
def deregister_mech(mechanism_id: str, broker_url: str | None, registry_dir: str | None):
    """Remove a mechanism from a broker's registry."""
    if broker_url:
        from urllib.parse import quote

        url = broker_url.rstrip("/") + "/registry/" + quote(mechanism_id, safe="")
        try:
            response = httpx.delete(url, timeout=15.0)
        except httpx.HTTPError as exc:
            raise NetworkFailure(str(exc))
        removed = response.status_code == 200 and response.json().get("removed")
    elif registry_dir:
        removed = MechanismRegistry(registry_dir).deregister(mechanism_id)
    else:
        raise click.UsageError("give --broker or --registry-dir")
    click.echo("removed" if removed else "not registered")


@main.command("harvest")
@click.argument("verb", type=click.Choice(["Identify", "ListIdentifiers", "ListRecords", "GetRecord"]))
@click.option("--repo", "repo_url", required=True, help="Repository base URL.")
@click.option("--identifier", default=None)
@click.option("--from", "from_", default=None, metavar="DATESTAMP")
@click.option("--until", default=None, metavar="DATESTAMP")
@click.option("--json", "as_json", is_flag=True, help="Print a JSON rendering instead of OAI XML.")
def harvest_cmd(verb, repo_url, identifier, from_, until, as_json):
    """Issue an OAI request against a repository and print the response."""
    try:
        if not as_json:
            params = {"verb": verb}
            if verb != "Identify":
                params["metadataPrefix"] = "structoid"
            if identifier:
                params["identifier"] = identifier
            if from_:
                params["from"] = from_
            if until:
                params["until"] = until
            response = httpx.get(repo_url.rstrip("/") + "/oai", params=params, timeout=15.0)
            response.raise_for_status()
            click.echo(response.text.rstrip("\n"))
            return
        if verb == "Identify":
            payload = {"verb": verb, **harvest.fetch_identify(repo_url)}
        elif verb == "ListIdentifiers":
            pairs = harvest.fetch_identifiers(repo_url, from_, until)
            payload = {
                "verb": verb,
                "identifiers": [{"identifier": i, "datestamp": d} for i, d in pairs],
            }
        elif verb == "GetRecord":
            if not identifier:
                raise click.UsageError("GetRecord requires --identifier")
            payload = {"verb": verb, "records": [_record_dict(harvest.fetch_record(repo_url, identifier))]}
        else:
            records = harvest.fetch_records(repo_url, from_, until)
            payload = {"verb": verb, "records": [_record_dict(r) for r in records]}
        click.echo(json.dumps(payload, indent=1))
    except harvest.OaiProtocolError as exc:
        raise RemoteError(str(exc))
    except (harvest.HarvestError, httpx.HTTPError) as exc:
        raise NetworkFailure(str(exc))


def _record_dict(record) -> dict:
    return {
        "identifier": record.object_id,
        "datestamp": record.datestamp,
        "structoids": [
            {
                "sid": ps.sid,
                "schemaURI": ps.schema_uri,
                "descriptor": ps.descriptor,
                "roles": [{"label": r.label, "href": r.href, "dsid": r.dsid} for r in ps.roles],
            }
            for ps in record.metadata
        ],
    }


@main.command("list-behaviors")
@click.option("--broker", "broker_url", required=True)
@click.option("--repo", "repo_url", default=None)
@click.option("--object", "object_id", required=True)
@click.option("--json", "as_json", is_flag=True)
def list_behaviors(broker_url, repo_url, object_id, as_json):
    """Ask a broker which behaviors are available for an object."""
    params = {"objectID": object_id}
    if repo_url:
        params["repo"] = repo_url
    if as_json:
        params["format"] = "json"
    try:
        response = httpx.get(broker_url.rstrip("/") + "/broker/ListBehaviors",
                             params=params, timeout=30.0)
    except httpx.HTTPError as exc:
        raise NetworkFailure(str(exc))
    click.echo(response.text.rstrip("\n"))
    if response.status_code != 200:
        sys.exit(EXIT_VALIDATION)


@main.command()
@click.option("--broker", "broker_url", required=True)
@click.option("--repo", "repo_url", default=None)
@click.option("--object", "object_id", required=True)
@click.option("--mechanism", required=True, help="Mechanism URL.")
@click.option("--behavior", required=True)
@click.option("--structoid", "structoid_sid", required=True)
@click.option("--param", "param_specs", multiple=True, metavar="NAME=VALUE")
@click.option("--json", "as_json", is_flag=True, help="Print the JSON reply envelope.")
@click.option("--output", type=click.Path(dir_okay=False), default=None,
              help="Write the decoded result body to a file.")
def perform(broker_url, repo_url, object_id, mechanism, behavior, structoid_sid,
            param_specs, as_json, output):
    """Perform one behavior on one object via a broker."""
    params = {}
    for spec in param_specs:
        name, sep, value = spec.partition("=")
        if not sep or not name:
            raise click.UsageError(f"--param expects NAME=VALUE, got {spec!r}")
        params[name] = value
    body = {
        "objectID": object_id,
        "mechanismURL": mechanism,
        "behaviorName": behavior,
        "structoidSID": structoid_sid,
        "params": params,
    }
    query = {"format": "json"}
    if repo_url:
        query["repo"] = repo_url
    try:
        response = httpx.post(broker_url.rstrip("/") + "/broker/PerformBehavior",
                              json=body, params=query, timeout=60.0)
    except httpx.HTTPError as exc:
        raise NetworkFailure(str(exc))
    if response.status_code != 200:
        click.echo(response.text.rstrip("\n"))
        sys.exit(EXIT_VALIDATION)
    payload = response.json()
    if as_json:
        click.echo(json.dumps(payload, indent=1))
        return
    raw = base64.b64decode(payload["bodyBase64"])
    if output:
        Path(output).write_bytes(raw)
        click.echo(f"{payload['mime']} -> {output} ({len(raw)} bytes)")
    elif payload["mime"].startswith("text/"):
        click.echo(raw.decode("utf-8", "replace"))
    else:
        sys.stdout.buffer.write(raw)


if __name__ == "__main__":
    main()
