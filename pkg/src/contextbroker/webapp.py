"""HTTP surfaces for the repository and the context broker.

The repository app serves object documents, datastream bytes, multipart
ingest, and the OAI endpoint. The broker app serves the two broker-protocol
requests, the registry admin API, an OAI proxy for browser clients, and
(optionally) the static UI. A repository can mount the broker routes
in-process to act as its own default-behaviors broker.
"""

from __future__ import annotations

import base64
import xml.etree.ElementTree as ET
from pathlib import Path
from xml.sax.saxutils import quoteattr

import anyio.to_thread
import httpx
from fastapi import APIRouter, FastAPI, Request, Response

from . import harvest
from .broker import (
    Binding,
    BrokerError,
    ContextBroker,
    ListBehaviorsResponse,
    PerformRequest,
)
from .invocation import BehaviorResult
from .objects import ObjectError
from .registry import (
    RegistryError,
    execution_to_json,
    interface_to_json,
    parse_manifest,
    serialize_manifest,
)
from .schemas import SchemaError
from .store import Repository, RepositoryError

_STATUS_BY_CODE = {
    "ObjectNotFound": 404,
    "NotFound": 404,
    "UnknownMechanism": 404,
    "StructoidNotFound": 404,
    "BehaviorNotFound": 404,
    "UnknownSchema": 404,
    "SchemaMismatch": 409,
    "RoleResolutionFailed": 409,
    "MissingParam": 400,
    "BadParamType": 400,
    "InvalidRequest": 400,
    "MissingArgument": 400,
    "InvalidManifest": 400,
    "UnsupportedExecution": 400,
    "MalformedDocument": 400,
    "MalformedSchema": 400,
    "DuplicateId": 400,
    "DuplicateLabel": 400,
    "DanglingReference": 400,
    "ValidationFailed": 400,
    "MissingBlob": 400,
    "ContentFetchFailed": 502,
    "MechanismFault": 502,
    "RepositoryUnavailable": 502,
    "UpstreamUnavailable": 502,
    "FetchFailed": 502,
    "OutputTooLarge": 502,
    "Timeout": 504,
    # OAI protocol codes surfaced through the proxy
    "idDoesNotExist": 404,
    "badArgument": 400,
    "badVerb": 400,
    "cannotDisseminateFormat": 400,
}

_HANDLED_ERRORS = (
    BrokerError,
    RegistryError,
    RepositoryError,
    SchemaError,
    ObjectError,
    harvest.HarvestError,
)


def _wants_json(request: Request) -> bool:
    fmt = request.query_params.get("format")
    if fmt == "json":
        return True
    if fmt == "xml":
        return False
    return "application/json" in request.headers.get("accept", "")


def _error_response(request: Request, code: str, message: str) -> Response:
    status = _STATUS_BY_CODE.get(code, 500)
    if _wants_json(request):
        return _json_response({"error": {"code": code, "message": message}}, status)
    body = f"<BrokerError code={quoteattr(code)} message={quoteattr(message)}/>\n"
    return Response(content=body, status_code=status, media_type="application/xml")


def _json_response(payload: dict, status: int = 200) -> Response:
    import json

    return Response(
        content=json.dumps(payload, indent=1),
        status_code=status,
        media_type="application/json",
    )


class MissingArgument(ValueError):
    pass


def _install_error_handlers(app: FastAPI) -> None:
    async def handle(request: Request, exc: Exception) -> Response:
        code = exc.code if isinstance(exc, harvest.OaiProtocolError) else type(exc).__name__
        return _error_response(request, code, str(exc))

    async def handle_value_error(request: Request, exc: Exception) -> Response:
        code = "MissingArgument" if isinstance(exc, MissingArgument) else "InvalidRequest"
        return _error_response(request, code, str(exc))

    for klass in _HANDLED_ERRORS:
        app.add_exception_handler(klass, handle)
    app.add_exception_handler(ValueError, handle_value_error)


# -- response renderings ---------------------------------------------------


def _binding_xml(binding: Binding) -> str:
    lines = [
        f"  <Binding structoidSID={quoteattr(binding.structoid_sid)} "
        f"schemaURI={quoteattr(binding.schema_uri)} "
        f"mechanismID={quoteattr(binding.mechanism_id)}>"
    ]
    lines.append(f"    <BehaviorInterface id={quoteattr(binding.interface.interface_id)}>")
    for b in binding.interface.behaviors:
        attrs = f"name={quoteattr(b.name)} outputMime={quoteattr(b.output_mime)}"
        if b.params:
            lines.append(f"      <Behavior {attrs}>")
            for p in b.params:
                lines.append(
                    f"        <Param name={quoteattr(p.name)} type={quoteattr(p.type)} "
                    f"required={quoteattr('true' if p.required else 'false')}/>"
                )
            lines.append("      </Behavior>")
        else:
            lines.append(f"      <Behavior {attrs}/>")
    lines.append("    </BehaviorInterface>")
    lines.append("  </Binding>")
    return "\n".join(lines)


def render_list_behaviors(response: ListBehaviorsResponse, as_json: bool) -> Response:
    if as_json:
        return _json_response(
            {
                "objectID": response.object_id,
                "bindings": [
                    {
                        "structoidSID": b.structoid_sid,
                        "schemaURI": b.schema_uri,
                        "mechanismID": b.mechanism_id,
                        "interface": interface_to_json(b.interface),
                    }
                    for b in response.bindings
                ],
            }
        )
    lines = ['<?xml version="1.0" encoding="UTF-8"?>']
    if response.bindings:
        lines.append(f"<ListBehaviorsResponse objectID={quoteattr(response.object_id)}>")
        for binding in response.bindings:
            lines.append(_binding_xml(binding))
        lines.append("</ListBehaviorsResponse>")
    else:
        lines.append(f"<ListBehaviorsResponse objectID={quoteattr(response.object_id)}/>")
    return Response(content="\n".join(lines) + "\n", media_type="application/xml")


def render_behavior_result(result: BehaviorResult, as_json: bool) -> Response:
    encoded = base64.b64encode(result.body).decode("ascii")
    if as_json:
        return _json_response({"mime": result.mime, "bodyBase64": encoded})
    body = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f"<BehaviorResult mime={quoteattr(result.mime)}>\n"
        f'  <body encoding="base64">{encoded}</body>\n'
        "</BehaviorResult>\n"
    )
    return Response(content=body, media_type="application/xml")


def _parse_perform_request(raw: bytes, content_type: str) -> PerformRequest:
    if "json" in content_type:
        import json

        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValueError(f"PerformBehavior body is not JSON: {exc}") from None
        if not isinstance(payload, dict):
            raise ValueError("PerformBehavior body must be a JSON object")
        params = payload.get("params") or {}
        if not isinstance(params, dict):
            raise ValueError("params must be an object")
        return PerformRequest(
            object_id=str(payload.get("objectID", "")),
            mechanism_url=str(payload.get("mechanismURL", "")),
            behavior_name=str(payload.get("behaviorName", "")),
            structoid_sid=str(payload.get("structoidSID", "")),
            params=params,
        )
    try:
        root = ET.fromstring(raw)
    except ET.ParseError as exc:
        raise ValueError(f"PerformBehavior body is not XML: {exc}") from None
    if root.tag != "PerformRequest":
        raise ValueError(f"unexpected root element {root.tag!r}")
    params: dict[str, object] = {}
    for child in root:
        if child.tag != "Param":
            raise ValueError(f"unexpected element {child.tag!r} in PerformRequest")
        name = child.get("name")
        if not name:
            raise ValueError("Param requires a name attribute")
        params[name] = child.text or ""
    return PerformRequest(
        object_id=root.get("objectID", ""),
        mechanism_url=root.get("mechanismURL", ""),
        behavior_name=root.get("behaviorName", ""),
        structoid_sid=root.get("structoidSID", ""),
        params=params,
    )


# -- broker routes ----------------------------------------------------------


def broker_router(broker: ContextBroker) -> APIRouter:
    router = APIRouter()

    def _repo_base(request: Request) -> str:
        base = request.query_params.get("repo") or broker.default_repository
        if not base:
            raise MissingArgument("no repo argument given and no default repository configured")
        return base.rstrip("/")

    @router.get("/broker/ListBehaviors")
    def list_behaviors(request: Request) -> Response:
        object_id = request.query_params.get("objectID")
        if not object_id:
            raise MissingArgument("objectID argument is required")
        response = broker.list_behaviors(_repo_base(request), object_id)
        return render_list_behaviors(response, _wants_json(request))

    @router.post("/broker/PerformBehavior")
    async def perform_behavior(request: Request) -> Response:
        raw = await request.body()
        perform = _parse_perform_request(raw, request.headers.get("content-type", ""))
        repo_base = _repo_base(request)
        as_json = _wants_json(request)
        result = await anyio.to_thread.run_sync(
            lambda: broker.perform_behavior(perform, repo_base)
        )
        return render_behavior_result(result, as_json)

    @router.get("/broker/proxy/oai")
    def proxy_oai(request: Request) -> Response:
        repo_base = _repo_base(request)
        params = {
            k: v for k, v in request.query_params.items() if k not in ("repo", "format")
        }
        if not _wants_json(request):
            try:
                upstream = httpx.get(repo_base + "/oai", params=params, timeout=15.0)
            except httpx.HTTPError as exc:
                raise harvest.RepositoryUnavailable(str(exc)) from exc
            return Response(content=upstream.content, media_type="application/xml")
        return _json_response(_proxy_json(repo_base, params))

    @router.post("/registry")
    async def register(request: Request) -> Response:
        entry = parse_manifest(await request.body())
        broker.registry.register(entry)
        return _json_response({"id": entry.mechanism_id}, status=201)

    @router.delete("/registry/{mechanism_id:path}")
    def deregister(mechanism_id: str) -> Response:
        removed = broker.registry.deregister(mechanism_id)
        return _json_response({"removed": removed})

    @router.get("/registry")
    def list_registry(request: Request) -> Response:
        entries = broker.registry.entries()
        if _wants_json(request):
            return _json_response(
                {
                    "mechanisms": [
                        {
                            "id": e.mechanism_id,
                            "requiresStructoidSchema": e.required_schema_uri,
                            "interface": interface_to_json(e.interface),
                            "execution": execution_to_json(e.execution),
                        }
                        for e in entries
                    ]
                }
            )
        parts = ['<?xml version="1.0" encoding="UTF-8"?>', "<Registry>"]
        for e in entries:
            manifest = serialize_manifest(e).decode("utf-8")
            manifest = manifest.split("\n", 1)[1]  # drop the XML declaration
            parts.append(manifest.rstrip("\n"))
        parts.append("</Registry>")
        return Response(content="\n".join(parts) + "\n", media_type="application/xml")

    return router


def _proxy_json(repo_base: str, params: dict[str, str]) -> dict:
    verb = params.get("verb", "")
    try:
        if verb == "Identify":
            payload = harvest.fetch_identify(repo_base)
            return {"verb": verb, **payload}
        if verb == "ListIdentifiers":
            pairs = harvest.fetch_identifiers(repo_base, params.get("from"), params.get("until"))
            return {
                "verb": verb,
                "identifiers": [
                    {"identifier": object_id, "datestamp": stamp} for object_id, stamp in pairs
                ],
            }
        if verb == "GetRecord":
            record = harvest.fetch_record(repo_base, params.get("identifier", ""))
            return {"verb": verb, "records": [_record_json(record)]}
        if verb == "ListRecords":
            records = harvest.fetch_records(repo_base, params.get("from"), params.get("until"))
            return {"verb": verb, "records": [_record_json(r) for r in records]}
    except harvest.OaiProtocolError as exc:
        raise exc
    raise MissingArgument(f"unsupported proxy verb {verb!r}")


def _record_json(record) -> dict:
    return {
        "identifier": record.object_id,
        "datestamp": record.datestamp,
        "structoids": [
            {
                "sid": ps.sid,
                "schemaURI": ps.schema_uri,
                "descriptor": ps.descriptor,
                "roles": [
                    {"label": r.label, "href": r.href, "dsid": r.dsid} for r in ps.roles
                ],
            }
            for ps in record.metadata
        ],
    }


# -- repository routes ------------------------------------------------------


def repository_router(repo: Repository) -> APIRouter:
    router = APIRouter()

    @router.get("/oai")
    def oai(request: Request) -> Response:
        args = {k: v for k, v in request.query_params.items() if k != "verb"}
        body = repo.oai_request(request.query_params.get("verb"), args)
        return Response(content=body, media_type="application/xml")

    @router.post("/objects")
    async def ingest(request: Request) -> Response:
        form = await request.form()
        document = None
        blobs: dict[str, bytes] = {}
        for name, value in form.multi_items():
            payload = await value.read() if hasattr(value, "read") else str(value).encode()
            if name == "document":
                document = payload
            else:
                blobs[name] = payload
        if document is None:
            raise MissingArgument("multipart ingest requires a 'document' part")
        object_id = repo.ingest(document, blobs)
        return _json_response(
            {"objectID": object_id, "datestamp": repo.datestamp(object_id)}, status=201
        )

    # Object ids may contain '/', which arrives decoded in the path; the
    # catch-all tail is split on the reserved '/datastreams/' segment.
    @router.get("/objects/{tail:path}")
    def get_object_or_datastream(tail: str) -> Response:
        if "/datastreams/" in tail:
            object_id, dsid = tail.rsplit("/datastreams/", 1)
            body, mime = repo.get_datastream(object_id, dsid)
            return Response(content=body, media_type=mime)
        return Response(content=repo.get_object_document(tail), media_type="application/xml")

    return router


# -- application factories --------------------------------------------------


def create_repository_app(repo: Repository, broker: ContextBroker | None = None) -> FastAPI:
    """Repository service; pass a broker to co-locate default behaviors."""
    app = FastAPI(title="contextbroker repository", docs_url=None, redoc_url=None)
    _install_error_handlers(app)
    app.include_router(repository_router(repo))
    if broker is not None:
        app.include_router(broker_router(broker))
    return app


_UI_PLACEHOLDER = (
    "<!DOCTYPE html><html><body><p>No UI assets are configured. "
    "Start the broker with a UI directory to serve the web client.</p></body></html>"
)


def create_broker_app(broker: ContextBroker, ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="contextbroker broker", docs_url=None, redoc_url=None)
    _install_error_handlers(app)
    app.include_router(broker_router(broker))
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    else:

        @app.get("/ui")
        def ui_placeholder() -> Response:
            return Response(content=_UI_PLACEHOLDER, media_type="text/html")

    return app
