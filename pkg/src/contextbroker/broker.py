"""Context broker: the information intermediary.

Answers two requests. ListBehaviors harvests an object's structoids from the
repository's OAI surface, matches them against the local behavior registry,
and returns the matched mechanisms with their behavior interfaces.
PerformBehavior loads the named mechanism in a sandboxed runner, invokes the
behavior, resolves any labeled inputs the mechanism asks for through the
named structoid (fetching content from the repository), re-invokes once, and
returns the result. The broker never writes to the repository.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass, field
from typing import Mapping

import httpx

from . import harvest, wire
from .invocation import (
    BehaviorResult,
    Content,
    InvokeReply,
    MechanismError,
    NeedsInput,
    Result,
    SandboxLimits,
    mime_matches,
)
from .mechanisms import BUILTINS
from .objects import PublicStructoid, datastream_url
from .registry import (
    BehaviorInterface,
    BehaviorSignature,
    BuiltinExecution,
    CommandExecution,
    EndpointExecution,
    MechanismEntry,
    MechanismRegistry,
    Param,
    UnknownMechanism,
    match_against,
    parse_manifest,
)
from .schemas import SchemaRegistry, default_registry
from .store import HarvestRecord


class BrokerError(Exception):
    """Base for broker-protocol failures; ``code`` names the error on the wire."""

    @property
    def code(self) -> str:
        return type(self).__name__


class ObjectNotFound(BrokerError):
    pass


class RepositoryUnavailable(BrokerError):
    pass


class StructoidNotFound(BrokerError):
    pass


class SchemaMismatch(BrokerError):
    pass


class BehaviorNotFound(BrokerError):
    pass


class MissingParam(BrokerError):
    pass


class BadParamType(BrokerError):
    pass


class RoleResolutionFailed(BrokerError):
    pass


class ContentFetchFailed(BrokerError):
    pass


class MechanismFault(BrokerError):
    pass


class Timeout(BrokerError):
    pass


class OutputTooLarge(BrokerError):
    pass


class FetchFailed(BrokerError):
    pass


class UnsupportedExecution(BrokerError):
    pass


@dataclass(frozen=True)
class PerformRequest:
    """Everything needed to perform one behavior on one digital object."""

    object_id: str
    mechanism_url: str
    behavior_name: str
    structoid_sid: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("object_id", "mechanism_url", "behavior_name", "structoid_sid"):
            if not getattr(self, name):
                raise ValueError(f"PerformRequest field {name} must be non-empty")


@dataclass(frozen=True)
class Binding:
    structoid_sid: str
    schema_uri: str
    mechanism_id: str
    interface: BehaviorInterface


@dataclass(frozen=True)
class ListBehaviorsResponse:
    object_id: str
    bindings: tuple[Binding, ...]


class MechanismRunner:
    """Executes one mechanism's behaviors under broker-wide resource limits.

    Runners hold no repository credentials; a mechanism only ever sees the
    content the broker explicitly passes in.
    """

    def __init__(self, entry: MechanismEntry, limits: SandboxLimits):
        self.entry = entry
        self.limits = limits

    def invoke(
        self, behavior: str, params: Mapping[str, object], inputs: Mapping[str, Content]
    ) -> InvokeReply:
        reply = self._invoke(behavior, params, inputs)
        if isinstance(reply, Result) and len(reply.result.body) > self.limits.max_output_bytes:
            raise OutputTooLarge(
                f"behavior produced {len(reply.result.body)} bytes; "
                f"limit is {self.limits.max_output_bytes}"
            )
        return reply

    def _invoke(self, behavior, params, inputs) -> InvokeReply:
        raise NotImplementedError


class BuiltinRunner(MechanismRunner):
    def __init__(self, entry: MechanismEntry, limits: SandboxLimits, mechanism):
        super().__init__(entry, limits)
        self.mechanism = mechanism

    def _invoke(self, behavior, params, inputs) -> InvokeReply:
        try:
            return self.mechanism.invoke(behavior, params, inputs)
        except MechanismError as exc:
            raise MechanismFault(str(exc)) from exc


class CommandRunner(MechanismRunner):
    """One subprocess per message exchange, killed at the wall-clock limit."""

    def __init__(self, entry: MechanismEntry, limits: SandboxLimits, argv: list[str]):
        super().__init__(entry, limits)
        self.argv = argv

    def _invoke(self, behavior, params, inputs) -> InvokeReply:
        if inputs:
            message = wire.supply_message(behavior, params, inputs)
        else:
            message = wire.probe_message(behavior, params)
        try:
            completed = subprocess.run(
                self.argv,
                input=wire.encode_frame(message),
                capture_output=True,
                timeout=self.limits.timeout_secs,
            )
        except subprocess.TimeoutExpired:
            raise Timeout(
                f"mechanism {self.entry.mechanism_id!r} exceeded "
                f"{self.limits.timeout_secs}s and was killed"
            ) from None
        except OSError as exc:
            raise MechanismFault(f"cannot run mechanism command: {exc}") from exc
        if len(completed.stdout) > self.limits.max_output_bytes:
            raise OutputTooLarge(
                f"mechanism wrote {len(completed.stdout)} bytes; "
                f"limit is {self.limits.max_output_bytes}"
            )
        try:
            reply = wire.decode_frame(completed.stdout)
            return wire.message_to_reply(reply)
        except wire.WireError as exc:
            stderr = completed.stderr.decode("utf-8", "replace").strip()
            detail = f" (exit {completed.returncode}"
            detail += f", stderr: {stderr})" if stderr else ")"
            raise MechanismFault(f"malformed mechanism reply: {exc}{detail}") from None
        except MechanismError as exc:
            raise MechanismFault(str(exc)) from exc


class EndpointRunner(MechanismRunner):
    """Message exchange over HTTP: one POST per invocation."""

    def __init__(self, entry: MechanismEntry, limits: SandboxLimits, url: str):
        super().__init__(entry, limits)
        self.url = url

    def _invoke(self, behavior, params, inputs) -> InvokeReply:
        if inputs:
            message = wire.supply_message(behavior, params, inputs)
        else:
            message = wire.probe_message(behavior, params)
        try:
            response = httpx.post(self.url, json=message, timeout=self.limits.timeout_secs)
            response.raise_for_status()
        except httpx.TimeoutException:
            raise Timeout(
                f"mechanism endpoint {self.url!r} exceeded {self.limits.timeout_secs}s"
            ) from None
        except httpx.HTTPError as exc:
            raise MechanismFault(f"mechanism endpoint failed: {exc}") from exc
        if len(response.content) > self.limits.max_output_bytes:
            raise OutputTooLarge(f"mechanism reply of {len(response.content)} bytes over limit")
        try:
            return wire.message_to_reply(response.json())
        except MechanismError as exc:
            raise MechanismFault(str(exc)) from exc
        except (wire.WireError, ValueError) as exc:
            raise MechanismFault(f"malformed mechanism reply: {exc}") from None


class ContextBroker:
    def __init__(
        self,
        registry: MechanismRegistry,
        *,
        schema_registry: SchemaRegistry | None = None,
        limits: SandboxLimits | None = None,
        default_repository: str | None = None,
    ):
        self.registry = registry
        self.schema_registry = schema_registry if schema_registry is not None else default_registry()
        self.limits = limits or SandboxLimits()
        self.default_repository = default_repository.rstrip("/") if default_repository else None

    # -- harvesting -------------------------------------------------------

    def _fetch_record(self, repository_base: str, object_id: str) -> HarvestRecord:
        try:
            return harvest.fetch_record(repository_base, object_id)
        except harvest.OaiProtocolError as exc:
            if exc.code == "idDoesNotExist":
                raise ObjectNotFound(f"object {object_id!r} not found at {repository_base!r}") from exc
            raise RepositoryUnavailable(str(exc)) from exc
        except harvest.HarvestError as exc:
            raise RepositoryUnavailable(str(exc)) from exc

    # -- ListBehaviors ----------------------------------------------------

    def list_behaviors(self, repository_base: str, object_id: str) -> ListBehaviorsResponse:
        """Figure-7 sequence: harvest structoids, match, attach interfaces."""
        record = self._fetch_record(repository_base, object_id)
        snapshot = self.registry.entries()
        by_id = {entry.mechanism_id: entry for entry in snapshot}
        bindings = tuple(
            Binding(m.structoid_sid, m.schema_uri, m.mechanism_id, by_id[m.mechanism_id].interface)
            for m in match_against(record.metadata, snapshot)
        )
        return ListBehaviorsResponse(object_id, bindings)

    # -- mechanism loading ------------------------------------------------

    def load_mechanism(self, mechanism_url: str) -> MechanismRunner:
        """Resolve a mechanism by registry lookup or by fetching its manifest."""
        entry = self.registry.get(mechanism_url)
        if entry is None:
            try:
                response = httpx.get(mechanism_url, timeout=15.0)
                response.raise_for_status()
            except httpx.HTTPError as exc:
                raise FetchFailed(f"cannot fetch mechanism {mechanism_url!r}: {exc}") from exc
            entry = parse_manifest(response.content)
        return self._runner(entry)

    def _runner(self, entry: MechanismEntry) -> MechanismRunner:
        execution = entry.execution
        if isinstance(execution, BuiltinExecution):
            mechanism = BUILTINS.get(execution.name)
            if mechanism is None:
                raise UnsupportedExecution(f"no builtin mechanism named {execution.name!r}")
            return BuiltinRunner(entry, self.limits, mechanism)
        if isinstance(execution, CommandExecution):
            return CommandRunner(entry, self.limits, shlex.split(execution.command))
        if isinstance(execution, EndpointExecution):
            return EndpointRunner(entry, self.limits, execution.url)
        raise UnsupportedExecution(f"unsupported execution spec {execution!r}")

    # -- PerformBehavior --------------------------------------------------

    def perform_behavior(self, request: PerformRequest, repository_base: str) -> BehaviorResult:
        """Figure-8 sequence, with at most one input-resolution round."""
        try:
            runner = self.load_mechanism(request.mechanism_url)
        except FetchFailed as exc:
            raise UnknownMechanism(request.mechanism_url) from exc
        entry = runner.entry

        record = self._fetch_record(repository_base, request.object_id)
        structoid = next(
            (s for s in record.metadata if s.sid == request.structoid_sid), None
        )
        if structoid is None:
            raise StructoidNotFound(
                f"object {request.object_id!r} exposes no structoid {request.structoid_sid!r}"
            )
        if structoid.schema_uri != entry.required_schema_uri:
            raise SchemaMismatch(
                f"structoid {structoid.sid!r} is typed {structoid.schema_uri!r} but mechanism "
                f"{entry.mechanism_id!r} requires {entry.required_schema_uri!r}"
            )
        signature = entry.interface.behavior(request.behavior_name)
        if signature is None:
            raise BehaviorNotFound(
                f"mechanism {entry.mechanism_id!r} offers no behavior {request.behavior_name!r}"
            )
        params = self._coerce_params(signature, request.params)

        reply = runner.invoke(request.behavior_name, params, {})
        if isinstance(reply, NeedsInput):
            inputs = self._resolve_inputs(
                reply, entry, structoid, repository_base, request.object_id
            )
            reply = runner.invoke(request.behavior_name, params, inputs)
            if isinstance(reply, NeedsInput):
                raise MechanismFault(
                    f"mechanism {entry.mechanism_id!r} requested a second input round "
                    f"({', '.join(reply.labels)}); only one is permitted"
                )
        result = reply.result
        if not mime_matches(signature.output_mime, result.mime):
            raise MechanismFault(
                f"behavior {request.behavior_name!r} declared output MIME "
                f"{signature.output_mime!r} but produced {result.mime!r}"
            )
        return result

    def _coerce_params(
        self, signature: BehaviorSignature, params: Mapping[str, object]
    ) -> dict[str, object]:
        declared = {p.name: p for p in signature.params}
        out: dict[str, object] = {}
        for name, value in params.items():
            spec = declared.get(name)
            if spec is None:
                raise BadParamType(
                    f"behavior {signature.name!r} has no parameter {name!r}"
                )
            out[name] = _coerce_param(spec, value)
        for spec in signature.params:
            if spec.required and spec.name not in out:
                raise MissingParam(f"behavior {signature.name!r} requires parameter {spec.name!r}")
        return out

    def _resolve_inputs(
        self,
        needs: NeedsInput,
        entry: MechanismEntry,
        structoid: PublicStructoid,
        repository_base: str,
        object_id: str,
    ) -> dict[str, Content]:
        if not needs.labels:
            raise MechanismFault(f"mechanism {entry.mechanism_id!r} requested an empty input round")
        schema = self.schema_registry.maybe_resolve(entry.required_schema_uri)
        if schema is not None:
            outside = [l for l in needs.labels if l not in schema.label_names()]
            if outside:
                raise MechanismFault(
                    f"mechanism {entry.mechanism_id!r} requested labels outside its required "
                    f"schema: {', '.join(outside)}"
                )
        inputs: dict[str, Content] = {}
        for label in needs.labels:
            inputs[label] = self._fetch_role(structoid, label, repository_base, object_id)
        return inputs

    def _fetch_role(
        self, structoid: PublicStructoid, label: str, repository_base: str, object_id: str
    ) -> Content:
        role = next((r for r in structoid.roles if r.label == label), None)
        if role is None:
            raise RoleResolutionFailed(
                f"structoid {structoid.sid!r} has no access point labeled {label!r}"
            )
        url = role.href
        if not url:
            if not role.dsid:
                raise RoleResolutionFailed(
                    f"access point {label!r} of structoid {structoid.sid!r} has no target"
                )
            url = datastream_url(repository_base, object_id, role.dsid)
        try:
            response = httpx.get(url, timeout=15.0)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise ContentFetchFailed(f"fetching {label!r} content from {url!r} failed: {exc}") from exc
        mime = response.headers.get("content-type", "application/octet-stream").split(";")[0].strip()
        return Content(body=response.content, mime=mime, url=url)


def _coerce_param(spec: Param, value: object) -> object:
    if spec.type == "string":
        if isinstance(value, str):
            return value
    elif spec.type == "integer":
        if isinstance(value, bool):
            pass  # bool is an int subtype but not an integer parameter
        elif isinstance(value, int):
            return value
        elif isinstance(value, str):
            try:
                return int(value, 10)
            except ValueError:
                pass
    elif spec.type == "boolean":
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
    raise BadParamType(f"parameter {spec.name!r} must be of type {spec.type}; got {value!r}")
