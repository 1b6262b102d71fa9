"""Digital-object repository, structoid validation, and context brokering.

The package separates rendering from storage: a repository stores digital
objects and exposes their structural metadata (structoids) over an OAI-style
protocol; an independent context broker matches that metadata against a
local registry of behavior mechanisms and executes them, sandboxed, to
render the content.
"""

from .broker import (
    Binding,
    BrokerError,
    ContextBroker,
    ListBehaviorsResponse,
    PerformRequest,
)
from .invocation import BehaviorResult, Content, NeedsInput, Result, SandboxLimits
from .objects import (
    DataStream,
    DigitalObject,
    Disseminator,
    PublicStructoid,
    Role,
    Structoid,
    Violation,
    check_integrity,
    parse_object,
    public_view,
    serialize_object,
)
from .registry import (
    BehaviorInterface,
    BehaviorSignature,
    MatchResult,
    MechanismEntry,
    MechanismRegistry,
    parse_manifest,
    serialize_manifest,
)
from .schemas import (
    Finding,
    LabelSpec,
    SchemaRegistry,
    StructoidSchema,
    ValidationReport,
    default_registry,
    parse_schema,
    validate_grammar,
    validate_rules,
)
from .store import HarvestRecord, Repository

__version__ = "0.1.0"

__all__ = [
    "BehaviorInterface",
    "BehaviorResult",
    "BehaviorSignature",
    "Binding",
    "BrokerError",
    "Content",
    "ContextBroker",
    "DataStream",
    "DigitalObject",
    "Disseminator",
    "Finding",
    "HarvestRecord",
    "LabelSpec",
    "ListBehaviorsResponse",
    "MatchResult",
    "MechanismEntry",
    "MechanismRegistry",
    "NeedsInput",
    "PerformRequest",
    "PublicStructoid",
    "Repository",
    "Result",
    "Role",
    "SandboxLimits",
    "SchemaRegistry",
    "Structoid",
    "StructoidSchema",
    "ValidationReport",
    "Violation",
    "check_integrity",
    "default_registry",
    "parse_manifest",
    "parse_object",
    "parse_schema",
    "public_view",
    "serialize_manifest",
    "serialize_object",
    "validate_grammar",
    "validate_rules",
]
