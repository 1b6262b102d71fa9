from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contextbroker.mechanisms import builtin_manifest
from contextbroker.objects import Structoid
from contextbroker.registry import (
    BehaviorInterface,
    BehaviorSignature,
    BuiltinExecution,
    CommandExecution,
    EndpointExecution,
    InvalidManifest,
    MatchResult,
    MechanismEntry,
    MechanismRegistry,
    Param,
    UnknownMechanism,
    match_against,
    parse_manifest,
    serialize_manifest,
)
from contextbroker.schemas import CORNELL_IMAGE_TYPE


def _entry(mechanism_id: str, schema_uri: str, behaviors=("Do",)) -> MechanismEntry:
    interface = BehaviorInterface(
        mechanism_id + "/interface",
        tuple(BehaviorSignature(name, "text/plain") for name in behaviors),
    )
    return MechanismEntry(mechanism_id, schema_uri, interface, BuiltinExecution("gallery"))


def _structoid(sid: str, schema_uri: str) -> Structoid:
    return Structoid(sid, schema_uri, "", ())


class TestManifest:
    def test_gallery_manifest_parses(self):
        entry = parse_manifest(builtin_manifest("gallery"))
        assert entry.mechanism_id == "http://mechanisms.local/gallery"
        assert entry.required_schema_uri == CORNELL_IMAGE_TYPE
        assert [b.name for b in entry.interface.behaviors] == [
            "Gallery",
            "Description",
            "Thumbnail",
            "FullImage",
        ]
        assert entry.execution == BuiltinExecution("gallery")

    def test_translator_manifest_has_required_param(self):
        entry = parse_manifest(builtin_manifest("translator"))
        translate = entry.interface.behavior("Translate")
        assert translate.params == (Param("lang", "string", True),)

    def test_round_trip(self):
        entry = parse_manifest(builtin_manifest("translator"))
        assert parse_manifest(serialize_manifest(entry)) == entry

    def test_command_and_endpoint_executions(self):
        for xml, expected in [
            (b"<Execution><Command>python -m x</Command></Execution>", CommandExecution("python -m x")),
            (b"<Execution><Endpoint>http://m.example/run</Endpoint></Execution>", EndpointExecution("http://m.example/run")),
        ]:
            doc = (
                b'<Mechanism id="urn:m"><RequiresStructoidSchema>u#T</RequiresStructoidSchema>'
                b'<BehaviorInterface id="urn:m/i"><Behavior name="Do" outputMime="text/plain"/>'
                b"</BehaviorInterface>" + xml + b"</Mechanism>"
            )
            assert parse_manifest(doc).execution == expected

    def test_junk_rejected(self):
        with pytest.raises(InvalidManifest):
            parse_manifest(b"junk bytes")

    def test_zero_behaviors_rejected(self):
        doc = (
            b'<Mechanism id="urn:m"><RequiresStructoidSchema>u#T</RequiresStructoidSchema>'
            b'<BehaviorInterface id="urn:m/i"/>'
            b'<Execution><Builtin name="gallery"/></Execution></Mechanism>'
        )
        with pytest.raises(InvalidManifest):
            parse_manifest(doc)

    def test_duplicate_behavior_names_rejected(self):
        doc = (
            b'<Mechanism id="urn:m"><RequiresStructoidSchema>u#T</RequiresStructoidSchema>'
            b'<BehaviorInterface id="urn:m/i">'
            b'<Behavior name="Do" outputMime="text/plain"/>'
            b'<Behavior name="Do" outputMime="text/html"/>'
            b"</BehaviorInterface>"
            b'<Execution><Builtin name="gallery"/></Execution></Mechanism>'
        )
        with pytest.raises(InvalidManifest):
            parse_manifest(doc)


class TestRegistryLifecycle:
    def test_register_and_match_gallery(self):
        registry = MechanismRegistry()
        registry.register(parse_manifest(builtin_manifest("gallery")))
        results = registry.match_structoids([_structoid("S-7", CORNELL_IMAGE_TYPE)])
        assert results == [
            MatchResult(
                "S-7",
                CORNELL_IMAGE_TYPE,
                "http://mechanisms.local/gallery",
                "http://mechanisms.local/gallery/interface",
            )
        ]

    def test_empty_registry_matches_nothing(self):
        assert MechanismRegistry().match_structoids([_structoid("S-7", CORNELL_IMAGE_TYPE)]) == []

    def test_schema_mismatch_matches_nothing(self):
        registry = MechanismRegistry()
        registry.register(_entry("urn:m", "http://other.example/NS#T"))
        assert registry.match_structoids([_structoid("S-7", CORNELL_IMAGE_TYPE)]) == []

    def test_reregistration_replaces(self):
        registry = MechanismRegistry()
        registry.register(_entry("urn:m", "u#T", behaviors=("Old",)))
        registry.register(_entry("urn:m", "u#T", behaviors=("New",)))
        assert [b.name for b in registry.get_interface("urn:m").behaviors] == ["New"]
        assert len(registry.entries()) == 1

    def test_deregister(self):
        registry = MechanismRegistry()
        registry.register(_entry("urn:m", "u#T"))
        assert registry.deregister("urn:m") is True
        assert registry.deregister("urn:m") is False
        assert registry.match_structoids([_structoid("S-1", "u#T")]) == []
        registry.register(_entry("urn:m", "u#T"))
        assert registry.get("urn:m") is not None

    def test_get_interface_unknown(self):
        with pytest.raises(UnknownMechanism):
            MechanismRegistry().get_interface("urn:nobody")

    def test_persistence_keeps_registration_order(self, tmp_path):
        registry = MechanismRegistry(tmp_path / "reg")
        registry.register(_entry("urn:b", "u#T"))
        registry.register(_entry("urn:a", "u#T"))
        reloaded = MechanismRegistry(tmp_path / "reg")
        assert [e.mechanism_id for e in reloaded.entries()] == ["urn:b", "urn:a"]

    def test_persistence_deregister_removes_file(self, tmp_path):
        registry = MechanismRegistry(tmp_path / "reg")
        registry.register(_entry("urn:with/slash", "u#T"))
        assert registry.deregister("urn:with/slash") is True
        assert MechanismRegistry(tmp_path / "reg").entries() == []


# -- matching oracle ---------------------------------------------------------


def _brute_force(structoids, entries) -> list[MatchResult]:
    return [
        MatchResult(s.sid, s.schema_uri, e.mechanism_id, e.interface.interface_id)
        for s in structoids
        for e in entries
        if s.schema_uri == e.required_schema_uri
    ]


_URIS = [f"http://ns.example/S{i}#T" for i in range(6)]


@settings(max_examples=200)
@given(
    st.lists(st.sampled_from(_URIS), max_size=8),
    st.lists(st.sampled_from(_URIS), max_size=8),
)
def test_match_equals_bruteforce(structoid_uris, entry_uris):
    structoids = [_structoid(f"S-{i}", uri) for i, uri in enumerate(structoid_uris)]
    registry = MechanismRegistry()
    entries = []
    for i, uri in enumerate(entry_uris):
        entry = _entry(f"urn:m{i}", uri)
        registry.register(entry)
        entries.append(entry)
    assert registry.match_structoids(structoids) == _brute_force(structoids, entries)


def test_match_randomized_against_oracle_500_cases():
    rng = random.Random(20260810)
    for _ in range(500):
        structoids = [
            _structoid(f"S-{i}", rng.choice(_URIS)) for i in range(rng.randint(0, 20))
        ]
        registry = MechanismRegistry()
        entries = []
        for i in range(rng.randint(0, 20)):
            entry = _entry(f"urn:m{i}", rng.choice(_URIS))
            registry.register(entry)
            entries.append(entry)
        assert registry.match_structoids(structoids) == _brute_force(structoids, entries)


def test_monotonicity_of_registration():
    registry = MechanismRegistry()
    structoids = [_structoid(f"S-{i}", uri) for i, uri in enumerate(_URIS)]
    registry.register(_entry("urn:m0", _URIS[0]))
    before = registry.match_structoids(structoids)
    registry.register(_entry("urn:m1", _URIS[1]))
    after = registry.match_structoids(structoids)
    assert set(before) <= set(after)
    registry.deregister("urn:m1")
    final = registry.match_structoids(structoids)
    assert final == before
    assert all(m.mechanism_id != "urn:m1" for m in final)


def test_match_ignores_roles_and_content():
    from contextbroker.objects import Role

    registry = MechanismRegistry()
    registry.register(_entry("urn:m", CORNELL_IMAGE_TYPE))
    bare = _structoid("S-7", CORNELL_IMAGE_TYPE)
    withroles = Structoid(
        "S-7", CORNELL_IMAGE_TYPE, "other descriptor", (Role("thumbnail", "DS-1"),)
    )
    assert registry.match_structoids([bare]) == registry.match_structoids([withroles])


def test_match_against_public_structoids():
    from contextbroker.objects import PublicRole, PublicStructoid

    registry = MechanismRegistry()
    registry.register(_entry("urn:m", CORNELL_IMAGE_TYPE))
    ps = PublicStructoid(
        "S-7", CORNELL_IMAGE_TYPE, "", (PublicRole("thumbnail", "http://r.example/x"),)
    )
    assert len(registry.match_structoids([ps])) == 1
