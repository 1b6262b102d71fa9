"""Reference behavior mechanisms.

Both are pure: identical inputs give byte-identical outputs. They ship with
manifest files so they can be registered and deregistered like any external
mechanism, and they can also run out-of-process behind the wire protocol
(see the wire module).
"""

from __future__ import annotations

import html
import json
import re
from importlib import resources
from typing import Mapping

from .invocation import BehaviorResult, Content, InvokeReply, MechanismError, NeedsInput, Result
from .schemas import CORNELL_IMAGE_TYPE, TEXT_DOCUMENT_TYPE

_IMAGE_MIMES = ("image/jpeg", "image/gif")

_HTML_HEAD = '<!DOCTYPE html>\n<html>\n<head>\n<meta charset="utf-8">\n<title>{title}</title>\n</head>\n<body>\n'
_HTML_TAIL = "</body>\n</html>\n"


def _require(inputs: Mapping[str, Content], labels: tuple[str, ...]) -> InvokeReply | None:
    missing = tuple(label for label in labels if label not in inputs)
    if missing:
        return NeedsInput(missing)
    return None


def _check_mime(label: str, content: Content, allowed: tuple[str, ...]) -> None:
    if content.mime not in allowed:
        raise MechanismError(
            f"input {label!r} has MIME {content.mime!r}; expected one of {', '.join(allowed)}"
        )


class GalleryMechanism:
    """Renders a simple-image structoid as an HTML gallery page.

    The HTML references content by its public role URLs rather than inlining
    bytes; the browser dereferences images straight from the repository.
    """

    required_schema_uri = CORNELL_IMAGE_TYPE
    behaviors = ("Gallery", "Description", "Thumbnail", "FullImage")

    def invoke(self, behavior: str, params: Mapping[str, object], inputs: Mapping[str, Content]) -> InvokeReply:
        if behavior == "Gallery":
            need = _require(inputs, ("description", "thumbnail", "fullImage"))
            if need:
                return need
            return Result(self._gallery(inputs))
        if behavior == "Description":
            need = _require(inputs, ("description",))
            if need:
                return need
            return Result(self._description(inputs["description"]))
        if behavior in ("Thumbnail", "FullImage"):
            label = "thumbnail" if behavior == "Thumbnail" else "fullImage"
            need = _require(inputs, (label,))
            if need:
                return need
            content = inputs[label]
            _check_mime(label, content, _IMAGE_MIMES)
            return Result(BehaviorResult(content.mime, content.body))
        raise MechanismError(f"gallery mechanism has no behavior {behavior!r}")

    def _gallery(self, inputs: Mapping[str, Content]) -> BehaviorResult:
        description = inputs["description"]
        thumbnail = inputs["thumbnail"]
        full_image = inputs["fullImage"]
        _check_mime("description", description, ("text/plain",))
        _check_mime("thumbnail", thumbnail, _IMAGE_MIMES)
        _check_mime("fullImage", full_image, _IMAGE_MIMES)
        if not thumbnail.url or not full_image.url:
            raise MechanismError("gallery requires source URLs for image inputs")
        text = html.escape(description.body.decode("utf-8", errors="replace"))
        page = (
            _HTML_HEAD.format(title="Gallery")
            + f'<p class="description">{text}</p>\n'
            + f'<p><img src="{html.escape(thumbnail.url, quote=True)}" alt="thumbnail"></p>\n'
            + f'<p><a href="{html.escape(full_image.url, quote=True)}">Full image</a></p>\n'
            + _HTML_TAIL
        )
        return BehaviorResult("text/html", page.encode("utf-8"))

    def _description(self, description: Content) -> BehaviorResult:
        _check_mime("description", description, ("text/plain",))
        text = html.escape(description.body.decode("utf-8", errors="replace"))
        page = _HTML_HEAD.format(title="Description") + f"<pre>{text}</pre>\n" + _HTML_TAIL
        return BehaviorResult("text/html", page.encode("utf-8"))


class UnsupportedLanguage(MechanismError):
    def __init__(self, lang: str):
        super().__init__(f"unsupported target language {lang!r}")
        self.lang = lang


_WORD_RE = re.compile(r"[A-Za-z]+")


def _load_lexicon() -> dict[str, str]:
    data = resources.files("contextbroker") / "data" / "french_lexicon.json"
    return json.loads(data.read_text("utf-8"))


_FRENCH = _load_lexicon()


def translate_stub(text: bytes, lang: str) -> bytes:
    """Word-by-word substitution against the bundled lexicon.

    Unknown words pass through unchanged; an upper-case first letter is
    carried over to the replacement.
    """
    if lang != "fr":
        raise UnsupportedLanguage(lang)

    def replace(match: re.Match) -> str:
        word = match.group(0)
        translated = _FRENCH.get(word.lower())
        if translated is None:
            return word
        if word[0].isupper():
            return translated[0].upper() + translated[1:]
        return translated

    return _WORD_RE.sub(replace, text.decode("utf-8")).encode("utf-8")


class TranslatorMechanism:
    """Demo localization mechanism: translates plain text via a fixed lexicon."""

    required_schema_uri = TEXT_DOCUMENT_TYPE
    behaviors = ("Translate",)

    def invoke(self, behavior: str, params: Mapping[str, object], inputs: Mapping[str, Content]) -> InvokeReply:
        if behavior != "Translate":
            raise MechanismError(f"translator mechanism has no behavior {behavior!r}")
        need = _require(inputs, ("text",))
        if need:
            return need
        content = inputs["text"]
        _check_mime("text", content, ("text/plain",))
        lang = params.get("lang")
        if not isinstance(lang, str):
            raise MechanismError("Translate requires a string 'lang' parameter")
        return Result(BehaviorResult("text/plain", translate_stub(content.body, lang)))


BUILTINS = {
    "gallery": GalleryMechanism(),
    "translator": TranslatorMechanism(),
}


def builtin_manifest(name: str) -> bytes:
    """The bundled registry manifest for a builtin mechanism."""
    path = resources.files("contextbroker") / "data" / "manifests" / f"{name}.xml"
    return path.read_bytes()
