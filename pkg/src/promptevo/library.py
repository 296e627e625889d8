"""Prompt library: templates, domains, class synonyms, descriptions.

The library starts as plain text collections (loaded from JSON), is turned
into an ordered encode manifest, and after an encoder produced one embedding
row per manifest entry it is bound: every manifest entry maps to a text id
in an EmbeddingStore. All candidate resolution happens through that binding.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import (
    CountMismatchError,
    EmptyLibraryError,
    FingerprintMismatchError,
    NoPlaceholderError,
    UnboundDescriptionsError,
    UnboundIdError,
)

PLACEHOLDER = "{}"


def _check_placeholder(template: str) -> None:
    if template.count(PLACEHOLDER) != 1:
        raise NoPlaceholderError(
            f"template {template!r} must contain exactly one '{{}}' placeholder"
        )


def _strip_period(text: str) -> str:
    return text.rstrip().rstrip(".")


def fill(template: str, name: str) -> str:
    """Instantiate a template's class placeholder."""
    return template.replace(PLACEHOLDER, name, 1)


def integrate(template: str, name: str, description: str) -> str:
    """Compose an instantiated template with a class description."""
    return f"{_strip_period(fill(template, name))}. {_strip_period(description)}."


def augment_templates(templates: list[str], domains: list[str]) -> list[str]:
    """Expand templates with domain rewrites.

    Per (template, domain) pair, up to four rewrites: append ", a type of
    <domain>", prefix the class slot with "<domain>: ", and substitute the
    word "photo" by "<domain>" and by "<domain> photo" (the last two only
    when "photo" occurs). Templates that already mention one of the domains
    are left alone, which makes the expansion idempotent. Originals come
    first; exact duplicates are dropped.
    """
    for t in templates:
        _check_placeholder(t)
    out: list[str] = []
    seen: set[str] = set()

    def push(text: str) -> None:
        if text not in seen:
            seen.add(text)
            out.append(text)

    for t in templates:
        push(t)
    for t in templates:
        if any(d in t for d in domains):
            continue
        for domain in domains:
            if t.rstrip().endswith("."):
                push(f"{_strip_period(t)}, a type of {domain}.")
            else:
                push(f"{t}, a type of {domain}")
            push(t.replace(PLACEHOLDER, f"{domain}: {PLACEHOLDER}", 1))
            if "photo" in t:
                push(t.replace("photo", domain))
                push(t.replace("photo", f"{domain} photo"))
    return out


@dataclass(frozen=True)
class ManifestEntry:
    """One text the encoder must embed.

    `description_id` is the description index for kind="description" and the
    synonym index for kind="synonym_instance" (None for plain class-name
    template instances).
    """

    manifest_id: int
    kind: str
    class_id: int
    template_id: int | None
    description_id: int | None
    full_text: str


@dataclass(frozen=True)
class EncodeManifest:
    entries: tuple[ManifestEntry, ...]
    fingerprint: str

    def __len__(self) -> int:
        return len(self.entries)

    @staticmethod
    def from_entries(entries) -> "EncodeManifest":
        entries = tuple(entries)
        if any(not e.full_text for e in entries):
            raise ValueError("manifest full_texts must be non-empty")
        if [e.manifest_id for e in entries] != list(range(len(entries))):
            raise ValueError("manifest_ids must be dense 0..n-1")
        joined = "\n".join(e.full_text for e in entries)
        digest = hashlib.sha256(joined.encode("utf-8")).hexdigest()
        return EncodeManifest(entries=entries, fingerprint=digest)


def write_manifest(manifest: EncodeManifest, path) -> None:
    payload = {
        "fingerprint": manifest.fingerprint,
        "entries": [
            {
                "manifest_id": e.manifest_id,
                "kind": e.kind,
                "class_id": e.class_id,
                "template_id": e.template_id,
                "description_id": e.description_id,
                "full_text": e.full_text,
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")


def read_manifest(path) -> EncodeManifest:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = tuple(
        ManifestEntry(
            manifest_id=e["manifest_id"],
            kind=e["kind"],
            class_id=e["class_id"],
            template_id=e["template_id"],
            description_id=e["description_id"],
            full_text=e["full_text"],
        )
        for e in payload["entries"]
    )
    manifest = EncodeManifest.from_entries(entries)
    if payload.get("fingerprint") not in (None, manifest.fingerprint):
        raise FingerprintMismatchError(f"{path} fingerprint does not match its texts")
    return manifest


@dataclass
class PromptLibrary:
    """Templates, domains, per-class names/synonyms/descriptions, and bindings."""

    templates: list[str]
    class_names: list[str]
    synonyms: list[list[str]] = field(default_factory=list)
    descriptions: list[list[str]] = field(default_factory=list)
    domains: list[str] = field(default_factory=list)

    def __post_init__(self):
        for t in self.templates:
            _check_placeholder(t)
        n = len(self.class_names)
        if not self.synonyms:
            self.synonyms = [[] for _ in range(n)]
        if not self.descriptions:
            self.descriptions = [[] for _ in range(n)]
        if len(self.synonyms) != n or len(self.descriptions) != n:
            raise ValueError("synonyms and descriptions must be per-class lists")
        # (template_id, class_id, variant) -> text_id; variant 0 is the class
        # name, variant v>0 is synonyms[class][v-1].
        self._template_binding: dict[tuple[int, int, int], int] = {}
        # (class_id, description_id, template_id | None) -> text_id
        self._desc_binding: dict[tuple[int, int, int | None], int] = {}
        self._integration: list[int] | None | str = "unbound"

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def integration_templates(self):
        return None if self._integration == "unbound" else self._integration

    # --- manifest construction ---

    def instantiate_manifest(
        self,
        integration_templates: list[int] | None = None,
        *,
        include_templates: bool = True,
        include_descriptions: bool = True,
    ) -> EncodeManifest:
        """Enumerate every text to encode, in deterministic order.

        Template instances come first (template major, class minor, name
        variant last), then description instances (integration template
        major, class minor, description last). `integration_templates=None`
        emits descriptions standalone, unintegrated.
        """
        if not self.class_names or (include_templates and not self.templates):
            raise EmptyLibraryError("library has no classes or no templates")
        if integration_templates:
            for t in integration_templates:
                if not 0 <= t < len(self.templates):
                    raise UnboundIdError(f"integration template {t} out of range")
        entries = []

        def add(kind, class_id, template_id, description_id, text):
            entries.append(
                ManifestEntry(len(entries), kind, class_id, template_id, description_id, text)
            )

        if include_templates:
            for t_id, template in enumerate(self.templates):
                for c, name in enumerate(self.class_names):
                    add("template_instance", c, t_id, None, fill(template, name))
                    for v, syn in enumerate(self.synonyms[c]):
                        add("synonym_instance", c, t_id, v, fill(template, syn))
        if include_descriptions:
            if integration_templates is None:
                for c in range(self.n_classes):
                    for d_id, desc in enumerate(self.descriptions[c]):
                        add("description", c, None, d_id, desc)
            else:
                for t_id in integration_templates:
                    template = self.templates[t_id]
                    for c, name in enumerate(self.class_names):
                        for d_id, desc in enumerate(self.descriptions[c]):
                            add("description", c, t_id, d_id, integrate(template, name, desc))
        return EncodeManifest.from_entries(entries)

    # --- binding ---

    def bind_embeddings(self, manifest: EncodeManifest, text_store, first_text_id: int = 0):
        """Record the text id of every manifest entry.

        The store must hold exactly one row per entry and carry the
        manifest's fingerprint (proof the encoder ran on these texts).
        `first_text_id` offsets the recorded ids when this store's rows are
        appended after an existing text block in the merged scoring store.
        """
        if text_store.n_texts != len(manifest.entries):
            raise CountMismatchError(
                f"store holds {text_store.n_texts} rows for "
                f"{len(manifest.entries)} manifest entries"
            )
        if text_store.text_fingerprint != manifest.fingerprint:
            raise FingerprintMismatchError(
                "text store fingerprint does not match the manifest; "
                "the encoder ran on different texts"
            )
        integration: list[int] = []
        saw_standalone = False
        for e in manifest.entries:
            text_id = first_text_id + e.manifest_id
            if e.kind == "template_instance":
                self._template_binding[(e.template_id, e.class_id, 0)] = text_id
            elif e.kind == "synonym_instance":
                self._template_binding[(e.template_id, e.class_id, e.description_id + 1)] = text_id
            elif e.kind == "description":
                self._desc_binding[(e.class_id, e.description_id, e.template_id)] = text_id
                if e.template_id is None:
                    saw_standalone = True
                elif e.template_id not in integration:
                    integration.append(e.template_id)
        if saw_standalone or integration:
            self._integration = None if saw_standalone else integration
        return self

    def templates_bound(self) -> bool:
        return all(
            (t, c, 0) in self._template_binding
            for t in range(len(self.templates))
            for c in range(self.n_classes)
        )

    def descriptions_bound(self) -> bool:
        if self._integration == "unbound":
            return all(not d for d in self.descriptions)
        scope = [None] if self._integration is None else self._integration
        return all(
            (c, d, t) in self._desc_binding
            for c in range(self.n_classes)
            for d in range(len(self.descriptions[c]))
            for t in scope
        )

    # --- candidate resolution ---

    def template_pool(self) -> list[int]:
        return list(range(len(self.templates)))

    def template_instance_id(self, template_id: int, class_id: int, variant: int = 0) -> int:
        key = (template_id, class_id, variant)
        if key not in self._template_binding:
            raise UnboundIdError(f"template instance {key} is not bound")
        return self._template_binding[key]

    def desc_pool(self, class_id: int, template_filter=None) -> list[int]:
        """Ordered selectable text ids for one class.

        Description instances first (description major, integration template
        minor), then synonym instances of templates in `template_filter`
        (all templates when None). The order depends only on library
        structure, never on raw text ids.
        """
        if self._integration == "unbound":
            raise UnboundDescriptionsError(f"descriptions of class {class_id} are not bound")
        scope = [None] if self._integration is None else self._integration
        pool = []
        for d_id in range(len(self.descriptions[class_id])):
            for t in scope:
                key = (class_id, d_id, t)
                if key not in self._desc_binding:
                    raise UnboundDescriptionsError(f"description instance {key} is not bound")
                pool.append(self._desc_binding[key])
        templates = (
            sorted(template_filter) if template_filter is not None
            else range(len(self.templates))
        )
        for t in templates:
            for v in range(1, 1 + len(self.synonyms[class_id])):
                key = (t, class_id, v)
                if key in self._template_binding:
                    pool.append(self._template_binding[key])
        return pool

    def d_sets(
        self,
        candidate,
        include_synonyms: bool = False,
    ) -> tuple[tuple[int, ...], ...]:
        """Resolve a candidate into per-class text-id tuples for scoring.

        Each class combines the candidate's template instances (class name
        plus, if enabled, synonym variants) with its selected description
        ids, in a canonical library order.
        """
        rows = []
        for c in range(self.n_classes):
            ids = []
            for t in sorted(candidate.template_ids):
                ids.append(self.template_instance_id(t, c, 0))
                if include_synonyms:
                    for v in range(1, 1 + len(self.synonyms[c])):
                        ids.append(self.template_instance_id(t, c, v))
            selected = candidate.desc_ids[c]
            if selected:
                order = {tid: pos for pos, tid in enumerate(self.desc_pool(c))}
                missing = [tid for tid in selected if tid not in order]
                if missing:
                    raise UnboundDescriptionsError(
                        f"class {c} selects unbound description ids {sorted(missing)}"
                    )
                ids.extend(sorted(selected, key=order.__getitem__))
            rows.append(tuple(ids))
        return tuple(rows)


# --- JSON loading ---

def _library_from_payload(payload: dict) -> PromptLibrary:
    classes = sorted(payload["classes"], key=lambda c: c["class_id"])
    if [c["class_id"] for c in classes] != list(range(len(classes))):
        raise ValueError("classes.json must cover class ids 0..n-1")
    descriptions: list[list[str]] = [[] for _ in classes]
    for d in payload.get("descriptions", []):
        descriptions[d["class_id"]].append(d["text"])
    return PromptLibrary(
        templates=list(payload["templates"]),
        class_names=[c["name"] for c in classes],
        synonyms=[list(c.get("synonyms", [])) for c in classes],
        descriptions=descriptions,
        domains=list(payload.get("domains", [])),
    )


def load_library(path) -> PromptLibrary:
    """Load a library from a combined JSON file or a directory of four files.

    Directory layout: templates.json (array of strings), domains.json
    (array of strings, optional), classes.json (array of {class_id, name,
    synonyms[]}), descriptions.json (array of {class_id, text}).
    """
    path = Path(path)
    if path.is_dir():
        payload = {
            "templates": json.loads((path / "templates.json").read_text(encoding="utf-8")),
            "classes": json.loads((path / "classes.json").read_text(encoding="utf-8")),
        }
        desc_path = path / "descriptions.json"
        payload["descriptions"] = (
            json.loads(desc_path.read_text(encoding="utf-8")) if desc_path.exists() else []
        )
        dom_path = path / "domains.json"
        payload["domains"] = (
            json.loads(dom_path.read_text(encoding="utf-8")) if dom_path.exists() else []
        )
        return _library_from_payload(payload)
    return _library_from_payload(json.loads(path.read_text(encoding="utf-8")))


def save_library(library: PromptLibrary, path) -> None:
    payload = {
        "templates": library.templates,
        "domains": library.domains,
        "classes": [
            {"class_id": c, "name": name, "synonyms": library.synonyms[c]}
            for c, name in enumerate(library.class_names)
        ],
        "descriptions": [
            {"class_id": c, "text": text}
            for c in range(library.n_classes)
            for text in library.descriptions[c]
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1), encoding="utf-8")
