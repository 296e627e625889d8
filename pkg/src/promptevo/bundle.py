"""Embedding bundle store and its binary file format.

A bundle file holds one embedding matrix, either the image side (with
per-row class labels) or the text side (with a JSON metadata sidecar).
Layout, little-endian throughout:

    magic   4 bytes  "PAPO"
    version u16      1
    kind    u8       0 = image, 1 = text
    reserved u8      0
    dim     u32
    n_rows  u64
    n_classes u32
    data    n_rows * dim float32, row-major
    labels  n_rows * u32          (image bundles only)

Text bundles are accompanied by `<bundle>.meta.json`:
`{"fingerprint": hex | null, "entries": [{text_id, kind, class_id,
template_id, source_text}, ...]}`. A bare entries array (no fingerprint)
is accepted on read.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CountMismatchError,
    DimZeroError,
    IoFailureError,
    RowCountOverflowError,
    VersionMismatchError,
)
from .validation import check_labels, check_matrix, normalize_rows

MAGIC = b"PAPO"
VERSION = 1
KIND_IMAGE = 0
KIND_TEXT = 1

_HEADER = struct.Struct("<4sHBBIQI")

TEXT_KINDS = ("template_instance", "description", "synonym_instance")


@dataclass(frozen=True)
class TextMeta:
    """Provenance of one encoded text row."""

    kind: str
    class_id: int
    template_id: int | None
    source_text: str

    def __post_init__(self):
        if self.kind not in TEXT_KINDS:
            raise ValueError(f"unknown text kind {self.kind!r}")
        if self.kind in ("template_instance", "synonym_instance") and self.template_id is None:
            raise ValueError(f"{self.kind} requires a template_id")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EmbeddingStore:
    """Immutable bundle of unit-norm image and text embeddings.

    Either side may be empty; `load_bundle` fills exactly one and
    `with_texts` / `merged_texts` assemble the full store used for scoring.
    """

    dim: int
    n_classes: int
    image_matrix: np.ndarray = field(default=None)
    image_labels: np.ndarray = field(default=None)
    text_matrix: np.ndarray = field(default=None)
    text_meta: tuple[TextMeta, ...] = ()
    text_fingerprint: str | None = None

    def __post_init__(self):
        if self.dim <= 0:
            raise DimZeroError("dim must be positive")
        if self.n_classes <= 0:
            raise ValueError("n_classes must be positive")
        imgs = self.image_matrix
        if imgs is None:
            imgs = np.empty((0, self.dim), dtype=np.float32)
        imgs = check_matrix(imgs, name="image_matrix") if imgs.size else imgs.astype(np.float32)
        if imgs.shape[1] != self.dim and imgs.shape[0]:
            raise ValueError(f"image_matrix dim {imgs.shape[1]} != {self.dim}")
        labels = self.image_labels
        if labels is None:
            labels = np.empty(0, dtype=np.int64)
        labels = check_labels(labels, self.n_classes, n_rows=imgs.shape[0])
        txt = self.text_matrix
        if txt is None:
            txt = np.empty((0, self.dim), dtype=np.float32)
        txt = check_matrix(txt, name="text_matrix") if txt.size else txt.astype(np.float32)
        if txt.shape[0] != len(self.text_meta):
            raise ValueError(
                f"{txt.shape[0]} text rows but {len(self.text_meta)} meta entries"
            )
        for i, meta in enumerate(self.text_meta):
            if not 0 <= meta.class_id < self.n_classes:
                raise ValueError(f"text {i} has class_id {meta.class_id} out of range")
        object.__setattr__(self, "image_matrix", _frozen(normalize_rows(imgs)))
        object.__setattr__(self, "image_labels", _frozen(labels))
        object.__setattr__(self, "text_matrix", _frozen(normalize_rows(txt)))
        object.__setattr__(self, "text_meta", tuple(self.text_meta))

    @property
    def n_images(self) -> int:
        return self.image_matrix.shape[0]

    @property
    def n_texts(self) -> int:
        return self.text_matrix.shape[0]

    def with_texts(self, text_side: "EmbeddingStore") -> "EmbeddingStore":
        """Attach the text side of another store to this store's image side."""
        if text_side.dim != self.dim:
            raise ValueError("dim mismatch between image and text sides")
        if text_side.n_classes != self.n_classes:
            raise ValueError("n_classes mismatch between image and text sides")
        return replace(
            self,
            text_matrix=text_side.text_matrix,
            text_meta=text_side.text_meta,
            text_fingerprint=text_side.text_fingerprint,
        )

    def merged_texts(self, more: "EmbeddingStore") -> "EmbeddingStore":
        """Append another store's text rows; new ids follow the existing ones."""
        if more.dim != self.dim or more.n_classes != self.n_classes:
            raise ValueError("incompatible stores")
        if self.n_texts == 0:
            return self.with_texts(more)
        matrix = np.vstack([self.text_matrix, more.text_matrix])
        return replace(
            self,
            text_matrix=matrix,
            text_meta=self.text_meta + more.text_meta,
            text_fingerprint=None,
        )

    def with_images(self, matrix, labels) -> "EmbeddingStore":
        """Replace the image side (used by predict-time scoring on new images)."""
        return replace(self, image_matrix=check_matrix(matrix), image_labels=labels)


def save_bundle(store: EmbeddingStore, path, kind: int | None = None) -> None:
    """Write one side of `store` to `path` in the bundle binary format.

    `kind` may be omitted when exactly one side is populated. Text bundles
    also write the `<path>.meta.json` sidecar.
    """
    if kind is None:
        has_img, has_txt = store.n_images > 0, store.n_texts > 0
        if has_img == has_txt:
            raise ValueError("store has both sides (or neither); pass kind explicitly")
        kind = KIND_IMAGE if has_img else KIND_TEXT
    if kind not in (KIND_IMAGE, KIND_TEXT):
        raise ValueError(f"bad kind {kind}")
    matrix = store.image_matrix if kind == KIND_IMAGE else store.text_matrix
    header = _HEADER.pack(
        MAGIC, VERSION, kind, 0, store.dim, matrix.shape[0], store.n_classes
    )
    path = Path(path)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(matrix, dtype="<f4").tobytes())
            if kind == KIND_IMAGE:
                fh.write(store.image_labels.astype("<u4").tobytes())
        if kind == KIND_TEXT:
            sidecar = {
                "fingerprint": store.text_fingerprint,
                "entries": [
                    {
                        "text_id": i,
                        "kind": m.kind,
                        "class_id": m.class_id,
                        "template_id": m.template_id,
                        "source_text": m.source_text,
                    }
                    for i, m in enumerate(store.text_meta)
                ],
            }
            sidecar_path = path.with_name(path.name + ".meta.json")
            sidecar_path.write_text(json.dumps(sidecar, indent=1), encoding="utf-8")
    except OSError as exc:
        raise IoFailureError(f"cannot write bundle {path}: {exc}") from exc


def load_bundle(path) -> EmbeddingStore:
    """Load a bundle file into a one-sided store, renormalizing rows."""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoFailureError(f"cannot read bundle {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise BadMagicError(f"{path} is too short to be a bundle")
    magic, version, kind, _reserved, dim, n_rows, n_classes = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise BadMagicError(f"{path} does not start with the bundle magic")
    if version != VERSION:
        raise VersionMismatchError(f"{path} has version {version}, expected {VERSION}")
    if dim == 0:
        raise DimZeroError(f"{path} declares dim=0")
    if kind not in (KIND_IMAGE, KIND_TEXT):
        raise BadMagicError(f"{path} has unknown kind {kind}")
    body = len(blob) - _HEADER.size
    expected = n_rows * dim * 4 + (n_rows * 4 if kind == KIND_IMAGE else 0)
    if body != expected:
        raise RowCountOverflowError(
            f"{path} declares {n_rows} rows ({expected} data bytes) but holds {body}"
        )
    offset = _HEADER.size
    matrix = np.frombuffer(blob, dtype="<f4", count=n_rows * dim, offset=offset)
    matrix = matrix.reshape(n_rows, dim).copy()
    if kind == KIND_IMAGE:
        offset += n_rows * dim * 4
        labels = np.frombuffer(blob, dtype="<u4", count=n_rows, offset=offset)
        return EmbeddingStore(
            dim=dim,
            n_classes=n_classes,
            image_matrix=matrix,
            image_labels=labels.astype(np.int64),
        )
    meta, fingerprint = _load_sidecar(path, n_rows)
    return EmbeddingStore(
        dim=dim,
        n_classes=n_classes,
        text_matrix=matrix,
        text_meta=meta,
        text_fingerprint=fingerprint,
    )


def _load_sidecar(bundle_path: Path, n_rows: int):
    sidecar = bundle_path.with_name(bundle_path.name + ".meta.json")
    try:
        payload = json.loads(sidecar.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailureError(f"text bundle sidecar {sidecar} missing: {exc}") from exc
    if isinstance(payload, dict):
        entries, fingerprint = payload.get("entries", []), payload.get("fingerprint")
    else:
        entries, fingerprint = payload, None
    if len(entries) != n_rows:
        raise CountMismatchError(
            f"sidecar {sidecar} has {len(entries)} entries for {n_rows} rows"
        )
    meta = []
    for i, entry in enumerate(entries):
        if entry.get("text_id") != i:
            raise CountMismatchError(f"sidecar entry {i} has text_id {entry.get('text_id')}")
        meta.append(
            TextMeta(
                kind=entry["kind"],
                class_id=int(entry["class_id"]),
                template_id=None if entry.get("template_id") is None else int(entry["template_id"]),
                source_text=entry["source_text"],
            )
        )
    return tuple(meta), fingerprint
