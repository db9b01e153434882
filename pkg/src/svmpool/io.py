"""File formats: binary feature matrices, CSV fallback, manifests, descriptor sets.

Binary layout, little-endian throughout::

    offset 0   4 bytes  ASCII "SVMP"
    offset 4   u32      version (1)
    offset 8   u32      n_rows
    offset 12  u32      n_cols
    offset 16  float32  n_rows * n_cols values, row-major

Values are stored as float32; a matrix that already holds float32-representable
values round-trips bit-exactly.
"""
from __future__ import annotations

import csv
import os
import struct
from pathlib import Path

import numpy as np

from svmpool.core import FeatureBag, NegativeBag, Provenance

MAGIC = b"SVMP"
VERSION = 1
HEADER = struct.Struct("<4sIII")
DTYPE = np.dtype("<f4")


class FormatError(ValueError):
    """Base class for file-format problems; ``kind`` is a short machine-readable tag."""

    kind = "format"

    def __init__(self, message: str, path=None, offset: int | None = None):
        self.path = None if path is None else str(path)
        self.offset = offset
        where = f"{self.path}" if self.path else "<bytes>"
        if offset is not None:
            where += f" at byte {offset}"
        super().__init__(f"{where}: {message}")


class BadMagicError(FormatError):
    kind = "bad-magic"


class UnsupportedVersionError(FormatError):
    kind = "unsupported-version"


class TruncatedPayloadError(FormatError):
    kind = "truncated-payload"


class NonFiniteValueError(FormatError):
    kind = "non-finite"


class CsvParseError(FormatError):
    kind = "csv-parse"


class ManifestError(FormatError):
    kind = "manifest"


def encode_matrix(matrix) -> bytes:
    X = np.asarray(matrix)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {X.shape}")
    with np.errstate(over="ignore"):
        X32 = np.ascontiguousarray(X, dtype=DTYPE)
    if not np.all(np.isfinite(X32)):
        r, c = np.argwhere(~np.isfinite(X32))[0]
        raise NonFiniteValueError(f"non-finite value at row {r}, column {c} (float32 overflow or NaN)")
    return HEADER.pack(MAGIC, VERSION, X32.shape[0], X32.shape[1]) + X32.tobytes(order="C")


def decode_matrix(data: bytes, path=None) -> np.ndarray:
    """Parse the binary layout; returns a float64 matrix."""
    if len(data) < HEADER.size:
        raise TruncatedPayloadError(
            f"truncated payload: header needs {HEADER.size} bytes, file has {len(data)}", path, len(data))
    magic, version, rows, cols = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}", path, 0)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}, expected {VERSION}", path, 4)
    expected = rows * cols * DTYPE.itemsize
    actual = len(data) - HEADER.size
    if actual < expected:
        raise TruncatedPayloadError(
            f"truncated payload: expected {expected} bytes for {rows}x{cols}, found {actual}",
            path, len(data))
    if actual > expected:
        raise FormatError(f"{actual - expected} trailing bytes after the {rows}x{cols} payload",
                          path, HEADER.size + expected)
    X = np.frombuffer(data, dtype=DTYPE, count=rows * cols, offset=HEADER.size).reshape(rows, cols)
    bad = ~np.isfinite(X)
    if bad.any():
        flat = int(np.flatnonzero(bad.reshape(-1))[0])
        raise NonFiniteValueError(
            f"non-finite value at row {flat // max(cols, 1)}, column {flat % max(cols, 1)}",
            path, HEADER.size + flat * DTYPE.itemsize)
    return X.astype(np.float64)


def _is_csv(path) -> bool:
    return str(path).lower().endswith(".csv")


def read_csv_matrix(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        offset = 0
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if text:
                try:
                    rows.append([float(tok) for tok in text.split(",")])
                except ValueError:
                    raise CsvParseError(f"line {lineno}: cannot parse {text!r} as decimal floats",
                                        path, offset) from None
                if len(rows[-1]) != len(rows[0]):
                    raise CsvParseError(f"line {lineno}: {len(rows[-1])} columns, expected {len(rows[0])}",
                                        path, offset)
                if not all(np.isfinite(rows[-1])):
                    raise NonFiniteValueError(f"line {lineno}: non-finite value", path, offset)
            offset += len(line.encode("utf-8"))
    if not rows:
        raise CsvParseError("no rows", path, 0)
    return np.array(rows, dtype=np.float64)


def write_csv_matrix(matrix, path) -> None:
    X = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix(path) -> np.ndarray:
    if _is_csv(path):
        return read_csv_matrix(path)
    return decode_matrix(Path(path).read_bytes(), path)


def write_matrix(matrix, path) -> None:
    if _is_csv(path):
        write_csv_matrix(matrix, path)
        return
    data = encode_matrix(matrix)
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def read_bag(path, sequence_id: str | None = None) -> FeatureBag:
    sid = Path(path).stem if sequence_id is None else sequence_id
    return FeatureBag(read_matrix(path), sid)


def write_bag(bag: FeatureBag, path) -> None:
    write_matrix(bag.features, path)


def read_negatives(path, provenance: Provenance | str = Provenance.SYNTHETIC_NOISE) -> NegativeBag:
    return NegativeBag(read_matrix(path), Provenance(provenance))


def write_negatives(neg: NegativeBag, path) -> None:
    write_matrix(neg.features, path)


def read_manifest(path) -> list[tuple[Path, int]]:
    """``path,label`` lines in file order; relative paths resolve against the manifest's directory."""
    base = Path(path).resolve().parent
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.rstrip("\n").rstrip("\r")
            if not text.strip():
                continue
            head, sep, tail = text.rpartition(",")
            if not sep or not head:
                raise ManifestError(f"line {lineno}: expected 'path,label', got {text!r}", path)
            try:
                label = int(tail.strip())
            except ValueError:
                raise ManifestError(f"line {lineno}: label {tail.strip()!r} is not an integer", path) from None
            if label < 0:
                raise ManifestError(f"line {lineno}: label {label} is negative", path)
            p = Path(head.strip())
            if not p.is_absolute():
                p = base / p
            if not p.is_file():
                raise ManifestError(f"line {lineno}: file {head.strip()!r} not found", path)
            entries.append((p, label))
    if not entries:
        raise ManifestError("manifest lists no entries", path)
    return entries


def write_manifest(entries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p, label in entries:
            fh.write(f"{p},{int(label)}\n")


def load_manifest_bags(path) -> tuple[list[FeatureBag], np.ndarray]:
    """Read every bag a manifest lists; sequence ids are the manifest path strings."""
    entries = read_manifest(path)
    base = Path(path).resolve().parent
    bags = []
    for p, _ in entries:
        try:
            sid = str(p.relative_to(base))
        except ValueError:
            sid = str(p)
        bags.append(read_bag(p, sid))
    return bags, np.array([lab for _, lab in entries], dtype=np.int64)


def labels_path(path) -> Path:
    return Path(f"{path}.labels.csv")


def write_descriptors(dset, path) -> None:
    """Binary matrix at ``path`` plus a ``<path>.labels.csv`` sidecar (``sequence_id,label``)."""
    write_matrix(dset.descriptors, path)
    with open(labels_path(path), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for sid, lab in zip(dset.sequence_ids, dset.labels):
            w.writerow([sid, int(lab)])


def read_descriptors(path):
    from svmpool.pipeline import LabeledDescriptorSet

    X = read_matrix(path)
    side = labels_path(path)
    if not side.is_file():
        raise FormatError(f"missing label sidecar {side}", path)
    ids, labels = [], []
    with open(side, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) != 2:
                raise CsvParseError(f"line {lineno}: expected 'sequence_id,label'", side)
            try:
                labels.append(int(row[1]))
            except ValueError:
                raise CsvParseError(f"line {lineno}: label {row[1]!r} is not an integer", side) from None
            ids.append(row[0])
    if len(labels) != X.shape[0]:
        raise FormatError(f"{X.shape[0]} descriptor rows but {len(labels)} labels in {side}", path)
    return LabeledDescriptorSet(X, np.array(labels, dtype=np.int64), sequence_ids=ids)
