"""File formats: CSV matrices, code files, JSON manifests; atomic writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import SparseCode

FORMAT_VERSION = 1


class DataError(ValueError):
    """Input file missing, malformed or inconsistent."""


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    return format(float(v), ".17g")


def _header(meta):
    return "# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n"


def _parse_header(line):
    meta = {}
    for tok in line.lstrip("#").split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            meta[k] = v
    return meta


def write_matrix(path, array, **meta):
    """Row-major CSV with a ``# rows=.. cols=..`` comment header."""
    A = np.atleast_2d(np.asarray(array, dtype=float))
    if A.ndim != 2:
        raise ValueError("write_matrix needs a 1-D or 2-D array")
    head = {"rows": A.shape[0], "cols": A.shape[1], **meta}
    body = "".join(",".join(_fmt(v) for v in row) + "\n" for row in A)
    atomic_write_text(path, _header(head) + body)


def read_matrix(path):
    """Read a CSV matrix; returns ``(array, header dict)``.

    Files without a header (plain numeric CSV, e.g. user epochs) are accepted.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    meta = {}
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if not rows and not meta:
                    meta = _parse_header(line)
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        A = np.zeros((int(meta.get("rows", 0)), int(meta.get("cols", 0))))
    else:
        widths = {len(r) for r in rows}
        if len(widths) != 1:
            raise DataError(f"{path}: rows have differing lengths {sorted(widths)}")
        A = np.array(rows)
    if "rows" in meta and int(meta["rows"]) != A.shape[0]:
        raise DataError(f"{path}: header says {meta['rows']} rows, found {A.shape[0]}")
    if "cols" in meta and A.shape[0] and int(meta["cols"]) != A.shape[1]:
        raise DataError(f"{path}: header says {meta['cols']} columns, found {A.shape[1]}")
    if not np.all(np.isfinite(A)):
        raise DataError(f"{path}: non-finite values")
    return A, meta


def write_codes(path, codes, **meta):
    """One line per signal: ``atom,shift,coef`` triples separated by ``;``."""
    lines = []
    for code in codes:
        lines.append(";".join(f"{i},{n},{_fmt(a)}" for i, n, a in code))
    head = {"signals": len(codes), **meta}
    atomic_write_text(path, _header(head) + "".join(line + "\n" for line in lines))


def read_codes(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path) as fh:
        text = fh.read()
    lines = text.split("\n")
    meta = {}
    if lines and lines[0].startswith("#"):
        meta = _parse_header(lines[0])
        lines = lines[1:]
    if lines and lines[-1] == "":
        lines = lines[:-1]
    codes = []
    for lineno, line in enumerate(lines, 2):
        entries = []
        for tok in filter(None, line.strip().split(";")):
            parts = tok.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: bad triple {tok!r}")
            try:
                entries.append((int(parts[0]), int(parts[1]), float(parts[2])))
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
        try:
            codes.append(SparseCode.from_entries(entries))
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
    if "signals" in meta and int(meta["signals"]) != len(codes):
        raise DataError(f"{path}: header says {meta['signals']} signals, found {len(codes)}")
    return codes, meta


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(directory, files, config=None, seeds=None, **extra):
    """``manifest.json`` listing ``files`` (names inside ``directory``) with checksums."""
    directory = Path(directory)
    manifest = {
        "format_version": FORMAT_VERSION,
        "files": {name: {"sha256": sha256(directory / name)} for name in sorted(files)},
        "config": config or {},
        "seeds": seeds or [],
        **extra,
    }
    write_json(directory / "manifest.json", manifest)
    return manifest


def read_manifest(directory, verify=True):
    directory = Path(directory)
    manifest = read_json(directory / "manifest.json")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"{directory}: unsupported manifest format_version {version!r}")
    if verify:
        for name, info in manifest.get("files", {}).items():
            p = directory / name
            if not p.exists():
                raise DataError(f"{directory}: manifest lists missing file {name}")
            if sha256(p) != info.get("sha256"):
                raise DataError(f"{directory}: checksum mismatch for {name}")
    return manifest
