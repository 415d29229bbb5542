"""Readers and writers for episode metadata, feature vectors and labels."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ParseError, ValidationError
from .constraints import EpisodeMeta, FeatureRecord


def read_metadata(path) -> list[EpisodeMeta]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                out.append(EpisodeMeta(str(rec["image_id"]), str(rec["scene"]),
                                       str(rec["episode"]), str(rec["difficulty"]),
                                       str(rec["position_tag"]), int(rec["object_count"])))
            except (ValueError, KeyError, TypeError) as e:
                raise ParseError(f"bad metadata record: {e}", line=lineno, path=path) from None
    return out


def write_metadata(path, metas) -> None:
    keys = ("image_id", "scene", "episode", "difficulty", "position_tag", "object_count")
    Path(path).write_text("".join(
        json.dumps({k: getattr(m, k) for k in keys}) + "\n" for m in metas), encoding="utf-8")


def _ids_path(path: Path) -> Path:
    return path.with_name(path.name + ".ids")


def read_features(path) -> list[FeatureRecord]:
    """Text ``FEATS v1 <N> <d>`` files, or raw float32 with a ``.ids`` sidecar."""
    path = Path(path)
    data = path.read_bytes()
    if data.startswith(b"FEATS"):
        return _read_text_features(data.decode("utf-8"), path)
    ids_file = _ids_path(path)
    if not ids_file.exists():
        raise ParseError("binary features need an id sidecar", path=path)
    ids = [s for s in ids_file.read_text(encoding="utf-8").splitlines() if s]
    if not ids or len(data) % (4 * len(ids)):
        raise ParseError(f"{len(data)} bytes do not split into {len(ids)} float32 rows",
                         byte=0, path=path)
    X = np.frombuffer(data, dtype="<f4").reshape(len(ids), -1).astype(np.float64)
    return [FeatureRecord(i, v) for i, v in zip(ids, X)]


def _read_text_features(text, path):
    lines = text.splitlines()
    head = lines[0].split()
    if len(head) != 4 or head[:2] != ["FEATS", "v1"]:
        raise ParseError(f"bad header {lines[0]!r}", line=1, path=path)
    try:
        n, d = int(head[2]), int(head[3])
    except ValueError:
        raise ParseError("bad header counts", line=1, path=path) from None
    rows = [s for s in lines[1:] if s.strip()]
    if len(rows) != n:
        raise ParseError(f"expected {n} rows, found {len(rows)}", line=len(lines), path=path)
    out = []
    for lineno, row in enumerate(lines[1:], 2):
        parts = row.split()
        if not parts:
            continue
        if len(parts) != d + 1:
            raise ParseError(f"expected {d} values", line=lineno, path=path)
        try:
            vec = [float(v) for v in parts[1:]]
        except ValueError:
            raise ParseError("non-numeric feature value", line=lineno, path=path) from None
        try:
            out.append(FeatureRecord(parts[0], vec))
        except ValidationError as e:
            raise ParseError(str(e), line=lineno, path=path) from None
    return out


def write_features(path, records, binary: bool = False) -> None:
    path = Path(path)
    X = np.array([r.vector for r in records])
    if binary:
        path.write_bytes(X.astype("<f4").tobytes())
        _ids_path(path).write_text("".join(r.image_id + "\n" for r in records), encoding="utf-8")
        return
    d = X.shape[1] if X.ndim == 2 else 0
    lines = [f"FEATS v1 {len(records)} {d}"]
    lines += [" ".join([r.image_id] + [repr(float(v)) for v in r.vector]) for r in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_labels(path, ids, labels) -> None:
    rows = ["image_id,label"] + [f"{i},{int(l)}" for i, l in zip(ids, labels)]
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def read_labels(path) -> dict[str, int]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != "image_id,label":
        raise ParseError("missing 'image_id,label' header", line=1, path=path)
    out = {}
    for lineno, row in enumerate(lines[1:], 2):
        if not row.strip():
            continue
        try:
            i, l = row.rsplit(",", 1)
            out[i] = int(l)
        except ValueError:
            raise ParseError(f"bad label row {row!r}", line=lineno, path=path) from None
    return out
