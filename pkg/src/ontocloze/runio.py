"""Run artifacts on disk: canonical JSONL with headers, manifests, TSV reports.

Every generated file starts with a header record (``{"record": "header", ...}``)
naming the manifest it was produced under, so outputs are reproducible from
their manifests alone.  Serialization is canonical (sorted keys, fixed
separators) to keep equal runs byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Mapping


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def manifest_hash(manifest: Mapping) -> str:
    return hashlib.sha256(dumps(manifest).encode("utf-8")).hexdigest()[:16]


def write_manifest(path: str | Path, manifest: Mapping) -> str:
    """Write a manifest next to an output file; returns its hash."""
    digest = manifest_hash(manifest)
    payload = dict(manifest)
    payload["manifest_hash"] = digest
    Path(path).write_text(dumps(payload) + "\n", encoding="utf-8")
    return digest


def manifest_path(output_path: str | Path) -> Path:
    output_path = Path(output_path)
    return output_path.with_name(output_path.name + ".manifest.json")


def write_jsonl(path: str | Path, header: Mapping, records: Iterable[Mapping]) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(dumps({"record": "header", **header}) + "\n")
        for record in records:
            handle.write(dumps(record) + "\n")


def read_jsonl(path: str | Path) -> tuple[dict, list[dict]]:
    """Returns (header, records); the header may be empty for headerless files."""
    header: dict = {}
    records: list[dict] = []
    with open(path, encoding="utf-8") as handle:
        for i, line in enumerate(handle):
            if not line.strip():
                continue
            obj = json.loads(line)
            if i == 0 and obj.get("record") == "header":
                header = obj
            else:
                records.append(obj)
    return header, records


def write_tsv(path: str | Path, columns: list[str], rows: Iterable[Iterable],
              comments: Iterable[str] = ()) -> None:
    lines = [f"# {comment}" for comment in comments]
    lines.append("\t".join(columns))
    for row in rows:
        lines.append("\t".join(str(cell) for cell in row))
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_tsv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    columns: list[str] = []
    rows: list[list[str]] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        cells = line.split("\t")
        if not columns:
            columns = cells
        else:
            rows.append(cells)
    return columns, rows


def bundled_data(name: str) -> Path:
    """Path of a data file shipped with the package (toy fixtures)."""
    return Path(__file__).parent / "data" / name
