"""CSV emission with a manifest comment header, written atomically."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

MANIFEST_PREFIX = "# manifest: "


def fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return f"{value:.9g}"
    if hasattr(value, "dtype") and value.dtype.kind == "f":
        return f"{float(value):.9g}"
    return str(value)


def utc_timestamp() -> str:
    # SOURCE_DATE_EPOCH pins the header timestamp for reproducible files
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class RunManifest:
    command: str
    model: dict
    sparsity: dict
    seeds: list
    out_dir: str
    timestamp: str = field(default_factory=utc_timestamp)
    notes: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "command": self.command,
                "model": self.model,
                "sparsity": self.sparsity,
                "seeds": self.seeds,
                "out_dir": self.out_dir,
                "timestamp": self.timestamp,
                "notes": self.notes,
            },
            sort_keys=True,
        )

    def header(self) -> str:
        return MANIFEST_PREFIX + self.to_json() + "\n"


def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def csv_text(columns: Sequence[str], rows: Iterable[Sequence], manifest: RunManifest | None = None) -> str:
    buf = io.StringIO()
    if manifest is not None:
        buf.write(manifest.header())
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path, columns, rows, manifest=None) -> None:
    atomic_write(path, csv_text(columns, rows, manifest))


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` as dicts, skipping the manifest line."""
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith(MANIFEST_PREFIX):
        raise ValueError(f"{path} has no manifest header")
    return json.loads(first[len(MANIFEST_PREFIX):])


LEDGER_COLUMNS = ("step", "block", "gated", "token_count", "attn_madds", "ffn_madds")


def ledger_rows(ledger):
    for r in ledger.rows:
        yield (r.step, r.block, r.gated, r.token_count, r.attn_madds, r.ffn_madds)
