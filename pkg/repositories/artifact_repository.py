import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Iterable, List, Sequence

from pydantic import BaseModel

from modals.experiment import ArtifactRecord, RunManifest
from modals.field import GridField
from repositories.field_repository import FieldRepository

MANIFEST_NAME = "manifest.json"


def format_value(value: Any) -> str:
    """Round-trip text for CSV cells: 17 significant digits for floats."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "{:.17g}".format(value)
    return str(value)


class ArtifactRepository:
    """
    Handles every file a run emits: CSV tables, JSON reports and HF2D field dumps
    in one output directory, each recorded with its SHA-256 for the manifest.
    """
    def __init__(self, output_dir: Path, fields: FieldRepository):
        """
        Args:
            output_dir: directory receiving all artifacts of the run.
            fields: codec for binary field dumps.
        """
        self.output_dir = Path(output_dir)
        self.fields = fields
        self.records: List[ArtifactRecord] = []

    def _write(self, name: str, payload: bytes) -> Path:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / name
        path.write_bytes(payload)
        self.records = [r for r in self.records if r.path != name]
        self.records.append(ArtifactRecord(path=name, sha256=hashlib.sha256(payload).hexdigest(), bytes=len(payload)))
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Writes a table with a header row and '\\n' line endings."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
        return self._write(name, buffer.getvalue().encode("utf-8"))

    def write_json(self, name: str, payload: Any) -> Path:
        """Writes a report with sorted keys; pydantic models are dumped in JSON mode."""
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json")
        text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
        return self._write(name, text.encode("utf-8"))

    def write_field(self, name: str, field: GridField) -> Path:
        return self._write(name, self.fields.encode(field))

    def write_manifest(self, manifest: RunManifest) -> Path:
        """The manifest lists every other artifact and is not listed itself."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / MANIFEST_NAME
        body = manifest.model_copy(update={"artifacts": sorted(self.records, key=lambda r: r.path)})
        path.write_text(json.dumps(body.model_dump(mode="json"), sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path
