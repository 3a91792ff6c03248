import struct
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from modals.field import Grid, GridField
from services.errors import DomainError

MAGIC = b"HF2D"
HEADER = struct.Struct("<4sIddd")


class FieldRepository:
    """
    Reads and writes GridFields in the HF2D binary layout:
    magic "HF2D", u32 n, f64 h, f64 center x1, f64 center x2, then n² little-endian
    complex128 samples in row-major order.
    """

    def encode(self, field: GridField) -> bytes:
        grid = field.grid
        header = HEADER.pack(MAGIC, grid.n, grid.h, grid.center[0], grid.center[1])
        return header + np.ascontiguousarray(field.samples, dtype="<c16").tobytes()

    def decode(self, payload: bytes) -> GridField:
        if len(payload) < HEADER.size:
            raise DomainError("HF2D payload is shorter than its header")
        magic, n, h, c1, c2 = HEADER.unpack_from(payload)
        if magic != MAGIC:
            raise DomainError(f"not an HF2D dump (magic {magic!r})")
        expected = HEADER.size + 16 * n * n
        if len(payload) != expected:
            raise DomainError("HF2D payload length does not match its header", expected=expected, actual=len(payload))
        samples = np.frombuffer(payload, dtype="<c16", offset=HEADER.size).reshape(n, n)
        try:
            return GridField.from_array(Grid(n=n, h=h, center=(c1, c2)), samples)
        except ValidationError as exc:
            raise DomainError("HF2D dump holds no valid field", n=n, h=h, reason=exc.errors()[0]["msg"])

    def save(self, field: GridField, path: Path) -> Path:
        """Writes a field dump to the given path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.encode(field))
        return path

    def load(self, path: Path) -> GridField:
        """Reads a field dump from the given path."""
        path = Path(path)
        if not path.is_file():
            raise DomainError(f"field dump {path} does not exist")
        return self.decode(path.read_bytes())
