"""
Artifact storage for the time-diffraction toolkit
CSV, JSON, Markdown and 16-bit PGM files written through a temporary file and a rename,
or streamed to stdout when no output directory is set
"""

import csv
import io
import json
import logging
import os
import sys
import tempfile
from typing import Any, Iterable, Optional, Sequence, TextIO

import numpy as np

from errors import ContractError
from Utils.helpers import format_number, round_significant

logger = logging.getLogger(__name__)

PGM_MAXVAL = 65535


def to_jsonable(value: Any) -> Any:
    """Plain JSON types with floats rounded to 6 significant digits"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if value != value or value in (float("inf"), float("-inf")):
            return None
        return round_significant(value)
    return value


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])
    return buffer.getvalue()


def render_json(data: Any) -> str:
    return json.dumps(to_jsonable(data), indent=2) + "\n"


def encode_pgm(raster: np.ndarray, fmt: str = "P5") -> bytes:
    """16-bit PGM, row-major from the top-left pixel"""
    values = np.asarray(raster)
    clipped = int(np.count_nonzero(values > PGM_MAXVAL))
    if clipped:
        logger.warning(f"⚠️ {clipped} pixels above {PGM_MAXVAL} clipped in PGM output")
    values = np.clip(values, 0, PGM_MAXVAL).astype(np.int64)
    rows, cols = values.shape
    header = f"{fmt}\n{cols} {rows}\n{PGM_MAXVAL}\n".encode("ascii")

    if fmt == "P5":
        return header + values.astype(">u2").tobytes()
    if fmt == "P2":
        lines = [" ".join(str(v) for v in row) for row in values]
        return header + ("\n".join(lines) + "\n").encode("ascii")
    raise ContractError(f"unknown PGM format {fmt!r}")


def decode_pgm(data: bytes) -> np.ndarray:
    """Parse a P2 or P5 PGM (comments allowed in the header)"""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ContractError("truncated PGM header")
        tokens.append(data[start:pos].decode("ascii"))

    magic, cols, rows, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P5":
        body = data[pos + 1:]
        dtype = ">u2" if maxval > 255 else "u1"
        expected = rows * cols * np.dtype(dtype).itemsize
        if len(body) < expected:
            raise ContractError(f"PGM body holds {len(body)} bytes, expected {expected}")
        return np.frombuffer(body[:expected], dtype=dtype).reshape(rows, cols).astype(np.int64)
    if magic == "P2":
        values = np.array(data[pos:].split(), dtype=np.int64)
        if values.size != rows * cols:
            raise ContractError(f"PGM body holds {values.size} values, expected {rows * cols}")
        return values.reshape(rows, cols)
    raise ContractError(f"unsupported PGM magic {magic!r}")


class ArtifactStore:
    """Writes run artifacts into out_dir; without one, text artifacts go to stdout"""

    def __init__(self, out_dir: Optional[str] = None, stdout: Optional[TextIO] = None):
        self.out_dir = out_dir
        self.stdout = stdout or sys.stdout
        self.written = []

    @property
    def to_stdout(self) -> bool:
        return self.out_dir is None

    def path(self, name: str) -> str:
        if self.out_dir is None:
            raise ContractError(f"artifact {name} needs an output directory (--out)")
        return os.path.join(self.out_dir, name)

    def _atomic_write(self, name: str, payload: bytes) -> str:
        target = self.path(name)
        os.makedirs(self.out_dir, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{name}.", suffix=".tmp", dir=self.out_dir)
        try:
            with os.fdopen(fd, "wb") as f:
                f.write(payload)
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.remove(tmp)
            raise
        self.written.append(target)
        logger.info(f"💾 Saved {target} ({len(payload)} bytes)")
        return target

    def _emit_text(self, name: str, text: str) -> Optional[str]:
        if self.to_stdout:
            self.stdout.write(text)
            self.stdout.flush()
            return None
        return self._atomic_write(name, text.encode("utf-8"))

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Optional[str]:
        return self._emit_text(name, render_csv(header, rows))

    def write_json(self, name: str, data: Any) -> Optional[str]:
        return self._emit_text(name, render_json(data))

    def write_text(self, name: str, text: str) -> Optional[str]:
        return self._emit_text(name, text)

    def write_pgm(self, name: str, raster: np.ndarray, fmt: str = "P5") -> str:
        return self._atomic_write(name, encode_pgm(raster, fmt))

    @staticmethod
    def read_pgm(path: str) -> np.ndarray:
        with open(path, "rb") as f:
            return decode_pgm(f.read())

    @staticmethod
    def read_json(path: str) -> Any:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
