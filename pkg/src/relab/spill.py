"""Block-oriented temp-file arena with exact spill accounting.

On-disk stream layout: a sequence of 8192-byte blocks, each holding a
2-byte little-endian used-length followed by packed canonical rows and
zero padding. Rows never straddle blocks; a stream holds rows of one
fixed width (recorded in memory at first write, not on disk).
"""

from __future__ import annotations

import shutil
import tempfile
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import CorruptBlock, OversizeRow

BLOCK_SIZE = 8192
BLOCK_HEADER = 2
BLOCK_CAPACITY = BLOCK_SIZE - BLOCK_HEADER


@dataclass
class SpillStats:
    """Counters for one operator execution.

    temp_* fields count logical engine I/O in whole blocks; peak_* fields
    are the engine's own memory accounting (serialized bytes resident),
    not spill traffic.
    """

    temp_bytes_written: int = 0
    temp_blocks_written: int = 0
    temp_bytes_read: int = 0
    partition_passes: int = 0
    sort_runs: int = 0
    peak_mem_bytes: int = 0
    peak_build_bytes: int = 0

    @property
    def temp_mb(self) -> float:
        return self.temp_blocks_written * BLOCK_SIZE / 2**20

    def copy(self) -> "SpillStats":
        return replace(self)


class _Stream:
    __slots__ = ("path", "handle", "row_width", "sealed")

    def __init__(self, path: Path):
        self.path = path
        self.handle = None
        self.row_width: int | None = None
        self.sealed = False


def _as_matrix(rows: Union[np.ndarray, Sequence[bytes]]) -> np.ndarray:
    if isinstance(rows, np.ndarray):
        if rows.ndim != 2 or rows.dtype != np.uint8:
            raise ValueError("row matrix must be (n, width) uint8")
        return rows
    rows = list(rows)
    if not rows:
        return np.empty((0, 1), dtype=np.uint8)
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ValueError("rows in one spill call must share a width")
    flat = np.frombuffer(b"".join(rows), dtype=np.uint8)
    return flat.reshape(len(rows), width)


class TempArena:
    """Temp-file manager for one executing operator.

    Creates its own uniquely named subdirectory under `directory`, so
    arenas sharing a directory never collide. All temp files are removed
    on close(); use as a context manager to guarantee that on error paths.
    """

    def __init__(self, directory: Union[str, Path]):
        self.stats = SpillStats()
        self._root = Path(tempfile.mkdtemp(prefix="arena-", dir=str(directory)))
        self._streams: dict[str, _Stream] = {}
        self._closed = False

    @property
    def directory(self) -> Path:
        return self._root

    def __enter__(self) -> "TempArena":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        for stream in self._streams.values():
            if stream.handle is not None:
                stream.handle.close()
                stream.handle = None
        shutil.rmtree(self._root, ignore_errors=True)

    # -- writing -----------------------------------------------------------

    def spill_rows(
        self, stream_id: str, rows: Union[np.ndarray, Sequence[bytes]]
    ) -> None:
        """Append rows to a stream in whole zero-padded blocks.

        Each call packs greedily and flushes its final partial block, so
        blocks written = ceil(n / rows_per_block) per call.
        """
        self._check_open()
        matrix = _as_matrix(rows)
        n, width = matrix.shape
        if n == 0:
            return
        if width == 0:
            raise ValueError("zero-width rows cannot be spilled")
        if width > BLOCK_CAPACITY:
            raise OversizeRow(f"row width {width} exceeds block capacity")
        stream = self._streams.get(stream_id)
        if stream is None:
            stream = _Stream(self._root / f"s{len(self._streams):05d}.tmp")
            self._streams[stream_id] = stream
        if stream.sealed:
            raise ValueError(f"stream {stream_id!r} is sealed for reading")
        if stream.row_width is None:
            stream.row_width = width
        elif stream.row_width != width:
            raise ValueError(
                f"stream {stream_id!r} holds {stream.row_width}-byte rows,"
                f" got {width}"
            )
        rpb = BLOCK_CAPACITY // width
        nb = -(-n // rpb)
        buf = np.zeros((nb, BLOCK_SIZE), dtype=np.uint8)
        padded = np.zeros((nb * rpb, width), dtype=np.uint8)
        padded[:n] = matrix
        buf[:, BLOCK_HEADER : BLOCK_HEADER + rpb * width] = padded.reshape(
            nb, rpb * width
        )
        used = np.full(nb, rpb * width, dtype=np.uint16)
        used[-1] = (n - (nb - 1) * rpb) * width
        buf[:, 0] = (used & 0xFF).astype(np.uint8)
        buf[:, 1] = (used >> 8).astype(np.uint8)
        if stream.handle is None:
            stream.handle = open(stream.path, "wb")
        stream.handle.write(buf.reshape(-1).data)
        self.stats.temp_blocks_written += nb
        self.stats.temp_bytes_written += nb * BLOCK_SIZE

    # -- reading -----------------------------------------------------------

    def _seal(self, stream: _Stream) -> None:
        if stream.handle is not None:
            stream.handle.flush()
            stream.handle.close()
            stream.handle = None
        stream.sealed = True

    def read_stream(self, stream_id: str) -> Iterator[bytes]:
        """Yield rows in write order; a never-written stream is empty."""
        self._check_open()
        stream = self._streams.get(stream_id)
        if stream is None:
            return iter(())
        self._seal(stream)
        return self._iter_rows(stream)

    def _iter_rows(self, stream: _Stream) -> Iterator[bytes]:
        width = stream.row_width or 1
        with open(stream.path, "rb") as f:
            while True:
                block = f.read(BLOCK_SIZE)
                if not block:
                    return
                if len(block) != BLOCK_SIZE:
                    raise CorruptBlock(f"{stream.path}: truncated block")
                self.stats.temp_bytes_read += BLOCK_SIZE
                used = block[0] | (block[1] << 8)
                if used > BLOCK_CAPACITY:
                    raise CorruptBlock(
                        f"{stream.path}: used-length {used} exceeds capacity"
                    )
                if used % width:
                    raise CorruptBlock(
                        f"{stream.path}: used-length {used} not a row multiple"
                    )
                for off in range(BLOCK_HEADER, BLOCK_HEADER + used, width):
                    yield block[off : off + width]

    def read_stream_matrix(self, stream_id: str) -> np.ndarray:
        """All rows of a stream as an (n, width) uint8 matrix."""
        self._check_open()
        stream = self._streams.get(stream_id)
        if stream is None or stream.row_width is None:
            return np.empty((0, 1), dtype=np.uint8)
        self._seal(stream)
        width = stream.row_width
        raw = np.fromfile(stream.path, dtype=np.uint8)
        if raw.size % BLOCK_SIZE:
            raise CorruptBlock(f"{stream.path}: truncated block")
        blocks = raw.reshape(-1, BLOCK_SIZE)
        nb = len(blocks)
        self.stats.temp_bytes_read += nb * BLOCK_SIZE
        if nb == 0:
            return np.empty((0, width), dtype=np.uint8)
        used = blocks[:, 0].astype(np.int64) | (blocks[:, 1].astype(np.int64) << 8)
        if (used > BLOCK_CAPACITY).any():
            raise CorruptBlock(f"{stream.path}: used-length exceeds capacity")
        if (used % width).any():
            raise CorruptBlock(f"{stream.path}: used-length not a row multiple")
        rpb = BLOCK_CAPACITY // width
        rows_per_block = used // width
        region = np.ascontiguousarray(
            blocks[:, BLOCK_HEADER : BLOCK_HEADER + rpb * width]
        ).reshape(nb * rpb, width)
        if (rows_per_block[:-1] == rpb).all():
            # single-call streams: padding only in the final block
            return region[: int(rows_per_block.sum())]
        keep = (
            np.arange(rpb, dtype=np.int64)[None, :] < rows_per_block[:, None]
        ).reshape(-1)
        return region[keep]

    # -- misc ----------------------------------------------------------------

    def stream_ids(self) -> tuple[str, ...]:
        return tuple(self._streams)

    def file_bytes(self) -> int:
        """Total size of the arena's files on disk (for accounting checks)."""
        for stream in self._streams.values():
            if stream.handle is not None:
                stream.handle.flush()
        return sum(s.path.stat().st_size for s in self._streams.values() if s.path.exists())

    def _check_open(self) -> None:
        if self._closed:
            raise ValueError("arena is closed")
