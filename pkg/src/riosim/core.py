"""Domain types shared by the whole simulator.

An ordering attribute travels with every ordered write from the sequencer to
the target's persistent log.  Its 32-byte on-log form is produced by
:func:`encode_attr` and parsed back by :func:`decode_attr`.

Record layout (little-endian)::

    0       magic (high nibble 0xA) | op code (low nibble)
    1       flags: persist, group_end, flush, ipu, split, lap, -, committed
    2-3     stream id
    4-7     start sequence
    8-11    end sequence
    12-15   previous unit on the same target (prev)
    16-17   number of requests in the group (num)
    18-22   lba (40 bits)
    23-24   length in blocks
    25      split part index
    26      split part count
    27      request count of the prev unit on this target
    28      request count of this unit on this target (flush-bearing only)
    29      original requests covered by this record
    30-31   reserved, zero

The committed flag is written last, so a torn append never decodes.  The lap
bit is the parity of the log pass that wrote the slot; it lets a restart find
the wrap point of a completely full log.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from typing import Optional

BLOCK_SIZE = 4096
RECORD_SIZE = 32
TICK_US = 0.1  # one simulated tick is 0.1 microseconds

SimTime = int  # ticks; never decreases within one run

MAGIC = 0xA
OP_SUBMIT = 1
OP_FLUSH = 2
_VALID_OPS = (OP_SUBMIT, OP_FLUSH)

F_PERSIST = 1 << 0
F_GROUP_END = 1 << 1
F_FLUSH = 1 << 2
F_IPU = 1 << 3
F_SPLIT = 1 << 4
F_LAP = 1 << 5  # set by the log, not part of the attribute
F_COMMITTED = 1 << 7

_LAYOUT = struct.Struct("<BBHIIIH5sHBBBBBH")
assert _LAYOUT.size == RECORD_SIZE

# field widths of the on-log form
_WIDTHS = {
    "stream_id": 16,
    "seq_start": 32,
    "seq_end": 32,
    "prev": 32,
    "num": 16,
    "lba": 40,
    "len": 16,
    "part_index": 8,
    "part_count": 8,
    "prev_count": 8,
    "unit_count": 8,
    "nreq": 8,
}


class EncodingError(ValueError):
    """An attribute field does not fit its on-log width."""

    def __init__(self, field_name: str, value: int):
        super().__init__(f"field {field_name!r}={value} exceeds {_WIDTHS[field_name]} bits")
        self.field = field_name


class DecodingError(ValueError):
    pass


@dataclass(frozen=True)
class SplitInfo:
    parent_seq: int
    part_index: int
    part_count: int


@dataclass(frozen=True)
class OrderingAttribute:
    seq_start: int
    seq_end: int
    prev: int = 0
    num: int = 0
    persist: bool = False
    lba: int = 0
    len: int = 1
    split: Optional[SplitInfo] = None
    ipu: bool = False
    flush: bool = False
    stream_id: int = 0
    group_end: bool = False
    # per-target chain bookkeeping, filled in at dispatch time
    prev_count: int = 0
    unit_count: int = 0
    nreq: int = 1
    marker: bool = False  # standalone FLUSH command, carries no data

    @property
    def merged(self) -> bool:
        return self.seq_start != self.seq_end

    @property
    def unit(self) -> tuple[int, int]:
        return (self.seq_start, self.seq_end)

    def check(self) -> None:
        """Raise ValueError if the attribute breaks a type invariant."""
        if self.seq_start > self.seq_end:
            raise ValueError("seq_start > seq_end")
        if self.split is not None and self.merged:
            raise ValueError("a merged request can not be split")
        if self.len < 0 or (self.len == 0 and not self.marker):
            raise ValueError("zero-length data request")
        if self.split is not None and not (0 <= self.split.part_index < self.split.part_count):
            raise ValueError("split part index out of range")


@dataclass(frozen=True)
class WriteRequest:
    """One write flowing through the pipeline; data is a fingerprint per block."""

    attr: OrderingAttribute
    payload_digest: tuple[int, ...]
    ordered: bool = True
    target_id: int = 0
    req_id: int = 0

    def __post_init__(self):
        if len(self.payload_digest) != self.attr.len:
            raise ValueError(
                f"payload has {len(self.payload_digest)} blocks, attribute says {self.attr.len}"
            )

    @property
    def lba(self) -> int:
        return self.attr.lba

    @property
    def len(self) -> int:
        return self.attr.len

    def with_attr(self, **changes) -> "WriteRequest":
        return replace(self, attr=replace(self.attr, **changes))


@dataclass
class PersistenceRecord:
    attr: OrderingAttribute
    log_slot: int

    def encode(self) -> bytes:
        return encode_attr(self.attr)


def _check_width(name: str, value: int) -> int:
    if value < 0 or value >= (1 << _WIDTHS[name]):
        raise EncodingError(name, value)
    return value


def encode_attr(attr: OrderingAttribute) -> bytes:
    if attr.split is not None and attr.merged:
        raise ValueError("a merged request can not be split")
    flags = F_COMMITTED
    if attr.persist:
        flags |= F_PERSIST
    if attr.group_end:
        flags |= F_GROUP_END
    if attr.flush:
        flags |= F_FLUSH
    if attr.ipu:
        flags |= F_IPU
    part_index = part_count = 0
    if attr.split is not None:
        flags |= F_SPLIT
        part_index, part_count = attr.split.part_index, attr.split.part_count
    op = OP_FLUSH if attr.marker else OP_SUBMIT
    lba = _check_width("lba", attr.lba)
    return _LAYOUT.pack(
        (MAGIC << 4) | op,
        flags,
        _check_width("stream_id", attr.stream_id),
        _check_width("seq_start", attr.seq_start),
        _check_width("seq_end", attr.seq_end),
        _check_width("prev", attr.prev),
        _check_width("num", attr.num),
        lba.to_bytes(5, "little"),
        _check_width("len", attr.len),
        _check_width("part_index", part_index),
        _check_width("part_count", part_count),
        _check_width("prev_count", attr.prev_count),
        _check_width("unit_count", attr.unit_count),
        _check_width("nreq", attr.nreq),
        0,
    )


def decode_attr(record: bytes) -> OrderingAttribute:
    if len(record) != RECORD_SIZE:
        raise DecodingError(f"record must be {RECORD_SIZE} bytes, got {len(record)}")
    (head, flags, stream_id, seq_start, seq_end, prev, num, lba, length,
     part_index, part_count, prev_count, unit_count, nreq, reserved) = _LAYOUT.unpack(record)
    op = head & 0x0F
    if head >> 4 != MAGIC or op not in _VALID_OPS:
        raise DecodingError("unset magic/op code")
    if not flags & F_COMMITTED:
        raise DecodingError("record not committed")
    if reserved:
        raise DecodingError("reserved bytes are not zero")
    split = None
    if flags & F_SPLIT:
        if seq_start != seq_end:
            raise DecodingError("record is both merged and split")
        split = SplitInfo(seq_start, part_index, part_count)
    attr = OrderingAttribute(
        seq_start=seq_start,
        seq_end=seq_end,
        prev=prev,
        num=num,
        persist=bool(flags & F_PERSIST),
        lba=int.from_bytes(lba, "little"),
        len=length,
        split=split,
        ipu=bool(flags & F_IPU),
        flush=bool(flags & F_FLUSH),
        stream_id=stream_id,
        group_end=bool(flags & F_GROUP_END),
        prev_count=prev_count,
        unit_count=unit_count,
        nreq=nreq,
        marker=op == OP_FLUSH,
    )
    try:
        attr.check()
    except ValueError as exc:
        raise DecodingError(str(exc)) from exc
    return attr


def fingerprint(*parts) -> int:
    """Stable 64-bit content fingerprint for a simulated 4 KB block."""
    h = hashlib.blake2b(repr(parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")
