from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from riosim.core import (RECORD_SIZE, DecodingError, EncodingError, OrderingAttribute, SplitInfo,
                         WriteRequest, decode_attr, encode_attr, fingerprint)

GOLDEN = Path(__file__).parent / "golden" / "w1_1.hex"

# W1_1: first request of group 1, 4 KB at lba 100, not yet durable
W1_1 = OrderingAttribute(seq_start=1, seq_end=1, prev=0, num=0, lba=100, len=1, stream_id=0,
                         group_end=False)


def hand_encoded_w1_1() -> bytes:
    """The W1_1 record assembled byte by byte, without the struct format."""
    out = bytearray(32)
    out[0] = 0xA1                      # magic 0xA, op submit
    out[1] = 0x80                      # committed only
    out[2:4] = (0).to_bytes(2, "little")
    out[4:8] = (1).to_bytes(4, "little")
    out[8:12] = (1).to_bytes(4, "little")
    out[12:16] = (0).to_bytes(4, "little")
    out[16:18] = (0).to_bytes(2, "little")
    out[18:23] = (100).to_bytes(5, "little")
    out[23:25] = (1).to_bytes(2, "little")
    out[29] = 1                        # one original request
    return bytes(out)


def test_golden_record_matches_independent_builder():
    frozen = bytes.fromhex(GOLDEN.read_text().strip())
    assert len(frozen) == RECORD_SIZE
    assert hand_encoded_w1_1() == frozen
    assert encode_attr(W1_1) == frozen


def test_group_end_round_trip():
    a = OrderingAttribute(1, 1, prev=0, num=2, lba=100, len=1, stream_id=0, group_end=True)
    rec = encode_attr(a)
    assert len(rec) == 32
    assert decode_attr(rec) == a


def test_merged_record_keeps_both_sequences():
    a = OrderingAttribute(1, 3, num=3, lba=100, len=3, group_end=True, nreq=3)
    rec = encode_attr(a)
    assert rec[4:8] != rec[8:12]
    assert decode_attr(rec).unit == (1, 3)


def test_zero_record_rejected():
    with pytest.raises(DecodingError, match="magic"):
        decode_attr(bytes(32))


def test_wrong_size_rejected():
    with pytest.raises(DecodingError):
        decode_attr(bytes(31))


def test_uncommitted_record_rejected():
    rec = bytearray(encode_attr(W1_1))
    rec[1] &= 0x7F
    with pytest.raises(DecodingError, match="committed"):
        decode_attr(bytes(rec))


def test_merged_and_split_rejected():
    rec = bytearray(encode_attr(OrderingAttribute(1, 3, lba=5, len=3)))
    rec[1] |= 0x10
    with pytest.raises(DecodingError, match="merged and split"):
        decode_attr(bytes(rec))
    with pytest.raises(ValueError):
        encode_attr(OrderingAttribute(1, 3, lba=5, split=SplitInfo(1, 0, 2)))


def test_field_overflow_names_the_field():
    with pytest.raises(EncodingError) as e:
        encode_attr(OrderingAttribute(1, 1, lba=1 << 40))
    assert e.value.field == "lba"


def test_payload_length_checked():
    with pytest.raises(ValueError):
        WriteRequest(OrderingAttribute(1, 1, len=2), (1,))


def test_fingerprint_stable():
    assert fingerprint(0, 1, 2) == fingerprint(0, 1, 2)
    assert fingerprint(0, 1, 2) != fingerprint(0, 1, 3)


@st.composite
def attributes(draw):
    start = draw(st.integers(1, 2**32 - 1))
    merged = draw(st.booleans())
    end = draw(st.integers(start, 2**32 - 1)) if merged else start
    split = None
    if end == start and draw(st.booleans()):
        count = draw(st.integers(1, 255))
        split = SplitInfo(start, draw(st.integers(0, count - 1)), count)
    marker = draw(st.booleans())
    return OrderingAttribute(
        seq_start=start, seq_end=end,
        prev=draw(st.integers(0, 2**32 - 1)),
        num=draw(st.integers(0, 2**16 - 1)),
        persist=draw(st.booleans()),
        lba=draw(st.integers(0, 2**40 - 1)),
        len=draw(st.integers(0 if marker else 1, 2**16 - 1)),
        split=split,
        ipu=draw(st.booleans()),
        flush=draw(st.booleans()),
        stream_id=draw(st.integers(0, 2**16 - 1)),
        group_end=draw(st.booleans()),
        prev_count=draw(st.integers(0, 255)),
        unit_count=draw(st.integers(0, 255)),
        nreq=draw(st.integers(0, 255)),
        marker=marker,
    )


@settings(max_examples=10_000, deadline=None)
@given(attributes())
def test_round_trip(a):
    assert decode_attr(encode_attr(a)) == a


@settings(max_examples=300, deadline=None)
@given(attributes(), st.integers(0, 31), st.integers(0, 255))
def test_corrupt_bytes_never_crash_decoder(a, pos, value):
    rec = bytearray(encode_attr(a))
    rec[pos] = value
    try:
        decode_attr(bytes(rec))
    except DecodingError:
        pass
