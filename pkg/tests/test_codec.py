"""Canonical wire encoding: determinism, round trips, rejection of bad bytes."""
from __future__ import annotations

import struct
import subprocess
import sys
from random import Random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gset import (
    AuthOutcome,
    AuthorizeAndHold,
    CaptureToken,
    DenialReason,
    Digest,
    PriceQuote,
    Signature,
    UsageDescriptor,
    codec,
)
from gset.codec import (
    CodecError,
    DecodeError,
    EncodeError,
    MessageTypeError,
    ValidationError,
    decode,
    encode,
    peek_type,
    registered_types,
    signing_payload,
)

import genmsg

# Expected canonical bytes for UsageDescriptor("store", "put", 1, "megabyte"),
# assembled by hand from the framing rules: a leading type-name field, then
# each field in declared order as a 4-byte big-endian length plus content,
# with u64 values as 8 big-endian bytes.
GOLDEN_USAGE_FIELDS = [
    b"UsageDescriptor",
    b"store",
    b"put",
    struct.pack(">Q", 1),
    b"megabyte",
]
GOLDEN_USAGE_BYTES = b"".join(struct.pack(">I", len(f)) + f for f in GOLDEN_USAGE_FIELDS)


def test_golden_usage_descriptor_bytes():
    msg = UsageDescriptor("store", "put", 1, "megabyte")
    assert encode(msg) == GOLDEN_USAGE_BYTES


def test_encoding_identical_across_processes():
    script = (
        "from gset import UsageDescriptor, codec;"
        "import sys;"
        "sys.stdout.write(codec.encode(UsageDescriptor('store','put',1,'megabyte')).hex())"
    )
    out = subprocess.run(
        [sys.executable, "-c", script], capture_output=True, text=True, check=True
    )
    assert bytes.fromhex(out.stdout) == GOLDEN_USAGE_BYTES


def test_quantity_changes_the_encoding():
    a = UsageDescriptor("store", "put", 1, "megabyte")
    b = UsageDescriptor("store", "put", 2, "megabyte")
    assert encode(a) != encode(b)


# --- round trips ------------------------------------------------------------


@pytest.mark.parametrize("cls", sorted(registered_types().values(), key=lambda c: c.__name__))
def test_round_trip_every_registered_type(cls):
    rng = Random(f"roundtrip/{cls.__name__}")
    for _ in range(25):
        msg = genmsg.random_message(cls, rng)
        raw = encode(msg)
        again = decode(raw)
        assert again == msg
        assert encode(again) == raw
        assert peek_type(raw) == cls.__name__


def test_decode_accepts_matching_expected_type():
    msg = UsageDescriptor("store", "put", 1, "megabyte")
    assert decode(encode(msg), UsageDescriptor) == msg


def test_decode_rejects_mismatched_expected_type():
    msg = UsageDescriptor("store", "put", 1, "megabyte")
    with pytest.raises(MessageTypeError):
        decode(encode(msg), PriceQuote)


def test_decode_rejects_unknown_type_tag():
    raw = struct.pack(">I", 7) + b"NoSuchT" + GOLDEN_USAGE_BYTES[19:]
    with pytest.raises(MessageTypeError):
        decode(raw)


# --- malformed input --------------------------------------------------------


def test_truncation_at_every_length_rejected():
    rng = Random("truncate")
    msg = genmsg.random_message(AuthorizeAndHold, rng)
    raw = encode(msg)
    for cut in range(len(raw)):
        with pytest.raises(DecodeError):
            decode(raw[:cut])


def test_trailing_bytes_rejected():
    raw = encode(UsageDescriptor("store", "put", 1, "megabyte"))
    with pytest.raises(DecodeError):
        decode(raw + b"\x00")


def test_decode_error_carries_an_offset():
    raw = encode(UsageDescriptor("store", "put", 1, "megabyte"))
    with pytest.raises(DecodeError) as info:
        decode(raw[:-3])
    assert isinstance(info.value.offset, int)
    assert 0 <= info.value.offset <= len(raw)


def test_empty_input_rejected():
    with pytest.raises(DecodeError):
        decode(b"")


def test_oversized_length_prefix_rejected():
    raw = struct.pack(">I", 0xFFFFFFF0) + b"x"
    with pytest.raises(DecodeError):
        decode(raw)


def test_u64_field_with_wrong_width_rejected():
    # quantity framed as 4 bytes instead of 8
    fields = [b"UsageDescriptor", b"store", b"put", struct.pack(">I", 1), b"megabyte"]
    raw = b"".join(struct.pack(">I", len(f)) + f for f in fields)
    with pytest.raises(DecodeError):
        decode(raw)


def test_validation_failure_on_decode():
    # quantity 0 violates the type's own invariant
    fields = [b"UsageDescriptor", b"store", b"put", struct.pack(">Q", 0), b"megabyte"]
    raw = b"".join(struct.pack(">I", len(f)) + f for f in fields)
    with pytest.raises(CodecError):
        decode(raw)


def test_invalid_utf8_rejected():
    fields = [b"UsageDescriptor", b"\xff\xfe", b"put", struct.pack(">Q", 1), b"megabyte"]
    raw = b"".join(struct.pack(">I", len(f)) + f for f in fields)
    with pytest.raises(DecodeError):
        decode(raw)


def test_bool_field_must_be_zero_or_one():
    msg = AuthOutcome(False, None, DenialReason.OVER_LIMIT)
    raw = bytearray(encode(msg))
    # first field after the tag is the bool; its 8-byte value starts after
    # two 4-byte length prefixes plus the tag text
    offset = 4 + len("AuthOutcome") + 4
    assert raw[offset + 7] == 0
    raw[offset + 7] = 2
    with pytest.raises(DecodeError):
        decode(bytes(raw))


def test_enum_field_must_hold_a_known_value():
    msg = AuthOutcome(False, None, DenialReason.OVER_LIMIT)
    raw = bytearray(encode(msg))
    assert raw.count(struct.pack(">Q", int(DenialReason.OVER_LIMIT))) == 1
    i = raw.find(struct.pack(">Q", int(DenialReason.OVER_LIMIT)))
    raw[i:i + 8] = struct.pack(">Q", 99)
    with pytest.raises(DecodeError):
        decode(bytes(raw))


def test_encode_rejects_invariant_violations():
    with pytest.raises((EncodeError, ValidationError)):
        encode(UsageDescriptor("", "put", 1, "megabyte"))
    with pytest.raises((EncodeError, ValidationError)):
        encode(UsageDescriptor("store", "put", 0, "megabyte"))
    with pytest.raises((EncodeError, ValidationError)):
        encode(UsageDescriptor("store", "put", -1, "megabyte"))
    with pytest.raises((EncodeError, ValidationError)):
        encode(UsageDescriptor("store", "put", 2**64, "megabyte"))


def test_unregistered_object_rejected():
    with pytest.raises(EncodeError):
        encode(object())


# --- signing payloads -------------------------------------------------------


def test_signing_payload_excludes_trailing_signature():
    rng = Random("signing")
    quote = genmsg.random_message(PriceQuote, rng)
    payload = signing_payload(quote)
    assert payload not in encode(quote) or quote.provider_signature.bytes not in payload
    other = PriceQuote(
        quote.quote_id, quote.usage, quote.price, quote.expiry,
        Signature(b"\x01" * 64, "someone-else"),
    )
    assert signing_payload(other) == payload


def test_signing_payload_depends_on_every_other_field():
    rng = Random("signing2")
    quote = genmsg.random_message(PriceQuote, rng)
    bumped = PriceQuote(
        quote.quote_id, quote.usage, quote.price + 1, quote.expiry,
        quote.provider_signature,
    )
    assert signing_payload(bumped) != signing_payload(quote)


# --- privacy by construction ------------------------------------------------


def test_authorize_and_hold_encoding_carries_no_usage_text():
    rng = Random("privacy")
    usage_markers = (b"mobile-storage", b"store-objects", b"megabyte")
    for _ in range(20):
        msg = genmsg.random_message(AuthorizeAndHold, rng)
        raw = encode(msg)
        for marker in usage_markers:
            assert marker not in raw


# --- injectivity ------------------------------------------------------------


def test_distinct_messages_have_distinct_encodings():
    rng = Random("inject")
    seen: dict[bytes, object] = {}
    for cls in registered_types().values():
        for _ in range(50):
            msg = genmsg.random_message(cls, rng)
            raw = encode(msg)
            if raw in seen:
                assert seen[raw] == msg
            seen[raw] = msg
    assert len(seen) > 1200


@settings(max_examples=100, deadline=None)
@given(
    st.text(min_size=1, max_size=30),
    st.text(min_size=1, max_size=30),
    st.integers(min_value=1, max_value=2**64 - 1),
    st.text(min_size=1, max_size=10),
)
def test_usage_descriptor_round_trip_property(service, operation, quantity, unit):
    msg = UsageDescriptor(service, operation, quantity, unit)
    assert decode(encode(msg)) == msg


def test_token_round_trip_preserves_signature_bytes():
    rng = Random("token")
    token = genmsg.random_message(CaptureToken, rng)
    assert decode(encode(token), CaptureToken).tm_signature == token.tm_signature
