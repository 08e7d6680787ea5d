"""Protocol messages for the gSET flows.

Three flows are covered: pricing (PriceRequest/PriceQuote), authorization
and payment (AuthorizationRequest through AuthOutcome, with the trust
manager's hold/settle exchange against the account provider), and service
delivery plus credit collection (ObjectUpload, ServiceGrant, ticket
redemption, CaptureRequest/CaptureResponse).

The separation that gives the protocol its privacy property is structural:
payment details exist only inside a sealed envelope addressed to the trust
manager, order details never leave the requester/provider side, and the
dual signature ties the two halves together through digests alone.

Messages are frozen dataclasses registered with the canonical codec; each
validates its own invariants on construction and on encode.  A trailing
``*_signature`` field is a detached signature over the canonical encoding
of everything before it (see ``build_signed`` / ``verify_signed``).
"""

from __future__ import annotations

import enum

from . import codec
from .codec import ValidationError, canonical_message
from .crypto import (
    Digest,
    DualSignature,
    KeyPair,
    SealedEnvelope,
    Signature,
    sign,
    verify,
)

NONCE_SIZE = 16
_U64_MAX = 2**64 - 1


class DenialReason(enum.IntEnum):
    """Why an authorization, hold, or capture was refused."""

    OVER_LIMIT = 1
    INSUFFICIENT_CREDIT = 2
    BAD_SIGNATURE = 3
    REPLAY = 4
    EXPIRED_QUOTE = 5
    UNKNOWN_ACCOUNT = 6


def _need(condition: bool, what: str) -> None:
    if not condition:
        raise ValidationError(what)


def _need_nonce(value: bytes, what: str) -> None:
    _need(isinstance(value, bytes) and len(value) == NONCE_SIZE,
          f"{what} must be {NONCE_SIZE} bytes")


def _need_label(value: str, what: str) -> None:
    _need(isinstance(value, str) and bool(value), f"{what} must be non-empty")


def _need_u64(value: int, what: str, minimum: int = 0) -> None:
    _need(
        isinstance(value, int) and not isinstance(value, bool)
        and minimum <= value <= _U64_MAX,
        f"{what} must be an unsigned 64-bit integer >= {minimum}",
    )


# --- shared components -------------------------------------------------------


@canonical_message
class UsageDescriptor:
    """What the requester wants to do: a service, an operation, an amount."""

    service_id: str
    operation: str
    quantity: int
    unit: str

    def validate(self) -> None:
        _need_label(self.service_id, "service_id")
        _need_label(self.operation, "operation")
        _need_u64(self.quantity, "quantity", minimum=1)
        _need_label(self.unit, "unit")


@canonical_message
class OrderInfo:
    """The order half of an authorization: quote reference plus usage."""

    quote_id: bytes
    usage: UsageDescriptor
    requester_id: str
    order_nonce: bytes

    def validate(self) -> None:
        _need_nonce(self.quote_id, "quote_id")
        _need_label(self.requester_id, "requester_id")
        _need_nonce(self.order_nonce, "order_nonce")


@canonical_message
class PaymentInfo:
    """The payment half: account coordinates and the requester's spend cap.

    Travels only inside a sealed envelope addressed to the trust manager;
    the service provider never sees these fields in the clear.
    """

    account_provider_id: str
    account_ref: str
    authorized_limit: int
    payment_nonce: bytes

    def validate(self) -> None:
        _need_label(self.account_provider_id, "account_provider_id")
        _need_label(self.account_ref, "account_ref")
        _need_u64(self.authorized_limit, "authorized_limit", minimum=1)
        _need_nonce(self.payment_nonce, "payment_nonce")


@canonical_message
class Ticket:
    """Single-use claim on one stored object."""

    ticket_id: bytes
    object_digest: Digest

    def validate(self) -> None:
        _need_nonce(self.ticket_id, "ticket_id")


@canonical_message
class CaptureToken:
    """Trust-manager-signed voucher the provider redeems to collect credit."""

    token_id: bytes
    provider_id: str
    charge_amount: int
    account_provider_id: str
    hold_ref: bytes
    tm_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.token_id, "token_id")
        _need_label(self.provider_id, "provider_id")
        _need_u64(self.charge_amount, "charge_amount", minimum=1)
        _need_label(self.account_provider_id, "account_provider_id")
        _need_nonce(self.hold_ref, "hold_ref")


# --- pricing flow ------------------------------------------------------------


@canonical_message
class PriceRequest:
    requester_id: str
    usage: UsageDescriptor
    nonce: bytes

    def validate(self) -> None:
        _need_label(self.requester_id, "requester_id")
        _need_nonce(self.nonce, "nonce")


@canonical_message
class PriceQuote:
    """Provider's signed offer: this usage, this price, until this tick."""

    quote_id: bytes
    usage: UsageDescriptor
    price: int
    expiry: int
    provider_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.quote_id, "quote_id")
        _need_u64(self.price, "price")
        _need_u64(self.expiry, "expiry")


@canonical_message
class QuoteDenial:
    """Provider cannot price the requested usage."""

    request_nonce: bytes
    reason: str

    def validate(self) -> None:
        _need_nonce(self.request_nonce, "request_nonce")
        _need_label(self.reason, "reason")


# --- authorization flow ------------------------------------------------------


@canonical_message
class AuthorizationRequest:
    """Requester to provider: order in the clear, payment sealed away.

    ``pi_digest`` is the hash of the sealed plaintext, letting the provider
    run the order-side dual-signature check without opening the envelope.
    """

    order_info: OrderInfo
    payment_envelope: SealedEnvelope
    pi_digest: Digest
    dual: DualSignature


@canonical_message
class AuthorizeAndHold:
    """Provider to trust manager: relay the sealed payment, name a charge.

    Deliberately contains no OrderInfo plaintext; the trust manager learns
    the charge and the order digest, never what was ordered.
    """

    payment_envelope: SealedEnvelope
    oi_digest: Digest
    dual: DualSignature
    charge_amount: int
    provider_id: str
    provider_signature: Signature

    def validate(self) -> None:
        _need_u64(self.charge_amount, "charge_amount", minimum=1)
        _need_label(self.provider_id, "provider_id")


@canonical_message
class AuthOutcome:
    """Trust manager's verdict: a capture token, or a precise refusal."""

    approved: bool
    token: CaptureToken | None
    reason: DenialReason | None

    def validate(self) -> None:
        if self.approved:
            _need(self.token is not None, "approved outcome must carry a token")
            _need(self.reason is None, "approved outcome must carry no reason")
        else:
            _need(self.token is None, "denied outcome must carry no token")
            _need(self.reason is not None, "denied outcome must carry a reason")


@canonical_message
class AuthDecision:
    """Provider to requester: approved or not, and nothing more.

    Credit-related refusal reasons stay between provider, trust manager,
    and account provider.
    """

    order_nonce: bytes
    approved: bool
    provider_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.order_nonce, "order_nonce")


# --- service delivery and collection -----------------------------------------


@canonical_message
class ObjectUpload:
    """Requester ships the payload objects for an approved order."""

    order_nonce: bytes
    objects: tuple[bytes, ...]
    requester_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.order_nonce, "order_nonce")
        _need(len(self.objects) > 0, "upload must contain at least one object")
        for i, obj in enumerate(self.objects):
            _need(isinstance(obj, bytes) and bool(obj), f"objects[{i}] must be non-empty")


@canonical_message
class ServiceGrant:
    """Provider's receipt for stored objects: one single-use ticket each."""

    grant_id: bytes
    tickets: tuple[Ticket, ...]
    provider_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.grant_id, "grant_id")
        _need(len(self.tickets) > 0, "grant must contain at least one ticket")


@canonical_message
class TicketRedeemRequest:
    """Bearer redemption: whoever holds the ticket id may claim the object."""

    ticket_id: bytes

    def validate(self) -> None:
        _need_nonce(self.ticket_id, "ticket_id")


@canonical_message
class TicketRedeemResponse:
    ticket_id: bytes
    ok: bool
    payload: bytes
    provider_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.ticket_id, "ticket_id")
        if self.ok:
            _need(bool(self.payload), "successful redemption must carry the object")
        else:
            _need(not self.payload, "failed redemption must carry no object")


@canonical_message
class ServiceComplete:
    """Requester confirms delivery; the provider may now collect credit."""

    grant_id: bytes
    requester_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.grant_id, "grant_id")


@canonical_message
class CaptureRequest:
    token: CaptureToken
    provider_signature: Signature


@canonical_message
class CaptureResponse:
    settled: bool
    reason: DenialReason | None
    tm_signature: Signature

    def validate(self) -> None:
        if self.settled:
            _need(self.reason is None, "settled response must carry no reason")
        else:
            _need(self.reason is not None, "refused response must carry a reason")


# --- trust manager / account provider exchange -------------------------------


@canonical_message
class HoldRequest:
    """Trust manager asks the account provider to reserve credit."""

    hold_nonce: bytes
    account_ref_digest: Digest
    amount: int
    tm_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.hold_nonce, "hold_nonce")
        _need_u64(self.amount, "amount", minimum=1)


@canonical_message
class HoldResponse:
    hold_nonce: bytes
    ok: bool
    hold_ref: bytes
    reason: DenialReason | None
    ap_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.hold_nonce, "hold_nonce")
        if self.ok:
            _need_nonce(self.hold_ref, "hold_ref")
            _need(self.reason is None, "accepted hold must carry no reason")
        else:
            _need(not self.hold_ref, "refused hold must carry no hold_ref")
            _need(self.reason is not None, "refused hold must carry a reason")


@canonical_message
class SettleRequest:
    """Trust manager asks the account provider to settle a held amount."""

    settle_nonce: bytes
    hold_ref: bytes
    tm_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.settle_nonce, "settle_nonce")
        _need_nonce(self.hold_ref, "hold_ref")


@canonical_message
class SettleResponse:
    settle_nonce: bytes
    ok: bool
    amount: int
    reason: DenialReason | None
    ap_signature: Signature

    def validate(self) -> None:
        _need_nonce(self.settle_nonce, "settle_nonce")
        if self.ok:
            _need_u64(self.amount, "amount", minimum=1)
            _need(self.reason is None, "settled response must carry no reason")
        else:
            _need(self.amount == 0, "refused settlement must carry amount 0")
            _need(self.reason is not None, "refused settlement must carry a reason")


# --- signing helpers ----------------------------------------------------------


def build_signed(cls: type, key: KeyPair, **fields):
    """Construct ``cls`` with its detached signature filled in.

    The signature covers the canonical encoding of the type tag and every
    field except the signature itself, so any bit of the message body is
    tamper-evident.
    """
    payload = codec.signing_payload_from(cls, fields)
    sig_field = codec.signature_field_name(cls)
    return cls(**fields, **{sig_field: sign(key, payload)})


def verify_signed(msg, public_key: bytes) -> bool:
    """Check a message's detached signature against ``public_key``."""
    sig_field = codec.signature_field_name(type(msg))
    sig: Signature = getattr(msg, sig_field)
    return verify(public_key, codec.signing_payload(msg), sig)
