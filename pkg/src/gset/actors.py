"""The four protocol actors: requester, provider, trust manager, account provider.

Each actor is a single-threaded state machine with one external surface:

    deliver(sender_id, raw_bytes, now, net) -> [(dest_id, raw_bytes), ...]

The simulated network calls ``deliver`` for every incoming message and
forwards whatever comes back.  Synchronous exchanges (the trust manager
consulting the account provider, the provider collecting credits) go
through ``net.call``, which the network also mediates and records.

The privacy split is enforced here by what each actor stores:

* the provider keeps order state, tokens, and objects, and never sees
  payment plaintext (it only relays the sealed envelope);
* the trust manager keeps payment nonces, holds, and spent tokens, and
  never sees order plaintext (it only handles digests and amounts);
* the account provider keeps a ledger keyed by account digests.

Protocol-level operations (quote_price, build_authorization,
handle_authorize, grant_service, collect_credits, handle_capture, ...)
are public methods so they can be exercised directly; the message
handlers are thin wrappers around them.
"""

from __future__ import annotations

import struct
from collections import deque
from dataclasses import dataclass, field
from random import Random
from typing import Callable, Mapping, Protocol

from . import codec
from .codec import CodecError
from .crypto import (
    Digest,
    DualSignature,
    EnvelopeError,
    KeyPair,
    hash_bytes,
    make_dual_signature,
    open_envelope,
    seal,
    sign,
    verify,
    verify_with_oi,
    verify_with_pi,
)
from .ledger import (
    HoldClosedError,
    InsufficientCreditError,
    Ledger,
    LedgerError,
    UnknownAccountError,
)
from .messages import (
    AuthDecision,
    AuthOutcome,
    AuthorizationRequest,
    AuthorizeAndHold,
    CaptureRequest,
    CaptureResponse,
    CaptureToken,
    DenialReason,
    HoldRequest,
    HoldResponse,
    ObjectUpload,
    OrderInfo,
    PaymentInfo,
    PriceQuote,
    PriceRequest,
    QuoteDenial,
    ServiceComplete,
    ServiceGrant,
    SettleRequest,
    SettleResponse,
    Ticket,
    TicketRedeemRequest,
    TicketRedeemResponse,
    UsageDescriptor,
    build_signed,
    verify_signed,
)


class ActorError(Exception):
    """Base class for actor-level failures."""


class PolicyError(ActorError):
    """A local policy check failed before any message was sent."""


class TrustError(ActorError):
    """A counterparty presented something that does not verify."""


class DeniedError(ActorError):
    """An operation was attempted on a denied outcome."""

    def __init__(self, reason: DenialReason | None) -> None:
        super().__init__(f"authorization denied: {reason.name if reason else 'unknown'}")
        self.reason = reason


class Network(Protocol):
    """Synchronous exchange surface the simulated network provides."""

    def call(self, dest_id: str, raw: bytes) -> bytes | None: ...


Outbound = list[tuple[str, bytes]]


def _pack(parts: list[bytes]) -> bytes:
    out = bytearray()
    for part in parts:
        out += struct.pack(">I", len(part))
        out += part
    return bytes(out)


class _ActorBase:
    def __init__(self, identity: KeyPair, directory: Mapping[str, bytes], rng: Random) -> None:
        self.identity = identity
        self.subject_id = identity.subject_id
        self.directory = directory
        self.rng = rng
        self.notes: list[str] = []
        self._handlers: dict[type, Callable] = {}

    def _note(self, text: str) -> None:
        self.notes.append(text)

    def _nonce(self) -> bytes:
        return self.rng.randbytes(16)

    def _key_of(self, subject_id: str) -> bytes | None:
        return self.directory.get(subject_id)

    def _signed_by(self, msg, subject_id: str) -> bool:
        """Does the message's detached signature verify under ``subject_id``'s key?"""
        public = self._key_of(subject_id)
        if public is None:
            return False
        sig = getattr(msg, codec.signature_field_name(type(msg)))
        if sig.signer_id != subject_id:
            return False
        return verify_signed(msg, public)

    def deliver(self, sender: str, raw: bytes, now: int, net: Network | None = None) -> Outbound:
        """Process one incoming message; returns outbound (dest, bytes) pairs.

        Malformed or unexpected input is logged and dropped, never raised:
        a hostile network must not be able to crash an actor.
        """
        try:
            msg = codec.decode(raw)
        except CodecError as exc:
            self._note(f"rejected undecodable message from {sender}: {exc}")
            return []
        handler = self._handlers.get(type(msg))
        if handler is None:
            self._note(f"ignored unexpected {type(msg).__name__} from {sender}")
            return []
        return handler(sender, msg, now, net)

    def state_bytes(self) -> bytes:
        raise NotImplementedError


# --- service requester --------------------------------------------------------


@dataclass(frozen=True)
class RequesterConfig:
    provider_id: str
    trust_manager_id: str
    account_provider_id: str
    account_ref: str
    authorized_limit: int
    objects: tuple[bytes, ...]
    # The honest-client default refuses to authorize more than the quote.
    # Simulations switch this off to exercise trust-manager enforcement.
    enforce_limit_sanity: bool = True


class ServiceRequester(_ActorBase):
    """Asks for a price, authorizes payment, uploads, redeems, confirms."""

    def __init__(
        self,
        identity: KeyPair,
        directory: Mapping[str, bytes],
        config: RequesterConfig,
        rng: Random,
    ) -> None:
        super().__init__(identity, directory, rng)
        self.config = config
        self.pending_usage: list[tuple[bytes, UsageDescriptor]] = []
        self.pending_auths: dict[bytes, tuple[OrderInfo, PaymentInfo]] = {}
        self.approved_orders: set[bytes] = set()
        self.denied_orders: set[bytes] = set()
        self.grant: ServiceGrant | None = None
        self.tickets: dict[bytes, Ticket] = {}
        self.unredeemed: set[bytes] = set()
        self.retrieved: dict[bytes, bytes] = {}
        self.redeem_failures = 0
        self.mismatches = 0
        self.completed = False
        self._handlers = {
            PriceQuote: self._on_price_quote,
            QuoteDenial: self._on_quote_denial,
            AuthDecision: self._on_auth_decision,
            ServiceGrant: self._on_service_grant,
            TicketRedeemResponse: self._on_redeem_response,
        }

    # -- protocol operations --

    def request_price(self, usage: UsageDescriptor) -> PriceRequest:
        """Start the pricing flow; each call uses a fresh nonce."""
        request = PriceRequest(requester_id=self.subject_id, usage=usage, nonce=self._nonce())
        self.pending_usage.append((request.nonce, usage))
        return request

    def begin(self, usage: UsageDescriptor) -> tuple[str, bytes]:
        """Kick-off message for a simulation run."""
        return (self.config.provider_id, codec.encode(self.request_price(usage)))

    def build_authorization(
        self,
        quote: PriceQuote,
        now: int,
        enforce_limit_sanity: bool | None = None,
    ) -> AuthorizationRequest:
        """Turn an acceptable quote into a dual-signed authorization.

        Raises:
            TrustError: the quote's signature does not verify.
            PolicyError: the quote is expired, or (with the sanity check on)
                the configured limit would not cover the quoted price.
        """
        if not self._signed_by(quote, self.config.provider_id):
            raise TrustError("quote signature does not verify")
        if now >= quote.expiry:
            raise PolicyError(f"quote expired at tick {quote.expiry}, now {now}")
        enforce = self.config.enforce_limit_sanity if enforce_limit_sanity is None \
            else enforce_limit_sanity
        if enforce and self.config.authorized_limit < quote.price:
            raise PolicyError(
                f"authorized limit {self.config.authorized_limit} below price {quote.price}"
            )
        order = OrderInfo(
            quote_id=quote.quote_id,
            usage=quote.usage,
            requester_id=self.subject_id,
            order_nonce=self._nonce(),
        )
        payment = PaymentInfo(
            account_provider_id=self.config.account_provider_id,
            account_ref=self.config.account_ref,
            authorized_limit=self.config.authorized_limit,
            payment_nonce=self._nonce(),
        )
        order_bytes = codec.encode(order)
        payment_bytes = codec.encode(payment)
        tm_key = self._key_of(self.config.trust_manager_id)
        if tm_key is None:
            raise TrustError(f"no public key for {self.config.trust_manager_id!r}")
        envelope = seal(tm_key, self.config.trust_manager_id, payment_bytes, self.rng)
        dual = make_dual_signature(self.identity, order_bytes, payment_bytes)
        self.pending_auths[order.order_nonce] = (order, payment)
        return AuthorizationRequest(
            order_info=order,
            payment_envelope=envelope,
            pi_digest=hash_bytes(payment_bytes),
            dual=dual,
        )

    def redeem_request(self, ticket: Ticket) -> TicketRedeemRequest:
        return TicketRedeemRequest(ticket_id=ticket.ticket_id)

    # -- message handlers --

    def _on_price_quote(self, sender: str, quote: PriceQuote, now: int, net) -> Outbound:
        if sender != self.config.provider_id:
            self._note(f"quote from unexpected sender {sender}")
            return []
        matched = next(
            (i for i, (_n, usage) in enumerate(self.pending_usage) if usage == quote.usage),
            None,
        )
        if matched is None:
            self._note("quote does not match any pending request")
            return []
        try:
            auth = self.build_authorization(quote, now)
        except (TrustError, PolicyError) as exc:
            self._note(f"quote not usable: {exc}")
            return []
        self.pending_usage.pop(matched)
        return [(self.config.provider_id, codec.encode(auth))]

    def _on_quote_denial(self, sender: str, denial: QuoteDenial, now: int, net) -> Outbound:
        self._note(f"price request denied: {denial.reason}")
        self.pending_usage = [
            (nonce, usage) for nonce, usage in self.pending_usage
            if nonce != denial.request_nonce
        ]
        return []

    def _on_auth_decision(self, sender: str, decision: AuthDecision, now: int, net) -> Outbound:
        if not self._signed_by(decision, self.config.provider_id):
            self._note("auth decision signature does not verify")
            return []
        pending = self.pending_auths.pop(decision.order_nonce, None)
        if pending is None:
            self._note("auth decision for no pending order")
            return []
        if not decision.approved:
            self.denied_orders.add(decision.order_nonce)
            self._note("authorization denied")
            return []
        self.approved_orders.add(decision.order_nonce)
        upload = build_signed(
            ObjectUpload,
            self.identity,
            order_nonce=decision.order_nonce,
            objects=self.config.objects,
        )
        return [(self.config.provider_id, codec.encode(upload))]

    def _on_service_grant(self, sender: str, grant: ServiceGrant, now: int, net) -> Outbound:
        if not self._signed_by(grant, self.config.provider_id):
            self._note("service grant signature does not verify")
            return []
        if self.grant is not None:
            self._note("duplicate service grant ignored")
            return []
        if len(grant.tickets) != len(self.config.objects):
            self._note("grant ticket count does not match uploaded objects")
            return []
        for ticket, obj in zip(grant.tickets, self.config.objects):
            if ticket.object_digest != hash_bytes(obj):
                self._note("grant ticket digest does not match uploaded object")
                return []
        self.grant = grant
        out: Outbound = []
        for ticket in grant.tickets:
            self.tickets[ticket.ticket_id] = ticket
            self.unredeemed.add(ticket.ticket_id)
            out.append((self.config.provider_id, codec.encode(self.redeem_request(ticket))))
        return out

    def _on_redeem_response(
        self, sender: str, resp: TicketRedeemResponse, now: int, net
    ) -> Outbound:
        if not self._signed_by(resp, self.config.provider_id):
            self._note("redeem response signature does not verify")
            return []
        if resp.ticket_id not in self.unredeemed:
            self._note("redeem response for no outstanding ticket")
            return []
        self.unredeemed.discard(resp.ticket_id)
        if not resp.ok:
            self.redeem_failures += 1
            self._note("ticket redemption refused")
            return []
        ticket = self.tickets[resp.ticket_id]
        if hash_bytes(resp.payload) != ticket.object_digest:
            self.mismatches += 1
            self._note("retrieved object does not match ticket digest")
            return []
        self.retrieved[resp.ticket_id] = resp.payload
        if self.unredeemed or self.mismatches or self.redeem_failures or self.completed:
            return []
        self.completed = True
        done = build_signed(
            ServiceComplete, self.identity, grant_id=self.grant.grant_id
        )
        return [(self.config.provider_id, codec.encode(done))]

    def state_bytes(self) -> bytes:
        parts: list[bytes] = [b"requester", self.subject_id.encode()]
        for nonce, usage in self.pending_usage:
            parts += [nonce, codec.encode(usage)]
        for order_nonce in sorted(self.pending_auths):
            order, payment = self.pending_auths[order_nonce]
            parts += [codec.encode(order), codec.encode(payment)]
        parts += sorted(self.approved_orders) + sorted(self.denied_orders)
        if self.grant is not None:
            parts.append(codec.encode(self.grant))
        for ticket_id in sorted(self.retrieved):
            parts += [ticket_id, self.retrieved[ticket_id]]
        parts += [note.encode() for note in self.notes]
        return _pack(parts)


# --- service provider ---------------------------------------------------------


@dataclass(frozen=True)
class ProviderConfig:
    trust_manager_id: str
    # service_id -> price per unit of usage
    pricing: Mapping[str, int]
    quote_ttl: int = 100


class ServiceProvider(_ActorBase):
    """Prices usage, relays authorizations, stores objects, collects credit."""

    def __init__(
        self,
        identity: KeyPair,
        directory: Mapping[str, bytes],
        config: ProviderConfig,
        rng: Random,
    ) -> None:
        super().__init__(identity, directory, rng)
        self.config = config
        self.issued_quotes: dict[bytes, PriceQuote] = {}
        self.denials: list[DenialReason] = []
        self.seen_order_nonces: set[bytes] = set()
        self.pending_relays: deque[bytes] = deque()
        self.orders: dict[bytes, OrderInfo] = {}
        self.charges: dict[bytes, int] = {}
        self.approved_tokens: dict[bytes, CaptureToken] = {}
        self.granted: dict[bytes, tuple[bytes, tuple[Ticket, ...]]] = {}
        self.granted_orders: set[bytes] = set()
        self.stored_objects: dict[bytes, bytes] = {}
        self.redeemed: set[bytes] = set()
        self.captured_grants: set[bytes] = set()
        self.receivable_total = 0
        self._handlers = {
            PriceRequest: self._on_price_request,
            AuthorizationRequest: self._on_authorization,
            AuthOutcome: self._on_auth_outcome,
            ObjectUpload: self._on_object_upload,
            TicketRedeemRequest: self._on_redeem_request,
            ServiceComplete: self._on_service_complete,
            CaptureResponse: self._on_stray_capture_response,
        }

    # -- protocol operations --

    def quote_price(self, request: PriceRequest, now: int) -> PriceQuote | QuoteDenial:
        """Price a usage request: rate * quantity, valid for quote_ttl ticks."""
        rate = self.config.pricing.get(request.usage.service_id)
        if rate is None:
            return QuoteDenial(
                request_nonce=request.nonce,
                reason=f"no pricing for service {request.usage.service_id!r}",
            )
        price = rate * request.usage.quantity
        quote = build_signed(
            PriceQuote,
            self.identity,
            quote_id=self._nonce(),
            usage=request.usage,
            price=price,
            expiry=now + self.config.quote_ttl,
        )
        self.issued_quotes[quote.quote_id] = quote
        return quote

    def handle_authorization(
        self, auth: AuthorizationRequest, sender: str, now: int
    ) -> AuthorizeAndHold | AuthDecision | None:
        """Validate the order half and relay the payment half.

        On success the provider retains the order locally and forwards a
        signed AuthorizeAndHold carrying the untouched sealed envelope; the
        order plaintext goes no further.  On failure the requester gets a
        bare denied decision.  A duplicate of an order already accepted is
        ignored outright (None): answering it would race the real decision.
        """
        order = auth.order_info

        def deny(reason: DenialReason, detail: str) -> AuthDecision:
            self._note(f"authorization refused ({reason.name}): {detail}")
            self.denials.append(reason)
            return build_signed(
                AuthDecision, self.identity, order_nonce=order.order_nonce, approved=False
            )

        # authenticity first: any tampering surfaces as BAD_SIGNATURE before
        # policy questions like quote expiry get a say
        if order.requester_id != sender:
            return deny(DenialReason.BAD_SIGNATURE, "order names a different requester")
        requester_key = self._key_of(order.requester_id)
        if requester_key is None:
            return deny(DenialReason.BAD_SIGNATURE, "unknown requester")
        order_bytes = codec.encode(order)
        if auth.dual.signature.signer_id != order.requester_id or not verify_with_oi(
            requester_key, order_bytes, auth.pi_digest, auth.dual
        ):
            return deny(DenialReason.BAD_SIGNATURE, "dual signature fails on order side")
        quote = self.issued_quotes.get(order.quote_id)
        if quote is None:
            return deny(DenialReason.EXPIRED_QUOTE, "unknown quote reference")
        if now >= quote.expiry:
            return deny(DenialReason.EXPIRED_QUOTE, "quote expired")
        if order.usage != quote.usage:
            return deny(DenialReason.EXPIRED_QUOTE, "order does not match quoted usage")
        if order.order_nonce in self.seen_order_nonces:
            self._note("duplicate authorization for an accepted order ignored")
            return None

        self.seen_order_nonces.add(order.order_nonce)
        self.orders[order.order_nonce] = order
        self.charges[order.order_nonce] = quote.price
        self.pending_relays.append(order.order_nonce)
        return build_signed(
            AuthorizeAndHold,
            self.identity,
            payment_envelope=auth.payment_envelope,
            oi_digest=hash_bytes(order_bytes),
            dual=auth.dual,
            charge_amount=quote.price,
            provider_id=self.subject_id,
        )

    def grant_service(
        self, outcome: AuthOutcome, order: OrderInfo, payload_objects: tuple[bytes, ...]
    ) -> ServiceGrant:
        """Store the payload and issue one single-use ticket per object.

        Raises:
            DeniedError: the outcome was a denial; nothing is stored.
            TrustError: the capture token does not verify; nothing is stored.
        """
        if not outcome.approved:
            raise DeniedError(outcome.reason)
        token = outcome.token
        tm_key = self._key_of(self.config.trust_manager_id)
        if tm_key is None or not verify_signed(token, tm_key) \
                or token.tm_signature.signer_id != self.config.trust_manager_id:
            raise TrustError("capture token signature does not verify")
        if token.provider_id != self.subject_id:
            raise TrustError("capture token names a different provider")
        if not payload_objects:
            raise PolicyError("nothing to store")
        tickets = []
        for obj in payload_objects:
            ticket = Ticket(ticket_id=self._nonce(), object_digest=hash_bytes(obj))
            self.stored_objects[ticket.ticket_id] = obj
            tickets.append(ticket)
        grant = build_signed(
            ServiceGrant,
            self.identity,
            grant_id=self._nonce(),
            tickets=tuple(tickets),
        )
        self.granted[grant.grant_id] = (order.order_nonce, grant.tickets)
        self.granted_orders.add(order.order_nonce)
        return grant

    def collect_credits(self, token: CaptureToken, net: Network | None) -> CaptureResponse | None:
        """Present a capture token to the trust manager and book the credit."""
        if net is None:
            self._note("no network channel for capture")
            return None
        request = build_signed(CaptureRequest, self.identity, token=token)
        raw = net.call(self.config.trust_manager_id, codec.encode(request))
        if raw is None:
            self._note("capture call got no response")
            return None
        try:
            response = codec.decode(raw, CaptureResponse)
        except CodecError as exc:
            self._note(f"capture response undecodable: {exc}")
            return None
        if not self._signed_by(response, self.config.trust_manager_id):
            self._note("capture response signature does not verify")
            return None
        if response.settled:
            self.receivable_total += token.charge_amount
        else:
            self._note(f"capture refused: {response.reason.name}")
        return response

    # -- message handlers --

    def _on_price_request(self, sender: str, request: PriceRequest, now: int, net) -> Outbound:
        if request.requester_id != sender:
            self._note("price request names a different requester")
            return []
        return [(sender, codec.encode(self.quote_price(request, now)))]

    def _on_authorization(
        self, sender: str, auth: AuthorizationRequest, now: int, net
    ) -> Outbound:
        result = self.handle_authorization(auth, sender, now)
        if result is None:
            return []
        if isinstance(result, AuthDecision):
            return [(sender, codec.encode(result))]
        return [(self.config.trust_manager_id, codec.encode(result))]

    def _on_auth_outcome(self, sender: str, outcome: AuthOutcome, now: int, net) -> Outbound:
        if sender != self.config.trust_manager_id:
            self._note(f"auth outcome from unexpected sender {sender}")
            return []
        if not self.pending_relays:
            self._note("auth outcome with no pending relay")
            return []
        order_nonce = self.pending_relays.popleft()
        approved = False
        if outcome.approved:
            token = outcome.token
            tm_key = self._key_of(self.config.trust_manager_id)
            if (
                tm_key is not None
                and verify_signed(token, tm_key)
                and token.tm_signature.signer_id == self.config.trust_manager_id
                and token.provider_id == self.subject_id
                and token.charge_amount == self.charges.get(order_nonce)
            ):
                self.approved_tokens[order_nonce] = token
                approved = True
            else:
                self._note("approved outcome carried an unverifiable token")
        else:
            self._note(f"authorization denied by trust manager: {outcome.reason.name}")
        requester = self.orders[order_nonce].requester_id
        decision = build_signed(
            AuthDecision, self.identity, order_nonce=order_nonce, approved=approved
        )
        return [(requester, codec.encode(decision))]

    def _on_object_upload(self, sender: str, upload: ObjectUpload, now: int, net) -> Outbound:
        order = self.orders.get(upload.order_nonce)
        if order is None or order.requester_id != sender:
            self._note("upload for unknown order")
            return []
        if not self._signed_by(upload, sender):
            self._note("upload signature does not verify")
            return []
        token = self.approved_tokens.get(upload.order_nonce)
        if token is None:
            self._note("upload for unapproved order")
            return []
        if upload.order_nonce in self.granted_orders:
            self._note("upload for already granted order")
            return []
        grant = self.grant_service(
            AuthOutcome(approved=True, token=token, reason=None), order, upload.objects
        )
        return [(sender, codec.encode(grant))]

    def _on_redeem_request(
        self, sender: str, request: TicketRedeemRequest, now: int, net
    ) -> Outbound:
        ticket_id = request.ticket_id
        if ticket_id in self.stored_objects and ticket_id not in self.redeemed:
            self.redeemed.add(ticket_id)
            payload = self.stored_objects.pop(ticket_id)
            response = build_signed(
                TicketRedeemResponse,
                self.identity,
                ticket_id=ticket_id,
                ok=True,
                payload=payload,
            )
        else:
            self._note("redemption refused: unknown or spent ticket")
            response = build_signed(
                TicketRedeemResponse,
                self.identity,
                ticket_id=ticket_id,
                ok=False,
                payload=b"",
            )
        return [(sender, codec.encode(response))]

    def _on_service_complete(
        self, sender: str, done: ServiceComplete, now: int, net
    ) -> Outbound:
        entry = self.granted.get(done.grant_id)
        if entry is None:
            self._note("completion for unknown grant")
            return []
        order_nonce, _tickets = entry
        if self.orders[order_nonce].requester_id != sender \
                or not self._signed_by(done, sender):
            self._note("completion signature does not verify")
            return []
        if done.grant_id in self.captured_grants:
            self._note("grant already captured")
            return []
        token = self.approved_tokens.get(order_nonce)
        if token is None:
            self._note("no capture token for completed grant")
            return []
        response = self.collect_credits(token, net)
        if response is not None and response.settled:
            self.captured_grants.add(done.grant_id)
        return []

    def _on_stray_capture_response(
        self, sender: str, response: CaptureResponse, now: int, net
    ) -> Outbound:
        # Captures run synchronously inside collect_credits; a queue-delivered
        # response is a duplicate or an injection.
        self._note("ignored unsolicited capture response")
        return []

    def state_bytes(self) -> bytes:
        parts: list[bytes] = [b"provider", self.subject_id.encode()]
        for quote_id in sorted(self.issued_quotes):
            parts.append(codec.encode(self.issued_quotes[quote_id]))
        for order_nonce in sorted(self.orders):
            parts.append(codec.encode(self.orders[order_nonce]))
            parts.append(struct.pack(">Q", self.charges[order_nonce]))
        for order_nonce in sorted(self.approved_tokens):
            parts.append(codec.encode(self.approved_tokens[order_nonce]))
        for grant_id in sorted(self.granted):
            order_nonce, tickets = self.granted[grant_id]
            parts += [grant_id, order_nonce] + [codec.encode(t) for t in tickets]
        for ticket_id in sorted(self.stored_objects):
            parts += [ticket_id, self.stored_objects[ticket_id]]
        parts += sorted(self.redeemed)
        parts += sorted(self.captured_grants)
        parts.append(struct.pack(">Q", self.receivable_total))
        parts += [note.encode() for note in self.notes]
        return _pack(parts)


# --- trust manager --------------------------------------------------------------


@dataclass(frozen=True)
class TrustManagerConfig:
    account_providers: frozenset[str]


@dataclass(frozen=True)
class HoldRecord:
    account_provider_id: str
    account_ref_digest: Digest
    amount: int
    provider_id: str


class TrustManager(_ActorBase):
    """Opens payment envelopes, enforces limits, places holds, mints tokens."""

    def __init__(
        self,
        identity: KeyPair,
        directory: Mapping[str, bytes],
        config: TrustManagerConfig,
        rng: Random,
    ) -> None:
        super().__init__(identity, directory, rng)
        self.config = config
        self.seen_payment_nonces: set[bytes] = set()
        self.denials: list[DenialReason] = []
        self.holds: dict[bytes, HoldRecord] = {}
        self.spent_tokens: set[bytes] = set()
        self.minted_tokens: dict[bytes, CaptureToken] = {}
        self._handlers = {
            AuthorizeAndHold: self._on_authorize_and_hold,
            CaptureRequest: self._on_capture_request,
            HoldResponse: self._on_stray_ap_response,
            SettleResponse: self._on_stray_ap_response,
        }

    # -- account provider exchange --

    def _exchange(self, net: Network | None, dest: str, msg, expect: type):
        """One signed round trip to an account provider; None on any failure."""
        if net is None:
            return None
        raw = net.call(dest, codec.encode(msg))
        if raw is None:
            return None
        try:
            response = codec.decode(raw, expect)
        except CodecError as exc:
            self._note(f"{expect.__name__} undecodable: {exc}")
            return None
        if not self._signed_by(response, dest):
            self._note(f"{expect.__name__} signature does not verify")
            return None
        return response

    # -- protocol operations --

    def handle_authorize(
        self, msg: AuthorizeAndHold, sender: str, net: Network | None
    ) -> AuthOutcome:
        """Decide an authorization: open, verify, check limit, hold, mint.

        Denials carry a precise reason; the only state a failed attempt
        leaves behind is the payment nonce, which stays burned.
        """

        def deny(reason: DenialReason, detail: str) -> AuthOutcome:
            self._note(f"authorization denied ({reason.name}): {detail}")
            self.denials.append(reason)
            return AuthOutcome(approved=False, token=None, reason=reason)

        if msg.provider_id != sender or not self._signed_by(msg, msg.provider_id):
            return deny(DenialReason.BAD_SIGNATURE, "provider signature fails")
        try:
            payment_bytes = open_envelope(self.identity, msg.payment_envelope)
        except EnvelopeError as exc:
            return deny(DenialReason.BAD_SIGNATURE, f"envelope failed to open: {exc}")
        try:
            payment = codec.decode(payment_bytes, PaymentInfo)
        except CodecError as exc:
            return deny(DenialReason.BAD_SIGNATURE, f"payment plaintext malformed: {exc}")
        if payment.payment_nonce in self.seen_payment_nonces:
            return deny(DenialReason.REPLAY, "payment nonce already used")
        self.seen_payment_nonces.add(payment.payment_nonce)
        payer_key = self._key_of(msg.dual.signature.signer_id)
        if payer_key is None:
            return deny(DenialReason.BAD_SIGNATURE, "unknown payer identity")
        if not verify_with_pi(payer_key, msg.oi_digest, payment_bytes, msg.dual):
            return deny(DenialReason.BAD_SIGNATURE, "dual signature fails on payment side")
        if msg.charge_amount > payment.authorized_limit:
            return deny(
                DenialReason.OVER_LIMIT,
                f"charge {msg.charge_amount} exceeds limit {payment.authorized_limit}",
            )
        if payment.account_provider_id not in self.config.account_providers:
            return deny(DenialReason.UNKNOWN_ACCOUNT, "account provider not recognised")

        account_digest = hash_bytes(payment.account_ref.encode("utf-8"))
        hold = build_signed(
            HoldRequest,
            self.identity,
            hold_nonce=self._nonce(),
            account_ref_digest=account_digest,
            amount=msg.charge_amount,
        )
        response = self._exchange(net, payment.account_provider_id, hold, HoldResponse)
        if response is None:
            return deny(DenialReason.UNKNOWN_ACCOUNT, "account provider unreachable")
        if response.hold_nonce != hold.hold_nonce:
            return deny(DenialReason.BAD_SIGNATURE, "hold response nonce mismatch")
        if not response.ok:
            return deny(response.reason, "account provider refused the hold")

        self.holds[response.hold_ref] = HoldRecord(
            account_provider_id=payment.account_provider_id,
            account_ref_digest=account_digest,
            amount=msg.charge_amount,
            provider_id=msg.provider_id,
        )
        token = build_signed(
            CaptureToken,
            self.identity,
            token_id=self._nonce(),
            provider_id=msg.provider_id,
            charge_amount=msg.charge_amount,
            account_provider_id=payment.account_provider_id,
            hold_ref=response.hold_ref,
        )
        self.minted_tokens[token.token_id] = token
        return AuthOutcome(approved=True, token=token, reason=None)

    def handle_capture(
        self, request: CaptureRequest, sender: str, net: Network | None
    ) -> CaptureResponse:
        """Settle a capture token exactly once."""

        def refuse(reason: DenialReason, detail: str) -> CaptureResponse:
            self._note(f"capture refused ({reason.name}): {detail}")
            return build_signed(
                CaptureResponse, self.identity, settled=False, reason=reason
            )

        token = request.token
        if token.provider_id != sender or not self._signed_by(request, sender):
            return refuse(DenialReason.BAD_SIGNATURE, "provider signature fails")
        if not verify_signed(token, self.identity.public_key) \
                or token.tm_signature.signer_id != self.subject_id:
            return refuse(DenialReason.BAD_SIGNATURE, "token was not minted here")
        if token.token_id in self.spent_tokens:
            return refuse(DenialReason.REPLAY, "token already spent")
        record = self.holds.get(token.hold_ref)
        if record is None or record.provider_id != sender \
                or record.amount != token.charge_amount:
            return refuse(DenialReason.UNKNOWN_ACCOUNT, "no matching hold")

        settle = build_signed(
            SettleRequest,
            self.identity,
            settle_nonce=self._nonce(),
            hold_ref=token.hold_ref,
        )
        response = self._exchange(net, record.account_provider_id, settle, SettleResponse)
        if response is None:
            return refuse(DenialReason.UNKNOWN_ACCOUNT, "account provider unreachable")
        if response.settle_nonce != settle.settle_nonce:
            return refuse(DenialReason.BAD_SIGNATURE, "settle response nonce mismatch")
        if not response.ok:
            return refuse(response.reason, "account provider refused settlement")
        if response.amount != token.charge_amount:
            return refuse(DenialReason.BAD_SIGNATURE, "settled amount mismatch")

        self.spent_tokens.add(token.token_id)
        del self.holds[token.hold_ref]
        return build_signed(CaptureResponse, self.identity, settled=True, reason=None)

    # -- message handlers --

    def _on_authorize_and_hold(
        self, sender: str, msg: AuthorizeAndHold, now: int, net
    ) -> Outbound:
        outcome = self.handle_authorize(msg, sender, net)
        return [(sender, codec.encode(outcome))]

    def _on_capture_request(self, sender: str, msg: CaptureRequest, now: int, net) -> Outbound:
        response = self.handle_capture(msg, sender, net)
        return [(sender, codec.encode(response))]

    def _on_stray_ap_response(self, sender: str, msg, now: int, net) -> Outbound:
        # Hold/settle exchanges are synchronous; anything arriving through
        # the queue is a duplicate or an injection.
        self._note(f"ignored unsolicited {type(msg).__name__}")
        return []

    def state_bytes(self) -> bytes:
        parts: list[bytes] = [b"trust-manager", self.subject_id.encode()]
        parts += sorted(self.seen_payment_nonces)
        for hold_ref in sorted(self.holds):
            record = self.holds[hold_ref]
            parts += [
                hold_ref,
                record.account_provider_id.encode(),
                record.account_ref_digest.bytes,
                struct.pack(">Q", record.amount),
                record.provider_id.encode(),
            ]
        parts += sorted(self.spent_tokens)
        for token_id in sorted(self.minted_tokens):
            parts.append(codec.encode(self.minted_tokens[token_id]))
        parts += [note.encode() for note in self.notes]
        return _pack(parts)


# --- account provider -----------------------------------------------------------


@dataclass(frozen=True)
class AccountProviderConfig:
    trust_managers: frozenset[str]


class AccountProvider(_ActorBase):
    """Holds the credit ledger and answers signed hold/settle instructions."""

    def __init__(
        self,
        identity: KeyPair,
        directory: Mapping[str, bytes],
        config: AccountProviderConfig,
        rng: Random,
    ) -> None:
        super().__init__(identity, directory, rng)
        self.config = config
        self.ledger = Ledger(rng=rng)
        self.seen_hold_nonces: set[bytes] = set()
        self._handlers = {
            HoldRequest: self._on_hold_request,
            SettleRequest: self._on_settle_request,
        }

    def open_account(self, account_ref: str, credit_limit: int) -> Digest:
        return self.ledger.open_account(account_ref, credit_limit)

    def _on_hold_request(self, sender: str, msg: HoldRequest, now: int, net) -> Outbound:
        def respond(ok: bool, hold_ref: bytes, reason: DenialReason | None) -> Outbound:
            response = build_signed(
                HoldResponse,
                self.identity,
                hold_nonce=msg.hold_nonce,
                ok=ok,
                hold_ref=hold_ref,
                reason=reason,
            )
            return [(sender, codec.encode(response))]

        if sender not in self.config.trust_managers or not self._signed_by(msg, sender):
            self._note("hold request signature does not verify")
            return respond(False, b"", DenialReason.BAD_SIGNATURE)
        if msg.hold_nonce in self.seen_hold_nonces:
            self._note("hold request nonce already used")
            return respond(False, b"", DenialReason.REPLAY)
        self.seen_hold_nonces.add(msg.hold_nonce)
        try:
            receipt = self.ledger.place_hold(msg.account_ref_digest, msg.amount)
        except InsufficientCreditError as exc:
            self._note(f"hold refused: {exc}")
            return respond(False, b"", DenialReason.INSUFFICIENT_CREDIT)
        except (UnknownAccountError, LedgerError) as exc:
            self._note(f"hold refused: {exc}")
            return respond(False, b"", DenialReason.UNKNOWN_ACCOUNT)
        return respond(True, receipt.hold_ref, None)

    def _on_settle_request(self, sender: str, msg: SettleRequest, now: int, net) -> Outbound:
        def respond(ok: bool, amount: int, reason: DenialReason | None) -> Outbound:
            response = build_signed(
                SettleResponse,
                self.identity,
                settle_nonce=msg.settle_nonce,
                ok=ok,
                amount=amount,
                reason=reason,
            )
            return [(sender, codec.encode(response))]

        if sender not in self.config.trust_managers or not self._signed_by(msg, sender):
            self._note("settle request signature does not verify")
            return respond(False, 0, DenialReason.BAD_SIGNATURE)
        try:
            amount = self.ledger.settle_hold(msg.hold_ref)
        except HoldClosedError:
            self._note("settle refused: hold already closed")
            return respond(False, 0, DenialReason.REPLAY)
        except LedgerError as exc:
            self._note(f"settle refused: {exc}")
            return respond(False, 0, DenialReason.UNKNOWN_ACCOUNT)
        return respond(True, amount, None)

    def state_bytes(self) -> bytes:
        parts: list[bytes] = [b"account-provider", self.subject_id.encode()]
        parts.append(self.ledger.state_bytes())
        parts += sorted(self.seen_hold_nonces)
        parts += [note.encode() for note in self.notes]
        return _pack(parts)
