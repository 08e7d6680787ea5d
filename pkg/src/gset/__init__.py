"""gSET: dynamic per-request authorization and payment, split four ways.

A requester authorizes a spend without telling the provider who pays;
a trust manager enforces the spending limit without learning what was
bought; an account provider holds and settles credit without seeing
either side.  Dual signatures bind the halves together, a sealed
envelope carries the payment past the provider, and single-use tokens,
tickets, and nonces keep every step from happening twice.

The package ships the actors, the wire codec, a credit ledger, a
deterministic simulated network with an adversary, and a scenario CLI.
"""

from .actors import (
    AccountProvider,
    AccountProviderConfig,
    ActorError,
    DeniedError,
    PolicyError,
    ProviderConfig,
    RequesterConfig,
    ServiceProvider,
    ServiceRequester,
    TrustError,
    TrustManager,
    TrustManagerConfig,
)
from .codec import (
    CodecError,
    DecodeError,
    EncodeError,
    MessageTypeError,
    ValidationError,
    canonical_message,
    decode,
    decode_stream,
    encode,
    peek_type,
    registered_types,
    signature_field_name,
    signing_payload,
    signing_payload_from,
)
from .crypto import (
    PRIVATE_KEY_SIZE,
    PUBLIC_KEY_SIZE,
    CryptoError,
    Digest,
    DualSignature,
    EnvelopeError,
    EnvelopeIntegrityError,
    InvalidIdentityError,
    KeyPair,
    MissingKeyError,
    SealedEnvelope,
    Signature,
    WrongRecipientError,
    generate_keypair,
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
    DuplicateAccountError,
    HoldClosedError,
    HoldReceipt,
    InsufficientCreditError,
    Ledger,
    LedgerAccountState,
    LedgerError,
    LedgerHoldState,
    LedgerSnapshot,
    UnknownAccountError,
    UnknownHoldError,
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
from .scenario import (
    RunReport,
    Scenario,
    ScenarioConfig,
    ScenarioError,
    build_scenario,
    endpoints_factory,
    run_storage_scenario,
)
from .simnet import (
    Adversary,
    AdversaryMode,
    DivergenceReport,
    PrivacyHit,
    PrivacyMarkers,
    PrivacyReport,
    SimnetError,
    Transcript,
    TranscriptMeta,
    TranscriptRecord,
    WireMessage,
    assert_privacy,
    final_states,
    replay_transcript,
    run_scenario,
    scan_for_markers,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
