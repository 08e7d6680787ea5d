"""Deterministic simulated network with an interposable adversary.

One FIFO queue, one delivery per tick.  Synchronous exchanges made through
``net.call`` run nested inside the parent delivery and share its tick, so
a transcript is a faithful, replayable record of every byte that moved,
including the legs the adversary touched.

The adversary operates strictly on encoded bytes.  It can observe, flip
bits, duplicate, or swallow messages; it cannot forge signatures or open
envelopes, which is exactly the boundary the protocol is supposed to hold.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from random import Random
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from . import codec
from .codec import CodecError, canonical_message


class SimnetError(Exception):
    pass


class Actor(Protocol):
    subject_id: str

    def deliver(self, sender: str, raw: bytes, now: int, net) -> list[tuple[str, bytes]]: ...
    def state_bytes(self) -> bytes: ...


# --- adversary -----------------------------------------------------------------


class AdversaryMode(IntEnum):
    PASSIVE_EAVESDROP = 1
    TAMPER = 2
    REPLAY = 3
    DROP = 4


_MODE_NAMES = {
    AdversaryMode.PASSIVE_EAVESDROP: "eavesdrop",
    AdversaryMode.TAMPER: "tamper",
    AdversaryMode.REPLAY: "replay",
    AdversaryMode.DROP: "drop",
}
_NAME_MODES = {name: mode for mode, name in _MODE_NAMES.items()}


@dataclass
class Adversary:
    """On-path attacker working on wire bytes only.

    ``target`` is a message type name (as reported by the codec) or None
    for any message.  ``max_hits`` caps how many matching messages are
    acted on; 0 means unlimited.  Tamper mutations:

    * ``bit=rand``   flip one randomly chosen bit
    * ``bit=tail/K`` flip the bit K positions before the end
    * ``bit=abs/K``  flip bit K from the start
    """

    mode: AdversaryMode
    target: str | None = None
    mutation: str = "bit=rand"
    max_hits: int = 1
    rng: Random | None = None
    hits: int = 0
    capture_log: list[bytes] = field(default_factory=list)

    @property
    def spec(self) -> str:
        parts = [_MODE_NAMES[self.mode]]
        if self.target is not None:
            parts.append(self.target)
        if self.mode is AdversaryMode.TAMPER:
            parts.append(self.mutation)
        parts.append(str(self.max_hits))
        return ":".join(parts)

    @classmethod
    def from_spec(cls, spec: str) -> "Adversary | None":
        """Parse ``mode[:target][:mutation][:max_hits]``; "none" gives None."""
        text = spec.strip()
        if text == "" or text == "none":
            return None
        parts = text.split(":")
        mode = _NAME_MODES.get(parts[0])
        if mode is None:
            raise SimnetError(f"unknown adversary mode {parts[0]!r}")
        rest = parts[1:]
        max_hits = 0 if mode is AdversaryMode.PASSIVE_EAVESDROP else 1
        if rest and rest[-1].isdigit():
            max_hits = int(rest[-1])
            rest = rest[:-1]
        mutation = "bit=rand"
        if mode is AdversaryMode.TAMPER and rest and rest[-1].startswith("bit="):
            mutation = rest[-1]
            rest = rest[:-1]
        target: str | None = None
        if rest:
            if len(rest) > 1:
                raise SimnetError(f"cannot parse adversary spec {spec!r}")
            target = rest[0] or None
        if mode in (AdversaryMode.TAMPER, AdversaryMode.REPLAY, AdversaryMode.DROP) \
                and target is None:
            raise SimnetError(f"adversary mode {parts[0]!r} needs a target type")
        return cls(mode=mode, target=target, mutation=mutation, max_hits=max_hits)

    def _matches(self, payload: bytes) -> bool:
        if self.max_hits > 0 and self.hits >= self.max_hits:
            return False
        if self.target is None:
            return True
        try:
            return codec.peek_type(payload) == self.target
        except CodecError:
            return False

    def _mutate(self, payload: bytes, rng: Random) -> bytes:
        total_bits = len(payload) * 8
        if total_bits == 0:
            return payload
        kind, _, arg = self.mutation.partition("/")
        if kind == "bit=rand":
            index = rng.randrange(total_bits)
        elif kind == "bit=tail":
            index = max(0, total_bits - int(arg))
        elif kind == "bit=abs":
            index = min(int(arg), total_bits - 1)
        else:
            raise SimnetError(f"unknown mutation {self.mutation!r}")
        flipped = bytearray(payload)
        flipped[index // 8] ^= 1 << (7 - index % 8)
        return bytes(flipped)

    def act(self, payload: bytes, rng: Random) -> tuple[str, bytes | None, list[bytes]]:
        """Interpose on one in-flight message.

        Returns (action, payload-to-deliver-or-None, extra copies to inject).
        """
        if not self._matches(payload):
            return ("", payload, [])
        self.hits += 1
        if self.mode is AdversaryMode.PASSIVE_EAVESDROP:
            self.capture_log.append(payload)
            return ("observed", payload, [])
        if self.mode is AdversaryMode.TAMPER:
            return ("tampered", self._mutate(payload, rng), [])
        if self.mode is AdversaryMode.REPLAY:
            return ("replayed", payload, [payload])
        return ("dropped", None, [])


# --- transcript ------------------------------------------------------------------

_ACTIONS = ("", "observed", "tampered", "replayed", "dropped")


@canonical_message
class WireMessage:
    from_id: str
    to_id: str
    payload: bytes

    def validate(self) -> None:
        from .codec import ValidationError

        if not self.from_id or not self.to_id:
            raise ValidationError("wire message needs both endpoint ids")
        if not self.payload:
            raise ValidationError("wire message payload must not be empty")


@canonical_message
class TranscriptRecord:
    tick: int
    from_id: str
    to_id: str
    payload: bytes
    action: str
    error: str

    def validate(self) -> None:
        from .codec import ValidationError

        if not self.from_id or not self.to_id:
            raise ValidationError("record needs both endpoint ids")
        if not self.payload:
            raise ValidationError("record payload must not be empty")
        if self.action not in _ACTIONS:
            raise ValidationError(f"unknown adversary action {self.action!r}")

    @property
    def delivered(self) -> bool:
        return self.action != "dropped" and not self.error


@canonical_message
class TranscriptMeta:
    seed: int
    max_ticks: int
    adversary_spec: str
    initial: tuple[WireMessage, ...]

    def validate(self) -> None:
        from .codec import ValidationError

        if self.max_ticks < 1:
            raise ValidationError("max_ticks must be at least 1")
        if not self.adversary_spec:
            raise ValidationError("adversary_spec must not be empty ('none' for no adversary)")


@dataclass(frozen=True)
class Transcript:
    """Everything that moved on the wire during one run, in order."""

    meta: TranscriptMeta
    records: tuple[TranscriptRecord, ...]

    def delivered_to(self, subject_id: str) -> list[TranscriptRecord]:
        return [r for r in self.records if r.to_id == subject_id and r.delivered]

    def payloads(self) -> list[bytes]:
        return [r.payload for r in self.records]

    def to_bytes(self) -> bytes:
        chunks = [codec.encode(self.meta)]
        chunks += [codec.encode(record) for record in self.records]
        return b"".join(chunks)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Transcript":
        items = codec.decode_stream(raw)
        if not items or not isinstance(items[0], TranscriptMeta):
            raise SimnetError("not a transcript: missing leading metadata block")
        records = []
        for item in items[1:]:
            if not isinstance(item, TranscriptRecord):
                raise SimnetError(f"transcript holds a stray {type(item).__name__}")
            records.append(item)
        return cls(meta=items[0], records=tuple(records))

    @classmethod
    def load(cls, path: str | Path) -> "Transcript":
        return cls.from_bytes(Path(path).read_bytes())


# --- runner ----------------------------------------------------------------------


class _NetHandle:
    """The ``net`` object an actor sees: calls are attributed to its owner."""

    def __init__(self, runner: "_Runner", owner_id: str) -> None:
        self._runner = runner
        self._owner_id = owner_id

    def call(self, dest_id: str, raw: bytes) -> bytes | None:
        return self._runner.call(self._owner_id, dest_id, raw)


class _Runner:
    def __init__(
        self,
        endpoints: Mapping[str, Actor],
        adversary: Adversary | None,
        rng: Random,
    ) -> None:
        self.endpoints = dict(endpoints)
        self.adversary = adversary
        self.rng = rng
        self.queue: deque[tuple[str, str, bytes]] = deque()
        self.records: list[TranscriptRecord] = []
        self.tick = 0
        self._pending_route: tuple[str, str] = ("", "")

    def _interpose(self, payload: bytes) -> tuple[str, bytes | None]:
        if self.adversary is None:
            return ("", payload)
        action, delivered, inject = self.adversary.act(payload, self.rng)
        for extra in inject:
            self.queue.append(self._pending_route + (extra,))
        return (action, delivered)

    def _record(self, frm: str, to: str, payload: bytes, action: str, error: str) -> int:
        self.records.append(
            TranscriptRecord(
                tick=self.tick, from_id=frm, to_id=to,
                payload=payload, action=action, error=error,
            )
        )
        return len(self.records) - 1

    def _deliver(self, frm: str, to: str, payload: bytes) -> list[tuple[str, bytes]] | None:
        """Shared delivery path; returns the actor's outbound list, or None."""
        self._pending_route = (frm, to)
        action, delivered = self._interpose(payload)
        if delivered is None:
            self._record(frm, to, payload, action, "")
            return None
        actor = self.endpoints.get(to)
        if actor is None:
            self._record(frm, to, delivered, action, f"no endpoint {to!r}")
            return None
        index = self._record(frm, to, delivered, action, "")
        try:
            return actor.deliver(frm, delivered, self.tick, _NetHandle(self, to))
        except Exception as exc:  # actors should never raise; keep the run honest
            self.records[index] = replace(
                self.records[index], error=f"{type(exc).__name__}: {exc}"
            )
            return None

    def dispatch(self, frm: str, to: str, payload: bytes) -> None:
        out = self._deliver(frm, to, payload)
        for dest, raw in out or []:
            self.queue.append((to, dest, raw))

    def call(self, frm: str, to: str, payload: bytes) -> bytes | None:
        out = self._deliver(frm, to, payload)
        if out is None:
            return None
        response: bytes | None = None
        for dest, raw in out:
            if dest == frm and response is None:
                response = raw
            else:
                self.queue.append((to, dest, raw))
        if response is None:
            return None
        self._pending_route = (to, frm)
        action, delivered = self._interpose(response)
        if delivered is None:
            self._record(to, frm, response, action, "")
            return None
        self._record(to, frm, delivered, action, "")
        return delivered


InitialMessage = WireMessage | tuple[str, str, bytes]


def run_scenario(
    endpoints: Mapping[str, Actor],
    initial: Sequence[InitialMessage],
    adversary: Adversary | None = None,
    seed: int = 0,
    max_ticks: int = 10_000,
) -> Transcript:
    """Pump the queue until empty or out of ticks; returns the transcript.

    Every delivery, drop, tamper, and nested synchronous exchange lands in
    the transcript in execution order.  Nested exchanges share the tick of
    the delivery they ran inside.
    """
    wires = [
        item if isinstance(item, WireMessage)
        else WireMessage(from_id=item[0], to_id=item[1], payload=item[2])
        for item in initial
    ]
    rng = adversary.rng if adversary is not None and adversary.rng is not None \
        else Random(f"{seed}/adversary")
    runner = _Runner(endpoints, adversary, rng)
    for wire in wires:
        runner.queue.append((wire.from_id, wire.to_id, wire.payload))
    while runner.queue and runner.tick < max_ticks:
        runner.tick += 1
        frm, to, payload = runner.queue.popleft()
        runner.dispatch(frm, to, payload)
    meta = TranscriptMeta(
        seed=seed,
        max_ticks=max_ticks,
        adversary_spec=adversary.spec if adversary is not None else "none",
        initial=tuple(wires),
    )
    return Transcript(meta=meta, records=tuple(runner.records))


# --- replay-and-compare ------------------------------------------------------------


@dataclass(frozen=True)
class DivergenceReport:
    matches: bool
    first_divergence: int | None
    expected_records: int
    actual_records: int
    detail: str
    replayed: Transcript

    def __bool__(self) -> bool:
        return self.matches

    def render(self) -> str:
        verdict = "MATCH" if self.matches else "DIVERGED"
        lines = [
            f"replay: {verdict}",
            f"records: {self.expected_records} recorded, {self.actual_records} replayed",
        ]
        if self.first_divergence is not None:
            lines.append(f"first divergence at record {self.first_divergence}")
        lines.append(self.detail)
        return "\n".join(lines)


def replay_transcript(
    transcript: Transcript,
    endpoints_factory: Callable[[int], Mapping[str, Actor]],
    adversary: Adversary | None = None,
) -> DivergenceReport:
    """Re-run a recorded scenario from scratch and diff the wire traffic.

    ``endpoints_factory(seed)`` must rebuild the actors exactly as the
    original run did.  The adversary is rebuilt from the recorded spec
    unless a custom one is supplied.
    """
    meta = transcript.meta
    if adversary is None:
        adversary = Adversary.from_spec(meta.adversary_spec)
    fresh = run_scenario(
        endpoints_factory(meta.seed),
        list(meta.initial),
        adversary=adversary,
        seed=meta.seed,
        max_ticks=meta.max_ticks,
    )
    expected = transcript.records
    actual = fresh.records
    limit = min(len(expected), len(actual))
    for index in range(limit):
        if expected[index] != actual[index]:
            return DivergenceReport(
                matches=False,
                first_divergence=index,
                expected_records=len(expected),
                actual_records=len(actual),
                detail=(
                    f"record {index} differs: expected "
                    f"{_describe(expected[index])}, got {_describe(actual[index])}"
                ),
                replayed=fresh,
            )
    if len(expected) != len(actual):
        return DivergenceReport(
            matches=False,
            first_divergence=limit,
            expected_records=len(expected),
            actual_records=len(actual),
            detail=f"record counts differ: {len(expected)} recorded, {len(actual)} replayed",
            replayed=fresh,
        )
    return DivergenceReport(
        matches=True,
        first_divergence=None,
        expected_records=len(expected),
        actual_records=len(actual),
        detail="replay is byte-identical",
        replayed=fresh,
    )


def _describe(record: TranscriptRecord) -> str:
    try:
        kind = codec.peek_type(record.payload)
    except CodecError:
        kind = "<garbled>"
    suffix = f" [{record.action}]" if record.action else ""
    return f"t{record.tick} {record.from_id}->{record.to_id} {kind}{suffix}"


# --- privacy scanning ----------------------------------------------------------------


@dataclass(frozen=True)
class PrivacyMarkers:
    """Byte patterns that must stay on their own side of the privacy split.

    ``payment_markers`` must never surface at the provider or on the open
    wire; ``usage_markers`` must never surface at the trust manager.
    """

    payment_markers: tuple[bytes, ...]
    usage_markers: tuple[bytes, ...]


@dataclass(frozen=True)
class PrivacyHit:
    location: str
    marker: bytes
    offset: int


@dataclass(frozen=True)
class PrivacyReport:
    hits: tuple[PrivacyHit, ...]
    locations_checked: int

    @property
    def clean(self) -> bool:
        return not self.hits

    def render(self) -> str:
        verdict = "CLEAN" if self.clean else f"{len(self.hits)} HIT(S)"
        lines = [f"privacy scan: {verdict} over {self.locations_checked} locations"]
        for hit in self.hits:
            lines.append(
                f"  {hit.location}: marker {hit.marker.hex()} at offset {hit.offset}"
            )
        return "\n".join(lines)


def scan_for_markers(location: str, blob: bytes, markers: Iterable[bytes]) -> list[PrivacyHit]:
    hits = []
    for marker in markers:
        offset = blob.find(marker)
        if offset >= 0:
            hits.append(PrivacyHit(location=location, marker=marker, offset=offset))
    return hits


def assert_privacy(
    transcript: Transcript,
    provider_state: bytes,
    trust_manager_state: bytes,
    markers: PrivacyMarkers,
    provider_id: str = "SP",
    trust_manager_id: str = "TM",
    captured: Sequence[bytes] = (),
) -> PrivacyReport:
    """Scan every byte each restricted party received or stored.

    Payment markers must be absent from everything the provider saw (wire
    and state) and from anything a passive eavesdropper captured; usage
    markers must be absent from everything the trust manager saw.
    """
    hits: list[PrivacyHit] = []
    checked = 2 + len(captured)
    for index, record in enumerate(transcript.records):
        if record.to_id == provider_id:
            checked += 1
            hits += scan_for_markers(
                f"wire->{provider_id} record {index}", record.payload, markers.payment_markers
            )
        elif record.to_id == trust_manager_id:
            checked += 1
            hits += scan_for_markers(
                f"wire->{trust_manager_id} record {index}", record.payload, markers.usage_markers
            )
    hits += scan_for_markers("provider-state", provider_state, markers.payment_markers)
    hits += scan_for_markers("trust-manager-state", trust_manager_state, markers.usage_markers)
    for index, blob in enumerate(captured):
        hits += scan_for_markers(f"captured[{index}]", blob, markers.payment_markers)
    return PrivacyReport(hits=tuple(hits), locations_checked=checked)


def final_states(endpoints: Mapping[str, Actor]) -> dict[str, bytes]:
    """Deterministic snapshot of every actor's state after a run."""
    return {
        subject_id: endpoints[subject_id].state_bytes()
        for subject_id in sorted(endpoints)
    }
