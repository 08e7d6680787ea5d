"""Systematic adversarial sweeps over the storage scenario.

Every sweep drives complete scenario runs through the simulated network
with a byte-level adversary and then audits the books: the attacker must
never cause an approval, an extra hold, or an extra settlement, and must
never learn payment details.  Findings are collected, not raised, so a
whole suite can run and report in one pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from random import Random

from .scenario import RunReport, ScenarioConfig, run_storage_scenario
from .simnet import Adversary, AdversaryMode

# Wire message types in the order they first appear in a happy run, with
# the books both sides should show after a single-shot tamper of that
# type: (holds placed, settlements).  A tamper can stall the flow or force
# a denial, but whatever already settled honestly is allowed to stand.
# Every bit of every type here is load-bearing: it sits under a signature,
# inside a sealed envelope, or is a handle whose corruption gets refused.
TAMPER_EXPECTATIONS: dict[str, tuple[int, int]] = {
    "PriceQuote": (0, 0),
    "AuthorizationRequest": (0, 0),
    "AuthorizeAndHold": (0, 0),
    "HoldRequest": (0, 0),
    "HoldResponse": (1, 0),
    "AuthOutcome": (1, 0),
    "AuthDecision": (1, 0),
    "ObjectUpload": (1, 0),
    "ServiceGrant": (1, 0),
    "TicketRedeemRequest": (1, 0),
    "TicketRedeemResponse": (1, 0),
    "ServiceComplete": (1, 0),
    "CaptureRequest": (1, 0),
    "SettleRequest": (1, 0),
    "SettleResponse": (1, 1),
    "CaptureResponse": (1, 1),
}

# The price enquiry is deliberately unauthenticated; a flipped bit in its
# nonce is a no-op and the run may legitimately still succeed.  Tampering
# it must still never corrupt the books or leak anything.
RELAXED_TAMPER_TARGETS = ("PriceRequest",)

TAMPER_TARGETS = tuple(TAMPER_EXPECTATIONS) + RELAXED_TAMPER_TARGETS

# Types whose duplication must never double-spend.  All of them: a replayed
# message anywhere in the flow has to be absorbed without a second hold,
# second settlement, or a stalled honest run.
REPLAY_TARGETS = TAMPER_TARGETS

# The replay-sensitive core: messages that move money if honored twice.
REPLAY_CORE = (
    "AuthorizationRequest",
    "AuthorizeAndHold",
    "HoldRequest",
    "CaptureRequest",
    "SettleRequest",
)


@dataclass(frozen=True)
class AttackFinding:
    attack: str
    expectation: str
    observed: str


@dataclass
class SweepReport:
    name: str
    runs: int = 0
    findings: list[AttackFinding] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.findings


def _audit_common(sweep: SweepReport, attack: str, report: RunReport) -> None:
    sweep.runs += 1
    if report.invariant_failures:
        sweep.findings.append(
            AttackFinding(attack, "no invariant failures", "; ".join(report.invariant_failures))
        )
    if report.privacy is not None and not report.privacy.clean:
        hit = report.privacy.hits[0]
        sweep.findings.append(
            AttackFinding(attack, "no payment/usage leakage", f"marker at {hit.location}")
        )
    if report.retrieval_mismatches:
        sweep.findings.append(
            AttackFinding(
                attack, "retrieved objects match ticket digests",
                f"{report.retrieval_mismatches} mismatches",
            )
        )


def tamper_sweep(
    seed: int = 7,
    mutations_per_type: int = 200,
    config: ScenarioConfig | None = None,
) -> SweepReport:
    """Flip one random bit per run in each wire message type, many times.

    A tampered message must never yield an approval or settlement of its
    own: the books may only show what the honest prefix of the run already
    earned.
    """
    base = config if config is not None else ScenarioConfig(seed=seed)
    sweep = SweepReport(name="tamper")
    for target in TAMPER_TARGETS:
        expectation = TAMPER_EXPECTATIONS.get(target)
        for index in range(mutations_per_type):
            adversary = Adversary(
                mode=AdversaryMode.TAMPER,
                target=target,
                mutation="bit=rand",
                max_hits=1,
                rng=Random(f"{seed}/tamper/{target}/{index}"),
            )
            attack = f"tamper:{target}#{index}"
            report = run_storage_scenario(base, adversary=adversary)
            _audit_common(sweep, attack, report)
            if expectation is None:
                # relaxed target: books must stay consistent, nothing more
                if report.settle_count > report.holds_created or report.holds_created > 1:
                    sweep.findings.append(
                        AttackFinding(
                            attack, "books stay consistent",
                            f"{report.holds_created} holds, {report.settle_count} settlements",
                        )
                    )
                continue
            want_holds, want_settles = expectation
            if report.complete_success():
                sweep.findings.append(
                    AttackFinding(attack, "tampered run must not fully succeed", "it did")
                )
            if report.holds_created != want_holds:
                sweep.findings.append(
                    AttackFinding(
                        attack, f"exactly {want_holds} hold(s)",
                        f"{report.holds_created} holds",
                    )
                )
            if report.settle_count != want_settles:
                sweep.findings.append(
                    AttackFinding(
                        attack, f"exactly {want_settles} settlement(s)",
                        f"{report.settle_count} settlements",
                    )
                )
    return sweep


def replay_sweep(seed: int = 7, config: ScenarioConfig | None = None) -> SweepReport:
    """Duplicate each wire message type once; the flow must still finish
    with exactly one hold and one settlement."""
    base = config if config is not None else ScenarioConfig(seed=seed)
    sweep = SweepReport(name="replay")
    for target in REPLAY_TARGETS:
        adversary = Adversary(mode=AdversaryMode.REPLAY, target=target, max_hits=1)
        attack = f"replay:{target}"
        report = run_storage_scenario(base, adversary=adversary)
        _audit_common(sweep, attack, report)
        if report.business_outcome != "APPROVED":
            sweep.findings.append(
                AttackFinding(
                    attack, "honest flow still completes", report.business_outcome
                )
            )
        if report.holds_created != 1:
            sweep.findings.append(
                AttackFinding(attack, "exactly 1 hold", f"{report.holds_created} holds")
            )
        if report.settle_count != 1:
            sweep.findings.append(
                AttackFinding(attack, "exactly 1 settlement", f"{report.settle_count} settlements")
            )
        if report.settled_total != base.expected_price:
            sweep.findings.append(
                AttackFinding(
                    attack, f"settled total {base.expected_price}",
                    f"settled total {report.settled_total}",
                )
            )
    return sweep


def eavesdrop_check(seed: int = 7, config: ScenarioConfig | None = None) -> SweepReport:
    """Record every byte on the wire and scan the haul for payment markers."""
    base = config if config is not None else ScenarioConfig(seed=seed)
    sweep = SweepReport(name="eavesdrop")
    adversary = Adversary(mode=AdversaryMode.PASSIVE_EAVESDROP, max_hits=0)
    report = run_storage_scenario(base, adversary=adversary)
    _audit_common(sweep, "eavesdrop:*", report)
    if not report.complete_success():
        sweep.findings.append(
            AttackFinding("eavesdrop:*", "passive observation changes nothing", "run degraded")
        )
    if len(adversary.capture_log) != len(report.transcript.records):
        sweep.findings.append(
            AttackFinding(
                "eavesdrop:*",
                "every record captured",
                f"{len(adversary.capture_log)} of {len(report.transcript.records)}",
            )
        )
    return sweep


@dataclass
class AttackSuiteReport:
    seed: int
    iterations: int
    tamper: SweepReport
    replay: SweepReport
    eavesdrop: SweepReport

    @property
    def ok(self) -> bool:
        return self.tamper.ok and self.replay.ok and self.eavesdrop.ok

    @property
    def total_runs(self) -> int:
        return self.tamper.runs + self.replay.runs + self.eavesdrop.runs

    def render(self) -> str:
        lines = [
            f"attack suite  seed={self.seed}  iterations={self.iterations}",
            f"total adversarial runs: {self.total_runs}",
            "",
        ]
        for sweep in (self.tamper, self.replay, self.eavesdrop):
            verdict = "PASS" if sweep.ok else "FAIL"
            lines.append(f"[{verdict}] {sweep.name}: {sweep.runs} runs")
            for finding in sweep.findings[:20]:
                lines.append(
                    f"    {finding.attack}: expected {finding.expectation}, "
                    f"observed {finding.observed}"
                )
            if len(sweep.findings) > 20:
                lines.append(f"    ... and {len(sweep.findings) - 20} more")
        lines.append("")
        lines.append("verdict: " + ("all properties held" if self.ok else "PROPERTY VIOLATIONS"))
        return "\n".join(lines)


def run_attack_suite(seed: int = 7, iterations: int = 200) -> AttackSuiteReport:
    """Tamper, replay, and eavesdrop sweeps with a shared seed."""
    if iterations < 1:
        raise ValueError("iterations must be positive")
    return AttackSuiteReport(
        seed=seed,
        iterations=iterations,
        tamper=tamper_sweep(seed=seed, mutations_per_type=iterations),
        replay=replay_sweep(seed=seed),
        eavesdrop=eavesdrop_check(seed=seed),
    )
