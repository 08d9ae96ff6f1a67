"""Tests for tamper-proof devices, pseudonym pools and join signatures."""

import math
import random

import pytest

from cohort_avn.errors import AuthUnavailableError, ConfigurationError, ProtocolError
from cohort_avn.security.tpd import (
    PSEUDO_ID_RE,
    CertificationAuthority,
    Compartment,
    Provenance,
    Pseudo,
    PseudonymLedger,
    SignedJoinRequest,
    ViolationEntry,
    evidence_digest,
    forge_request,
    issue_pseudos,
    pseudo_autonomy,
    replenish,
    sign_join,
    verify_join,
)


@pytest.fixture
def authority():
    return CertificationAuthority(random.Random(3))


class TestCompartments:
    @pytest.mark.parametrize(
        "origin, target, allowed",
        [
            (Provenance.SCC, Compartment.SC, True),
            (Provenance.SCR, Compartment.SC, True),
            (Provenance.NSC, Compartment.SC, False),
            (Provenance.V2X, Compartment.SC, False),
            (Provenance.V2X, Compartment.NSC, True),
            (Provenance.NSC, Compartment.NSC, True),
        ],
    )
    def test_write_matrix(self, origin, target, allowed):
        assert Compartment.may_write(origin, target) is allowed

    def test_blocked_write_raises(self):
        with pytest.raises(ProtocolError):
            Compartment.check_write(Provenance.V2X, Compartment.SC)

    def test_v2x_cannot_log_violations(self):
        tpd = issue_pseudos(1)
        entry = ViolationEntry(0.5, "P2", evidence_digest({"rank": 3}))
        with pytest.raises(ProtocolError):
            tpd.record_violation(entry, origin=Provenance.V2X)
        tpd.record_violation(entry, origin=Provenance.SCR)
        assert tpd.violation_log == (entry,)


class TestPseudonymPools:
    def test_register_issues_disjoint_pools(self, authority):
        sc_a, nsc_a = authority.register(1, sc_count=20, nsc_count=5)
        sc_b, _ = authority.register(2, sc_count=20)
        ids_a = {p.pseudo_id for p in [*sc_a.pool, *nsc_a.pool]}
        ids_b = {p.pseudo_id for p in sc_b.pool}
        assert len(ids_a) == 25
        assert not ids_a & ids_b
        assert all(PSEUDO_ID_RE.match(pid) for pid in ids_a)
        assert sc_a.compartment is Compartment.SC
        assert nsc_a.compartment is Compartment.NSC

    def test_only_the_authority_resolves_certificates(self, authority):
        sc, nsc = authority.register(42, sc_count=1)
        assert sc.certificate_id == nsc.certificate_id
        assert authority.resolve(sc.certificate_id) == 42
        assert authority.resolve("cert-000000000000") is None

    def test_take_pseudo_logs_usage(self):
        tpd = issue_pseudos(2)
        first = tpd.take_pseudo(day=3)
        assert tpd.usage_log == {first.pseudo_id: 3}
        assert (tpd.remaining, tpd.consumed) == (1, 1)

    def test_empty_pool(self):
        tpd = issue_pseudos(0)
        with pytest.raises(AuthUnavailableError):
            tpd.take_pseudo()

    def test_nsc_cannot_spend_sc_pseudonyms(self):
        with pytest.raises(ProtocolError):
            issue_pseudos(1).take_pseudo(origin=Provenance.NSC)

    def test_replenish_at_a_secured_place(self, authority):
        tpd = replenish(issue_pseudos(0), 10, at_secured_place=True, authority=authority)
        assert tpd.remaining == 10

    def test_replenish_on_the_move(self):
        with pytest.raises(ConfigurationError):
            replenish(issue_pseudos(0), 10, at_secured_place=False)

    def test_replenish_during_a_run(self):
        tpd = issue_pseudos(0)
        tpd.in_run = True
        with pytest.raises(ConfigurationError):
            replenish(tpd, 10, at_secured_place=True)


class TestJoinSignatures:
    def test_signed_by_the_sc_tpd(self):
        request = sign_join(issue_pseudos(1), "lt", 4, day=2, gap_rank=3)
        assert request.cohort_id == 4 and request.gap_rank == 3
        assert verify_join(request).valid

    def test_nsc_tpd_cannot_sign(self):
        with pytest.raises(ConfigurationError):
            sign_join(issue_pseudos(1, compartment=Compartment.NSC), "lg", 0)

    def test_forged_request(self):
        forged = forge_request(sign_join(issue_pseudos(1), "lg", 0))
        verification = verify_join(forged, verify_delay=0.005)
        assert not verification.valid
        assert verification.delay == 0.005

    def test_malformed_pseudonym(self):
        request = SignedJoinRequest(Pseudo("vehicle-7", "pc"), "lg", 0)
        assert not verify_join(request).valid

    def test_replay_is_caught_by_the_ledger(self):
        ledger = PseudonymLedger()
        request = sign_join(issue_pseudos(1), "lg", 0, day=1)
        assert verify_join(request, ledger).valid
        replay = verify_join(request, ledger)
        assert not replay.valid and replay.replay
        assert ledger.seen == {request.pseudo.pseudo_id: 1}


class TestPseudoAutonomy:
    def test_default_pool_at_twenty_joins_a_day(self):
        autonomy = pseudo_autonomy(5000, 20)
        assert autonomy.days == 250
        assert not autonomy.same_day_reuse

    def test_reuse_when_the_day_outruns_the_pool(self):
        assert pseudo_autonomy(3, 5).same_day_reuse

    def test_no_joins(self):
        assert math.isinf(pseudo_autonomy(10, 0).days)

    def test_negative_inputs(self):
        with pytest.raises(ConfigurationError):
            pseudo_autonomy(-1, 3)


class TestEvidenceDigest:
    def test_key_order_does_not_matter(self):
        assert evidence_digest({"a": 1, "b": 2}) == evidence_digest({"b": 2, "a": 1})
        assert len(evidence_digest([1, 2])) == 16
