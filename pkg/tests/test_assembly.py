import dataclasses
from fractions import Fraction

import pytest

from assemblynet import kvfile
from assemblynet.assembly import (
    DEFAULT_INJUNCTION_WINDOW,
    Allow,
    AnnouncementReceipt,
    Attestation,
    AttestationSet,
    AssemblyManifest,
    Delay,
    DeliveryFailed,
    Forbid,
    MalformedManifest,
    NotCompliant,
    REQUIREMENTS,
    SimulatedTarget,
    TargetDescriptor,
    Verdict,
    WindowClosed,
    announce,
    check_manifest,
    file_injunction,
    initial_status,
    manifest_digest,
    opinion_digest,
    may_commence,
    parse_manifest,
    serialize_manifest,
    verify_receipt,
)
from assemblynet.primitives import DEFAULT
from assemblynet.visibility import Board, verify_chain

ORGANIZER = bytes(range(32))


def make_manifest(**overrides):
    base = dict(
        assembly_id=b"library-budget-1",
        target=TargetDescriptor("mail.council.example", Fraction(50)),
        opinion_statement="Restore the library budget",
        start_time=400_000,
        end_time=403_600,
        rate=Fraction(1),
        critical_mass_min=10,
        revocation_k=3,
        revocation_n=5,
        organizer_pseudonyms=(ORGANIZER,),
        attestations=AttestationSet(
            subsidiarity=Attestation("petition ignored"),
            proportionality=Attestation("one hour, mail server only"),
            no_coercion=Attestation("no demands under threat"),
            no_coercion_declared=True,
        ),
        supervisor_channel="police-observer",
    )
    base.update(overrides)
    return AssemblyManifest(**base)


def test_window_is_four_days():
    assert DEFAULT_INJUNCTION_WINDOW == 345_600


def test_compliant_manifest_passes_every_node():
    report = check_manifest(make_manifest())
    assert report.compliant
    assert list(report.verdicts) == list(REQUIREMENTS)
    for node in ("no coercion", "proportionality", "subsidiarity"):
        assert report.verdicts[node] is Verdict.ATTESTED
    assert report.verdicts["visibility"] is Verdict.PASS


@pytest.mark.parametrize(
    "overrides, failing",
    [
        ({"opinion_statement": "   "}, {"expression of opinion", "visibility"}),
        ({"critical_mass_min": 1}, {"collectivity"}),
        ({"rate": Fraction(2)}, {"collectivity"}),
        ({"supervisor_channel": ""}, {"supervision"}),
        ({"organizer_pseudonyms": ()}, {"central organisation"}),
        ({"board_mirroring": False}, {"visibility"}),
        ({"target": TargetDescriptor("scada.example", Fraction(50), True)}, {"proportionality"}),
        ({"target": TargetDescriptor("tiny.example", Fraction(5))}, {"proportionality"}),
        ({"target": TargetDescriptor("", Fraction(50))}, {"announcement"}),
    ],
)
def test_each_defect_fails_its_node(overrides, failing):
    report = check_manifest(make_manifest(**overrides))
    assert set(report.failed()) == failing
    assert not report.compliant


def test_attestation_nodes_are_never_pass():
    report = check_manifest(make_manifest())
    att = make_manifest().attestations
    silent = dataclasses.replace(att, no_coercion_declared=False, subsidiarity=Attestation(""))
    bad = check_manifest(make_manifest(attestations=silent))
    assert {"no coercion", "subsidiarity"} <= set(bad.failed())
    for r in (report, bad):
        for node in ("no coercion", "proportionality", "subsidiarity"):
            assert r.verdicts[node] is not Verdict.PASS


def test_human_rate_bound_is_configurable():
    m = make_manifest(rate=Fraction(2))
    assert check_manifest(m, r_human_max=Fraction(2)).compliant


def test_structural_defects_raise():
    with pytest.raises(MalformedManifest):
        check_manifest(make_manifest(start_time=10, end_time=10))
    with pytest.raises(MalformedManifest):
        check_manifest(make_manifest(revocation_k=6))
    with pytest.raises(MalformedManifest):
        check_manifest(make_manifest(assembly_id=b"short"))


def test_manifest_round_trip():
    m = make_manifest(rate=Fraction(1, 2), expected_participants=40)
    text = serialize_manifest(m)
    assert parse_manifest(text) == m
    assert serialize_manifest(parse_manifest(text)) == text


def test_bundled_manifests(bundled):
    assert check_manifest(parse_manifest((bundled / "compliant.manifest").read_text())).compliant
    no_op = check_manifest(parse_manifest((bundled / "no_opinion.manifest").read_text()))
    assert "expression of opinion" in no_op.failed()
    crit = check_manifest(parse_manifest((bundled / "critical_system.manifest").read_text()))
    assert crit.failed() == ["proportionality"]


def test_parse_errors_carry_positions():
    text = serialize_manifest(make_manifest())
    broken = text.replace("rate = 1", "rate = fast")
    with pytest.raises(kvfile.ParseError) as exc:
        parse_manifest(broken)
    line_no = next(i for i, line in enumerate(broken.splitlines(), 1) if line.startswith("rate ="))
    assert exc.value.line == line_no
    with pytest.raises(kvfile.ParseError):
        parse_manifest(text.split("[attestations]")[0])
    with pytest.raises(kvfile.ParseError):
        parse_manifest(text + "bogus = 1\n")


@pytest.fixture
def target():
    return SimulatedTarget("mail.council.example", b"target-key")


def test_announce_opens_window(target):
    m = make_manifest()
    receipt = announce(m, target, 1000)
    assert receipt.delivered_at == 1000
    assert receipt.window_ends == 1000 + 345_600
    assert receipt.manifest_digest == manifest_digest(m)
    assert receipt.target_ack == DEFAULT.mac(b"target-key", receipt.manifest_digest, (1000).to_bytes(8, "big"))
    assert verify_receipt(receipt, target)
    assert not verify_receipt(receipt, SimulatedTarget(target.address, b"other"))


def test_announce_refuses_non_compliant(target):
    with pytest.raises(NotCompliant):
        announce(make_manifest(opinion_statement=""), target, 0)


def test_unreachable_target_falls_back_to_board():
    dead = SimulatedTarget("mail.council.example", b"k", reachable=False)
    with pytest.raises(DeliveryFailed):
        announce(make_manifest(), dead, 0, retries=2)
    board = Board(opinion_digest(make_manifest()))
    receipt = announce(make_manifest(), dead, 0, board=board, retries=3, retry_interval=60)
    assert receipt.attempts == (0, 60, 120, 180)
    assert receipt.proof == "board"
    assert receipt.window_ends == 180 + 345_600
    assert len(board) == 1 and verify_chain(board)
    assert receipt.target_ack == board.head


def _receipt(delivered=0, window=100):
    return AnnouncementReceipt(b"\x00" * 32, delivered, b"", delivered + window)


def test_injunction_window_is_half_open():
    status = initial_status(make_manifest(start_time=200, end_time=300))
    receipt = _receipt(0, 100)
    file_injunction(status, receipt, Allow(), 0)
    file_injunction(status, receipt, Allow(), 99)
    with pytest.raises(WindowClosed):
        file_injunction(status, receipt, Allow(), 100)


def test_delay_shifts_the_assembly():
    status = initial_status(make_manifest(start_time=200, end_time=300))
    receipt = _receipt(0, 100)
    delayed = file_injunction(status, receipt, Delay(50), 10)
    assert (delayed.start_time, delayed.end_time) == (250, 350)
    assert not may_commence(delayed, receipt, 249)
    assert may_commence(delayed, receipt, 250)
    assert not may_commence(delayed, receipt, 350)
    with pytest.raises(ValueError):
        Delay(-1)


def test_forbid_blocks_and_allow_does_not_lift():
    status = initial_status(make_manifest(start_time=200, end_time=300))
    receipt = _receipt(0, 100)
    forbidden = file_injunction(status, receipt, Forbid(), 5)
    assert not may_commence(forbidden, receipt, 250)
    still = file_injunction(forbidden, receipt, Allow(), 6)
    assert still.forbidden


def test_may_commence_boundaries():
    status = initial_status(make_manifest(start_time=50, end_time=300))
    receipt = _receipt(0, 100)
    assert not may_commence(status, None, 150)
    assert not may_commence(None, receipt, 150)
    assert not may_commence(status, receipt, 99)
    assert may_commence(status, receipt, 100)
    assert may_commence(status, receipt, 299)
    assert not may_commence(status, receipt, 300)
