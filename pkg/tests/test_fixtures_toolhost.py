from __future__ import annotations

from datetime import datetime, timezone

import pytest

from codemem import assets
from codemem.fixtures import (
    FilterParseError,
    FixtureState,
    FixtureStore,
    NoAttachment,
    UnknownEmail,
    load_scenario,
    parse_filter,
)
from codemem.toolerrors import NotLoaded, ToolError, UnboundTool
from codemem.toolhost import ExecutionContext, ToolHost, invocation_fingerprint


@pytest.fixture
def scenario():
    return load_scenario(assets.builtin_scenario_doc())


@pytest.fixture
def state(scenario):
    return FixtureState(scenario)


# -- filter oracle -----------------------------------------------------------


def oracle_filter(emails, cutoff=None, has_attachments=None):
    """Brute-force application of the two predicates plus the sort contract."""
    out = []
    for email in emails:
        if cutoff is not None and email.received_at < cutoff:
            continue
        if has_attachments is not None and email.has_attachments != has_attachments:
            continue
        out.append(email)
    return [e.id for e in sorted(out, key=lambda e: e.received_at, reverse=True)]


def test_scenario_shape(scenario):
    assert len(scenario.emails) == 7
    agentr = [e for e in scenario.emails if "@agentr.dev" in e.from_address]
    assert len(agentr) == 2
    no_doc = [
        e
        for e in scenario.emails
        if e.attachments
        and not any(a.filename.lower().endswith((".pdf", ".xlsx")) for a in e.attachments)
    ]
    assert [e.id for e in no_doc] == ["e7"]
    assert all(e.has_attachments == bool(e.attachments) for e in scenario.emails)


def test_has_attachments_filter_matches_oracle(state, scenario):
    got = [e["id"] for e in state.list_emails("hasAttachments eq true")]
    assert got == oracle_filter(scenario.emails, has_attachments=True)
    assert len(got) == 6  # exactly one fixture email has no attachments


def test_cutoff_after_everything_is_empty(state):
    assert state.list_emails("receivedDateTime >= 2030-01-01T00:00:00Z") == []


def test_conjunction_matches_oracle(state, scenario):
    cutoff = datetime(2025, 12, 10, tzinfo=timezone.utc)
    got = [
        e["id"]
        for e in state.list_emails(
            "receivedDateTime >= 2025-12-10T00:00:00Z and hasAttachments eq true"
        )
    ]
    assert got == oracle_filter(scenario.emails, cutoff=cutoff, has_attachments=True)


def test_unsupported_field_echoes_token(state):
    with pytest.raises(FilterParseError) as exc_info:
        state.list_emails("subject eq x")
    assert "subject eq x" in str(exc_info.value)


def test_filter_accepts_space_separated_datetime():
    # the paper's script interpolates str(datetime), which uses a space
    predicates = parse_filter("receivedDateTime >= 2025-11-30 11:59:00")
    assert predicates[0][0] == "received_at"


def test_summaries_never_contain_bodies(state):
    for summary in state.list_emails(""):
        assert assets.PAYLOAD_SENTINEL not in str(summary)
        assert set(summary) == {
            "id", "from", "received_at", "subject", "has_attachments", "attachment_names",
        }


def test_get_attachment_returns_fixture_bytes(state, scenario):
    email = next(e for e in scenario.emails if e.id == "e1")
    doc = state.get_attachment("e1")
    assert doc["filename"] == "acme_invoice.pdf"
    assert len(doc["content"].encode("utf-8")) == len(email.attachments[0].content)
    assert doc["company"] == "Acme"


def test_get_attachment_by_index(state):
    doc = state.get_attachment("e4", index=1)
    assert doc["filename"] == "initech_data.xlsx"


def test_codeword_metadata_resolution(state):
    doc = state.get_attachment("e3")
    assert doc["company"] == "codeword"
    assert doc["metadata"]["real_company"] == "Globex"


def test_get_attachment_errors(state):
    with pytest.raises(NoAttachment):
        state.get_attachment("e5")
    with pytest.raises(UnknownEmail):
        state.get_attachment("e99")


def test_upload_writes_and_counts_bytes(state):
    result = state.upload_file("Email Attachments December/Acme/a.pdf", "0123456789")
    assert result == {
        "path": "Email Attachments December/Acme/a.pdf",
        "bytes_written": 10,
    }
    assert state.drive["Email Attachments December/Acme/a.pdf"] == b"0123456789"


def test_reupload_overwrites(state):
    state.upload_file("x/a.txt", "first")
    state.upload_file("x/a.txt", "second")
    assert state.drive == {"x/a.txt": b"second"}


def test_upload_empty_path_rejected(state):
    with pytest.raises(ToolError):
        state.upload_file("", "content")
    with pytest.raises(ToolError):
        state.upload_file("  ", "content")


def test_upload_b64_content(state):
    state.upload_file("bin/blob", {"b64": "AAEC"})
    assert state.drive["bin/blob"] == b"\x00\x01\x02"
    with pytest.raises(ToolError):
        state.upload_file("bin/bad", {"b64": "!!!not-base64!!!"})


def test_binary_attachment_round_trips_via_b64(scenario):
    doc = {
        "name": "bin",
        "emails": [
            {
                "id": "b1",
                "from": "a@b.c",
                "received_at": "2025-12-01T00:00:00Z",
                "subject": "binary",
                "attachments": [{"filename": "raw.bin", "content_b64": "AAGC/w=="}],
            }
        ],
    }
    state = FixtureState(load_scenario(doc))
    content = state.get_attachment("b1")["content"]
    assert content == {"b64": "AAGC/w=="}
    state.upload_file("out/raw.bin", content)
    assert state.drive["out/raw.bin"] == b"\x00\x01\x82\xff"


# -- toolhost dispatch ---------------------------------------------------------


@pytest.fixture
def host(scenario):
    store = FixtureStore()
    store.load("s1", scenario)
    host = ToolHost(store)
    host.bind_from_spec("onedrive__upload_file", {"kind": "fixture", "target": "onedrive_upload_file"})
    host.bind_from_spec("outlook__list_emails", {"kind": "fixture", "target": "outlook_list_emails"})
    return host


def ctx(loaded=("onedrive__upload_file", "outlook__list_emails"), execution_id="x1"):
    return ExecutionContext(
        execution_id=execution_id, session_id="s1", loaded_tools=frozenset(loaded)
    )


def test_invoke_dispatches_and_records(host):
    result = host.invoke(
        "onedrive__upload_file", {"path": "f/a.pdf", "content": "hi"}, ctx()
    )
    assert result["bytes_written"] == 2
    records = host.records_for("x1")
    assert len(records) == 1
    assert records[0].ok and records[0].tool == "onedrive__upload_file"
    assert records[0].sequence_index == 0


def test_invoke_unloaded_tool_errors_but_records(host):
    with pytest.raises(NotLoaded):
        host.invoke("onedrive__upload_file", {"path": "a", "content": "b"}, ctx(loaded=()))
    records = host.records_for("x1")
    assert len(records) == 1
    assert not records[0].ok
    assert records[0].error_kind == "not_loaded"


def test_invoke_unbound_tool(host):
    with pytest.raises(UnboundTool):
        host.invoke("ghost__tool", {}, ctx(loaded=("ghost__tool",)))
    assert host.records_for("x1")[0].error_kind == "unbound_tool"


def test_every_outcome_recorded_with_dense_sequence(host):
    calls = [
        ("onedrive__upload_file", {"path": "a/1", "content": "x"}),
        ("onedrive__upload_file", {"path": "", "content": "x"}),  # ToolError
        ("outlook__list_emails", {"filter": "bogus !!"}),  # FilterParseError
        ("onedrive__upload_file", {"path": "a/2", "content": "y"}),
    ]
    for tool, args in calls:
        try:
            host.invoke(tool, args, ctx())
        except ToolError:
            pass
    records = host.records_for("x1")
    assert [r.sequence_index for r in records] == [0, 1, 2, 3]
    assert [r.ok for r in records] == [True, False, False, True]


def test_four_uploads_leave_four_files(host):
    for i in range(4):
        host.invoke(
            "onedrive__upload_file",
            {"path": f"Email Attachments December/C{i}/f{i}.pdf", "content": "data"},
            ctx(),
        )
    state = host.fixtures.state("s1")
    assert len(state.drive) == 4


def test_fingerprint_ignores_ids_and_timestamps(host):
    host.invoke("onedrive__upload_file", {"path": "a/1", "content": "x"}, ctx())
    first = invocation_fingerprint(host.records_for("x1"))
    host.invoke("onedrive__upload_file", {"path": "a/1", "content": "x"}, ctx(execution_id="x2"))
    second = invocation_fingerprint(host.records_for("x2"))
    assert first == second


def test_fixture_reset_wipes_drive(host):
    host.invoke("onedrive__upload_file", {"path": "a/1", "content": "x"}, ctx())
    assert host.fixtures.state("s1").drive
    host.fixtures.reset("s1")
    assert host.fixtures.state("s1").drive == {}
