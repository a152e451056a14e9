import pytest

from forage.errors import AuthError, ProtocolError, ScriptExhausted, TransportError
from forage.gateway import (
    BackendConfig,
    ChatRequest,
    ChatResponse,
    CostLedger,
    HttpChatBackend,
    MeteredBackend,
    MockBackend,
    ToolCall,
    Usage,
    estimate_usage,
    mock_next,
)

from faults import FaultServer, ok_body

REQ = ChatRequest([{"role": "user", "content": "hello"}])


def backend(script, max_retries=3, auth=None):
    server = FaultServer(script)
    sleeps = []
    cfg = BackendConfig("http://test/v1", "m", auth=auth, max_retries=max_retries)
    return HttpChatBackend(cfg, client=server.client(), sleep=sleeps.append), server, sleeps


def test_mock_passthrough():
    mock = MockBackend([ToolCall("Grep", {"pattern": "x"})])
    r = mock.chat(REQ)
    assert r.tool_call == ToolCall("Grep", {"pattern": "x"})
    assert r.usage.input_tokens > 0 and r.usage.output_tokens > 0 and r.usage.estimated
    with pytest.raises(ScriptExhausted):
        mock.chat(REQ)


def test_mock_next_and_determinism():
    mock = MockBackend(["only"])
    assert mock_next(mock).text == "only"
    with pytest.raises(ScriptExhausted):
        mock_next(mock)
    a = [MockBackend(["x", "y"]).chat(REQ) for _ in range(2)]
    b = [MockBackend(["x", "y"]).chat(REQ) for _ in range(2)]
    assert a == b


def test_429_twice_then_ok():
    b, server, sleeps = backend([429, 429, ok_body("fine")])
    r = b.chat(REQ)
    assert r.text == "fine" and r.usage == Usage(11, 7)
    assert len(server.calls) == 3
    assert sleeps == sorted(sleeps) and len(sleeps) == 2


def test_retries_are_bounded():
    b, server, sleeps = backend([503, "timeout", "reset", 500, 502, 504], max_retries=3)
    with pytest.raises(TransportError):
        b.chat(REQ)
    assert len(server.calls) == 4
    assert sleeps == [1.0, 2.0, 4.0]


def test_auth_short_circuit(monkeypatch):
    monkeypatch.delenv("FORAGE_TEST_KEY", raising=False)
    b, server, _ = backend([ok_body("x")], auth="FORAGE_TEST_KEY")
    with pytest.raises(AuthError):
        b.chat(REQ)
    assert server.calls == []
    monkeypatch.setenv("FORAGE_TEST_KEY", "secret")
    b, server, _ = backend([401, ok_body("x")], auth="FORAGE_TEST_KEY")
    with pytest.raises(AuthError):
        b.chat(REQ)
    assert len(server.calls) == 1
    assert server.calls[0].headers["authorization"] == "Bearer secret"


def test_protocol_errors():
    for script in ([400], [{"choices": []}], [{"choices": [{"message": {"content": None}}]}]):
        b, _, _ = backend(script)
        with pytest.raises(ProtocolError):
            b.chat(REQ)


def test_tool_call_and_estimated_usage():
    b, server, _ = backend([ok_body(tool=("Grep", {"pattern": "x"}), usage=None)])
    r = b.chat(REQ)
    assert r.tool_call == ToolCall("Grep", {"pattern": "x"})
    assert r.usage.estimated
    assert server.calls[0].url.path == "/v1/chat/completions"


def test_metered_records_failures_input_only():
    ledger = CostLedger()
    b, _, _ = backend([500, 500], max_retries=1)
    with pytest.raises(TransportError):
        MeteredBackend(b, ledger, "policy").chat(REQ)
    (entry,) = ledger.entries
    assert entry.usage.input_tokens > 0 and entry.usage.output_tokens == 0
    ok, _, _ = backend([ok_body("y")])
    MeteredBackend(ok, ledger, "answer").chat(REQ)
    assert [e.call_kind for e in ledger.entries] == ["policy", "answer"]
    assert ledger.total.total == entry.usage.input_tokens + 18


def test_wire_is_byte_stable():
    req = ChatRequest([{"role": "system", "content": "s"}, {"role": "user", "content": "u"}],
                      tools=[{"type": "function", "function": {"name": "A"}}], seed=3)
    assert req.serialize("m") == ChatRequest(req.messages, req.tools, seed=3).serialize("m")
    assert '"seed":3' in req.serialize("m")


def test_validation():
    with pytest.raises(ValueError):
        ChatRequest([])
    with pytest.raises(ValueError):
        BackendConfig("x", "m", timeout_ms=0)
    with pytest.raises(ProtocolError):
        ChatResponse()
    with pytest.raises(ValueError):
        CostLedger().add("other", Usage())


def test_estimate_usage():
    u = estimate_usage(REQ, ChatResponse("abcd"))
    assert u.output_tokens == 1 and u.estimated
