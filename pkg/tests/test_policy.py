import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forage import golden, tokens
from forage.actions import ALL_TOOLS, make_action
from forage.errors import ScriptExhausted, UnparsableAction
from forage.gateway import MockBackend, ToolCall
from forage.policy import ELISION, Policy, Script, Step, Trace, assemble_policy_context
from forage.state import EMPTY_STATE, EpistemicState


def _trace(n, obs=lambda i: f"observation {i}"):
    return Trace(Step(i, make_action("Grep", {"pattern": f"p{i}"}), obs(i)) for i in range(n))


def test_empty_context():
    out = assemble_policy_context("What?", Trace(), EpistemicState())
    assert "What?" in out and EMPTY_STATE in out
    for name in ALL_TOOLS:
        assert f"- {name}(" in out


def test_window_keeps_last_steps():
    out = assemble_policy_context("q", _trace(30), EpistemicState(), window=10)
    shown = [i for i in range(30) if f"[t={i}] " in out]
    assert shown == list(range(20, 30))
    assert ELISION.format(n=20) in out


@settings(max_examples=40, deadline=None)
@given(sizes=st.lists(st.integers(0, 5000), max_size=12), budget=st.integers(300, 4000))
def test_budget_compliance(sizes, budget):
    trace = _trace(len(sizes), obs=lambda i: "w" * sizes[i])
    out = assemble_policy_context("q", trace, EpistemicState(), budget=budget)
    assert tokens.count_tokens(out) <= budget


def test_trace_is_append_only():
    t = _trace(3)
    with pytest.raises(ValueError):
        t.append(Step(5, make_action("Evaluate"), ""))
    assert [s.index for s in t] == [0, 1, 2]


def test_scripted_policy_golden_positions():
    actions = golden.script()
    s = Script(actions)
    assert s.next().kind == "GetFileInfo"
    backend = Script(actions[2:]).to_backend()
    a = Policy(backend).decide("q", Trace(), EpistemicState())
    assert a == make_action("Grep", {"pattern": "five types of contextual information|contextual information",
                                     "case_insensitive": True})
    backend = Script(actions[10:]).to_backend()
    assert Policy(backend).decide("q", Trace(), EpistemicState()) == make_action("Read", {"offset": 1216, "limit": 75})


def test_script_round_trip(tmp_path):
    s = Script(golden.script())
    path = tmp_path / "s.jsonl"
    s.dump(path)
    again = Script.load(path)
    assert again.actions == s.actions and len(again) == 19
    for _ in range(19):
        again.next()
    with pytest.raises(ScriptExhausted):
        again.next()


def test_full_mock_script_order():
    bk, policy, diag, answer = golden.backends()
    got = [policy.mock_next().tool_call.name for _ in range(19)]
    assert got == [a.kind for a in golden.script()]
    assert answer.mock_next().text == golden.ANSWER


def test_invalid_then_unparsable():
    mock = MockBackend([ToolCall("Update", {"content": "", "anchor": "d:1-1"}),
                        ToolCall("Update", {"content": " ", "anchor": "d:1-1"})])
    with pytest.raises(UnparsableAction):
        Policy(mock).decide("q", Trace(), EpistemicState())
    assert len(mock.requests) == 2


def test_prose_reply_is_reasked_once():
    mock = MockBackend(["I think I'll grep", ToolCall("Evaluate", {})])
    assert Policy(mock).decide("q", Trace(), EpistemicState()).kind == "Evaluate"
    assert "no tool call" in mock.requests[1].messages[-1]["content"]


def test_only_enabled_tools_are_offered():
    mock = MockBackend([ToolCall("Evaluate", {})])
    Policy(mock, tools={"Evaluate", "View"}).decide("q", Trace(), EpistemicState())
    offered = {t["function"]["name"] for t in mock.requests[0].tools}
    assert offered == {"Evaluate", "View"}
