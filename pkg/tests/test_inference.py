import itertools
from pathlib import Path
from types import SimpleNamespace

import httpx
import numpy as np
import pytest

from conftest import arbitration_oracle
from gazemind._constants import FEATURES, LEVELS
from gazemind.gaze.normalize import PopulationStats
from gazemind.gaze.table import FeatureTable, InsufficientHistoryError
from gazemind.inference import (
    ERROR_LABEL,
    NO_REFERENCES,
    SessionContext,
    arbitrate,
    assemble_prompts,
    expand_labels,
    mock_predict,
    parse_response,
    read_prediction_log,
    run_session,
    write_prediction_log,
)
from gazemind.inference.response import ResponseParseError
from gazemind.llm import AuthError, BackendError, ChatCompletionBackend, MockBackend, invoke, make_backend
from gazemind.profiles import TraitVector, UserProfile
from gazemind.rules import GuidanceRule, RuleEntry, render_rule_text

GOLDEN = Path(__file__).parent / "golden" / "prompts"
TEMPLATES = Path(__file__).parents[1] / "src" / "gazemind" / "inference" / "templates"


# -- independent renderers used to anchor the golden files -------------------

def _cell(v):
    s = f"{v:+.2f}"
    return "+0.00" if s == "-0.00" else s


def _markdown(cells):
    T = cells.shape[0]
    head = "| Feature | " + " | ".join([f"t-{T - 1 - j}" for j in range(T - 1)] + ["t"]) + " |"
    rows = [head, "|" + "---|" * (T + 1)]
    for k, name in enumerate(FEATURES):
        rows.append(f"| {name} | " + " | ".join(_cell(v) for v in cells[:, k]) + " |")
    return "\n".join(rows)


def _template(name):
    text = (TEMPLATES / f"{name}.txt").read_text(encoding="utf-8")
    return text[:-1] if text.endswith("\n") else text


def _cells(seed, T):
    return np.random.default_rng(seed).integers(-300, 300, size=(T, 7)) / 100.0


def _rule(task, entries):
    entries = tuple(RuleEntry(f, i + 1, d, c) for i, (f, d, c) in enumerate(entries))
    return GuidanceRule(task, entries, render_rule_text(task, entries))


GENERIC_TEXT = ("No task-specific rules are available. Use the generic feature definitions:\n"
                "larger pupils and fewer blinks usually accompany higher cognitive load.")
STATS = PopulationStats(np.array([0, 0, 0, 0, 0, 1.0, 300.0]), np.array([1, 1, 1, 1, 1, 0.5, 50.0]))


def _contexts():
    """Three fixture contexts with hand-written expectations for every slot."""
    reading = _rule("reading", [("fix_dur", "+", (-0.25, 0.5)), ("sac_ratio", "-", (-0.75, 0.0))])
    gaming = _rule("gaming", [("sac_amp", "-", (-0.5, 0.5)), ("sac_ratio", "+", (-1.0, 1.0)),
                              ("avg_pupil_size", "+", (0.0, 0.25))])
    restless = UserProfile("u07", "Restless", TraitVector(2.0, 70.5, 200.0, 11.5), {"pupil_mean": 200.0, "blink_mean": 2.0})
    reactor = UserProfile("u01", "High-Reactor", TraitVector(1.0, 120.0, 390.0, 8.0), {"pupil_mean": 390.0, "blink_mean": 1.0})
    refs3 = [SimpleNamespace(table=FeatureTable(_cells(20 + i, 3), -1), label=lab) for i, lab in enumerate(["High", "Low"])]
    refs10 = [SimpleNamespace(table=FeatureTable(_cells(30, 10), -1), label="Moderate")]
    return {
        "reading_T5_no_refs": dict(
            args=(reading, None, [], FeatureTable(_cells(1, 5), 4), "reading", 5, None),
            slots=dict(task_name="Reading", time_window=5, task_guidance=reading.prompt_text,
                       user_profile_traits="No user-specific profile or calibration is available.\n"
                                           "Interpret every z-score against the population baseline (0.0)."),
            refs=[], cells=_cells(1, 5)),
        "gaming_T3_restless_2refs": dict(
            args=(gaming, restless, refs3, FeatureTable(_cells(2, 3), 50), "gaming", 3, STATS),
            slots=dict(task_name="Gaming", time_window=3, task_guidance=gaming.prompt_text,
                       user_profile_traits="Profile type: Restless\n"
                                           "Traits: Frequent blinking and unstable gaze at rest; blink and saccade surges are partly habitual.\n"
                                           "Trait values: blink intensity 2.00/s, pupil sensitivity 70.50, pupil baseline 200.00, gaze instability 11.50 deg\n"
                                           "Calibration baselines (z): avg_pupil_size -2.00, blink_count +2.00\n"
                                           "Calibration: read avg_pupil_size and blink_count relative to these personal baselines "
                                           "rather than relative to 0.0."),
            refs=refs3, cells=_cells(2, 3)),
        "audio_T10_generic_1ref": dict(
            args=(None, reactor, refs10, FeatureTable(_cells(3, 10), 99), "audio", 10, None),
            slots=dict(task_name="Audio N-Back", time_window=10, task_guidance=GENERIC_TEXT,
                       user_profile_traits="Profile type: High-Reactor\n"
                                           "Traits: Large resting pupil and strong pupil response to demand; small pupil changes matter less.\n"
                                           "Trait values: blink intensity 1.00/s, pupil sensitivity 120.00, pupil baseline 390.00, gaze instability 8.00 deg\n"
                                           "Calibration baselines (raw): pupil 390.00, blinks 1.00/s"),
            refs=refs10, cells=_cells(3, 10)),
    }


def _expected(ctx):
    refs = ctx["refs"]
    rag = "\n\n".join(f"Reference Example {i}:\n{_markdown(r.table.cells)}\nLabel: {r.label}"
                      for i, r in enumerate(refs, 1)) if refs else "No reference examples available."
    slots = dict(ctx["slots"], rag_context=rag, feature_table=_markdown(ctx["cells"]))
    return (_template("system").format(time_window=ctx["slots"]["time_window"]), _template("user").format(**slots))


@pytest.mark.parametrize("name", sorted(_contexts()))
def test_prompts_match_goldens(name):
    ctx = _contexts()[name]
    system, user = _expected(ctx)
    assert (GOLDEN / f"{name}.system.txt").read_text(encoding="utf-8") == system
    assert (GOLDEN / f"{name}.user.txt").read_text(encoding="utf-8") == user
    pair = assemble_prompts(*ctx["args"])
    assert pair.system == system
    assert pair.user == user
    assert assemble_prompts(*ctx["args"]) == pair


def test_system_prompt_window_substitution():
    ctx = _contexts()["reading_T5_no_refs"]
    pair = assemble_prompts(*ctx["args"])
    assert "5-second window" in pair.system
    assert "{" not in pair.system and "{" not in pair.user
    assert "four-phase reasoning process" in pair.system
    assert NO_REFERENCES in pair.user


def test_prompt_window_mismatch_raises():
    ctx = _contexts()["reading_T5_no_refs"]
    args = list(ctx["args"])
    args[5] = 3
    with pytest.raises(ValueError):
        assemble_prompts(*args)


def test_braces_in_slot_values_are_left_alone():
    rule = GuidanceRule("reading", (RuleEntry("fix_dur", 1, "+", (0.0, 1.0)),), "use {feature_table} literally")
    pair = assemble_prompts(rule, None, [], FeatureTable(np.zeros((5, 7)), 4), "reading", 5)
    assert "use {feature_table} literally" in pair.user


# -- parse_response ----------------------------------------------------------

def test_parse_response_examples():
    p = parse_response("Cognitive Load: High\nReasoning: pupil rising.")
    assert (p.label, p.reasoning) == ("High", "pupil rising.")
    assert parse_response("cognitive load: [moderate] because...").label == "Moderate"
    assert parse_response("Some preamble\n**Cognitive Load:** low\n**Reasoning:** calm.").label == "Low"
    assert parse_response("Cognitive Load: Low\nCognitive Load: High").label == "Low"


@pytest.mark.parametrize("text", ["Load seems big", "", "Cognitive Load: Extreme\nReasoning: x", "Cognitive Load: ???"])
def test_parse_response_failures(text):
    with pytest.raises(ResponseParseError):
        parse_response(text)


# -- mock arbitration --------------------------------------------------------

def test_mock_high_band_without_refs():
    rule = _rule("reading", [("fix_dur", "+", (-0.5, 0.5)), ("avg_pupil_size", "+", (-0.5, 0.5)),
                             ("blink_count", "-", (-0.5, 0.5))])
    cells = np.zeros((5, 7))
    cells[:, 0] = 1.0
    cells[:, 6] = 1.0
    text = mock_predict(rule, None, [], FeatureTable(cells, 4))
    assert parse_response(text).label == "High"
    assert "fix_dur" in text and "avg_pupil_size" in text


def test_mock_validated_refs_override():
    rule = _rule("reading", [("fix_dur", "+", (-0.5, 0.5))])
    cells = np.full((5, 7), -1.0)
    refs = [SimpleNamespace(table=FeatureTable(np.full((5, 7), -0.2), -1), label="Moderate") for _ in range(3)]
    d = arbitrate(rule, refs, FeatureTable(cells, 4))
    assert d.provisional == "Low" and d.label == "Moderate" and d.override
    text = mock_predict(rule, None, refs, FeatureTable(cells, 4))
    assert parse_response(text).label == "Moderate"
    assert "#1, #2, #3" in text


def test_mock_conflicting_reference_excluded_and_named():
    rule = _rule("reading", [("fix_dur", "+", (-0.5, 0.5))])
    cells = np.full((5, 7), 1.0)
    refs = [SimpleNamespace(table=FeatureTable(np.full((5, 7), 0.3), -1), label="High"),
            SimpleNamespace(table=FeatureTable(np.full((5, 7), -0.3), -1), label="Low"),
            SimpleNamespace(table=FeatureTable(np.full((5, 7), 0.3), -1), label="High")]
    d = arbitrate(rule, refs, FeatureTable(cells, 4))
    assert d.excluded == (1,) and d.validated == (0, 2)
    text = mock_predict(rule, None, refs, FeatureTable(cells, 4))
    assert "#2 (Low)" in text


def test_mock_needs_rule():
    with pytest.raises(ValueError):
        arbitrate(None, [], FeatureTable(np.zeros((5, 7)), 4))


def test_mock_matches_oracle_and_always_parses():
    rng = np.random.default_rng(42)
    for _ in range(500):
        n_entries = int(rng.integers(1, 5))
        feats = rng.choice(7, n_entries, replace=False)
        entries = []
        for f in feats:
            c = np.sort(rng.normal(0, 0.7, 2))
            entries.append((FEATURES[f], "+" if rng.random() < 0.5 else "-", (float(c[0]), float(c[1]))))
        rule = _rule("gaming", entries)
        cells = rng.normal(0, 1, (5, 7))
        refs = [SimpleNamespace(table=FeatureTable(rng.normal(0, 1, (5, 7)), -1), label=LEVELS[rng.integers(3)])
                for _ in range(int(rng.integers(0, 5)))]
        text = mock_predict(rule, None, refs, FeatureTable(cells, 4))
        assert text == mock_predict(rule, None, refs, FeatureTable(cells.copy(), 4))
        assert parse_response(text).label == arbitration_oracle(rule, refs, cells)


# -- session loop ------------------------------------------------------------

def _ctx(backend=None, **kw):
    rule = _rule("reading", [("fix_dur", "+", (-0.5, 0.5))])
    return SessionContext(backend or MockBackend(), "reading", rule, user_id="u1", **kw)


class CountingBackend:
    name = "counting"

    def __init__(self, reply):
        self.reply = reply
        self.calls = 0

    def complete(self, system, user, *, temperature=0.0, context=None):
        self.calls += 1
        if isinstance(self.reply, Exception):
            raise self.reply
        return self.reply


def test_session_ten_seconds_two_calls():
    backend = CountingBackend("Cognitive Load: High\nReasoning: r")
    res = run_session(np.zeros((10, 7)), _ctx(backend), T=5)
    assert backend.calls == 2 and res.n_calls == 2
    assert [w.window_end for w in res.windows] == [4, 9]
    assert res.labels == ["High"] * 10


def test_session_trailing_seconds_flagged():
    Z = np.zeros((12, 7))
    Z[5:10, 0] = 2.0
    res = run_session(Z, _ctx(), T=5)
    assert res.n_calls == 2
    assert [w.window_end for w in res.windows] == [4, 9, 11]
    assert [w.trailing for w in res.windows] == [False, False, True]
    assert res.labels == ["Moderate"] * 5 + ["High"] * 7


def test_session_shorter_than_window():
    with pytest.raises(InsufficientHistoryError):
        run_session(np.zeros((4, 7)), _ctx(), T=5)


def test_session_counts_property():
    for n, T in itertools.product(range(3, 24), (3, 5)):
        if n < T:
            continue
        res = run_session(np.random.default_rng(n).normal(size=(n, 7)), _ctx(), T=T)
        assert len(res.windows) == -(-n // T)
        assert len(res.labels) == n
        assert res.n_calls == n // T
        assert expand_labels(res.windows, T) == res.labels


def test_session_parse_failure_reinvokes_then_errors():
    backend = CountingBackend("I cannot say")
    res = run_session(np.zeros((5, 7)), _ctx(backend), T=5)
    assert backend.calls == 2
    assert res.labels == [ERROR_LABEL] * 5 and res.windows[0].error


def test_session_backend_error_becomes_error_record():
    backend = CountingBackend(BackendError("down"))
    res = run_session(np.zeros((10, 7)), _ctx(backend), T=5)
    assert res.labels == [ERROR_LABEL] * 10
    assert all("down" in w.error for w in res.windows)


def test_prediction_log_round_trip(tmp_path):
    res = run_session(np.random.default_rng(0).normal(size=(12, 7)), _ctx(), T=5)
    write_prediction_log(tmp_path / "log.jsonl", res.windows)
    back = read_prediction_log(tmp_path / "log.jsonl")
    assert back == res.windows
    assert set(back[0].to_dict()) >= {"user", "task", "window_end", "label", "reasoning", "latency", "backend"}


# -- backends ----------------------------------------------------------------

def test_mock_backend_requires_context():
    with pytest.raises(BackendError):
        MockBackend().complete("s", "u")


def test_invoke_records_latency_and_backend():
    c = invoke(CountingBackend("Cognitive Load: Low"), "s", "u")
    assert c.backend == "counting" and c.latency >= 0 and c.text.startswith("Cognitive")


def _remote(handler, monkeypatch, **kw):
    monkeypatch.setenv("GAZEMIND_API_KEY", "secret")
    return ChatCompletionBackend("https://llm.example/v1", "test-model", transport=httpx.MockTransport(handler),
                                 backoff=0.0, **kw)


def test_remote_request_shape(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json={"choices": [{"message": {"content": "Cognitive Load: Low"}}]})

    backend = _remote(handler, monkeypatch)
    assert backend.complete("sys", "usr") == "Cognitive Load: Low"
    req = seen[0]
    body = __import__("json").loads(req.content)
    assert req.url.path == "/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer secret"
    assert body["temperature"] == 0.0 and body["model"] == "test-model"
    assert body["messages"] == [{"role": "system", "content": "sys"}, {"role": "user", "content": "usr"}]


def test_remote_missing_token(monkeypatch):
    monkeypatch.delenv("GAZEMIND_API_KEY", raising=False)
    with pytest.raises(AuthError, match="GAZEMIND_API_KEY"):
        ChatCompletionBackend("https://llm.example/v1", "m")


@pytest.mark.parametrize("status", [401, 403])
def test_remote_auth_error_not_retried(monkeypatch, status):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(status)

    with pytest.raises(AuthError):
        _remote(handler, monkeypatch, max_retries=3).complete("s", "u")
    assert len(calls) == 1


def test_remote_server_error_retried_then_fails(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    with pytest.raises(BackendError, match="3 attempt"):
        _remote(handler, monkeypatch, max_retries=2).complete("s", "u")
    assert len(calls) == 3


def test_remote_transient_failure_recovers(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) == 1:
            raise httpx.ConnectTimeout("slow")
        return httpx.Response(200, json={"choices": [{"message": {"content": "ok"}}]})

    assert _remote(handler, monkeypatch, max_retries=1).complete("s", "u") == "ok"
    assert len(calls) == 2


def test_remote_client_error_not_retried(monkeypatch):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(400)

    with pytest.raises(BackendError, match="400"):
        _remote(handler, monkeypatch).complete("s", "u")
    assert len(calls) == 1


def test_make_backend(monkeypatch):
    assert isinstance(make_backend("mock"), MockBackend)
    monkeypatch.delenv("GAZEMIND_BASE_URL", raising=False)
    monkeypatch.delenv("GAZEMIND_MODEL", raising=False)
    with pytest.raises(BackendError):
        make_backend("remote")
    with pytest.raises(ValueError):
        make_backend("other")
