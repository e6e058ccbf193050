import json
from unittest.mock import MagicMock, patch

import pytest
import requests

from src.base.errors import BackendError, ConfigError
from src.gateway.llm_gateway import (
    BackendKind,
    BackendSpec,
    ChatRequest,
    GatewaySettings,
    HttpBackend,
    Role,
    ScriptedBackend,
    SeededMockBackend,
    Stage,
    Usage,
    WireLog,
    create_backend,
)


def request(stage=Stage.DECISION, sid="S1:5", round=0, agent_id=None, text="hello there"):
    return ChatRequest(messages=[{"role": "user", "content": text}], stage=stage, sample_id=sid, round=round,
                       agent_id=agent_id)


def http_reply(status=200, content="{}", usage=None):
    response = MagicMock()
    response.status_code = status
    body = {"choices": [{"message": {"content": content}}]}
    if usage is not None:
        body["usage"] = usage
    response.json.return_value = body
    response.text = json.dumps(body)
    return response


@pytest.mark.parametrize("text, kind, backend_id", [
    ("mock:", BackendKind.MOCK, "mock:seeded"),
    ("mock:scripts/local.json", BackendKind.MOCK, "mock:local.json"),
    ("mock:11", BackendKind.MOCK, "mock:seeded"),
    ("http:https://host:8000/v1#qwen-32b", BackendKind.HTTP, "qwen-32b"),
    ("HTTP:localhost:11434#llama", BackendKind.HTTP, "llama"),
])
def test_backend_spec_parse(text, kind, backend_id):
    spec = BackendSpec.parse(text)
    assert spec.kind is kind
    assert spec.backend_id == backend_id


@pytest.mark.parametrize("text", ["", "mock", "ftp:x", "http:https://host", "http:#model"])
def test_backend_spec_rejects(text):
    with pytest.raises(ConfigError):
        BackendSpec.parse(text)


def test_scripted_lookup_prefers_specific_keys():
    backend = ScriptedBackend(BackendSpec.parse("mock:s.json"), {
        "S1:5/decision/0": "exact",
        "*/decision": "wildcard",
    })
    assert backend.complete(request()).text == "exact"
    assert backend.complete(request(sid="S2:5")).text == "wildcard"


def test_scripted_agent_keys():
    backend = ScriptedBackend(BackendSpec.parse("mock:s.json"), {
        "*/baseline/*/B": "agent B any round",
        "*/baseline/1/B": "agent B round 1",
        "*/baseline": "anyone",
    })
    assert backend.complete(request(Stage.BASELINE, agent_id="B", round=1)).text == "agent B round 1"
    assert backend.complete(request(Stage.BASELINE, agent_id="B", round=0)).text == "agent B any round"
    assert backend.complete(request(Stage.BASELINE, agent_id="A")).text == "anyone"


def test_scripted_list_is_consumed_and_last_repeats():
    backend = ScriptedBackend(BackendSpec.parse("mock:s.json"), {"*/decision": ["one", "two"]})
    assert [backend.complete(request()).text for _ in range(4)] == ["one", "two", "two", "two"]
    assert len(backend.requests) == 4


def test_scripted_missing_key_is_backend_error():
    backend = ScriptedBackend(BackendSpec.parse("mock:s.json"), {"*/advisory": "x"})
    with pytest.raises(BackendError):
        backend.complete(request())


def test_scripted_from_file(tmp_path):
    path = tmp_path / "local.json"
    path.write_text(json.dumps({"responses": {"*/decision": "from file"}}))
    backend = create_backend(f"mock:{path}")
    assert isinstance(backend, ScriptedBackend)
    assert backend.complete(request()).text == "from file"

    with pytest.raises(ConfigError):
        create_backend(f"mock:{tmp_path / 'absent.json'}")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        create_backend(f"mock:{tmp_path / 'bad.json'}")


def test_seeded_mock_is_deterministic():
    a = create_backend("mock:", seed=7)
    b = create_backend("mock:", seed=7)
    assert isinstance(a, SeededMockBackend)
    for stage in (Stage.ACQUISITION, Stage.DECISION, Stage.BASELINE):
        for i in range(20):
            r = request(stage, sid=f"S{i}:3")
            assert a.complete(r).text == b.complete(r).text


def test_seeded_mock_depends_on_seed():
    a = create_backend("mock:", seed=1)
    b = create_backend("mock:", seed=2)
    texts_a = [a.complete(request(sid=f"S{i}:1")).text for i in range(30)]
    texts_b = [b.complete(request(sid=f"S{i}:1")).text for i in range(30)]
    assert texts_a != texts_b


def test_mock_seed_in_spec_selects_seeded_backend():
    backend = create_backend("mock:11", seed=3)
    assert isinstance(backend, SeededMockBackend)
    assert backend.seed == 11
    reference = create_backend("mock:", seed=11)
    for i in range(10):
        r = request(Stage.DECISION, sid=f"S{i}:4")
        assert backend.complete(r).text == reference.complete(r).text


def test_seeded_mock_replies_are_parseable():
    from src.gateway.parsing import ExpectedSchema, parse_stage_output

    backend = create_backend("mock:", seed=3)
    for i in range(30):
        parse_stage_output(backend.complete(request(Stage.ACQUISITION, sid=f"S{i}:2")).text,
                           ExpectedSchema.ACQUISITION)
        parse_stage_output(backend.complete(request(Stage.DECISION, sid=f"S{i}:2")).text, ExpectedSchema.DECISION)
        parse_stage_output(backend.complete(request(Stage.BASELINE, sid=f"S{i}:2")).text,
                           ExpectedSchema.BASELINE_TURN)


def test_usage_arithmetic():
    calls = [Usage(prompt_tokens=100, completion_tokens=20), Usage(prompt_tokens=300, completion_tokens=40),
             Usage(prompt_tokens=70, completion_tokens=10)]
    total = Usage()
    for u in calls:
        total = total + u
    assert total.total == 540
    assert total.estimated is False
    assert (total + Usage(estimated=True)).estimated is True


@patch.object(requests.Session, "post")
def test_http_reports_server_usage(mock_post):
    mock_post.return_value = http_reply(content='{"final_action": "OBSERVE"}',
                                        usage={"prompt_tokens": 120, "completion_tokens": 30})
    backend = create_backend("http:http://llm.local:8000#qwen")

    response = backend.complete(request())

    assert response.text == '{"final_action": "OBSERVE"}'
    assert response.usage == Usage(prompt_tokens=120, completion_tokens=30)
    args, kwargs = mock_post.call_args
    assert args[0] == "http://llm.local:8000/v1/chat/completions"
    assert kwargs["json"]["model"] == "qwen"
    assert kwargs["json"]["temperature"] == 0.0


@patch.object(requests.Session, "post")
def test_http_estimates_missing_usage(mock_post):
    mock_post.return_value = http_reply(content="a b c")
    response = create_backend("http:http://llm.local#qwen").complete(request(text="one two three four"))
    assert response.usage.estimated is True
    assert response.usage.prompt_tokens == 4
    assert response.usage.completion_tokens == 3


@patch("src.gateway.llm_gateway.time.sleep")
@patch.object(requests.Session, "post")
def test_http_retries_then_fails(mock_post, mock_sleep):
    mock_post.side_effect = [http_reply(status=503), requests.ConnectionError("refused"),
                             http_reply(status=500), http_reply(status=500)]
    backend = HttpBackend(BackendSpec.parse("http:http://llm.local#qwen"), settings=GatewaySettings(retries=3))

    with pytest.raises(BackendError):
        backend.complete(request())

    assert mock_post.call_count == 4
    assert [c.args[0] for c in mock_sleep.call_args_list] == [1.0, 2.0, 4.0]


@patch("src.gateway.llm_gateway.time.sleep")
@patch.object(requests.Session, "post")
def test_http_recovers_after_retry(mock_post, mock_sleep):
    mock_post.side_effect = [http_reply(status=429), http_reply(content="ok")]
    assert create_backend("http:http://llm.local#qwen").complete(request()).text == "ok"
    assert mock_sleep.call_count == 1


@pytest.mark.parametrize("url, endpoint", [
    ("http://h:1", "http://h:1/v1/chat/completions"),
    ("http://h:1/v1", "http://h:1/v1/chat/completions"),
    ("http://h:1/v1/chat/completions", "http://h:1/v1/chat/completions"),
])
def test_http_endpoint_normalization(url, endpoint):
    assert HttpBackend(BackendSpec.parse(f"http:{url}#m")).endpoint == endpoint


def test_http_auth_header_by_role(monkeypatch):
    monkeypatch.setenv("CARE_API_KEY", "local-key")
    monkeypatch.setenv("CARE_REMOTE_API_KEY", "remote-key")
    settings = GatewaySettings()
    local = HttpBackend(BackendSpec.parse("http:http://h#m"), settings=settings)
    remote = HttpBackend(BackendSpec.parse("http:http://h#m", role=Role.REMOTE), settings=settings)
    assert local._headers()["Authorization"] == "Bearer local-key"
    assert remote._headers()["Authorization"] == "Bearer remote-key"


def test_http_without_key_sends_no_auth():
    backend = HttpBackend(BackendSpec.parse("http:http://h#m"), settings=GatewaySettings(api_key=""))
    assert "Authorization" not in backend._headers()


def test_wire_log_redacts_local_bodies(tmp_path):
    log = WireLog(tmp_path / "wire.jsonl")
    backend = ScriptedBackend(BackendSpec.parse("mock:s.json"), {"*/decision": "lactate 3.4"}, wire_log=log)
    backend.complete(request(text="map_median_last1h = 61.0"))

    rows = log.writer.read_all()
    assert len(rows) == 1
    raw = json.dumps(rows)
    assert "61.0" not in raw
    assert "3.4" not in raw
    assert rows[0]["messages"][0]["content"].startswith("[redacted sha256=")


def test_wire_log_records_failures(tmp_path):
    log = WireLog(tmp_path / "wire.jsonl")
    backend = ScriptedBackend(BackendSpec.parse("mock:s.json"), {}, wire_log=log)
    with pytest.raises(BackendError):
        backend.complete(request())
    assert "error" in log.writer.read_all()[0]
