import json
import logging

import httpx
import pytest

from cdi.backends import Cassette, ChatBackend, RecordingBackend, ReplayBackend, RetryPolicy, request_digest
from cdi.errors import BackendError, CassetteMiss, DocumentError

SECRET = "sk-test-do-not-print-123"


def reply(content="[]"):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def backend_with(handler, **kw):
    return ChatBackend(base_url="http://llm.test/v1", transport=httpx.MockTransport(handler), sleep=lambda s: None, **kw)


def test_request_shape(monkeypatch):
    monkeypatch.setenv("CDI_API_KEY", SECRET)
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["auth"] = request.headers.get("authorization")
        seen["body"] = json.loads(request.content)
        return reply("[('p1', 'p2', 3)]")

    out = backend_with(handler, model="m1").complete("hello")
    assert out == "[('p1', 'p2', 3)]"
    assert seen["url"] == "http://llm.test/v1/chat/completions"
    assert seen["auth"] == f"Bearer {SECRET}"
    assert seen["body"] == {"model": "m1", "messages": [{"role": "user", "content": "hello"}]}


def test_temperature_sent_only_when_set():
    bodies = []

    def handler(request):
        bodies.append(json.loads(request.content))
        return reply()

    backend_with(handler, temperature=0.7).complete("x")
    assert bodies[0]["temperature"] == 0.7


def test_retries_transient_failures():
    statuses = iter([503, 429])
    calls = []

    def handler(request):
        calls.append(1)
        status = next(statuses, 200)
        return reply("ok") if status == 200 else httpx.Response(status)

    assert backend_with(handler).complete("x") == "ok"
    assert len(calls) == 3


def test_transport_errors_exhaust_retries():
    delays = []

    def handler(request):
        raise httpx.ConnectError("refused")

    b = ChatBackend(base_url="http://llm.test", transport=httpx.MockTransport(handler), sleep=delays.append,
                    retry=RetryPolicy(attempts=3, base_delay=1, max_delay=30))
    with pytest.raises(BackendError, match="3 attempts"):
        b.complete("x")
    assert delays == [1, 2]


def test_client_errors_are_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    with pytest.raises(BackendError) as info:
        backend_with(handler).complete("x")
    assert len(calls) == 1 and info.value.raw == "bad key"


def test_malformed_body():
    with pytest.raises(BackendError):
        backend_with(lambda r: httpx.Response(200, json={"nope": 1})).complete("x")


def test_api_key_never_logged_or_in_repr(monkeypatch, caplog):
    monkeypatch.setenv("CDI_API_KEY", SECRET)
    b = backend_with(lambda r: httpx.Response(500))
    with caplog.at_level(logging.DEBUG), pytest.raises(BackendError) as info:
        b.complete("x")
    assert SECRET not in caplog.text
    assert SECRET not in str(info.value)
    assert SECRET not in repr(ChatBackend(api_key=SECRET))


def test_retry_delay_is_capped():
    p = RetryPolicy(attempts=10, base_delay=1, max_delay=30)
    assert [p.delay(i) for i in range(7)] == [1, 2, 4, 8, 16, 30, 30]


def test_digest_depends_on_prompt_and_sample():
    assert request_digest("a", 0) != request_digest("a", 1) != request_digest("b", 1)
    assert request_digest("a", 0) == request_digest("a", 0)


def test_cassette_round_trip_and_uniqueness(tmp_path):
    c = Cassette()
    c.append(request_digest("p", 0), "r0", sample=0)
    with pytest.raises(DocumentError):
        c.append(request_digest("p", 0), "again")
    c.save(tmp_path / "c.json")
    loaded = Cassette.load(tmp_path / "c.json")
    assert loaded.entries == c.entries and loaded.dumps() == c.dumps()
    with pytest.raises(DocumentError):
        Cassette.loads('{"entries": [{"digest": "x", "response": "a"}, {"digest": "x", "response": "b"}]}')
    with pytest.raises(DocumentError):
        Cassette.loads("[]")


def test_replay_miss():
    with pytest.raises(CassetteMiss):
        ReplayBackend(Cassette()).complete("p", 0)


def test_record_then_replay(tmp_path):
    path = tmp_path / "rec.json"
    inner = backend_with(lambda r: reply("[('p1', 'p2', 9)]"))
    rec = RecordingBackend(inner, Cassette(), path)
    first = [rec.complete("prompt", i) for i in range(3)]
    replay = ReplayBackend(Cassette.load(path))
    assert [replay.complete("prompt", i) for i in range(3)] == first
    rec.complete("prompt", 0)
    assert len(Cassette.load(path)) == 3
