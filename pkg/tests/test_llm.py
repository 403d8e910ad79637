import json

import pytest

from kgbridge.llm import (
    Cassette,
    CassetteMiss,
    ChatClient,
    ChatRequest,
    ChatResponse,
    ProviderRefusal,
    TransportError,
    batch_complete,
)
from kgbridge.prompts import PromptSpec, Strategy, render_prompt
from kgbridge.stubs import StubChatServer


def prompt(nlq="Which films did Stanley Kubrick direct?"):
    spec = PromptSpec(nlq, "SELECT ?x WHERE { ?x ?p ?o }", "DBpedia", "Wikidata", Strategy.ZERO_SHOT)
    return render_prompt(spec)


def req(nlq="Which films did Stanley Kubrick direct?", **kw):
    return ChatRequest("m", prompt(nlq), **kw)


def echo(payload):
    return "<sparql>ASK {}</sparql> " + str(len(payload["messages"]))


def test_digest_depends_on_sampling_and_model():
    base = req()
    assert base.request_digest == req().request_digest
    assert base.request_digest != req(temperature=0.7).request_digest
    assert base.request_digest != req(max_tokens=10).request_digest
    assert base.request_digest != ChatRequest("other", base.prompt).request_digest
    with pytest.raises(ValueError):
        req(temperature=-1)


def test_record_then_replay_offline(tmp_path):
    path = tmp_path / "c.jsonl"
    with StubChatServer(echo) as chat:
        client = ChatClient(chat.url, "k")
        recorded = client.complete(req(), Cassette(path, "record"))
        # a known digest is served from the cassette even in record mode
        client.complete(req(), Cassette(path, "record"))
        assert len(chat.log) == 1
    line = json.loads(path.read_text().splitlines()[0])
    assert line["request"]["messages"][0]["content"] == prompt().text
    replayed = ChatClient(None).complete(req(), Cassette(path, "replay"))
    assert replayed.text == recorded.text


def test_replay_miss_raises(tmp_path):
    with pytest.raises(CassetteMiss):
        ChatClient(None).complete(req(), Cassette(tmp_path / "none.jsonl", "replay"))


def test_passthrough_neither_reads_nor_writes(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text(json.dumps({"digest": req().request_digest, "request": {}, "response": {"text": "old"}}) + "\n")
    with StubChatServer(lambda p: "fresh") as chat:
        out = ChatClient(chat.url).complete(req(), Cassette(path, "passthrough"))
    assert out.text == "fresh"
    assert len(path.read_text().splitlines()) == 1


def test_later_cassette_line_wins(tmp_path):
    path = tmp_path / "c.jsonl"
    d = req().request_digest
    path.write_text("".join(
        json.dumps({"digest": d, "request": {}, "response": {"text": t}}) + "\n" for t in ("first", "second")
    ))
    assert Cassette(path).get(d).text == "second"


def test_bad_mode_and_corrupt_cassette(tmp_path):
    with pytest.raises(ValueError):
        Cassette(tmp_path / "c.jsonl", "rewind")
    with pytest.raises(ValueError):
        Cassette(None, "replay")
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json\n")
    with pytest.raises(ValueError):
        Cassette(bad)


def test_retryable_status_then_success():
    calls = []

    def flaky(payload):
        calls.append(1)
        return (503, "busy") if len(calls) < 3 else "<sparql>ASK {}</sparql>"

    with StubChatServer(flaky) as chat:
        out = ChatClient(chat.url, max_attempts=3, backoff=0).complete(req())
    assert out.text == "<sparql>ASK {}</sparql>" and len(calls) == 3


def test_retries_exhausted_is_transport_error():
    with StubChatServer(lambda p: (429, "slow down")) as chat:
        with pytest.raises(TransportError):
            ChatClient(chat.url, max_attempts=2, backoff=0).complete(req())
        assert len(chat.log) == 2


def test_client_error_is_refusal_without_retry():
    with StubChatServer(lambda p: (400, "content policy")) as chat:
        with pytest.raises(ProviderRefusal) as err:
            ChatClient(chat.url, max_attempts=3, backoff=0).complete(req())
        assert err.value.status == 400 and len(chat.log) == 1


def test_no_api_base():
    with pytest.raises(TransportError):
        ChatClient("", api_key="").complete(req())


def test_request_payload_and_auth_header():
    with StubChatServer(echo) as chat:
        out = ChatClient(chat.url, "secret").complete(req(temperature=0.2, max_tokens=99))
    payload = chat.log[0]
    assert payload["model"] == "m" and payload["temperature"] == 0.2 and payload["max_tokens"] == 99
    assert out.finish_reason == "stop" and out.token_usage["completion_tokens"] > 0


def test_batch_keeps_order_and_bounds_concurrency(tmp_path):
    nlqs = [f"Question number {i}?" for i in range(10)]

    def answer(payload):
        return payload["messages"][-1]["content"].split("\n")[0]

    with StubChatServer(answer, delay=0.05) as chat:
        client = ChatClient(chat.url, max_in_flight=3)
        outs = batch_complete(client, [req(n) for n in nlqs], Cassette(tmp_path / "c.jsonl", "record"), parallelism=8)
        assert chat.max_concurrency <= 3
    assert [json.loads(o.text.split(": ", 1)[1].rstrip(",")) for o in outs] == nlqs


def test_batch_returns_exceptions_in_place(tmp_path):
    cas = Cassette(tmp_path / "c.jsonl", "replay")
    outs = batch_complete(ChatClient(None), [req("a?"), req("b?")], cas, parallelism=2)
    assert all(isinstance(o, CassetteMiss) for o in outs)
    with pytest.raises(ValueError):
        batch_complete(ChatClient(None), [], cas, parallelism=0)


def test_response_json_round_trip():
    r = ChatResponse("t", "length", 1.5, {"total_tokens": 3})
    assert ChatResponse.from_json(r.to_json()) == r
