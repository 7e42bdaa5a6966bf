from __future__ import annotations

import json
import math
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sqlsynth.lm import (
    EOS_TOKEN_ID,
    AdapterUnavailable,
    DistractorSpec,
    GenerationSession,
    HttpCompletionModel,
    ProtocolError,
    ScriptedModel,
    ScriptedRouter,
    UnknownToken,
    lexeme_tokens,
    load_scripted_model,
)

QUERY_A = "SELECT t.a\nFROM t\nWHERE\nGROUP BY\nHAVING\nORDER BY\nLIMIT\n"
QUERY_B = "SELECT t.b\nFROM t\nWHERE\nGROUP BY\nHAVING\nORDER BY\nLIMIT\n"


# -- tokenization -----------------------------------------------------------


def test_lexeme_tokens_reassemble_exactly():
    tokens = lexeme_tokens(QUERY_A)
    assert "".join(tokens) == QUERY_A
    assert tokens[0] == "SELECT "
    assert tokens[1] == "t.a\n"


def test_lexeme_tokens_keep_spaced_strings_whole():
    text = "WHERE t.a = 'two words'\n"
    tokens = lexeme_tokens(text)
    assert "'two words'\n" in tokens
    assert "".join(tokens) == text


@given(st.lists(st.sampled_from(["A ", "b.c ", "'x y' ", "7\n"]), min_size=1))
def test_lexeme_tokens_roundtrip(parts):
    text = "".join(parts)
    assert "".join(lexeme_tokens(text)) == text


# -- scripted trie model ----------------------------------------------------


def _session(model, prefix=()):
    return GenerationSession("task", tuple(prefix))


def test_scripted_probabilities_follow_subtree_weights():
    model = ScriptedModel.from_queries([(QUERY_A, 0.6), (QUERY_B, 0.3)])
    first = model.top_candidates(_session(model), 10)
    assert [c.token_id for c in first] == ["SELECT "]
    assert first[0].prob == pytest.approx(1.0)

    second = model.top_candidates(_session(model, ("SELECT ",)), 10)
    by_token = {c.token_id: c.prob for c in second}
    assert by_token["t.a\n"] == pytest.approx(0.6 / 0.9)
    assert by_token["t.b\n"] == pytest.approx(0.3 / 0.9)


def test_scripted_path_product_is_leaf_share():
    model = ScriptedModel.from_queries([(QUERY_A, 0.6), (QUERY_B, 0.3)])
    prefix: tuple[str, ...] = ()
    product = 1.0
    for token in lexeme_tokens(QUERY_A):
        cands = {c.token_id: c for c in model.top_candidates(_session(model, prefix), 10)}
        product *= cands[token].prob
        prefix += (token,)
    eos = {c.token_id: c for c in model.top_candidates(_session(model, prefix), 10)}
    product *= eos[EOS_TOKEN_ID].prob
    assert product == pytest.approx(0.6 / 0.9)


def test_scripted_eos_only_at_path_end():
    model = ScriptedModel.from_queries([(QUERY_A, 1.0)])
    mid = model.top_candidates(_session(model, ("SELECT ",)), 10)
    assert all(not c.is_eos for c in mid)
    end = model.top_candidates(_session(model, lexeme_tokens(QUERY_A)), 10)
    assert [c.token_id for c in end] == [EOS_TOKEN_ID]
    assert end[0].surface == ""


def test_scripted_off_path_prefix_is_dead_end():
    model = ScriptedModel.from_queries([(QUERY_A, 1.0)])
    assert model.top_candidates(_session(model, ("nonsense ",)), 10) == []


def test_scripted_rejects_continuing_after_eos():
    model = ScriptedModel.from_queries([(QUERY_A, 1.0)])
    with pytest.raises(ProtocolError):
        model.top_candidates(_session(model, ("SELECT ", EOS_TOKEN_ID)), 10)


def test_scripted_decode_and_unknown_token():
    model = ScriptedModel.from_queries([(QUERY_A, 1.0)])
    tokens = lexeme_tokens(QUERY_A) + (EOS_TOKEN_ID,)
    assert model.decode(tokens) == QUERY_A
    with pytest.raises(UnknownToken):
        model.decode(("never-seen ",))


def test_scripted_weight_validation():
    with pytest.raises(ValueError):
        ScriptedModel([])
    with pytest.raises(ValueError):
        ScriptedModel.from_queries([(QUERY_A, 0.0)])
    with pytest.raises(ValueError):
        ScriptedModel.from_queries([(QUERY_A, 0.7), (QUERY_B, 0.7)])


def test_scripted_top_k_truncates():
    model = ScriptedModel.from_queries([(QUERY_A, 0.6), (QUERY_B, 0.3)])
    second = model.top_candidates(_session(model, ("SELECT ",)), 1)
    assert [c.token_id for c in second] == ["t.a\n"]


def test_distractor_takes_fixed_mass_and_dead_ends():
    spec = DistractorSpec(surface="zzz ", mass=0.2)
    model = ScriptedModel.from_queries([(QUERY_A, 1.0)], spec)
    cands = {c.token_id: c.prob for c in model.top_candidates(_session(model), 10)}
    assert cands["zzz "] == pytest.approx(0.2)
    assert cands["SELECT "] == pytest.approx(0.8)
    assert model.top_candidates(_session(model, ("zzz ",)), 10) == []


def test_distractor_step_restriction():
    spec = DistractorSpec(surface="zzz ", mass=0.5, steps=frozenset({1}))
    model = ScriptedModel.from_queries([(QUERY_A, 1.0)], spec)
    step0 = model.top_candidates(_session(model), 10)
    assert [c.token_id for c in step0] == ["SELECT "]
    step1 = {c.token_id for c in model.top_candidates(_session(model, ("SELECT ",)), 10)}
    assert "zzz " in step1


def test_distractor_surface_collision_rejected():
    with pytest.raises(ValueError):
        ScriptedModel.from_queries(
            [(QUERY_A, 1.0)], DistractorSpec(surface="SELECT ", mass=0.1)
        )


def test_router_matches_and_falls_back():
    model_a = ScriptedModel.from_queries([(QUERY_A, 1.0)])
    model_b = ScriptedModel.from_queries([(QUERY_B, 1.0)])
    router = ScriptedRouter([("alpha", model_a)], default=model_b)
    assert (
        router.top_candidates(GenerationSession("alpha question", ("SELECT ",)), 5)[0]
        .token_id
        == "t.a\n"
    )
    assert (
        router.top_candidates(GenerationSession("other", ("SELECT ",)), 5)[0].token_id
        == "t.b\n"
    )


def test_router_without_default_raises():
    router = ScriptedRouter([("alpha", ScriptedModel.from_queries([(QUERY_A, 1.0)]))])
    with pytest.raises(AdapterUnavailable):
        router.start_session("no match here")


# -- spec files -------------------------------------------------------------


def test_load_scripted_model_single(tmp_path):
    spec = {
        "paths": [
            {"query": QUERY_A, "weight": 0.6},
            {"tokens": list(lexeme_tokens(QUERY_B)), "weight": 0.3},
        ],
        "distractor": {"surface": "zzz ", "mass": 0.05, "steps": [0]},
    }
    path = tmp_path / "model.json"
    path.write_text(json.dumps(spec))
    model = load_scripted_model(path)
    assert isinstance(model, ScriptedModel)
    cands = {c.token_id: c.prob for c in model.top_candidates(_session(model), 10)}
    assert cands["zzz "] == pytest.approx(0.05)


def test_load_scripted_model_router(tmp_path):
    spec = {
        "routes": [{"match": "alpha", "paths": [{"query": QUERY_A}]}],
        "default": {"paths": [{"query": QUERY_B}]},
    }
    path = tmp_path / "router.json"
    path.write_text(json.dumps(spec))
    model = load_scripted_model(path)
    assert isinstance(model, ScriptedRouter)


def test_load_scripted_model_bad_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ProtocolError):
        load_scripted_model(path)
    path.write_text(json.dumps({"paths": [{"weight": 1.0}]}))
    with pytest.raises(ProtocolError):
        load_scripted_model(path)


# -- HTTP client ------------------------------------------------------------


class _CannedHandler(BaseHTTPRequestHandler):
    payload: dict = {}
    requests_seen: list[dict] = []
    status = 200

    def do_HEAD(self):
        self.send_response(200)
        self.end_headers()

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length))
        type(self).requests_seen.append(
            {"body": body, "auth": self.headers.get("Authorization")}
        )
        self.send_response(type(self).status)
        self.send_header("Content-Type", "application/json")
        self.end_headers()
        self.wfile.write(json.dumps(type(self).payload).encode())

    def log_message(self, *args):
        pass


@pytest.fixture()
def canned_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _CannedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _CannedHandler.requests_seen = []
    _CannedHandler.status = 200
    yield f"http://127.0.0.1:{server.server_port}/complete"
    server.shutdown()
    thread.join()


def test_http_model_round_trip(canned_server):
    _CannedHandler.payload = {
        "candidates": [
            {"text": "SELECT ", "logprob": math.log(0.7)},
            {"text": "WITH ", "logprob": math.log(0.1)},
        ],
        "eos_logprob": math.log(0.2),
    }
    model = HttpCompletionModel(canned_server, auth_token="sesame")
    session = model.start_session("the task")
    cands = model.top_candidates(
        GenerationSession(session.task_text, ("SELECT ",)), 3
    )
    assert [c.token_id for c in cands] == ["SELECT ", EOS_TOKEN_ID, "WITH "]
    assert cands[0].prob == pytest.approx(0.7)
    assert cands[1].surface == ""
    seen = _CannedHandler.requests_seen[-1]
    assert seen["body"] == {"task": "the task", "prefix": "SELECT ", "k": 3}
    assert seen["auth"] == "Bearer sesame"


def test_http_model_rejects_bad_payloads(canned_server):
    model = HttpCompletionModel(canned_server)
    session = model.start_session("t")
    for payload in (
        {"no_candidates": []},
        {"candidates": [{"text": "a"}]},
        {"candidates": [{"text": "a", "logprob": 1.0}]},  # prob > 1
    ):
        _CannedHandler.payload = payload
        with pytest.raises(ProtocolError):
            model.top_candidates(session, 2)
    _CannedHandler.payload = {"candidates": []}
    _CannedHandler.status = 500
    with pytest.raises(ProtocolError):
        model.top_candidates(session, 2)


def test_http_model_unreachable_host():
    model = HttpCompletionModel("http://127.0.0.1:1/nothing", timeout=0.2)
    with pytest.raises(AdapterUnavailable):
        model.start_session("t")
