"""HTTP client behavior against live in-process stubs: happy paths,
caching, and the full catalogue of ways an endpoint can go wrong."""

import threading

import pytest

from cfgdecode import ConfigError, ProtocolError, TransportError
from cfgdecode.clients import LlmClient, NliClient, resolve_timeout

from conftest import Reply


class TestNliClientHappyPath:
    def test_scores_flow_through(self, nli_stub):
        client = NliClient(nli_stub.url)
        d = client.score("premise text", "hypothesis text")
        assert 0.0 <= d <= 1.0

    def test_identical_pairs_hit_the_cache(self, nli_stub):
        client = NliClient(nli_stub.url)
        a = client.score("p", "h")
        b = client.score("p", "h")
        assert a == b
        assert len(nli_stub.requests) == 1

    def test_distinct_pairs_miss_the_cache(self, nli_stub):
        client = NliClient(nli_stub.url)
        client.score("p", "h1")
        client.score("p", "h2")
        assert len(nli_stub.requests) == 2

    def test_cache_file_survives_client_restart(self, nli_stub, tmp_path):
        path = str(tmp_path / "nli-cache.jsonl")
        a = NliClient(nli_stub.url, cache_path=path).score("p", "h")
        # fresh client, same file: no second request
        b = NliClient(nli_stub.url, cache_path=path).score("p", "h")
        assert a == b
        assert len(nli_stub.requests) == 1

    def test_corrupt_cache_lines_are_skipped(self, nli_stub, tmp_path):
        path = tmp_path / "nli-cache.jsonl"
        path.write_text('{"key": "x", "distance"\nnot json\n')
        client = NliClient(nli_stub.url, cache_path=str(path))
        assert 0.0 <= client.score("p", "h") <= 1.0

    def test_concurrent_misses_for_one_key_coalesce(self, make_stub):
        seen = []

        def responder(payload):
            seen.append(payload)
            return Reply(json_body={"distance": 0.4}, delay=0.15)

        stub = make_stub(responder)
        client = NliClient(stub.url)
        results = []
        threads = [
            threading.Thread(target=lambda: results.append(client.score("p", "h")))
            for _ in range(8)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert results == [0.4] * 8
        assert len(seen) == 1


class TestNliClientFaults:
    def test_out_of_range_is_clamped_with_warning(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"distance": 1.25}))
        client = NliClient(stub.url)
        with pytest.warns(UserWarning, match="clamping"):
            assert client.score("p", "h") == 1.0

    def test_negative_clamps_to_zero(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"distance": -0.2}))
        with pytest.warns(UserWarning):
            assert NliClient(stub.url).score("p", "h") == 0.0

    def test_missing_field_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"score": 0.5}))
        with pytest.raises(ProtocolError, match="lacks 'distance'"):
            NliClient(stub.url).score("p", "h")

    def test_non_numeric_field_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"distance": "big"}))
        with pytest.raises(ProtocolError, match="not a number"):
            NliClient(stub.url).score("p", "h")

    def test_nan_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(raw=b'{"distance": NaN}'))
        with pytest.raises(ProtocolError):
            NliClient(stub.url).score("p", "h")

    def test_http_error_status_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"err": "boom"}, status=500))
        with pytest.raises(ProtocolError, match="HTTP 500"):
            NliClient(stub.url).score("p", "h")

    def test_non_json_body_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(raw=b"<html>oops</html>"))
        with pytest.raises(ProtocolError, match="non-JSON"):
            NliClient(stub.url).score("p", "h")

    def test_non_object_json_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(raw=b"[1, 2]"))
        with pytest.raises(ProtocolError, match="non-object"):
            NliClient(stub.url).score("p", "h")

    def test_connection_refused_is_transport_error(self):
        client = NliClient("http://127.0.0.1:9/")  # discard port: nothing listens
        with pytest.raises(TransportError):
            client.score("p", "h")

    def test_slow_endpoint_times_out_as_transport_error(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"distance": 0.5}, delay=2.0))
        client = NliClient(stub.url, timeout=0.2)
        with pytest.raises(TransportError):
            client.score("p", "h")

    def test_failed_fetch_does_not_poison_the_key(self, make_stub):
        """After a failure the next call for the same key retries upstream."""
        state = {"n": 0}

        def responder(payload):
            state["n"] += 1
            if state["n"] == 1:
                return Reply(json_body={}, status=500)
            return Reply(json_body={"distance": 0.3})

        stub = make_stub(responder)
        client = NliClient(stub.url)
        with pytest.raises(ProtocolError):
            client.score("p", "h")
        assert client.score("p", "h") == 0.3


class TestLlmClient:
    def test_text_flows_through(self, llm_stub_factory):
        stub = llm_stub_factory(["Low"])
        assert LlmClient(stub.url).complete("rate this") == "Low"

    def test_missing_text_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"answer": "Low"}))
        with pytest.raises(ProtocolError, match="lacks 'text'"):
            LlmClient(stub.url).complete("rate this")

    def test_non_string_text_is_protocol_error(self, make_stub):
        stub = make_stub(lambda p: Reply(json_body={"text": 3}))
        with pytest.raises(ProtocolError, match="not a string"):
            LlmClient(stub.url).complete("rate this")

    def test_prompt_is_sent_verbatim(self, llm_stub_factory):
        stub = llm_stub_factory(["Medium"])
        LlmClient(stub.url).complete("exact prompt body")
        assert stub.requests == [{"prompt": "exact prompt body"}]


class TestConfiguration:
    def test_url_from_environment(self, nli_stub, monkeypatch):
        monkeypatch.setenv("CFGDECODE_NLI_URL", nli_stub.url)
        assert 0.0 <= NliClient().score("p", "h") <= 1.0

    def test_no_url_anywhere_is_config_error(self, monkeypatch):
        monkeypatch.delenv("CFGDECODE_NLI_URL", raising=False)
        with pytest.raises(ConfigError, match="CFGDECODE_NLI_URL"):
            NliClient()

    def test_timeout_from_environment(self, monkeypatch):
        monkeypatch.setenv("CFGDECODE_HTTP_TIMEOUT", "3.5")
        assert resolve_timeout() == 3.5

    def test_bad_timeout_env_is_config_error(self, monkeypatch):
        monkeypatch.setenv("CFGDECODE_HTTP_TIMEOUT", "fast")
        with pytest.raises(ConfigError):
            resolve_timeout()

    def test_non_positive_timeout_rejected(self):
        with pytest.raises(ConfigError):
            resolve_timeout(0.0)

    def test_api_key_header_is_attached(self, make_stub, monkeypatch):
        # the stub can't see headers through the payload, so check the
        # client's own header table
        monkeypatch.setenv("CFGDECODE_API_KEY", "sekrit")
        stub = make_stub(lambda p: Reply(json_body={"distance": 0.1}))
        client = NliClient(stub.url)
        assert client._endpoint._headers["Authorization"] == "Bearer sekrit"
