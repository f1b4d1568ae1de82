import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from egpkit.corpus import CanDoStatement, Sentence, TaggedToken

FIXTURES = Path(__file__).parent / "fixtures"


def tok(form, lemma=None, upos="X", xpos="XX", dep="dep", head=0):
    return TaggedToken(
        form=form,
        lemma=form.lower() if lemma is None else lemma,
        upos=upos,
        xpos=xpos,
        dep=dep,
        head=head,
    )


def sent(text, tokens):
    return Sentence(text=text, tokens=tuple(tokens))


def statement(egp_id=19, level="A2", **overrides):
    fields = dict(
        egp_id=egp_id,
        level=level,
        supercategory="adjectives",
        subcategory="comparatives",
        guideword="FORM",
        statement="Can form irregular comparative adjectives.",
        examples=("What colour do you think is better?",),
        lexical=False,
    )
    fields.update(overrides)
    return CanDoStatement(**fields)


def load_rule_pack():
    data = json.loads((FIXTURES / "rule_pack.json").read_text(encoding="utf-8"))
    pack = {}
    for egp_str, groups in data["constructs"].items():
        pack[int(egp_str)] = {
            key: [
                sent(obj["text"], [TaggedToken(*row) for row in obj["tokens"]])
                for obj in groups[key]
            ]
            for key in ("positive", "negative")
        }
    return pack


class MockCompletionServer:
    """Minimal chat-completions endpoint with scriptable first-token logprobs."""

    def __init__(self):
        self.requests = []
        self.lock = threading.Lock()
        # prompt -> list of (token, logprob); falls back to default_logprobs
        self.responses = {}
        self.default_logprobs = [("Yes", -0.2), ("No", -1.8)]
        self.fail_next = 0  # serve this many 500s before answering
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers.get("Content-Length", 0))
                payload = json.loads(self.rfile.read(length))
                prompt = payload["messages"][0]["content"]
                with server.lock:
                    server.requests.append(payload)
                    if server.fail_next > 0:
                        server.fail_next -= 1
                        self.send_response(500)
                        self.end_headers()
                        return
                    pairs = server.responses.get(prompt, server.default_logprobs)
                body = {
                    "choices": [
                        {
                            "message": {"role": "assistant", "content": pairs[0][0]},
                            "logprobs": {
                                "content": [
                                    {
                                        "token": pairs[0][0],
                                        "logprob": pairs[0][1],
                                        "top_logprobs": [
                                            {"token": t, "logprob": lp} for t, lp in pairs
                                        ],
                                    }
                                ]
                            },
                        }
                    ]
                }
                data = json.dumps(body).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self.thread.start()

    @property
    def base_url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/v1"

    @property
    def request_count(self):
        with self.lock:
            return len(self.requests)

    def close(self):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def mock_llm():
    server = MockCompletionServer()
    yield server
    server.close()
