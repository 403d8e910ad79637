"""Local stand-ins for a SPARQL endpoint and a chat-completions service.

Both run an ``http.server`` on 127.0.0.1 in a background thread and count
concurrent connections so tests can check in-flight bounds.  The SPARQL stub
evaluates real queries over Turtle files with rdflib.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Iterable
from urllib.parse import parse_qs, urlparse

import rdflib
from rdflib.namespace import OWL, RDF, RDFS, XSD

from .evaluation import RESULTS_JSON


class _Counter:
    def __init__(self):
        self.lock = threading.Lock()
        self.current = 0
        self.max_seen = 0
        self.total = 0

    def __enter__(self):
        with self.lock:
            self.current += 1
            self.total += 1
            self.max_seen = max(self.max_seen, self.current)

    def __exit__(self, *exc):
        with self.lock:
            self.current -= 1


class _StubServer:
    handler_cls: type

    def __init__(self, host: str = "127.0.0.1", port: int = 0, delay: float = 0.0):
        self.delay = delay
        self.counter = _Counter()
        self.log: list[dict] = []
        self._log_lock = threading.Lock()
        handler = type("Handler", (self.handler_cls,), {"stub": self})
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address[:2]
        return f"http://{host}:{port}"

    @property
    def max_concurrency(self) -> int:
        return self.counter.max_seen

    def record(self, entry: dict) -> None:
        with self._log_lock:
            self.log.append(entry)

    def start(self):
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def wait(self):
        if self._thread is not None:
            self._thread.join()

    def stop(self):
        self.httpd.shutdown()
        self.httpd.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()


class _Handler(BaseHTTPRequestHandler):
    stub: _StubServer
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, body: bytes, ctype: str):
        self.send_response(status)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _body(self) -> bytes:
        n = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(n) if n else b""


class _SparqlHandler(_Handler):
    def do_GET(self):
        q = parse_qs(urlparse(self.path).query).get("query", [""])[0]
        self._answer(q)

    def do_POST(self):
        body = self._body().decode("utf-8")
        ctype = self.headers.get("Content-Type", "")
        if ctype.startswith("application/sparql-query"):
            q = body
        else:
            q = parse_qs(body).get("query", [""])[0]
        self._answer(q)

    def _answer(self, query: str):
        stub: StubSparqlServer = self.stub  # type: ignore[assignment]
        with stub.counter:
            if stub.delay:
                time.sleep(stub.delay)
            stub.record({"query": query})
            status, payload = stub.evaluate(query)
            if status != 200:
                self._send(status, payload.encode("utf-8"), "text/plain; charset=utf-8")
            else:
                self._send(200, payload.encode("utf-8"), RESULTS_JSON)


class StubSparqlServer(_StubServer):
    """SPARQL protocol endpoint over one rdflib graph.

    ``prefixes`` are predefined for every query, the way public endpoints
    predefine their usual prefixes.
    """

    handler_cls = _SparqlHandler

    def __init__(
        self,
        graph_files: Iterable[str | Path] = (),
        *,
        graph: rdflib.Graph | None = None,
        prefixes: dict[str, str] | None = None,
        **kw,
    ):
        self.graph = graph if graph is not None else rdflib.Graph()
        for f in graph_files:
            self.graph.parse(str(f), format="turtle")
        self.prefixes = {"rdf": str(RDF), "rdfs": str(RDFS), "owl": str(OWL), "xsd": str(XSD)}
        self.prefixes.update(prefixes or {})
        self._eval_lock = threading.Lock()
        super().__init__(**kw)

    def _with_prefixes(self, query: str) -> str:
        # rdflib keeps one prefix per namespace (the last one bound), so aliases
        # such as dbr/res are folded onto one name before the prologue is added
        declared = {m.lower() for m in re.findall(r"(?i)PREFIX\s+([\w-]*):", query)}
        used = set(re.findall(r"(?<![\w<#/])([A-Za-z][\w-]*):(?!//)", query))
        canonical: dict[str, str] = {}
        head = []
        for name, ns in self.prefixes.items():
            if name.lower() in declared or name not in used:
                continue
            if ns in canonical:
                query = re.sub(rf"(?<![\w<#/]){re.escape(name)}:", canonical[ns] + ":", query)
                continue
            canonical[ns] = name
            head.append(f"PREFIX {name}: <{ns}>\n")
        return "".join(head) + query

    def evaluate(self, query: str) -> tuple[int, str]:
        if not query.strip():
            return 400, "missing query"
        try:
            with self._eval_lock:
                result = self.graph.query(self._with_prefixes(query))
                data = result.serialize(format="json")
        except Exception as exc:  # rdflib raises pyparsing and assorted errors
            return 400, f"query rejected: {type(exc).__name__}: {exc}"
        return 200, data.decode("utf-8") if isinstance(data, bytes) else data


class _ChatHandler(_Handler):
    def do_POST(self):
        stub: StubChatServer = self.stub  # type: ignore[assignment]
        with stub.counter:
            if stub.delay:
                time.sleep(stub.delay)
            try:
                payload = json.loads(self._body() or b"{}")
            except ValueError:
                self._send(400, b"bad json", "text/plain")
                return
            stub.record(payload)
            status, text = stub.respond(payload)
            if status != 200:
                self._send(status, text.encode("utf-8"), "text/plain; charset=utf-8")
                return
            body = {
                "id": "stub-" + hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12],
                "object": "chat.completion",
                "model": payload.get("model"),
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 0, "completion_tokens": len(text.split()), "total_tokens": len(text.split())},
            }
            self._send(200, json.dumps(body).encode("utf-8"), "application/json")


class StubChatServer(_StubServer):
    """Chat-completions endpoint answering from ``responder(payload) -> text``.

    The responder may also return ``(status, text)`` to simulate failures.
    """

    handler_cls = _ChatHandler

    def __init__(self, responder: Callable[[dict], "str | tuple[int, str]"] | None = None, **kw):
        self.responder = responder or (lambda payload: "<sparql>ASK { ?s ?p ?o }</sparql>")
        super().__init__(**kw)

    def respond(self, payload: dict) -> tuple[int, str]:
        out = self.responder(payload)
        if isinstance(out, tuple):
            return out
        return 200, out
