"""HTTP transport for trigger nodes: /propose, /sign, /confirm, /enact, /status.

Envelopes travel as JSON; signed bytes stay the canonical binary encoding.
Each node's message handling is serialised behind one lock, matching the
one-ordered-queue-per-node concurrency model. The in-process transport remains
the default for deterministic tests; this module exists for networked runs.
"""

from __future__ import annotations

import json
import threading
import urllib.error
import urllib.request
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .machine import TaskRequest
from .trigger import TriggerNode
from .wire import ChannelMessage, MessageKind


class HttpTransport:
    """Client side: deliver protocol messages to peer endpoints."""

    def __init__(self, peer_endpoints: dict[str, str], timeout: float = 2.0):
        self.peer_endpoints = peer_endpoints
        self.timeout = timeout

    def request(self, target_role: str, message: ChannelMessage) -> ChannelMessage | None:
        base = self.peer_endpoints.get(target_role)
        if base is None:
            return None
        path = {
            MessageKind.PROPOSE: "/propose",
            MessageKind.SIGN: "/sign",
            MessageKind.CONFIRM: "/confirm",
        }[message.kind]
        req = urllib.request.Request(
            base.rstrip("/") + path,
            data=message.to_wire().encode("utf-8"),
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = resp.read()
                if resp.status == 200 and body:
                    return ChannelMessage.from_wire(body.decode("utf-8"))
                return None
        except (urllib.error.URLError, TimeoutError, ConnectionError, OSError):
            return None


class NodeServer:
    """Server side: expose one trigger node over local HTTP."""

    def __init__(self, node: TriggerNode, host: str = "127.0.0.1", port: int = 0):
        self.node = node
        self.lock = threading.Lock()
        handler = self._make_handler()
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self.port = self.httpd.server_address[1]
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._watcher: threading.Thread | None = None
        self._stop = threading.Event()

    @property
    def endpoint(self) -> str:
        return f"http://{self.httpd.server_address[0]}:{self.port}"

    def start(self) -> None:
        self.thread.start()

    def start_watcher(self) -> None:
        """Background chain polling at the node's configured interval."""

        def loop():
            while not self._stop.wait(self.node.config.poll_interval):
                with self.lock:
                    self.node.poll_chain()

        self._watcher = threading.Thread(target=loop, daemon=True)
        self._watcher.start()

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # quiet test output
                pass

            def _body(self) -> bytes:
                length = int(self.headers.get("Content-Length", "0"))
                return self.rfile.read(length)

            def _reply(self, status: int, payload: dict | str | None = None) -> None:
                body = b""
                if payload is not None:
                    body = (payload if isinstance(payload, str) else json.dumps(payload)).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/status":
                    with server.lock:
                        self._reply(200, server.node.status().to_wire())
                else:
                    self._reply(404)

            def do_POST(self):
                raw = self._body().decode("utf-8")
                if self.path in ("/propose", "/sign", "/confirm"):
                    try:
                        msg = ChannelMessage.from_wire(raw)
                    except (ValueError, KeyError):
                        self._reply(400)
                        return
                    with server.lock:
                        reply = server.node.handle_message(msg)
                    if reply is not None:
                        self._reply(200, reply.to_wire())
                    else:
                        self._reply(204)
                elif self.path == "/enact":
                    try:
                        data = json.loads(raw)
                        req = TaskRequest(
                            task_id=data["task_id"],
                            requester_role=data.get("requester_role", server.node.role),
                            choice_data=bytes.fromhex(data.get("choice_data", "")),
                        )
                    except (ValueError, KeyError):
                        self._reply(400)
                        return
                    with server.lock:
                        result = server.node.enact(req)
                    self._reply(
                        200,
                        {
                            "status": result.status,
                            "error": result.error,
                            "new_state": None if result.new_state is None else hex(result.new_state),
                        },
                    )
                else:
                    self._reply(404)

        return Handler


def serve_network(nodes: dict[str, TriggerNode], host: str = "127.0.0.1",
                  timeout: float = 10.0) -> dict[str, NodeServer]:
    """Serve every node on an ephemeral port and wire their transports.

    Networked runs default to a longer proposal timeout than the in-process
    2s; pass timeout explicitly to override.
    """
    servers = {role: NodeServer(node, host=host) for role, node in nodes.items()}
    for role, node in nodes.items():
        peers = {r: s.endpoint for r, s in servers.items() if r != role}
        node.transport = HttpTransport(peers, timeout=timeout)
    for server in servers.values():
        server.start()
    return servers
