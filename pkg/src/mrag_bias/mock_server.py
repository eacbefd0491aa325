"""HTTP front-end hosting :class:`MockServices` for integration tests."""

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from mrag_bias.exceptions import ProtocolError
from mrag_bias.io import dumps

logger = logging.getLogger(__name__)


def _handler_for(services):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("mock-serve: " + fmt, *args)

        def _reply(self, status, payload):
            body = dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            try:
                request = json.loads(self.rfile.read(length).decode("utf-8"))
                response = services.dispatch(self.path, request)
            except (ValueError, KeyError, TypeError, ProtocolError) as exc:
                self._reply(400, {"error": str(exc)})
                return
            self._reply(200, response)

    return Handler


def make_server(services, host="127.0.0.1", port=0):
    """Bind (port 0 picks a free port); call ``serve_forever`` to start."""
    server = ThreadingHTTPServer((host, port), _handler_for(services))
    server.daemon_threads = True
    return server


def serve_in_thread(services, host="127.0.0.1", port=0):
    """Start a server on a daemon thread; returns ``(server, base_url)``."""
    server = make_server(services, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{host}:{server.server_address[1]}"
