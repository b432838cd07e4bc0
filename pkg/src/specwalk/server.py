"""TCP server exposing any in-process oracle over the NDJSON wire protocol.

Lets the remote client path be exercised end to end without any external
model runtime: serve a NearestCentroidOracle built from a dataset manifest
and point RemoteOracle at it.  Connections are handled on daemon threads;
requests within one connection are answered strictly in order.
"""
from __future__ import annotations

import socketserver
import threading

from . import protocol
from .geometry import CloudShapeError, PointCloud
from .oracle import HardLabelOracle

import numpy as np


class _OracleRequestHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        while True:
            line = self.rfile.readline(protocol.MAX_LINE_BYTES)
            if not line:
                return
            if line.strip() == b"":
                continue
            self.wfile.write(protocol.encode_message(self._respond(line)))
            self.wfile.flush()

    def _respond(self, line: bytes) -> dict:
        oracle: HardLabelOracle = self.server.oracle  # type: ignore[attr-defined]
        rid = 0
        try:
            obj = protocol.decode_message(line)
            rid = obj.get("id") if isinstance(obj.get("id"), int) else 0
            rid, op, points = protocol.parse_request(obj)
        except protocol.ProtocolViolation as exc:
            return protocol.error_response(rid, str(exc))
        if op == "info":
            return protocol.info_response(rid, oracle.class_count, oracle.name)
        try:
            cloud = PointCloud(np.asarray(points, dtype=np.float64))
            label = oracle.classify(cloud)
        except (CloudShapeError, ValueError) as exc:
            return protocol.error_response(rid, f"bad point cloud: {exc}")
        except Exception as exc:  # model failure must not kill the connection
            return protocol.error_response(rid, f"classification failed: {exc}")
        return protocol.label_response(rid, label)


class OracleServer(socketserver.ThreadingTCPServer):
    """Threaded NDJSON oracle server bound to (host, port); port 0 auto-picks."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, oracle: HardLabelOracle, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _OracleRequestHandler)
        self.oracle = oracle

    @property
    def port(self) -> int:
        return self.server_address[1]


def start_background_server(oracle: HardLabelOracle, host: str = "127.0.0.1",
                            port: int = 0) -> tuple[OracleServer, threading.Thread]:
    """Start an OracleServer on a daemon thread; caller shuts it down."""
    server = OracleServer(oracle, host=host, port=port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
