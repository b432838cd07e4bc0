"""NDJSON-over-TCP oracle wire protocol: framing and message schemas.

One UTF-8 JSON object per line.  Requests carry an unsigned id the server
echoes verbatim; responses per connection arrive in request order.  Only
labels ever cross the wire, never scores or logits, which keeps remote
oracles exactly as opaque as in-process hard-label ones.

Request forms:
    {"id": N, "op": "info"}
    {"id": N, "op": "classify", "points": [[x, y, z], ...]}
Response forms:
    {"id": N, "classes": C, "name": "..."}
    {"id": N, "label": L}
    {"id": N, "error": "message"}
"""
from __future__ import annotations

import json
from typing import Any

MAX_LINE_BYTES = 64 * 1024 * 1024


class ProtocolViolation(ValueError):
    """A wire message does not conform to the protocol schema."""


def encode_message(obj: dict[str, Any]) -> bytes:
    """Serialize a message to one canonical NDJSON line (sorted keys)."""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    if "\n" in text:  # pragma: no cover - json never emits raw newlines
        raise ProtocolViolation("encoded message contains a newline")
    return text.encode("utf-8") + b"\n"


def decode_message(line: bytes) -> dict[str, Any]:
    """Parse one NDJSON line into a dict; malformed input raises."""
    try:
        obj = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"malformed JSON line: {exc}") from exc
    if not isinstance(obj, dict):
        raise ProtocolViolation("message must be a JSON object")
    return obj


def _check_id(obj: dict[str, Any]) -> int:
    rid = obj.get("id")
    if not isinstance(rid, int) or isinstance(rid, bool) or rid < 0:
        raise ProtocolViolation(f"message id must be a non-negative integer, got {rid!r}")
    return rid


def info_request(request_id: int) -> dict[str, Any]:
    return {"id": request_id, "op": "info"}


def classify_request(request_id: int, points) -> dict[str, Any]:
    return {"id": request_id, "op": "classify",
            "points": [[float(x), float(y), float(z)] for x, y, z in points]}


def parse_request(obj: dict[str, Any]) -> tuple[int, str, Any]:
    """Validate a request object; returns (id, op, points-or-None)."""
    rid = _check_id(obj)
    op = obj.get("op")
    if op == "info":
        extra = set(obj) - {"id", "op"}
        if extra:
            raise ProtocolViolation(f"unexpected fields in info request: {sorted(extra)}")
        return rid, "info", None
    if op == "classify":
        extra = set(obj) - {"id", "op", "points"}
        if extra:
            raise ProtocolViolation(f"unexpected fields in classify request: {sorted(extra)}")
        points = obj.get("points")
        if not isinstance(points, list) or not points:
            raise ProtocolViolation("classify request needs a non-empty points list")
        for row in points:
            if not isinstance(row, list) or len(row) != 3:
                raise ProtocolViolation("each point must be a 3-element list")
            for v in row:
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ProtocolViolation("point coordinates must be numbers")
        return rid, "classify", points
    raise ProtocolViolation(f"unknown op {op!r}")


def parse_label_response(obj: dict[str, Any], expect_id: int) -> int:
    """Strictly validate a classify response. Any extra field is rejected:
    a server leaking scores alongside the label is itself a violation."""
    rid = _check_id(obj)
    if rid != expect_id:
        raise ProtocolViolation(f"response id {rid} does not match request id {expect_id}")
    if "error" in obj:
        raise ProtocolViolation(f"server error: {obj['error']}")
    extra = set(obj) - {"id", "label"}
    if extra:
        raise ProtocolViolation(f"unexpected fields in classify response: {sorted(extra)}")
    label = obj.get("label")
    if not isinstance(label, int) or isinstance(label, bool):
        raise ProtocolViolation(f"label must be an integer, got {label!r}")
    return label


def parse_info_response(obj: dict[str, Any], expect_id: int) -> tuple[int, str]:
    """Strictly validate an info response; returns (classes, name)."""
    rid = _check_id(obj)
    if rid != expect_id:
        raise ProtocolViolation(f"response id {rid} does not match request id {expect_id}")
    if "error" in obj:
        raise ProtocolViolation(f"server error: {obj['error']}")
    extra = set(obj) - {"id", "classes", "name"}
    if extra:
        raise ProtocolViolation(f"unexpected fields in info response: {sorted(extra)}")
    classes = obj.get("classes")
    name = obj.get("name")
    if not isinstance(classes, int) or isinstance(classes, bool) or classes < 2:
        raise ProtocolViolation(f"classes must be an integer >= 2, got {classes!r}")
    if not isinstance(name, str):
        raise ProtocolViolation("name must be a string")
    return classes, name


def label_response(request_id: int, label: int) -> dict[str, Any]:
    return {"id": request_id, "label": int(label)}


def info_response(request_id: int, classes: int, name: str) -> dict[str, Any]:
    return {"id": request_id, "classes": int(classes), "name": name}


def error_response(request_id: int, message: str) -> dict[str, Any]:
    return {"id": request_id, "error": message}
