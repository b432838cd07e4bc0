/**
 * NDJSON oracle wire protocol: framing, canonical encoding, request parsing.
 *
 * One UTF-8 JSON object per line.  The server echoes each request id
 * verbatim and answers strictly in order per connection.  Responses carry
 * integers only (ids, labels, class counts), so the canonical form below
 * is byte-identical across implementations regardless of how they print
 * floating point.
 *
 * Request forms:
 *     {"id": N, "op": "info"}
 *     {"id": N, "op": "classify", "points": [[x, y, z], ...]}
 * Response forms:
 *     {"id": N, "classes": C, "name": "..."}
 *     {"id": N, "label": L}
 *     {"id": N, "error": "message"}
 */

export const MAX_LINE_BYTES = 64 * 1024 * 1024;

export class ProtocolViolation extends Error {}

export type Request =
  | { id: number; op: "info" }
  | { id: number; op: "classify"; points: number[][] };

export type Response =
  | { id: number; label: number }
  | { id: number; classes: number; name: string }
  | { id: number; error: string };

/** Serialize a message as one canonical NDJSON line: keys sorted, no
 * whitespace, non-finite numbers rejected. */
export function encodeMessage(obj: Record<string, unknown>): string {
  return canonicalJson(obj) + "\n";
}

function canonicalJson(value: unknown): string {
  if (value === null) return "null";
  if (typeof value === "number") {
    if (!Number.isFinite(value)) {
      throw new ProtocolViolation("non-finite number cannot cross the wire");
    }
    return JSON.stringify(value);
  }
  if (typeof value === "string" || typeof value === "boolean") {
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalJson).join(",") + "]";
  }
  if (typeof value === "object") {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => JSON.stringify(k) + ":" + canonicalJson(v));
    return "{" + entries.join(",") + "}";
  }
  throw new ProtocolViolation(`cannot encode value of type ${typeof value}`);
}

/** Parse one line into a JSON object; anything else is a violation. */
export function decodeMessage(line: string): Record<string, unknown> {
  let obj: unknown;
  try {
    obj = JSON.parse(line);
  } catch (err) {
    throw new ProtocolViolation(`malformed JSON line: ${(err as Error).message}`);
  }
  if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
    throw new ProtocolViolation("message must be a JSON object");
  }
  return obj as Record<string, unknown>;
}

function checkId(obj: Record<string, unknown>): number {
  const rid = obj["id"];
  if (typeof rid !== "number" || !Number.isInteger(rid) || rid < 0) {
    throw new ProtocolViolation(`message id must be a non-negative integer, got ${JSON.stringify(rid)}`);
  }
  return rid;
}

/** Recover an id for error responses from a possibly broken message; falls
 * back to 0 when none is usable. */
export function recoverId(line: string): number {
  try {
    const obj = decodeMessage(line);
    const rid = obj["id"];
    if (typeof rid === "number" && Number.isInteger(rid) && rid >= 0) return rid;
  } catch {
    // unparseable line: no id to echo
  }
  return 0;
}

/** Validate a request object against the schema; extra fields are errors. */
export function parseRequest(obj: Record<string, unknown>): Request {
  const rid = checkId(obj);
  const op = obj["op"];
  if (op === "info") {
    const extra = Object.keys(obj).filter((k) => k !== "id" && k !== "op");
    if (extra.length > 0) {
      throw new ProtocolViolation(`unexpected fields in info request: ${extra.sort().join(",")}`);
    }
    return { id: rid, op: "info" };
  }
  if (op === "classify") {
    const extra = Object.keys(obj).filter((k) => k !== "id" && k !== "op" && k !== "points");
    if (extra.length > 0) {
      throw new ProtocolViolation(`unexpected fields in classify request: ${extra.sort().join(",")}`);
    }
    const points = obj["points"];
    if (!Array.isArray(points) || points.length === 0) {
      throw new ProtocolViolation("classify request needs a non-empty points list");
    }
    for (const row of points) {
      if (!Array.isArray(row) || row.length !== 3) {
        throw new ProtocolViolation("each point must be a 3-element list");
      }
      for (const v of row) {
        if (typeof v !== "number" || !Number.isFinite(v)) {
          throw new ProtocolViolation("point coordinates must be finite numbers");
        }
      }
    }
    return { id: rid, op: "classify", points: points as number[][] };
  }
  throw new ProtocolViolation(`unknown op ${JSON.stringify(op)}`);
}

export function labelResponse(id: number, label: number): Response {
  return { id, label };
}

export function infoResponse(id: number, classes: number, name: string): Response {
  return { id, classes, name };
}

export function errorResponse(id: number, message: string): Response {
  return { id, error: message };
}

/**
 * Incremental newline splitter for a TCP byte stream.  Feeding data returns
 * the completed lines; a trailing fragment waits for the rest.
 */
export class LineSplitter {
  private buffer = "";

  feed(chunk: string): string[] {
    this.buffer += chunk;
    if (this.buffer.length > MAX_LINE_BYTES) {
      throw new ProtocolViolation("line exceeds maximum length");
    }
    const parts = this.buffer.split("\n");
    this.buffer = parts.pop() ?? "";
    return parts.filter((line) => line.trim() !== "");
  }
}
