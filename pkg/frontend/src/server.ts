/**
 * TCP server answering oracle protocol requests from a Classifier.
 *
 * Per connection, requests are answered strictly in order.  A malformed
 * line produces an error response (echoing the request id when one is
 * recoverable) and the connection stays open; only transport errors drop
 * it.  Responses never contain anything beyond id plus label, classes/name,
 * or error: label-only serving is the entire point.
 */
import * as net from "net";

import {
  LineSplitter,
  ProtocolViolation,
  Response,
  encodeMessage,
  errorResponse,
  infoResponse,
  labelResponse,
  parseRequest,
  decodeMessage,
  recoverId,
} from "./protocol";
import { Classifier } from "./classifier";

export interface ServerConfig {
  host?: string;
  port?: number;
  /** Accepted for config compatibility; only "cpu" exists here. */
  device?: string;
  maxConnections?: number;
}

export interface RunningServer {
  server: net.Server;
  address: { host: string; port: number };
  close(): Promise<void>;
}

export function respondTo(classifier: Classifier, line: string): Response {
  let rid = 0;
  try {
    const obj = decodeMessage(line);
    rid = recoverId(line);
    const request = parseRequest(obj);
    if (request.op === "info") {
      return infoResponse(request.id, classifier.classes, classifier.name);
    }
    let label: number;
    try {
      label = classifier.classify(request.points);
    } catch (err) {
      return errorResponse(request.id, `classification failed: ${(err as Error).message}`);
    }
    return labelResponse(request.id, label);
  } catch (err) {
    if (err instanceof ProtocolViolation) {
      return errorResponse(rid, err.message);
    }
    throw err;
  }
}

export async function serve(classifier: Classifier, config: ServerConfig = {}): Promise<RunningServer> {
  const host = config.host ?? "127.0.0.1";
  const port = config.port ?? 0;
  if (config.device !== undefined && config.device !== "cpu") {
    throw new Error(`unsupported device ${JSON.stringify(config.device)}; this server is cpu-only`);
  }
  const maxConnections = config.maxConnections ?? 32;
  let active = 0;

  const server = net.createServer((socket) => {
    if (active >= maxConnections) {
      socket.write(encodeMessage(errorResponse(0, "too many connections")));
      socket.end();
      return;
    }
    active += 1;
    socket.setEncoding("utf-8");
    const splitter = new LineSplitter();

    socket.on("data", (chunk: string) => {
      let lines: string[];
      try {
        lines = splitter.feed(chunk);
      } catch (err) {
        socket.write(encodeMessage(errorResponse(0, (err as Error).message)));
        socket.destroy();
        return;
      }
      for (const line of lines) {
        socket.write(encodeMessage(respondTo(classifier, line)));
      }
    });
    socket.on("close", () => {
      active -= 1;
    });
    socket.on("error", () => {
      // transport failure; close handler does the bookkeeping
    });
  });

  return new Promise((resolve, reject) => {
    server.once("error", reject);
    server.listen(port, host, () => {
      const addr = server.address() as net.AddressInfo;
      resolve({
        server,
        address: { host: addr.address, port: addr.port },
        close: () =>
          new Promise<void>((done) => {
            server.close(() => done());
          }),
      });
    });
  });
}
