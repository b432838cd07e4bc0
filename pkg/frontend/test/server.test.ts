import * as fs from "fs";
import * as net from "net";
import * as os from "os";
import * as path from "path";

import { afterAll, describe, expect, it } from "vitest";

import { buildClassifier, loadCheckpoint } from "../src/classifier";
import { LineSplitter, encodeMessage } from "../src/protocol";
import { ScriptedClassifier, serveScripted } from "../src/scripted";
import { RunningServer, respondTo, serve } from "../src/server";

/** Socket client that hands back response lines one batch at a time. */
class WireClient {
  private lines: string[] = [];
  private pending: (() => boolean)[] = [];
  private splitter = new LineSplitter();

  private constructor(readonly socket: net.Socket) {}

  static connect(port: number): Promise<WireClient> {
    return new Promise((resolve, reject) => {
      const socket = net.createConnection({ port, host: "127.0.0.1" }, () => {
        socket.setEncoding("utf-8");
        const client = new WireClient(socket);
        socket.on("data", (chunk: string) => client.onData(chunk));
        resolve(client);
      });
      socket.once("error", reject);
    });
  }

  private onData(chunk: string): void {
    this.lines.push(...this.splitter.feed(chunk));
    this.pending = this.pending.filter((attempt) => !attempt());
  }

  send(raw: string): void {
    this.socket.write(raw);
  }

  request(obj: Record<string, unknown>): Promise<string> {
    this.send(encodeMessage(obj));
    return this.take(1).then((lines) => lines[0]);
  }

  take(n: number): Promise<string[]> {
    return new Promise((resolve) => {
      const attempt = () => {
        if (this.lines.length >= n) {
          resolve(this.lines.splice(0, n));
          return true;
        }
        return false;
      };
      if (!attempt()) this.pending.push(attempt);
    });
  }

  waitClose(): Promise<void> {
    return new Promise((resolve) => this.socket.once("close", () => resolve()));
  }

  close(): void {
    this.socket.destroy();
  }
}

const running: RunningServer[] = [];
afterAll(async () => {
  for (const r of running) await r.close();
});

async function scriptedServer(script: number[], classes?: number): Promise<RunningServer> {
  const r = await serveScripted(script, {}, classes);
  running.push(r);
  return r;
}

const axisCkpt = {
  kind: "pointnet" as const,
  layers: [
    {
      weights: [
        [1, 0, 0],
        [-1, 0, 0],
      ],
      bias: [0, 0],
    },
  ],
};

describe("serve", () => {
  it("answers the info handshake with exact canonical bytes", async () => {
    const r = await scriptedServer([2, 0], 3);
    const client = await WireClient.connect(r.address.port);
    try {
      expect(await client.request({ id: 0, op: "info" })).toBe(
        '{"classes":3,"id":0,"name":"scripted"}',
      );
    } finally {
      client.close();
    }
  });

  it("classifies an exemplar to its own label and repeats deterministically", async () => {
    const r = await serve(buildClassifier(axisCkpt), {});
    running.push(r);
    const client = await WireClient.connect(r.address.port);
    try {
      const exemplar = { id: 1, op: "classify", points: [[5, 0, 0]] };
      expect(await client.request(exemplar)).toBe('{"id":1,"label":0}');
      expect(await client.request({ ...exemplar, id: 2 })).toBe('{"id":2,"label":0}');
      expect(await client.request({ id: 3, op: "classify", points: [[-5, 0, 0]] })).toBe(
        '{"id":3,"label":1}',
      );
    } finally {
      client.close();
    }
  });

  it("echoes 1000 randomized ids in order", async () => {
    const script = Array.from({ length: 1000 }, (_, i) => i % 5);
    const r = await scriptedServer(script);
    const client = await WireClient.connect(r.address.port);
    try {
      // Cheap deterministic id sequence; randomness quality is irrelevant.
      // The multiplier keeps every product under 2^53 so arithmetic is exact.
      let state = 12345;
      const ids: number[] = [];
      for (let i = 0; i < 1000; i++) {
        state = (state * 48271) % 2147483647;
        ids.push(state);
        client.send(encodeMessage({ id: state, op: "classify", points: [[0, 0, 0]] }));
      }
      const replies = await client.take(1000);
      replies.forEach((line, i) => {
        expect(line).toBe(`{"id":${ids[i]},"label":${i % 5}}`);
      });
    } finally {
      client.close();
    }
  });

  it("keeps the connection after malformed input", async () => {
    const r = await scriptedServer([6], 7);
    const client = await WireClient.connect(r.address.port);
    try {
      client.send("{definitely not json}\n");
      const broken = JSON.parse(await client.take(1).then((l) => l[0]));
      expect(broken.id).toBe(0);
      expect(broken.error).toMatch(/malformed JSON/);

      client.send('{"id": 21, "op": "queries"}\n');
      const badOp = JSON.parse(await client.take(1).then((l) => l[0]));
      expect(badOp.id).toBe(21);
      expect(badOp.error).toMatch(/unknown op/);

      client.send('{"id": 22, "op": "classify", "points": []}\n');
      const badPoints = JSON.parse(await client.take(1).then((l) => l[0]));
      expect(badPoints.id).toBe(22);
      expect(badPoints.error).toMatch(/non-empty points/);

      expect(await client.request({ id: 23, op: "classify", points: [[1, 1, 1]] })).toBe(
        '{"id":23,"label":6}',
      );
    } finally {
      client.close();
    }
  });

  it("treats a newline inside a payload as two broken lines", async () => {
    const r = await scriptedServer([1, 1]);
    const client = await WireClient.connect(r.address.port);
    try {
      client.send('{"id":5,"op":"classify","points":[[0,\n0,0]]}\n');
      const replies = (await client.take(2)).map((l) => JSON.parse(l));
      expect(replies[0].error).toMatch(/malformed JSON/);
      expect(replies[1].error).toMatch(/malformed JSON/);
      // Line framing is the protocol; no heroic reassembly happened.
      expect(replies[0].label).toBeUndefined();
      expect(replies[1].label).toBeUndefined();
    } finally {
      client.close();
    }
  });

  it("never leaks scores or logits onto the wire", async () => {
    const r = await serve(buildClassifier(axisCkpt), {});
    running.push(r);
    const client = await WireClient.connect(r.address.port);
    try {
      const info = JSON.parse(await client.request({ id: 0, op: "info" }));
      expect(Object.keys(info).sort()).toEqual(["classes", "id", "name"]);
      const label = JSON.parse(
        await client.request({ id: 1, op: "classify", points: [[0.5, -0.25, 2.5]] }),
      );
      expect(Object.keys(label).sort()).toEqual(["id", "label"]);
      for (const reply of [info, label]) {
        expect(reply.scores).toBeUndefined();
        expect(reply.logits).toBeUndefined();
      }
    } finally {
      client.close();
    }
  });

  it("turns away connections past the cap", async () => {
    const r = await serve(new ScriptedClassifier([1, 1, 1]), { maxConnections: 1 });
    running.push(r);
    const first = await WireClient.connect(r.address.port);
    try {
      expect(await first.request({ id: 0, op: "info" })).toBe(
        '{"classes":2,"id":0,"name":"scripted"}',
      );
      const second = await WireClient.connect(r.address.port);
      const [line] = await second.take(1);
      expect(line).toBe('{"error":"too many connections","id":0}');
      await second.waitClose();
      // The first connection is unaffected.
      expect(await first.request({ id: 1, op: "classify", points: [[0, 0, 0]] })).toBe(
        '{"id":1,"label":1}',
      );
    } finally {
      first.close();
    }
  });

  it("refuses any device but cpu", async () => {
    await expect(serve(new ScriptedClassifier([0, 0]), { device: "cuda" })).rejects.toThrow(
      /cpu-only/,
    );
  });
});

describe("scripted serving", () => {
  it("plays the script in order then reports exhaustion", async () => {
    const r = await scriptedServer([7]);
    const client = await WireClient.connect(r.address.port);
    try {
      expect(await client.request({ id: 1, op: "classify", points: [[0, 0, 0]] })).toBe(
        '{"id":1,"label":7}',
      );
      const dry = JSON.parse(
        await client.request({ id: 2, op: "classify", points: [[0, 0, 0]] }),
      );
      expect(dry.error).toMatch(/script exhausted/);
      expect(dry.id).toBe(2);
      // Info still works on a dry script.
      expect(await client.request({ id: 3, op: "info" })).toBe(
        '{"classes":8,"id":3,"name":"scripted"}',
      );
    } finally {
      client.close();
    }
  });

  it("consumes one global script across connections", async () => {
    const r = await scriptedServer([4, 9]);
    const a = await WireClient.connect(r.address.port);
    const b = await WireClient.connect(r.address.port);
    try {
      expect(await a.request({ id: 0, op: "classify", points: [[0, 0, 0]] })).toBe(
        '{"id":0,"label":4}',
      );
      expect(await b.request({ id: 0, op: "classify", points: [[0, 0, 0]] })).toBe(
        '{"id":0,"label":9}',
      );
    } finally {
      a.close();
      b.close();
    }
  });

  it("rejects an empty or non-integer script", () => {
    expect(() => new ScriptedClassifier([])).toThrow(/nonempty/);
    expect(() => new ScriptedClassifier([1.5])).toThrow(/nonnegative integers/);
    expect(() => new ScriptedClassifier([-1])).toThrow(/nonnegative integers/);
    expect(() => new ScriptedClassifier([1], 1)).toThrow(/cover every scripted label/);
  });
});

describe("golden transcript", () => {
  it("matches frozen canonical bytes line for line", () => {
    const classifier = new ScriptedClassifier([2, 0], 3);
    const transcript: [string, string][] = [
      ['{"id":0,"op":"info"}', '{"classes":3,"id":0,"name":"scripted"}'],
      ['{"id":1,"op":"classify","points":[[0.5,-0.25,2.5]]}', '{"id":1,"label":2}'],
      ['{"id":2,"op":"classify","points":[[0.5,-0.25,2.5]]}', '{"id":2,"label":0}'],
      [
        '{"id":3,"op":"classify","points":[[0.5,-0.25,2.5]]}',
        '{"error":"classification failed: script exhausted","id":3}',
      ],
    ];
    for (const [request, reply] of transcript) {
      expect(encodeMessage(respondTo(classifier, request))).toBe(reply + "\n");
    }
  });

  it("produces the same bytes over a real socket", async () => {
    const r = await scriptedServer([2, 0], 3);
    const client = await WireClient.connect(r.address.port);
    try {
      client.send('{"id":0,"op":"info"}\n');
      client.send('{"id":1,"op":"classify","points":[[0.5,-0.25,2.5]]}\n');
      client.send('{"id":2,"op":"classify","points":[[0.5,-0.25,2.5]]}\n');
      client.send('{"id":3,"op":"classify","points":[[0.5,-0.25,2.5]]}\n');
      expect(await client.take(4)).toEqual([
        '{"classes":3,"id":0,"name":"scripted"}',
        '{"id":1,"label":2}',
        '{"id":2,"label":0}',
        '{"error":"classification failed: script exhausted","id":3}',
      ]);
    } finally {
      client.close();
    }
  });
});

describe("checkpoint to socket round trip", () => {
  const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "served-"));
  afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

  it("serves a centroid checkpoint written to disk", async () => {
    const p = path.join(tmp, "centroid.json");
    fs.writeFileSync(
      p,
      JSON.stringify({
        kind: "centroid",
        prototypes: [
          { label: 0, points: [[0, 0, 0]] },
          {
            label: 1,
            points: [
              [3, 3, 3],
              [3, 3, 4],
            ],
          },
        ],
      }),
    );
    const r = await serve(loadCheckpoint(p), {});
    running.push(r);
    const client = await WireClient.connect(r.address.port);
    try {
      expect(await client.request({ id: 0, op: "info" })).toBe(
        '{"classes":2,"id":0,"name":"centroid"}',
      );
      expect(
        await client.request({ id: 1, op: "classify", points: [[3, 3, 3.5]] }),
      ).toBe('{"id":1,"label":1}');
    } finally {
      client.close();
    }
  });
});
