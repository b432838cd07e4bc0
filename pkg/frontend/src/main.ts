#!/usr/bin/env node
/**
 * Command line entry point.
 *
 * `serve` exposes a checkpointed classifier over the oracle wire protocol;
 * `scripted` serves canned labels for client conformance testing.  Both
 * print a LISTENING line with the bound address once ready, so callers
 * that asked for port 0 can discover the real port.
 */
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { loadCheckpoint, CheckpointError } from "./classifier";
import { serve, RunningServer } from "./server";
import { serveScripted } from "./scripted";

function announce(running: RunningServer): void {
  process.stdout.write(`LISTENING ${running.address.host}:${running.address.port}\n`);
}

function parseLabels(raw: string): number[] {
  const parts = raw.split(",").map((p) => p.trim()).filter((p) => p.length > 0);
  if (parts.length === 0) {
    throw new Error("expected a comma-separated list of labels");
  }
  return parts.map((p) => {
    const label = Number(p);
    if (!Number.isInteger(label) || label < 0) {
      throw new Error(`bad label ${JSON.stringify(p)}`);
    }
    return label;
  });
}

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .scriptName("cloud-label-server")
    .command(
      "serve",
      "serve a checkpointed classifier",
      (y) =>
        y
          .option("checkpoint", { type: "string", demandOption: true, describe: "path to a JSON checkpoint" })
          .option("host", { type: "string", default: "127.0.0.1" })
          .option("port", { type: "number", default: 0, describe: "0 picks a free port" })
          .option("max-conns", { type: "number", default: 32 })
          .option("device", { type: "string", default: "cpu" }),
      async (args) => {
        let classifier;
        try {
          classifier = loadCheckpoint(args.checkpoint);
        } catch (err) {
          if (err instanceof CheckpointError) {
            process.stderr.write(`error: ${err.message}\n`);
            process.exit(2);
          }
          throw err;
        }
        const running = await serve(classifier, {
          host: args.host,
          port: args.port,
          device: args.device,
          maxConnections: args["max-conns"],
        });
        announce(running);
      },
    )
    .command(
      "scripted",
      "serve canned labels in order",
      (y) =>
        y
          .option("labels", { type: "string", demandOption: true, describe: "comma-separated labels, e.g. 7,7,3" })
          .option("host", { type: "string", default: "127.0.0.1" })
          .option("port", { type: "number", default: 0 })
          .option("classes", { type: "number", describe: "class count reported by info; defaults to max label + 1" }),
      async (args) => {
        let script: number[];
        try {
          script = parseLabels(args.labels);
        } catch (err) {
          process.stderr.write(`error: ${(err as Error).message}\n`);
          process.exit(2);
          return;
        }
        const running = await serveScripted(script, { host: args.host, port: args.port }, args.classes);
        announce(running);
      },
    )
    .demandCommand(1, "pick a command: serve or scripted")
    .strict()
    .fail((msg, err) => {
      process.stderr.write(`error: ${msg ?? err?.message}\n`);
      process.exit(1);
    })
    .parseAsync();
}

main().catch((err) => {
  process.stderr.write(`error: ${(err as Error).message}\n`);
  process.exit(1);
});
