/**
 * Canned-label server for protocol conformance tests.
 *
 * Replies to classify requests with labels from a fixed script, in order,
 * regardless of the points sent.  No model involved: the point is to pin
 * down the wire behaviour so a client can be tested against known bytes.
 */
import { Classifier } from "./classifier";
import { RunningServer, ServerConfig, serve } from "./server";

export class ScriptedClassifier implements Classifier {
  readonly name = "scripted";
  readonly classes: number;
  private readonly script: number[];
  private cursor = 0;

  constructor(script: number[], classes?: number) {
    if (script.length === 0) {
      throw new Error("script must be nonempty");
    }
    for (const label of script) {
      if (!Number.isInteger(label) || label < 0) {
        throw new Error(`script labels must be nonnegative integers, got ${JSON.stringify(label)}`);
      }
    }
    this.script = [...script];
    this.classes = classes ?? Math.max(...script) + 1;
    if (!Number.isInteger(this.classes) || this.classes < Math.max(...script) + 1) {
      throw new Error("classes must cover every scripted label");
    }
  }

  /** Labels remaining before the script runs dry. */
  get remaining(): number {
    return this.script.length - this.cursor;
  }

  classify(_points: number[][]): number {
    if (this.cursor >= this.script.length) {
      throw new Error("script exhausted");
    }
    const label = this.script[this.cursor];
    this.cursor += 1;
    return label;
  }
}

export function serveScripted(
  script: number[],
  config: ServerConfig = {},
  classes?: number,
): Promise<RunningServer> {
  return serve(new ScriptedClassifier(script, classes), config);
}
