/**
 * Checkpoint-driven point cloud classifiers.
 *
 * Two checkpoint kinds cover the serving needs without an ML runtime:
 *
 * "centroid": labeled prototype clouds; classification is nearest chamfer
 * distance, ties to the lower label.
 *
 * "pointnet": a pointwise MLP (3 -> hidden... -> C) evaluated per point,
 * ReLU between layers, followed by a global max pool over points; argmax of
 * the pooled features is the label, ties to the lower index.  This handles
 * clouds of any size and is the shape of network the serving path exists
 * for.
 *
 * Checkpoints are plain JSON so training stacks can export them trivially.
 */
import * as fs from "fs";

export class CheckpointError extends Error {}

export interface Classifier {
  readonly name: string;
  readonly classes: number;
  classify(points: number[][]): number;
}

interface CentroidCheckpoint {
  kind: "centroid";
  name?: string;
  prototypes: { label: number; points: number[][] }[];
}

interface PointNetCheckpoint {
  kind: "pointnet";
  name?: string;
  layers: { weights: number[][]; bias: number[] }[];
}

type Checkpoint = CentroidCheckpoint | PointNetCheckpoint;

export function loadCheckpoint(path: string): Classifier {
  let raw: string;
  try {
    raw = fs.readFileSync(path, "utf-8");
  } catch (err) {
    throw new CheckpointError(`cannot read checkpoint ${path}: ${(err as Error).message}`);
  }
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch (err) {
    throw new CheckpointError(`checkpoint ${path} is not valid JSON: ${(err as Error).message}`);
  }
  return buildClassifier(data, path);
}

export function buildClassifier(data: unknown, origin = "<inline>"): Classifier {
  if (typeof data !== "object" || data === null) {
    throw new CheckpointError(`${origin}: checkpoint must be a JSON object`);
  }
  const ckpt = data as Partial<Checkpoint>;
  if (ckpt.kind === "centroid") {
    return new CentroidClassifier(ckpt as CentroidCheckpoint, origin);
  }
  if (ckpt.kind === "pointnet") {
    return new PointNetClassifier(ckpt as PointNetCheckpoint, origin);
  }
  throw new CheckpointError(`${origin}: unknown checkpoint kind ${JSON.stringify(ckpt.kind)}`);
}

function checkMatrix(rows: unknown, cols: number | null, origin: string, what: string): number[][] {
  if (!Array.isArray(rows) || rows.length === 0) {
    throw new CheckpointError(`${origin}: ${what} must be a non-empty array`);
  }
  const width = cols ?? (Array.isArray(rows[0]) ? (rows[0] as unknown[]).length : 0);
  for (const row of rows) {
    if (!Array.isArray(row) || row.length !== width) {
      throw new CheckpointError(`${origin}: ${what} rows must all have ${width} entries`);
    }
    for (const v of row) {
      if (typeof v !== "number" || !Number.isFinite(v)) {
        throw new CheckpointError(`${origin}: ${what} entries must be finite numbers`);
      }
    }
  }
  return rows as number[][];
}

class CentroidClassifier implements Classifier {
  readonly name: string;
  readonly classes: number;
  private prototypes: { label: number; points: number[][] }[];

  constructor(ckpt: CentroidCheckpoint, origin: string) {
    if (!Array.isArray(ckpt.prototypes) || ckpt.prototypes.length < 2) {
      throw new CheckpointError(`${origin}: centroid checkpoint needs at least 2 prototypes`);
    }
    const labels = new Set<number>();
    for (const proto of ckpt.prototypes) {
      if (!Number.isInteger(proto.label) || proto.label < 0) {
        throw new CheckpointError(`${origin}: prototype labels must be non-negative integers`);
      }
      checkMatrix(proto.points, 3, origin, `prototype ${proto.label} points`);
      labels.add(proto.label);
    }
    const sorted = [...labels].sort((a, b) => a - b);
    sorted.forEach((label, i) => {
      if (label !== i) {
        throw new CheckpointError(`${origin}: prototype labels must be dense from 0, got ${sorted.join(",")}`);
      }
    });
    this.prototypes = [...ckpt.prototypes].sort((a, b) => a.label - b.label);
    this.classes = sorted.length;
    this.name = ckpt.name ?? "centroid";
  }

  classify(points: number[][]): number {
    let best = 0;
    let bestDist = Infinity;
    for (const proto of this.prototypes) {
      const d = chamfer(points, proto.points);
      if (d < bestDist) {
        bestDist = d;
        best = proto.label;
      }
    }
    return best;
  }
}

/** Symmetric chamfer: mean squared nearest-neighbor distance, both ways. */
export function chamfer(a: number[][], b: number[][]): number {
  return meanNearestSq(a, b) + meanNearestSq(b, a);
}

function meanNearestSq(from: number[][], to: number[][]): number {
  let total = 0;
  for (const p of from) {
    let best = Infinity;
    for (const q of to) {
      const dx = p[0] - q[0];
      const dy = p[1] - q[1];
      const dz = p[2] - q[2];
      const d = dx * dx + dy * dy + dz * dz;
      if (d < best) best = d;
    }
    total += best;
  }
  return total / from.length;
}

class PointNetClassifier implements Classifier {
  readonly name: string;
  readonly classes: number;
  private layers: { weights: number[][]; bias: number[] }[];

  constructor(ckpt: PointNetCheckpoint, origin: string) {
    if (!Array.isArray(ckpt.layers) || ckpt.layers.length === 0) {
      throw new CheckpointError(`${origin}: pointnet checkpoint needs at least one layer`);
    }
    let width = 3;
    for (const [i, layer] of ckpt.layers.entries()) {
      const w = checkMatrix(layer.weights, width, origin, `layer ${i} weights`);
      if (!Array.isArray(layer.bias) || layer.bias.length !== w.length) {
        throw new CheckpointError(`${origin}: layer ${i} bias length must match its row count`);
      }
      for (const v of layer.bias) {
        if (typeof v !== "number" || !Number.isFinite(v)) {
          throw new CheckpointError(`${origin}: layer ${i} bias entries must be finite numbers`);
        }
      }
      width = w.length;
    }
    if (width < 2) {
      throw new CheckpointError(`${origin}: final layer must emit at least 2 class features`);
    }
    this.layers = ckpt.layers;
    this.classes = width;
    this.name = ckpt.name ?? "pointnet";
  }

  classify(points: number[][]): number {
    const pooled = new Array<number>(this.classes).fill(-Infinity);
    for (const point of points) {
      let features = point;
      for (const [i, layer] of this.layers.entries()) {
        const out = new Array<number>(layer.weights.length);
        for (let r = 0; r < layer.weights.length; r++) {
          let acc = layer.bias[r];
          const row = layer.weights[r];
          for (let c = 0; c < row.length; c++) acc += row[c] * features[c];
          // ReLU on hidden layers only; the last layer feeds the pool raw.
          out[r] = i < this.layers.length - 1 ? Math.max(acc, 0) : acc;
        }
        features = out;
      }
      for (let k = 0; k < this.classes; k++) {
        if (features[k] > pooled[k]) pooled[k] = features[k];
      }
    }
    let best = 0;
    for (let k = 1; k < this.classes; k++) {
      if (pooled[k] > pooled[best]) best = k;
    }
    return best;
  }
}
