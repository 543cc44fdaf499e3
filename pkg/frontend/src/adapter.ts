/**
 * Adapter jobs: fine-tune on train-phase prompt-image pairs, generate
 * images from generate-phase prompts with structural conditioning. All
 * file traffic goes through manifest-declared paths plus the checkpoint
 * directory; output images are held to the exact width contract.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { createHash } from "node:crypto";

import { Engine, FinetuneOptions } from "./engine.js";
import {
  IMAGE_WIDTH,
  LAYOUT_ID,
  MAX_ROWS,
  Protocol,
  renderConditioningImage,
} from "./layout.js";
import {
  ManifestError,
  ManifestRow,
  categoryKey,
  readManifest,
  resolveImagePath,
  writeManifest,
} from "./manifest.js";
import { readPngSize } from "./png.js";

export class PreconditionError extends Error {}
export class SizeContractError extends Error {}

export const DEFAULT_FINETUNE: FinetuneOptions = {
  baseModel: "stable-diffusion-v1-5",
  rank: 16,
  steps: 400,
  learningRate: 1e-4,
  seed: 0,
};

export interface FinetuneJob {
  manifestPath: string;
  checkpointDir: string;
  options?: Partial<FinetuneOptions>;
}

export interface GenerateJob {
  checkpointDir: string;
  outputDir: string;
  /** prompt text plus its view categories; protocol picks the conditioning */
  prompts: Array<{
    prompt: string;
    viewCategories: Record<string, string>;
  }>;
  imagesPerPrompt: number;
  rowsPerImage?: number;
  seed?: number;
}

interface CheckpointFile {
  format: "sd-adapter-checkpoint-v1";
  checkpointId: string;
  options: FinetuneOptions;
  categories: string[];
  manifestSha256: string;
}

const CHECKPOINT_NAME = "checkpoint.json";

export async function finetune(
  job: FinetuneJob,
  engine: Engine,
): Promise<CheckpointFile> {
  const rows = readManifest(job.manifestPath);
  const trainRows = rows.filter((r) => r.phase === "train");
  if (trainRows.length === 0) {
    throw new PreconditionError(
      `${job.manifestPath}: no train-phase pairs to fine-tune on`,
    );
  }
  const byCategory = new Map<string, ManifestRow[]>();
  for (const row of trainRows) {
    if (row.layout_id !== LAYOUT_ID) {
      throw new PreconditionError(
        `${row.image_path}: layout ${row.layout_id} != ${LAYOUT_ID}`,
      );
    }
    const key = categoryKey(row);
    byCategory.set(key, [...(byCategory.get(key) ?? []), row]);
  }
  const pairs = trainRows.map((row) => {
    const imagePath = resolveImagePath(job.manifestPath, row);
    const size = readPngSize(imagePath);
    if (size.width !== IMAGE_WIDTH) {
      throw new PreconditionError(
        `${imagePath}: training image is ${size.width} px wide, ` +
          `expected ${IMAGE_WIDTH}`,
      );
    }
    return {
      imagePng: fs.readFileSync(imagePath),
      prompt: row.prompt,
      category: categoryKey(row),
    };
  });

  const options = { ...DEFAULT_FINETUNE, ...job.options };
  const checkpointId = await engine.finetune(pairs, options);

  fs.mkdirSync(job.checkpointDir, { recursive: true });
  const manifestSha256 = createHash("sha256")
    .update(fs.readFileSync(job.manifestPath))
    .digest("hex");
  const checkpoint: CheckpointFile = {
    format: "sd-adapter-checkpoint-v1",
    checkpointId,
    options,
    categories: [...byCategory.keys()].sort(),
    manifestSha256,
  };
  fs.writeFileSync(
    path.join(job.checkpointDir, CHECKPOINT_NAME),
    JSON.stringify(checkpoint, Object.keys(checkpoint).sort(), 1) + "\n",
  );
  return checkpoint;
}

export function loadCheckpoint(checkpointDir: string): CheckpointFile {
  const file = path.join(checkpointDir, CHECKPOINT_NAME);
  if (!fs.existsSync(file)) {
    throw new PreconditionError(
      `no checkpoint at ${file}: run a finetune job first`,
    );
  }
  const parsed = JSON.parse(fs.readFileSync(file, "utf-8"));
  if (parsed.format !== "sd-adapter-checkpoint-v1") {
    throw new PreconditionError(`${file}: unsupported checkpoint format`);
  }
  return parsed as CheckpointFile;
}

function protocolOf(viewCategories: Record<string, string>): Protocol | null {
  const value = viewCategories["protocol"];
  if (value === "TCP" || value === "UDP" || value === "ICMP") return value;
  return null;
}

export async function generate(
  job: GenerateJob,
  engine: Engine,
): Promise<ManifestRow[]> {
  const checkpoint = loadCheckpoint(job.checkpointDir);
  if (job.prompts.length === 0) {
    throw new PreconditionError("no generation prompts given");
  }
  for (const spec of job.prompts) {
    if (Object.keys(spec.viewCategories).length === 0) {
      throw new PreconditionError(
        `prompt ${JSON.stringify(spec.prompt)} carries no view categories`,
      );
    }
  }
  const rowsPerImage = job.rowsPerImage ?? MAX_ROWS;
  if (rowsPerImage < 1 || rowsPerImage > MAX_ROWS) {
    throw new PreconditionError(
      `rowsPerImage must be within [1, ${MAX_ROWS}]`,
    );
  }
  fs.mkdirSync(job.outputDir, { recursive: true });

  const manifest: ManifestRow[] = [];
  let promptIndex = 0;
  for (const spec of job.prompts) {
    const protocol = protocolOf(spec.viewCategories);
    const conditioningPng = protocol
      ? renderConditioningImage(protocol)
      : undefined;
    const images = await engine.generate({
      prompt: spec.prompt,
      count: job.imagesPerPrompt,
      seed: (job.seed ?? 0) + promptIndex,
      width: IMAGE_WIDTH,
      height: rowsPerImage,
      checkpointId: checkpoint.checkpointId,
      conditioningPng,
    });
    images.forEach((png, i) => {
      const name = `gen_${String(promptIndex).padStart(3, "0")}_${String(
        i,
      ).padStart(3, "0")}.png`;
      const target = path.join(job.outputDir, name);
      fs.writeFileSync(target, png);
      const size = readPngSize(target);
      if (size.width !== IMAGE_WIDTH) {
        fs.rmSync(target);
        throw new SizeContractError(
          `engine produced a ${size.width}-px-wide image for ` +
            `${JSON.stringify(spec.prompt)}; resizing is refused because ` +
            "column positions carry field semantics",
        );
      }
      manifest.push({
        image_path: name,
        prompt: spec.prompt,
        phase: "generate",
        view_categories: spec.viewCategories,
        layout_id: LAYOUT_ID,
        row_count: size.height,
      });
    });
    promptIndex += 1;
  }
  writeManifest(manifest, path.join(job.outputDir, "manifest.jsonl"));
  return manifest;
}

export { ManifestError };
