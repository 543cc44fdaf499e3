import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

import { afterEach, describe, expect, it } from "vitest";

import {
  PreconditionError,
  SizeContractError,
  finetune,
  generate,
  loadCheckpoint,
} from "./adapter.js";
import { Engine, FinetuneOptions, GenerateRequest, TrainingPair } from "./engine.js";
import { IMAGE_WIDTH } from "./layout.js";
import { ManifestRow, readManifest, writeManifest } from "./manifest.js";
import { encodeRgbPng, readPngSize } from "./png.js";

const dirs: string[] = [];

function tmpdir(): string {
  const dir = fs.mkdtempSync(path.join(os.tmpdir(), "adapter-"));
  dirs.push(dir);
  return dir;
}

afterEach(() => {
  while (dirs.length) fs.rmSync(dirs.pop()!, { recursive: true, force: true });
});

function solidPng(width: number, height: number, value: number): Buffer {
  return encodeRgbPng(width, height, new Uint8Array(width * height * 3).fill(value));
}

/** Deterministic in-process engine: remembers pairs, echoes them back on
 * generate (overfit behavior), keyed by prompt and seed. */
class EchoEngine implements Engine {
  pairs: TrainingPair[] = [];
  lastOptions?: FinetuneOptions;
  requests: GenerateRequest[] = [];
  widthOverride?: number;

  async finetune(pairs: TrainingPair[], options: FinetuneOptions) {
    this.pairs = pairs;
    this.lastOptions = options;
    return `ckpt-${pairs.length}-${options.seed}`;
  }

  async generate(request: GenerateRequest): Promise<Buffer[]> {
    this.requests.push(request);
    if (this.widthOverride) {
      return Array.from({ length: request.count }, () =>
        solidPng(this.widthOverride!, request.height, 10),
      );
    }
    const match = this.pairs.find((p) => p.prompt === request.prompt);
    if (match) {
      return Array.from({ length: request.count }, () => match.imagePng);
    }
    return Array.from({ length: request.count }, (_, i) =>
      solidPng(request.width, request.height, (request.seed + i) % 256),
    );
  }
}

function writeTrainingManifest(dir: string, rows = 2): string {
  const entries: ManifestRow[] = [];
  for (let i = 0; i < rows; i++) {
    const name = `train_${i}.png`;
    fs.writeFileSync(path.join(dir, name), solidPng(IMAGE_WIDTH, 4, 30 + i));
    entries.push({
      image_path: name,
      prompt: `network traffic image, protocol is Color${i} style`,
      phase: "train",
      view_categories: { protocol: i === 0 ? "TCP" : "UDP" },
      layout_id: "nprint-1088-v1",
      row_count: 4,
    });
  }
  const manifestPath = path.join(dir, "manifest.jsonl");
  writeManifest(entries, manifestPath);
  return manifestPath;
}

describe("finetune", () => {
  it("rejects an empty manifest", async () => {
    const dir = tmpdir();
    const manifestPath = path.join(dir, "manifest.jsonl");
    writeManifest([], manifestPath);
    await expect(
      finetune({ manifestPath, checkpointDir: path.join(dir, "ckpt") },
               new EchoEngine()),
    ).rejects.toThrow(PreconditionError);
  });

  it("rejects wrong-width training images", async () => {
    const dir = tmpdir();
    const name = "bad.png";
    fs.writeFileSync(path.join(dir, name), solidPng(512, 4, 0));
    const manifestPath = path.join(dir, "manifest.jsonl");
    writeManifest(
      [{
        image_path: name,
        prompt: "p",
        phase: "train",
        view_categories: { protocol: "TCP" },
        layout_id: "nprint-1088-v1",
        row_count: 4,
      }],
      manifestPath,
    );
    await expect(
      finetune({ manifestPath, checkpointDir: path.join(dir, "ckpt") },
               new EchoEngine()),
    ).rejects.toThrow(/512 px wide/);
  });

  it("feeds every pair to the engine and persists the checkpoint", async () => {
    const dir = tmpdir();
    const manifestPath = writeTrainingManifest(dir, 3);
    const engine = new EchoEngine();
    const ckptDir = path.join(dir, "ckpt");
    const checkpoint = await finetune({ manifestPath, checkpointDir: ckptDir },
                                      engine);
    expect(engine.pairs).toHaveLength(3);
    expect(engine.lastOptions?.rank).toBe(16);
    const loaded = loadCheckpoint(ckptDir);
    expect(loaded.checkpointId).toBe(checkpoint.checkpointId);
    expect(loaded.categories).toContain("protocol=TCP");
    expect(loaded.manifestSha256).toHaveLength(64);
  });
});

describe("generate", () => {
  async function trained(dir: string, engine: Engine) {
    const manifestPath = writeTrainingManifest(dir);
    const ckptDir = path.join(dir, "ckpt");
    await finetune({ manifestPath, checkpointDir: ckptDir }, engine);
    return ckptDir;
  }

  it("requires a completed finetune checkpoint", async () => {
    const dir = tmpdir();
    await expect(
      generate(
        {
          checkpointDir: path.join(dir, "missing"),
          outputDir: path.join(dir, "out"),
          prompts: [{ prompt: "p", viewCategories: { protocol: "TCP" } }],
          imagesPerPrompt: 1,
        },
        new EchoEngine(),
      ),
    ).rejects.toThrow(/finetune job first/);
  });

  it("emits exactly one manifest row per image, all contract-width", async () => {
    const dir = tmpdir();
    const engine = new EchoEngine();
    const ckptDir = await trained(dir, engine);
    const outputDir = path.join(dir, "out");
    const manifest = await generate(
      {
        checkpointDir: ckptDir,
        outputDir,
        prompts: [
          { prompt: "a", viewCategories: { protocol: "TCP" } },
          { prompt: "b", viewCategories: { protocol: "UDP", attack_type: "x" } },
        ],
        imagesPerPrompt: 3,
        rowsPerImage: 16,
      },
      engine,
    );
    expect(manifest).toHaveLength(6);
    const onDisk = readManifest(path.join(outputDir, "manifest.jsonl"));
    expect(onDisk).toEqual(manifest);
    for (const row of onDisk) {
      expect(row.phase).toBe("generate");
      const size = readPngSize(path.join(outputDir, row.image_path));
      expect(size.width).toBe(IMAGE_WIDTH);
    }
  });

  it("passes protocol conditioning to the engine", async () => {
    const dir = tmpdir();
    const engine = new EchoEngine();
    const ckptDir = await trained(dir, engine);
    await generate(
      {
        checkpointDir: ckptDir,
        outputDir: path.join(dir, "out"),
        prompts: [{ prompt: "a", viewCategories: { protocol: "ICMP" } }],
        imagesPerPrompt: 1,
      },
      engine,
    );
    expect(engine.requests[0].conditioningPng).toBeDefined();
  });

  it("refuses to resize wrong-width engine output", async () => {
    const dir = tmpdir();
    const engine = new EchoEngine();
    const ckptDir = await trained(dir, engine);
    engine.widthOverride = 512;
    const outputDir = path.join(dir, "out");
    await expect(
      generate(
        {
          checkpointDir: ckptDir,
          outputDir,
          prompts: [{ prompt: "z", viewCategories: { protocol: "TCP" } }],
          imagesPerPrompt: 1,
        },
        engine,
      ),
    ).rejects.toThrow(SizeContractError);
    expect(fs.readdirSync(outputDir).filter((f) => f.endsWith(".png")))
      .toHaveLength(0);
  });

  it("overfit echo keeps the training image bit-exact", async () => {
    // contract-level stand-in for the accelerator-only overfit check:
    // when the engine reproduces its single training pair, the emitted
    // image is byte-identical, so decoded validity matches the source
    const dir = tmpdir();
    const engine = new EchoEngine();
    const manifestPath = writeTrainingManifest(dir, 1);
    const ckptDir = path.join(dir, "ckpt");
    await finetune({ manifestPath, checkpointDir: ckptDir }, engine);
    const trainRow = readManifest(manifestPath)[0];
    const outputDir = path.join(dir, "out");
    const manifest = await generate(
      {
        checkpointDir: ckptDir,
        outputDir,
        prompts: [{
          prompt: trainRow.prompt,
          viewCategories: trainRow.view_categories,
        }],
        imagesPerPrompt: 1,
        rowsPerImage: 4,
      },
      engine,
    );
    const generated = fs.readFileSync(path.join(outputDir,
                                                manifest[0].image_path));
    const source = fs.readFileSync(path.join(dir, trainRow.image_path));
    expect(generated.equals(source)).toBe(true);
  });

  it("rejects prompts without view categories", async () => {
    const dir = tmpdir();
    const engine = new EchoEngine();
    const ckptDir = await trained(dir, engine);
    await expect(
      generate(
        {
          checkpointDir: ckptDir,
          outputDir: path.join(dir, "out"),
          prompts: [{ prompt: "bare", viewCategories: {} }],
          imagesPerPrompt: 1,
        },
        engine,
      ),
    ).rejects.toThrow(/view categories/);
  });
});
