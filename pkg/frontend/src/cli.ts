/**
 * sd-adapter CLI.
 *
 *   adapter finetune --manifest ws/prompts/manifest.jsonl --checkpoint ckpt/
 *   adapter generate --checkpoint ckpt/ --out ws/fields \
 *       --prompt "..." --categories protocol=TCP,attack_type=SYN-flood \
 *       --images 4 [--rows 1024] [--seed 0]
 *
 * Requires SD_ADAPTER_ENDPOINT to point at an accelerator-backed service.
 */

import { parseArgs } from "node:util";

import { finetune, generate, PreconditionError, SizeContractError } from "./adapter.js";
import { CapabilityError, HttpEngine } from "./engine.js";
import { ManifestError } from "./manifest.js";

function parseCategories(raw: string): Record<string, string> {
  const out: Record<string, string> = {};
  for (const piece of raw.split(",")) {
    const [view, category] = piece.split("=", 2);
    if (!view || !category) {
      throw new PreconditionError(`bad --categories entry: ${piece}`);
    }
    out[view] = category;
  }
  return out;
}

export async function main(argv: string[]): Promise<number> {
  const command = argv[0];
  const { values } = parseArgs({
    args: argv.slice(1),
    options: {
      manifest: { type: "string" },
      checkpoint: { type: "string" },
      out: { type: "string" },
      prompt: { type: "string", multiple: true },
      categories: { type: "string", multiple: true },
      images: { type: "string", default: "1" },
      rows: { type: "string", default: "1024" },
      seed: { type: "string", default: "0" },
    },
  });

  try {
    const engine = HttpEngine.fromEnvironment();
    if (command === "finetune") {
      if (!values.manifest || !values.checkpoint) {
        throw new PreconditionError("finetune needs --manifest and --checkpoint");
      }
      const checkpoint = await finetune(
        { manifestPath: values.manifest, checkpointDir: values.checkpoint },
        engine,
      );
      console.log(`checkpoint ${checkpoint.checkpointId} -> ${values.checkpoint}`);
      return 0;
    }
    if (command === "generate") {
      if (!values.checkpoint || !values.out) {
        throw new PreconditionError("generate needs --checkpoint and --out");
      }
      const prompts = (values.prompt ?? []).map((prompt, i) => ({
        prompt,
        viewCategories: parseCategories((values.categories ?? [])[i] ?? ""),
      }));
      const manifest = await generate(
        {
          checkpointDir: values.checkpoint,
          outputDir: values.out,
          prompts,
          imagesPerPrompt: parseInt(values.images!, 10),
          rowsPerImage: parseInt(values.rows!, 10),
          seed: parseInt(values.seed!, 10),
        },
        engine,
      );
      console.log(`${manifest.length} images -> ${values.out}/manifest.jsonl`);
      return 0;
    }
    console.error(`unknown command: ${command ?? "(none)"}`);
    return 2;
  } catch (err) {
    if (
      err instanceof CapabilityError ||
      err instanceof PreconditionError ||
      err instanceof SizeContractError ||
      err instanceof ManifestError
    ) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (import.meta.url === `file://${process.argv[1]}`) {
  main(process.argv.slice(2)).then((code) => process.exit(code));
}
