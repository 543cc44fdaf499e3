/**
 * The JSONL prompt/image manifest shared with the Python pipeline.
 * One object per image; image paths are relative to the manifest file.
 */

import * as fs from "node:fs";
import * as path from "node:path";
import { z } from "zod";

export const manifestRowSchema = z.object({
  image_path: z.string().min(1),
  prompt: z.string(),
  phase: z.enum(["train", "generate"]),
  view_categories: z.record(z.string(), z.string()),
  layout_id: z.string().min(1),
  row_count: z.number().int().positive(),
});

export type ManifestRow = z.infer<typeof manifestRowSchema>;

export class ManifestError extends Error {}

export function readManifest(manifestPath: string): ManifestRow[] {
  if (!fs.existsSync(manifestPath)) {
    throw new ManifestError(`manifest not found: ${manifestPath}`);
  }
  const rows: ManifestRow[] = [];
  const lines = fs.readFileSync(manifestPath, "utf-8").split("\n");
  lines.forEach((line, i) => {
    if (!line.trim()) return;
    let parsed: unknown;
    try {
      parsed = JSON.parse(line);
    } catch {
      throw new ManifestError(`${manifestPath}:${i + 1}: not valid JSON`);
    }
    const result = manifestRowSchema.safeParse(parsed);
    if (!result.success) {
      throw new ManifestError(
        `${manifestPath}:${i + 1}: ${result.error.issues[0].message}`,
      );
    }
    rows.push(result.data);
  });
  return rows;
}

export function writeManifest(rows: ManifestRow[], manifestPath: string): void {
  const body = rows.map((row) => JSON.stringify(sortKeys(row))).join("\n");
  fs.writeFileSync(manifestPath, rows.length ? body + "\n" : "");
}

export function resolveImagePath(manifestPath: string, row: ManifestRow): string {
  return path.isAbsolute(row.image_path)
    ? row.image_path
    : path.join(path.dirname(manifestPath), row.image_path);
}

/** Key for grouping training pairs: the single view category they carry. */
export function categoryKey(row: ManifestRow): string {
  const entries = Object.entries(row.view_categories).sort();
  return entries.map(([view, cat]) => `${view}=${cat}`).join(",");
}

function sortKeys<T extends Record<string, unknown>>(obj: T): T {
  return Object.fromEntries(
    Object.keys(obj)
      .sort()
      .map((k) => [k, obj[k]]),
  ) as T;
}
