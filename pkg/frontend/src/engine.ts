/**
 * The image-generator backend. The adapter never talks to a model
 * directly; it posts jobs to an accelerator-backed HTTP service and
 * copies the returned bytes, so tests can swap in an in-process engine.
 */

export interface TrainingPair {
  imagePng: Buffer;
  prompt: string;
  category: string;
}

export interface FinetuneOptions {
  baseModel: string;
  rank: number;
  steps: number;
  learningRate: number;
  seed: number;
}

export interface GenerateRequest {
  prompt: string;
  count: number;
  seed: number;
  width: number;
  height: number;
  checkpointId: string;
  conditioningPng?: Buffer;
}

export interface Engine {
  finetune(pairs: TrainingPair[], options: FinetuneOptions): Promise<string>;
  generate(request: GenerateRequest): Promise<Buffer[]>;
}

/** Raised when no accelerator-backed service is reachable. */
export class CapabilityError extends Error {}

export const ENDPOINT_ENV = "SD_ADAPTER_ENDPOINT";
export const MODEL_CACHE_ENV = "SD_ADAPTER_MODEL_CACHE";

export class HttpEngine implements Engine {
  constructor(private readonly baseUrl: string) {}

  static fromEnvironment(env: NodeJS.ProcessEnv = process.env): HttpEngine {
    const endpoint = env[ENDPOINT_ENV];
    if (!endpoint) {
      throw new CapabilityError(
        `no image-generation service configured: set ${ENDPOINT_ENV} to an ` +
          "accelerator-backed endpoint (the Python pipeline's statistical " +
          "surrogate covers CPU-only runs)",
      );
    }
    return new HttpEngine(endpoint.replace(/\/$/, ""));
  }

  async finetune(
    pairs: TrainingPair[],
    options: FinetuneOptions,
  ): Promise<string> {
    const payload = {
      options,
      model_cache: process.env[MODEL_CACHE_ENV] ?? null,
      pairs: pairs.map((p) => ({
        prompt: p.prompt,
        category: p.category,
        image_base64: p.imagePng.toString("base64"),
      })),
    };
    const body = await this.post("/finetune", payload);
    if (typeof body.checkpoint_id !== "string") {
      throw new CapabilityError("service returned no checkpoint id");
    }
    return body.checkpoint_id;
  }

  async generate(request: GenerateRequest): Promise<Buffer[]> {
    const payload = {
      prompt: request.prompt,
      count: request.count,
      seed: request.seed,
      width: request.width,
      height: request.height,
      checkpoint_id: request.checkpointId,
      conditioning_base64: request.conditioningPng?.toString("base64") ?? null,
    };
    const body = await this.post("/txt2img", payload);
    if (!Array.isArray(body.images_base64)) {
      throw new CapabilityError("service returned no images");
    }
    return body.images_base64.map((b64: string) => Buffer.from(b64, "base64"));
  }

  private async post(
    route: string,
    payload: unknown,
  ): Promise<Record<string, any>> {
    let response: Response;
    try {
      response = await fetch(this.baseUrl + route, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(payload),
      });
    } catch (err) {
      throw new CapabilityError(
        `image-generation service unreachable at ${this.baseUrl}: ${err}`,
      );
    }
    if (!response.ok) {
      throw new CapabilityError(
        `image-generation service error ${response.status} on ${route}`,
      );
    }
    return (await response.json()) as Record<string, any>;
  }
}
