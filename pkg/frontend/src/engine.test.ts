import * as http from "node:http";
import { AddressInfo } from "node:net";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { CapabilityError, ENDPOINT_ENV, HttpEngine } from "./engine.js";
import { IMAGE_WIDTH } from "./layout.js";
import { encodeRgbPng } from "./png.js";

describe("capability checks", () => {
  it("raises an explicit capability error without an endpoint", () => {
    expect(() => HttpEngine.fromEnvironment({})).toThrow(CapabilityError);
    expect(() => HttpEngine.fromEnvironment({})).toThrow(ENDPOINT_ENV);
  });

  it("wraps unreachable services in a capability error", async () => {
    const engine = new HttpEngine("http://127.0.0.1:9");
    await expect(
      engine.generate({
        prompt: "x",
        count: 1,
        seed: 0,
        width: IMAGE_WIDTH,
        height: 4,
        checkpointId: "c",
      }),
    ).rejects.toThrow(CapabilityError);
  });
});

describe("HttpEngine against a mock service", () => {
  let server: http.Server;
  let baseUrl: string;
  const seen: Array<{ route: string; body: any }> = [];

  beforeAll(async () => {
    server = http.createServer((req, res) => {
      let raw = "";
      req.on("data", (piece) => (raw += piece));
      req.on("end", () => {
        const body = JSON.parse(raw);
        seen.push({ route: req.url ?? "", body });
        res.setHeader("content-type", "application/json");
        if (req.url === "/finetune") {
          res.end(JSON.stringify({ checkpoint_id: "svc-ckpt-1" }));
        } else if (req.url === "/txt2img") {
          const png = encodeRgbPng(
            body.width,
            body.height,
            new Uint8Array(body.width * body.height * 3),
          );
          res.end(JSON.stringify({
            images_base64: Array.from({ length: body.count }, () =>
              png.toString("base64")),
          }));
        } else {
          res.statusCode = 404;
          res.end("{}");
        }
      });
    });
    await new Promise<void>((resolve) => {
      server.listen(0, () => resolve());
    });
    baseUrl = `http://127.0.0.1:${(server.address() as AddressInfo).port}`;
  });

  afterAll(() => {
    server.close();
  });

  it("posts pairs and returns the checkpoint id", async () => {
    const engine = new HttpEngine(baseUrl);
    const id = await engine.finetune(
      [{ imagePng: Buffer.from("png"), prompt: "p", category: "protocol=TCP" }],
      { baseModel: "m", rank: 8, steps: 10, learningRate: 1e-4, seed: 3 },
    );
    expect(id).toBe("svc-ckpt-1");
    const request = seen.find((s) => s.route === "/finetune")!;
    expect(request.body.pairs).toHaveLength(1);
    expect(request.body.options.rank).toBe(8);
  });

  it("decodes returned images", async () => {
    const engine = new HttpEngine(baseUrl);
    const images = await engine.generate({
      prompt: "x",
      count: 2,
      seed: 1,
      width: 64,
      height: 4,
      checkpointId: "svc-ckpt-1",
    });
    expect(images).toHaveLength(2);
    expect(images[0].subarray(1, 4).toString("ascii")).toBe("PNG");
  });

  it("surfaces HTTP errors as capability errors", async () => {
    const engine = new HttpEngine(baseUrl + "/missing");
    await expect(
      engine.finetune([], {
        baseModel: "m", rank: 8, steps: 1, learningRate: 1, seed: 0,
      }),
    ).rejects.toThrow(CapabilityError);
  });
});
