/**
 * Just enough PNG support for the adapter: encode 8-bit RGB rasters (for
 * conditioning images) and read back dimensions (to enforce the width
 * contract on generated images). No interlacing, no palettes.
 */

import * as fs from "node:fs";
import * as zlib from "node:zlib";

const SIGNATURE = Buffer.from([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a]);

export class PngError extends Error {}

function chunk(type: string, data: Buffer): Buffer {
  const length = Buffer.alloc(4);
  length.writeUInt32BE(data.length);
  const body = Buffer.concat([Buffer.from(type, "ascii"), data]);
  const crc = Buffer.alloc(4);
  crc.writeUInt32BE(zlib.crc32(body));
  return Buffer.concat([length, body, crc]);
}

/** Encode an RGB raster; `pixels` is row-major, 3 bytes per pixel. */
export function encodeRgbPng(
  width: number,
  height: number,
  pixels: Uint8Array,
): Buffer {
  if (pixels.length !== width * height * 3) {
    throw new PngError(
      `pixel buffer has ${pixels.length} bytes, expected ${width * height * 3}`,
    );
  }
  const ihdr = Buffer.alloc(13);
  ihdr.writeUInt32BE(width, 0);
  ihdr.writeUInt32BE(height, 4);
  ihdr[8] = 8; // bit depth
  ihdr[9] = 2; // color type: truecolor
  const raw = Buffer.alloc(height * (1 + width * 3));
  for (let y = 0; y < height; y++) {
    raw[y * (1 + width * 3)] = 0; // filter: none
    pixels
      .subarray(y * width * 3, (y + 1) * width * 3)
      .forEach((v, i) => (raw[y * (1 + width * 3) + 1 + i] = v));
  }
  return Buffer.concat([
    SIGNATURE,
    chunk("IHDR", ihdr),
    chunk("IDAT", zlib.deflateSync(raw, { level: 9 })),
    chunk("IEND", Buffer.alloc(0)),
  ]);
}

export interface PngSize {
  width: number;
  height: number;
}

export function readPngSize(filePath: string): PngSize {
  const fd = fs.openSync(filePath, "r");
  try {
    const head = Buffer.alloc(33);
    const read = fs.readSync(fd, head, 0, head.length, 0);
    if (read < 33 || !head.subarray(0, 8).equals(SIGNATURE)) {
      throw new PngError(`${filePath}: not a PNG file`);
    }
    if (head.toString("ascii", 12, 16) !== "IHDR") {
      throw new PngError(`${filePath}: missing IHDR chunk`);
    }
    return { width: head.readUInt32BE(16), height: head.readUInt32BE(20) };
  } finally {
    fs.closeSync(fd);
  }
}
