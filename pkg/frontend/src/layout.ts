/**
 * Mirror of the bit-image column layout (nprint-1088-v1) plus the
 * structure-conditioning renderer: structural columns take their span
 * color, free columns stay neutral, so the generator is steered toward
 * the right protocol skeleton.
 */

import { encodeRgbPng } from "./png.js";

export const LAYOUT_ID = "nprint-1088-v1";
export const IMAGE_WIDTH = 1088;
export const MAX_ROWS = 1024;

export type Protocol = "TCP" | "UDP" | "ICMP";

interface Span {
  start: number;
  stop: number;
}

export const SPANS: Record<string, Span> = {
  ip: { start: 0, stop: 160 },
  tcp: { start: 160, stop: 640 },
  udp: { start: 640, stop: 704 },
  icmp: { start: 704, stop: 768 },
  pad: { start: 768, stop: 1088 },
};

// columns read by the structural conformance rules, per protocol
const STRUCTURAL: Record<Protocol, Span[]> = {
  TCP: [
    { start: 0, stop: 8 }, // version + ihl
    { start: 16, stop: 32 }, // total length
    { start: 48, stop: 64 }, // flags + fragment offset
    { start: 72, stop: 80 }, // protocol number
    { start: 256, stop: 272 }, // data offset + reserved + flags
  ],
  UDP: [
    { start: 0, stop: 8 },
    { start: 16, stop: 32 },
    { start: 48, stop: 64 },
    { start: 72, stop: 80 },
    { start: 672, stop: 688 }, // udp length
  ],
  ICMP: [
    { start: 0, stop: 8 },
    { start: 16, stop: 32 },
    { start: 48, stop: 64 },
    { start: 72, stop: 80 },
    { start: 704, stop: 712 }, // icmp type
  ],
};

const NEUTRAL: [number, number, number] = [128, 128, 128];
const ABSENT: [number, number, number] = [0, 0, 255]; // matches ternary -1
const STRUCTURE: [number, number, number] = [255, 255, 255];

export function protocolSpan(protocol: Protocol): Span {
  return SPANS[protocol.toLowerCase()];
}

/**
 * Render the conditioning image for one protocol: absent spans blue,
 * structural columns white, everything else neutral gray.
 */
export function renderConditioningImage(
  protocol: Protocol,
  height = 64,
): Buffer {
  const row = new Uint8Array(IMAGE_WIDTH * 3);
  for (let x = 0; x < IMAGE_WIDTH; x++) {
    row.set(NEUTRAL, x * 3);
  }
  for (const name of ["tcp", "udp", "icmp", "pad"]) {
    if (name === protocol.toLowerCase()) continue;
    const span = SPANS[name];
    for (let x = span.start; x < span.stop; x++) {
      row.set(ABSENT, x * 3);
    }
  }
  for (const span of STRUCTURAL[protocol]) {
    for (let x = span.start; x < span.stop; x++) {
      row.set(STRUCTURE, x * 3);
    }
  }
  const pixels = new Uint8Array(IMAGE_WIDTH * height * 3);
  for (let y = 0; y < height; y++) {
    pixels.set(row, y * IMAGE_WIDTH * 3);
  }
  return encodeRgbPng(IMAGE_WIDTH, height, pixels);
}
