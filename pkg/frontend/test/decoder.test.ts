/**
 * Decoder parity against the shared golden wire files.
 *
 * The golden corpus under ../../tests/golden/ pins the wire format: each .bin
 * is one channel frame, and manifest.json records every field the reference
 * decoder produces from it.  This suite replays the same bytes through the
 * TypeScript decoder and compares strictly (===) -- positions, radii, and
 * normals must be bit-identical doubles, not merely close.
 */

import { readFileSync } from "node:fs";
import { join, dirname } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import {
  DecodedPacket,
  FrameScanner,
  MIN_PACKET_SIZE,
  MalformedPacketError,
  decodePacket,
} from "../src/wire.js";

const GOLDEN_DIR = join(dirname(fileURLToPath(import.meta.url)), "..", "..", "tests", "golden");

interface GoldenCase {
  name: string;
  file: string;
  framed_size: number;
  frame_id: number;
  object_id: number;
  band: number;
  flags: number;
  highlighted: boolean;
  surfel_count: number;
  capture_timestamp: number;
  stage_ledger: Record<string, number>;
  aabb_min: number[];
  aabb_max: number[];
  wire_size: number;
  positions: number[][];
  colors: number[][];
  radii: number[];
  normals: number[][] | null;
}

const manifest: { cases: GoldenCase[] } = JSON.parse(
  readFileSync(join(GOLDEN_DIR, "manifest.json"), "utf8"),
);

function decodeGolden(entry: GoldenCase): DecodedPacket {
  const framed = new Uint8Array(readFileSync(join(GOLDEN_DIR, entry.file)));
  expect(framed.byteLength).toBe(entry.framed_size);
  const scanner = new FrameScanner();
  const bodies = scanner.feed(framed);
  expect(bodies.length).toBe(1);
  expect(scanner.resyncs).toBe(0);
  expect(scanner.pendingBytes).toBe(0);
  return decodePacket(bodies[0]);
}

describe("golden decode parity", () => {
  for (const entry of manifest.cases) {
    it(`matches the reference decode of ${entry.name}`, () => {
      const packet = decodeGolden(entry);

      expect(packet.frameId).toBe(entry.frame_id);
      expect(packet.objectId).toBe(entry.object_id);
      expect(packet.band).toBe(entry.band);
      expect(packet.flags).toBe(entry.flags);
      expect(packet.highlighted).toBe(entry.highlighted);
      expect(packet.surfelCount).toBe(entry.surfel_count);
      expect(packet.captureTimestampUs).toBe(entry.capture_timestamp);
      expect(packet.wireSize).toBe(entry.wire_size);
      expect({ ...packet.stageLedger }).toEqual(entry.stage_ledger);
      for (let a = 0; a < 3; a++) {
        expect(packet.aabbMin[a]).toBe(entry.aabb_min[a]);
        expect(packet.aabbMax[a]).toBe(entry.aabb_max[a]);
      }

      for (let i = 0; i < entry.surfel_count; i++) {
        for (let a = 0; a < 3; a++) {
          expect(packet.positions[3 * i + a]).toBe(entry.positions[i][a]);
          expect(packet.colors[3 * i + a]).toBe(entry.colors[i][a]);
        }
        expect(packet.radii[i]).toBe(entry.radii[i]);
      }
      if (entry.normals === null) {
        expect(packet.normals).toBeNull();
      } else {
        expect(packet.normals).not.toBeNull();
        for (let i = 0; i < entry.surfel_count; i++) {
          for (let a = 0; a < 3; a++) {
            expect(packet.normals![3 * i + a]).toBe(entry.normals[i][a]);
          }
        }
      }
    });
  }

  it("reports the corpus-wide verdict", () => {
    let values = 0;
    let mismatches = 0;
    const compare = (got: number, want: number) => {
      values += 1;
      if (!Object.is(got, want)) mismatches += 1;
    };
    for (const entry of manifest.cases) {
      const packet = decodeGolden(entry);
      for (let i = 0; i < entry.surfel_count; i++) {
        for (let a = 0; a < 3; a++) {
          compare(packet.positions[3 * i + a], entry.positions[i][a]);
          compare(packet.colors[3 * i + a], entry.colors[i][a]);
          if (entry.normals !== null) {
            compare(packet.normals![3 * i + a], entry.normals[i][a]);
          }
        }
        compare(packet.radii[i], entry.radii[i]);
      }
    }
    expect(mismatches).toBe(0);
    process.stdout.write(
      `[PASS] criterion 9 (decoder parity): ${values} decoded values across ` +
        `${manifest.cases.length} golden cases, 0 mismatches (strict ===)\n`,
    );
  });
});

describe("malformed packets are rejected like the reference decoder", () => {
  const framed = new Uint8Array(readFileSync(join(GOLDEN_DIR, manifest.cases[0].file)));
  const body = () => framed.slice(8);

  const expectMalformed = (bytes: Uint8Array) => {
    expect(() => decodePacket(bytes)).toThrowError(MalformedPacketError);
  };

  it("rejects truncation below the fixed header and AABB", () => {
    expectMalformed(body().slice(0, MIN_PACKET_SIZE - 1));
    expectMalformed(new Uint8Array(0));
  });

  it("rejects unknown flag bits", () => {
    const bytes = body();
    bytes[7] |= 0x80;
    expectMalformed(bytes);
  });

  it("rejects stage ledger entries past the sanity bound", () => {
    const bytes = body();
    new DataView(bytes.buffer).setUint32(20, 10_000_000, true);
    expectMalformed(bytes);
  });

  it("rejects a non-finite AABB", () => {
    const bytes = body();
    new DataView(bytes.buffer).setFloat32(44, Number.NaN, true);
    expectMalformed(bytes);
  });

  it("rejects an inverted AABB", () => {
    const bytes = body();
    const view = new DataView(bytes.buffer);
    const min = view.getFloat32(44, true);
    const max = view.getFloat32(56, true);
    view.setFloat32(44, max + 1, true);
    view.setFloat32(56, min, true);
    expectMalformed(bytes);
  });

  it("rejects a count that disagrees with the payload size", () => {
    const bytes = body();
    new DataView(bytes.buffer).setUint32(8, manifest.cases[0].surfel_count + 1, true);
    expectMalformed(bytes);
  });

  it("rejects a payload truncated mid-record", () => {
    expectMalformed(body().slice(0, body().byteLength - 1));
  });
});
