/**
 * Binary wire format: packet decoding, channel-frame scanning, gaze packing.
 *
 * This mirrors the server's codec byte for byte (little-endian throughout);
 * the layout is documented in ../docs/wire-format.md and pinned by the golden
 * files under ../tests/golden/, which the decoder tests replay. All decode
 * arithmetic is kept in IEEE-754 double precision with the same operation
 * order as the server's reference decoder so decoded values are bit-identical
 * across the two implementations.
 */

export const FRAME_MAGIC = new Uint8Array([0x46, 0x50, 0x4b, 0x31]); // "FPK1"
export const FRAME_HEADER_SIZE = 8; // magic + u32 length
export const MAX_FRAME_BYTES = 64 * 2 ** 20;

export const FIXED_HEADER_SIZE = 44;
export const AABB_SIZE = 24;
export const MIN_PACKET_SIZE = FIXED_HEADER_SIZE + AABB_SIZE;

export const FLAG_HIGHLIGHTED = 0x01;
export const FLAG_POSITIONS_QUANTIZED = 0x02;
export const FLAG_NORMALS_PRESENT = 0x04;
const KNOWN_FLAGS = FLAG_HIGHLIGHTED | FLAG_POSITIONS_QUANTIZED | FLAG_NORMALS_PRESENT;

export const LEDGER_SANITY_US = 10_000_000;
export const LEDGER_STAGES = ["acquire", "segment", "partition", "sample", "encode", "enqueue"] as const;

/** Metres per radius quantum (0.1 mm), as the float32 the server multiplies by. */
const RADIUS_UNIT = Math.fround(1e-4);

export const GAZE_MAGIC = new Uint8Array([0x47, 0x41, 0x5a, 0x31]); // "GAZ1"
export const GAZE_MESSAGE_SIZE = 68;

export class MalformedPacketError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MalformedPacketError";
  }
}

export interface StageLedger {
  acquire: number;
  segment: number;
  partition: number;
  sample: number;
  encode: number;
  enqueue: number;
}

/** One decoded packet: one object's surfels for one band of one frame. */
export interface DecodedPacket {
  frameId: number;
  objectId: number;
  band: number;
  flags: number;
  highlighted: boolean;
  surfelCount: number;
  captureTimestampUs: number;
  stageLedger: StageLedger;
  aabbMin: [number, number, number];
  aabbMax: [number, number, number];
  /** Flat [x0,y0,z0, x1,...]; double precision, bit-identical to the server's decode. */
  positions: Float64Array;
  /** Flat [r0,g0,b0, r1,...]. */
  colors: Uint8Array;
  /** Metres; float32 values. */
  radii: Float32Array;
  /** Flat unit normals, or null when the packet carries none. */
  normals: Float32Array | null;
  wireSize: number;
}

export function recordSize(flags: number): number {
  let size = (flags & FLAG_POSITIONS_QUANTIZED ? 6 : 12) + 3 + 2;
  if (flags & FLAG_NORMALS_PRESENT) size += 2;
  return size;
}

/** Decode one packet body (the bytes inside a channel frame); throws MalformedPacketError. */
export function decodePacket(data: Uint8Array): DecodedPacket {
  if (data.byteLength < MIN_PACKET_SIZE) {
    throw new MalformedPacketError(
      `packet is ${data.byteLength} bytes; the header and AABB need ${MIN_PACKET_SIZE}`,
    );
  }
  const view = new DataView(data.buffer, data.byteOffset, data.byteLength);
  const frameId = view.getUint32(0, true);
  const objectId = view.getUint16(4, true);
  const band = view.getUint8(6);
  const flags = view.getUint8(7);
  const surfelCount = view.getUint32(8, true);
  const captureTimestampUs = Number(view.getBigUint64(12, true));
  const ledger: number[] = [];
  for (let i = 0; i < 6; i++) ledger.push(view.getUint32(20 + 4 * i, true));

  if (flags & ~KNOWN_FLAGS) {
    throw new MalformedPacketError(`unknown flag bits 0x${flags.toString(16).padStart(2, "0")}`);
  }
  if (ledger.some((v) => v >= LEDGER_SANITY_US)) {
    throw new MalformedPacketError("stage ledger entry exceeds the 10^7 us sanity bound");
  }
  const aabb: number[] = [];
  for (let i = 0; i < 6; i++) aabb.push(view.getFloat32(FIXED_HEADER_SIZE + 4 * i, true));
  if (!aabb.every(Number.isFinite)) {
    throw new MalformedPacketError("AABB must be finite");
  }
  const aabbMin = aabb.slice(0, 3) as [number, number, number];
  const aabbMax = aabb.slice(3) as [number, number, number];
  for (let a = 0; a < 3; a++) {
    if (aabbMin[a] > aabbMax[a]) {
      throw new MalformedPacketError("AABB min must be <= max per axis");
    }
  }
  const payloadBytes = data.byteLength - MIN_PACKET_SIZE;
  const expected = surfelCount * recordSize(flags);
  if (payloadBytes !== expected) {
    throw new MalformedPacketError(
      `surfel_count ${surfelCount} implies ${expected} payload bytes, got ${payloadBytes}`,
    );
  }

  const quantized = (flags & FLAG_POSITIONS_QUANTIZED) !== 0;
  const withNormals = (flags & FLAG_NORMALS_PRESENT) !== 0;
  const stride = recordSize(flags);
  const positions = new Float64Array(surfelCount * 3);
  const colors = new Uint8Array(surfelCount * 3);
  const radii = new Float32Array(surfelCount);
  const normals = withNormals ? new Float32Array(surfelCount * 3) : null;

  const extent = [aabbMax[0] - aabbMin[0], aabbMax[1] - aabbMin[1], aabbMax[2] - aabbMin[2]];
  let off = MIN_PACKET_SIZE;
  for (let i = 0; i < surfelCount; i++) {
    if (quantized) {
      for (let a = 0; a < 3; a++) {
        const q = view.getUint16(off + 2 * a, true);
        positions[3 * i + a] = aabbMin[a] + (q / 65535) * extent[a];
      }
    } else {
      for (let a = 0; a < 3; a++) {
        positions[3 * i + a] = view.getFloat32(off + 4 * a, true);
      }
    }
    const colorOff = off + (quantized ? 6 : 12);
    colors[3 * i] = view.getUint8(colorOff);
    colors[3 * i + 1] = view.getUint8(colorOff + 1);
    colors[3 * i + 2] = view.getUint8(colorOff + 2);
    radii[i] = Math.fround(view.getUint16(colorOff + 3, true) * RADIUS_UNIT);
    if (normals) {
      decodeOctahedral(view.getUint8(colorOff + 5), view.getUint8(colorOff + 6), normals, 3 * i);
    }
    off += stride;
  }

  return {
    frameId,
    objectId,
    band,
    flags,
    highlighted: (flags & FLAG_HIGHLIGHTED) !== 0,
    surfelCount,
    captureTimestampUs,
    stageLedger: {
      acquire: ledger[0],
      segment: ledger[1],
      partition: ledger[2],
      sample: ledger[3],
      encode: ledger[4],
      enqueue: ledger[5],
    },
    aabbMin,
    aabbMax,
    positions,
    colors,
    radii,
    normals,
    wireSize: data.byteLength,
  };
}

/** Octahedral two-byte normal back to a unit vector (float32 components). */
function decodeOctahedral(a: number, b: number, out: Float32Array, at: number): void {
  const fx = (a / 255) * 2 - 1;
  const fy = (b / 255) * 2 - 1;
  const z = 1 - Math.abs(fx) - Math.abs(fy);
  let x = fx;
  let y = fy;
  if (z < 0) {
    x = (1 - Math.abs(fy)) * (fx >= 0 ? 1 : -1);
    y = (1 - Math.abs(fx)) * (fy >= 0 ? 1 : -1);
  }
  const norm = Math.sqrt(x * x + y * y + z * z);
  out[at] = Math.fround(x / norm);
  out[at + 1] = Math.fround(y / norm);
  out[at + 2] = Math.fround(z / norm);
}

function findMagic(buf: Uint8Array, from: number, magic: Uint8Array): number {
  outer: for (let i = from; i + magic.length <= buf.length; i++) {
    for (let j = 0; j < magic.length; j++) {
      if (buf[i + j] !== magic[j]) continue outer;
    }
    return i;
  }
  return -1;
}

/**
 * Incremental channel-frame parser: feed raw bytes, complete packet bodies
 * come out. A bad magic or an implausible length advances the scan to the
 * next "FPK1" and bumps the resync counter; the stream itself survives.
 */
export class FrameScanner {
  private buf = new Uint8Array(0);
  resyncs = 0;
  discardedBytes = 0;

  feed(chunk: Uint8Array): Uint8Array[] {
    const merged = new Uint8Array(this.buf.length + chunk.length);
    merged.set(this.buf, 0);
    merged.set(chunk, this.buf.length);
    this.buf = merged;

    const out: Uint8Array[] = [];
    for (;;) {
      if (this.buf.length < FRAME_HEADER_SIZE) break;
      if (findMagic(this.buf, 0, FRAME_MAGIC) !== 0) {
        this.resync();
        continue;
      }
      const length = new DataView(this.buf.buffer, this.buf.byteOffset).getUint32(4, true);
      if (length > MAX_FRAME_BYTES) {
        this.resync();
        continue;
      }
      const end = FRAME_HEADER_SIZE + length;
      if (this.buf.length < end) break;
      out.push(this.buf.slice(FRAME_HEADER_SIZE, end));
      this.buf = this.buf.slice(end);
    }
    return out;
  }

  private resync(): void {
    this.resyncs += 1;
    const idx = findMagic(this.buf, 1, FRAME_MAGIC);
    if (idx === -1) {
      const keep = Math.min(this.buf.length, 3);
      this.discardedBytes += this.buf.length - keep;
      this.buf = this.buf.slice(this.buf.length - keep);
    } else {
      this.discardedBytes += idx;
      this.buf = this.buf.slice(idx);
    }
  }

  get pendingBytes(): number {
    return this.buf.length;
  }
}

export type Vec3 = [number, number, number];
export type Quat = [number, number, number, number];

export interface GazeUpdate {
  seq: number;
  timestampUs: number;
  origin: Vec3;
  direction: Vec3;
  hmdPosition: Vec3;
  hmdOrientation: Quat;
}

/** Pack the fixed 68-byte gaze message the server consumes. */
export function packGaze(gaze: GazeUpdate): Uint8Array {
  const out = new Uint8Array(GAZE_MESSAGE_SIZE);
  out.set(GAZE_MAGIC, 0);
  const view = new DataView(out.buffer);
  view.setUint32(4, gaze.seq, true);
  view.setBigUint64(8, BigInt(Math.round(gaze.timestampUs)), true);
  const floats = [...gaze.origin, ...gaze.direction, ...gaze.hmdPosition, ...gaze.hmdOrientation];
  for (let i = 0; i < floats.length; i++) {
    view.setFloat32(16 + 4 * i, floats[i], true);
  }
  return out;
}
