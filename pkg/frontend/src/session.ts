/**
 * ViewerSession: the single-threaded heart of the operator console.
 *
 * Owns the socket, reassembles channel frames into whole render frames
 * (newest complete frame wins), counts malformed packets without dying, and
 * throttles the pointer-driven gaze uplink to the configured rate with a
 * low-rate heartbeat while idle. No DOM and no WebGL in here: sockets and
 * clocks are injected, so the same class runs in the browser and in tests.
 */

import {
  DecodedPacket,
  FrameScanner,
  MalformedPacketError,
  Quat,
  Vec3,
  decodePacket,
  packGaze,
} from "./wire.js";

export type ConnectionState = "idle" | "connecting" | "open" | "closed" | "error";

/** The slice of the WebSocket API the session uses; `ws` and the browser both fit. */
export interface SocketLike {
  binaryType: string;
  send(data: Uint8Array): void;
  close(): void;
  addEventListener(type: "open" | "message" | "close" | "error", listener: (event: any) => void): void;
}

export type SocketFactory = (url: string) => SocketLike;

/** One complete rendered frame: every packet the server sent for one frame_id. */
export interface ViewerFrame {
  frameId: number;
  packets: DecodedPacket[];
  pointCount: number;
  captureTimestampUs: number;
  completedAtUs: number;
  wireBytes: number;
}

export interface SessionStats {
  state: ConnectionState;
  framesCompleted: number;
  packetsDecoded: number;
  malformedPackets: number;
  resyncs: number;
  bytesReceived: number;
  gazeSent: number;
  /** Completed frames per second over the trailing window. */
  fps: number;
  /** Received megabits per second over the trailing window. */
  mbps: number;
  /** Capture-to-complete for the newest frame; same-host clocks only. */
  endToEndMs: number | null;
  pointCount: number;
  lastError: string | null;
}

export interface SessionOptions {
  url: string;
  socketFactory?: SocketFactory;
  /** Microsecond clock; defaults to performance.now(). */
  nowUs?: () => number;
  /** Uplink cap in messages per second. */
  gazeRateHz?: number;
  /** Idle keep-alive rate; seq keeps advancing so the server sees liveness. */
  heartbeatHz?: number;
  onFrame?: (frame: ViewerFrame) => void;
  onState?: (state: ConnectionState) => void;
}

const STATS_WINDOW_US = 2_000_000;
const IDENTITY_QUAT: Quat = [0, 0, 0, 1];

function defaultSocketFactory(url: string): SocketLike {
  return new (globalThis as any).WebSocket(url) as SocketLike;
}

function defaultNowUs(): number {
  return performance.now() * 1000;
}

export class ViewerSession {
  readonly url: string;
  state: ConnectionState = "idle";
  latestFrame: ViewerFrame | null = null;
  lastError: string | null = null;

  private readonly socketFactory: SocketFactory;
  private readonly nowUs: () => number;
  private readonly minSendIntervalUs: number;
  private readonly heartbeatIntervalUs: number;
  private readonly onFrame?: (frame: ViewerFrame) => void;
  private readonly onState?: (state: ConnectionState) => void;

  private socket: SocketLike | null = null;
  private scanner = new FrameScanner();
  private pending: DecodedPacket[] = [];
  private pendingBytes = 0;

  private gazeSeq = 0;
  private gazeOrigin: Vec3 = [0, 0, 0];
  private gazeDirection: Vec3 = [0, 0, 1];
  private gazeDirty = false;
  private lastSendUs = -Infinity;

  private framesCompleted = 0;
  private packetsDecoded = 0;
  private malformedPackets = 0;
  private bytesReceived = 0;
  private frameTimesUs: number[] = [];
  private byteArrivals: Array<[number, number]> = [];

  constructor(options: SessionOptions) {
    this.url = options.url;
    this.socketFactory = options.socketFactory ?? defaultSocketFactory;
    this.nowUs = options.nowUs ?? defaultNowUs;
    this.minSendIntervalUs = 1e6 / (options.gazeRateHz ?? 60);
    this.heartbeatIntervalUs = 1e6 / (options.heartbeatHz ?? 1);
    this.onFrame = options.onFrame;
    this.onState = options.onState;
  }

  connect(): void {
    this.scanner = new FrameScanner();
    this.pending = [];
    this.pendingBytes = 0;
    this.lastError = null;
    this.setState("connecting");
    const socket = this.socketFactory(this.url);
    socket.binaryType = "arraybuffer";
    socket.addEventListener("open", () => this.setState("open"));
    socket.addEventListener("message", (event) => this.onMessage(event.data));
    socket.addEventListener("close", () => this.onClose());
    socket.addEventListener("error", (event) => {
      this.lastError = String(event?.message ?? "connection failed");
      this.setState("error");
    });
    this.socket = socket;
  }

  close(): void {
    this.socket?.close();
    this.socket = null;
    if (this.state === "open" || this.state === "connecting") this.setState("closed");
  }

  /**
   * Point the gaze ray; sends immediately when the throttle allows, otherwise
   * remembers the newest value for the next tick (newest-wins, like the
   * server side).
   */
  steer(direction: Vec3, origin: Vec3 = [0, 0, 0]): void {
    this.gazeDirection = direction;
    this.gazeOrigin = origin;
    this.gazeDirty = true;
    this.flushGaze();
  }

  /** Drive from the render loop: flush throttled gaze and the idle heartbeat. */
  tick(): void {
    this.flushGaze();
    if (
      this.state === "open" &&
      this.gazeSeq > 0 &&
      this.nowUs() - this.lastSendUs >= this.heartbeatIntervalUs
    ) {
      this.sendGaze();
    }
  }

  stats(): SessionStats {
    const now = this.nowUs();
    const frames = this.frameTimesUs.filter((t) => now - t <= STATS_WINDOW_US);
    this.frameTimesUs = frames;
    const arrivals = this.byteArrivals.filter(([t]) => now - t <= STATS_WINDOW_US);
    this.byteArrivals = arrivals;
    const windowS = STATS_WINDOW_US / 1e6;
    const windowBytes = arrivals.reduce((sum, [, b]) => sum + b, 0);
    return {
      state: this.state,
      framesCompleted: this.framesCompleted,
      packetsDecoded: this.packetsDecoded,
      malformedPackets: this.malformedPackets,
      resyncs: this.scanner.resyncs,
      bytesReceived: this.bytesReceived,
      gazeSent: this.gazeSeq,
      fps: frames.length / windowS,
      mbps: (windowBytes * 8) / windowS / 1e6,
      endToEndMs: this.latestFrame
        ? (this.latestFrame.completedAtUs - this.latestFrame.captureTimestampUs) / 1000
        : null,
      pointCount: this.latestFrame?.pointCount ?? 0,
      lastError: this.lastError,
    };
  }

  private setState(state: ConnectionState): void {
    this.state = state;
    this.onState?.(state);
  }

  private onMessage(data: ArrayBuffer | Uint8Array): void {
    const bytes = data instanceof Uint8Array ? data : new Uint8Array(data);
    this.bytesReceived += bytes.byteLength;
    this.byteArrivals.push([this.nowUs(), bytes.byteLength]);
    for (const body of this.scanner.feed(bytes)) {
      let packet: DecodedPacket;
      try {
        packet = decodePacket(body);
      } catch (err) {
        if (err instanceof MalformedPacketError) {
          this.malformedPackets += 1;
          continue;
        }
        throw err;
      }
      this.packetsDecoded += 1;
      if (this.pending.length > 0 && this.pending[0].frameId !== packet.frameId) {
        this.completePendingFrame();
      }
      this.pending.push(packet);
      this.pendingBytes += packet.wireSize;
    }
  }

  private onClose(): void {
    // The server closes after whole frames, so what is pending is complete.
    if (this.pending.length > 0) this.completePendingFrame();
    if (this.state !== "error") this.setState("closed");
  }

  private completePendingFrame(): void {
    const packets = this.pending;
    this.pending = [];
    const wireBytes = this.pendingBytes;
    this.pendingBytes = 0;
    const completedAtUs = this.nowUs();
    const frame: ViewerFrame = {
      frameId: packets[0].frameId,
      packets,
      pointCount: packets.reduce((sum, p) => sum + p.surfelCount, 0),
      captureTimestampUs: packets[0].captureTimestampUs,
      completedAtUs,
      wireBytes,
    };
    this.latestFrame = frame;
    this.framesCompleted += 1;
    this.frameTimesUs.push(completedAtUs);
    this.onFrame?.(frame);
  }

  private flushGaze(): void {
    if (!this.gazeDirty || this.state !== "open") return;
    if (this.nowUs() - this.lastSendUs < this.minSendIntervalUs) return;
    this.sendGaze();
  }

  private sendGaze(): void {
    if (this.state !== "open" || this.socket === null) return;
    const now = this.nowUs();
    this.gazeSeq += 1;
    this.socket.send(
      packGaze({
        seq: this.gazeSeq,
        timestampUs: now,
        origin: this.gazeOrigin,
        direction: this.gazeDirection,
        hmdPosition: [0, 0, 0],
        hmdOrientation: IDENTITY_QUAT,
      }),
    );
    this.lastSendUs = now;
    this.gazeDirty = false;
  }
}
