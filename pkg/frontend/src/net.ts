/**
 * Session layer: /info fetch, the /interactive channel, reconnects, and
 * binary frame decoding (4-byte little-endian sequence + PNG payload).
 */
import { LatestWinsQueue } from "./queue.js";
import { toRenderRequest, ViewerState } from "./state.js";

export interface ModelInfo {
  primitive_count: number;
  parameter_count: number;
  memory_bytes: number;
  relight_evaluations: number;
  relight_cache_hits: number;
}

export interface Frame {
  seq: number;
  png: Uint8Array;
  latencyMs: number;
}

export interface SessionEvents {
  onFrame(frame: Frame): void;
  onStatus(connected: boolean): void;
  onError(message: string): void;
}

/** Narrow WebSocket surface so tests can drive a fake. */
export interface SocketLike {
  binaryType: string;
  onopen: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  send(data: string): void;
  close(): void;
}

export function decodeFrame(buffer: ArrayBuffer): { seq: number; png: Uint8Array } {
  if (buffer.byteLength < 4) {
    throw new Error(`frame too short: ${buffer.byteLength} bytes`);
  }
  const seq = new DataView(buffer).getUint32(0, true);
  return { seq, png: new Uint8Array(buffer, 4) };
}

export async function fetchInfo(baseUrl: string, fetcher = fetch): Promise<ModelInfo> {
  const resp = await fetcher(`${baseUrl}/info`);
  if (!resp.ok) {
    throw new Error(`/info failed: ${resp.status}`);
  }
  return (await resp.json()) as ModelInfo;
}

export class InteractiveSession {
  readonly queue: LatestWinsQueue;
  private socket: SocketLike | null = null;
  private readonly events: SessionEvents;
  private readonly makeSocket: (url: string) => SocketLike;
  private readonly url: string;
  private sentAt = new Map<number, number>();
  private closed = false;
  reconnectDelayMs = 1000;

  constructor(
    url: string,
    events: SessionEvents,
    makeSocket: (url: string) => SocketLike = (u) => new WebSocket(u) as unknown as SocketLike,
  ) {
    this.url = url;
    this.events = events;
    this.makeSocket = makeSocket;
    this.queue = new LatestWinsQueue((msg) => {
      this.sentAt.set(msg.seq, Date.now());
      this.socket?.send(JSON.stringify(msg));
    });
  }

  connect(): void {
    const socket = this.makeSocket(this.url);
    socket.binaryType = "arraybuffer";
    socket.onopen = () => this.events.onStatus(true);
    socket.onclose = () => {
      this.events.onStatus(false);
      this.queue.reset();
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
    socket.onmessage = (ev) => this.handleMessage(ev.data);
    this.socket = socket;
  }

  close(): void {
    this.closed = true;
    this.socket?.close();
  }

  update(state: ViewerState): void {
    this.queue.push(toRenderRequest(state));
  }

  private handleMessage(data: unknown): void {
    if (typeof data === "string") {
      const doc = JSON.parse(data) as { seq?: number; error?: string };
      if (doc.error) {
        if (typeof doc.seq === "number") {
          this.queue.onFrame(doc.seq);
          this.sentAt.delete(doc.seq);
        }
        this.events.onError(doc.error);
      }
      return;
    }
    const { seq, png } = decodeFrame(data as ArrayBuffer);
    const started = this.sentAt.get(seq);
    this.sentAt.delete(seq);
    if (this.queue.onFrame(seq)) {
      this.events.onFrame({ seq, png, latencyMs: started ? Date.now() - started : NaN });
    }
  }
}
