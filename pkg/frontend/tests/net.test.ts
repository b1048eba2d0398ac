import { describe, expect, it, vi } from "vitest";

import { decodeFrame, fetchInfo, Frame, InteractiveSession, SocketLike } from "../src/net.js";
import { defaultState } from "../src/state.js";

class FakeSocket implements SocketLike {
  binaryType = "blob";
  onopen: ((ev?: unknown) => void) | null = null;
  onclose: ((ev?: unknown) => void) | null = null;
  onmessage: ((ev: { data: unknown }) => void) | null = null;
  sent: string[] = [];
  closed = false;

  send(data: string): void {
    this.sent.push(data);
  }
  close(): void {
    this.closed = true;
    this.onclose?.();
  }
  reply(seq: number, payload = [1, 2, 3]): void {
    const buf = new ArrayBuffer(4 + payload.length);
    new DataView(buf).setUint32(0, seq, true);
    new Uint8Array(buf, 4).set(payload);
    this.onmessage?.({ data: buf });
  }
}

function makeSession() {
  const sockets: FakeSocket[] = [];
  const frames: Frame[] = [];
  const status: boolean[] = [];
  const errors: string[] = [];
  const session = new InteractiveSession(
    "ws://test/interactive",
    {
      onFrame: (f) => frames.push(f),
      onStatus: (s) => status.push(s),
      onError: (e) => errors.push(e),
    },
    () => {
      const s = new FakeSocket();
      sockets.push(s);
      return s;
    },
  );
  session.connect();
  sockets[0].onopen?.();
  return { session, sockets, frames, status, errors };
}

describe("frame decoding", () => {
  it("splits the sequence prefix from the PNG payload", () => {
    const buf = new ArrayBuffer(6);
    new DataView(buf).setUint32(0, 313, true);
    new Uint8Array(buf, 4).set([9, 8]);
    const frame = decodeFrame(buf);
    expect(frame.seq).toBe(313);
    expect(Array.from(frame.png)).toEqual([9, 8]);
  });

  it("rejects runt frames", () => {
    expect(() => decodeFrame(new ArrayBuffer(2))).toThrow(/too short/);
  });
});

describe("interactive session", () => {
  it("serializes state updates onto the socket", () => {
    const { session, sockets } = makeSession();
    session.update(defaultState());
    expect(sockets[0].sent).toHaveLength(1);
    const msg = JSON.parse(sockets[0].sent[0]);
    expect(msg.seq).toBe(1);
    expect(msg.state.camera.orbit.radius).toBeCloseTo(3.2);
  });

  it("shows only fresh frames and reports latency", () => {
    const { session, sockets, frames } = makeSession();
    session.update(defaultState());
    sockets[0].reply(1);
    expect(frames).toHaveLength(1);
    expect(frames[0].seq).toBe(1);
    expect(frames[0].latencyMs).toBeGreaterThanOrEqual(0);
    sockets[0].reply(1); // duplicate: stale, dropped
    expect(frames).toHaveLength(1);
  });

  it("keeps the canvas on the most recent acknowledged state", () => {
    const { session, sockets, frames } = makeSession();
    const state = defaultState();
    session.update(state);
    state.camera.azimuth = 1.0;
    session.update(state);
    state.camera.azimuth = 2.0;
    session.update(state); // coalesces with the previous update
    sockets[0].reply(1);
    expect(sockets[0].sent).toHaveLength(2); // burst of 3 -> 2 renders
    sockets[0].reply(2);
    expect(frames.map((f) => f.seq)).toEqual([1, 2]);
    const last = JSON.parse(sockets[0].sent[1]);
    expect(last.state.camera.orbit.azimuth).toBe(2.0);
  });

  it("surfaces server-side request errors", () => {
    const { session, sockets, errors } = makeSession();
    session.update(defaultState());
    sockets[0].onmessage?.({ data: JSON.stringify({ seq: 1, error: "bad camera" }) });
    expect(errors).toEqual(["bad camera"]);
    session.update(defaultState());
    expect(sockets[0].sent).toHaveLength(2); // slot freed after the error
  });

  it("reconnects after a close and reports status", async () => {
    vi.useFakeTimers();
    const { session, sockets, status } = makeSession();
    expect(status).toEqual([true]);
    sockets[0].close();
    expect(status).toEqual([true, false]);
    vi.advanceTimersByTime(1500);
    expect(sockets).toHaveLength(2);
    sockets[1].onopen?.();
    expect(status).toEqual([true, false, true]);
    session.close();
    vi.useRealTimers();
  });
});

describe("fetchInfo", () => {
  it("parses the /info document", async () => {
    const fetcher = vi.fn(async () => ({
      ok: true,
      json: async () => ({ primitive_count: 7, parameter_count: 7623 }),
    })) as unknown as typeof fetch;
    const info = await fetchInfo("http://host", fetcher);
    expect(info.parameter_count).toBe(7623);
    expect(fetcher).toHaveBeenCalledWith("http://host/info");
  });

  it("raises on HTTP errors", async () => {
    const fetcher = vi.fn(async () => ({ ok: false, status: 503 })) as unknown as typeof fetch;
    await expect(fetchInfo("http://host", fetcher)).rejects.toThrow(/503/);
  });
});
