import { describe, expect, it } from "vitest";

import { LatestWinsQueue, Outbound } from "../src/queue.js";

function collector(): { sent: Outbound[]; queue: LatestWinsQueue } {
  const sent: Outbound[] = [];
  const queue = new LatestWinsQueue((msg) => sent.push(msg));
  return { sent, queue };
}

describe("latest-wins queue", () => {
  it("sends immediately when idle", () => {
    const { sent, queue } = collector();
    queue.push({ a: 1 });
    expect(sent).toHaveLength(1);
    expect(sent[0].seq).toBe(1);
  });

  it("coalesces a burst into at most one pending state", () => {
    const { sent, queue } = collector();
    for (let k = 0; k < 10; k++) queue.push({ k });
    expect(sent).toHaveLength(1); // one in flight, nine coalesced
    expect(queue.hasPending).toBe(true);
    queue.onFrame(sent[0].seq);
    expect(sent).toHaveLength(2); // only the newest state went out
    expect(sent[1].state).toEqual({ k: 9 });
    queue.onFrame(sent[1].seq);
    expect(queue.hasPending).toBe(false);
    expect(sent).toHaveLength(2);
  });

  it("always delivers the final state of a burst", () => {
    const { sent, queue } = collector();
    queue.push({ k: "first" });
    queue.push({ k: "mid" });
    queue.push({ k: "final" });
    queue.onFrame(1);
    expect(sent.map((m) => m.state)).toEqual([{ k: "first" }, { k: "final" }]);
  });

  it("reports stale frames so they are dropped", () => {
    const { queue } = collector();
    queue.push({ k: 1 });
    queue.push({ k: 2 });
    queue.onFrame(1); // dispatches seq 2
    expect(queue.onFrame(2)).toBe(true);
    expect(queue.onFrame(1)).toBe(false); // duplicate/late frame
  });

  it("frees the in-flight slot after a reset", () => {
    const { sent, queue } = collector();
    queue.push({ k: 1 });
    queue.push({ k: 2 });
    queue.reset();
    expect(queue.inFlightSeq).toBeNull();
    queue.push({ k: 3 });
    expect(sent).toHaveLength(2);
    expect(sent[1].state).toEqual({ k: 3 });
  });
});
