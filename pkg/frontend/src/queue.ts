/**
 * Latest-wins update queue with sequence-numbered frames.
 *
 * At most one request is in flight; while it renders, newer states
 * overwrite a depth-1 pending slot. Incoming frames are dropped unless
 * their sequence number is newer than everything shown so far, so the
 * canvas always reflects the most recently acknowledged state.
 */

export interface Outbound {
  seq: number;
  state: object;
}

export class LatestWinsQueue {
  private nextSeq = 1;
  private inFlight: number | null = null;
  private pending: object | null = null;
  private lastShown = 0;
  private readonly send: (msg: Outbound) => void;

  constructor(send: (msg: Outbound) => void) {
    this.send = send;
  }

  /** Queue a state update; sends immediately when idle. */
  push(state: object): void {
    if (this.inFlight === null) {
      this.dispatch(state);
    } else {
      this.pending = state;
    }
  }

  /**
   * Handle an arriving frame. Returns true when the frame is fresh and
   * should be displayed; stale frames (older than one already shown)
   * return false.
   */
  onFrame(seq: number): boolean {
    if (this.inFlight === seq) {
      this.inFlight = null;
      if (this.pending !== null) {
        const state = this.pending;
        this.pending = null;
        this.dispatch(state);
      }
    }
    if (seq <= this.lastShown) {
      return false;
    }
    this.lastShown = seq;
    return true;
  }

  /** After a reconnect nothing is in flight any more. */
  reset(): void {
    this.inFlight = null;
    this.pending = null;
  }

  get inFlightSeq(): number | null {
    return this.inFlight;
  }

  get hasPending(): boolean {
    return this.pending !== null;
  }

  private dispatch(state: object): void {
    const seq = this.nextSeq++;
    this.inFlight = seq;
    this.send({ seq, state });
  }
}
