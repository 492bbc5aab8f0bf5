/** Debounced, cancelling, rate-capped dispatch for slider-driven renders.
 *
 * One pane = one scheduler = at most one request in flight. A new request
 * aborts the in-flight one; bursts coalesce on a 100 ms debounce and a
 * minimum spacing keeps sustained traffic at or under 10 requests/second.
 */

export const DEBOUNCE_MS = 100;
export const MIN_SPACING_MS = 100; // 1000 / 10 rps

export type RenderFn = (latent: number[], signal: AbortSignal) => Promise<void>;

export interface SchedulerClock {
  now(): number;
  setTimeout(fn: () => void, ms: number): ReturnType<typeof setTimeout>;
  clearTimeout(id: ReturnType<typeof setTimeout>): void;
}

const realClock: SchedulerClock = {
  now: () => Date.now(),
  setTimeout: (fn, ms) => setTimeout(fn, ms),
  clearTimeout: (id) => clearTimeout(id),
};

export class RenderScheduler {
  private pending: number[] | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight: AbortController | null = null;
  private lastSend = -Infinity;
  private sends_ = 0;

  constructor(
    private readonly render: RenderFn,
    private readonly clock: SchedulerClock = realClock,
  ) {}

  /** Total requests actually dispatched (for tests and the status line). */
  get sendCount(): number {
    return this.sends_;
  }

  get busy(): boolean {
    return this.inFlight !== null || this.timer !== null;
  }

  /** Queue the latest latent; earlier queued values are superseded. */
  request(latent: number[]): void {
    this.pending = latent.slice();
    if (this.timer !== null) return; // debounce window already open
    const wait = Math.max(
      DEBOUNCE_MS,
      this.lastSend + MIN_SPACING_MS - this.clock.now(),
    );
    this.timer = this.clock.setTimeout(() => {
      this.timer = null;
      this.fire();
    }, wait);
  }

  /** Drop anything queued and abort the in-flight request. */
  cancel(): void {
    if (this.timer !== null) {
      this.clock.clearTimeout(this.timer);
      this.timer = null;
    }
    this.pending = null;
    this.inFlight?.abort();
    this.inFlight = null;
  }

  private fire(): void {
    if (this.pending === null) return;
    const latent = this.pending;
    this.pending = null;
    this.inFlight?.abort(); // newest request wins
    const controller = new AbortController();
    this.inFlight = controller;
    this.lastSend = this.clock.now();
    this.sends_ += 1;
    void this.render(latent, controller.signal)
      .catch(() => {
        /* abort or transport error: the caller's render fn reports it */
      })
      .finally(() => {
        if (this.inFlight === controller) this.inFlight = null;
      });
  }
}
