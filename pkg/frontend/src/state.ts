/** Latent editing state: clamped values, pinned elements, history, sessions.
 *
 * Every mutation clamps to [-1, 1] and length is fixed at construction, so
 * a vector handed to the wire layer can never be out of range or mis-sized.
 */

import type { ModelInfo } from "./api.js";

export const clamp = (x: number): number => Math.min(1, Math.max(-1, x));

export interface Session {
  values: number[];
  pinned: number[];
  /** Saved interpolation target, if any. */
  target: number[] | null;
}

export class LatentState {
  readonly d: number;
  readonly partitions: [number, number][];
  private values_: number[];
  private pinned_: Set<number>;
  private target_: number[] | null = null;
  private history_: number[][] = [];

  constructor(info: ModelInfo) {
    this.d = info.d;
    this.partitions = info.partitions.map(([a, b]) => [a, b]);
    this.values_ = new Array<number>(info.d).fill(0);
    this.pinned_ = new Set();
  }

  get values(): number[] {
    return this.values_.slice();
  }

  get pinned(): ReadonlySet<number> {
    return this.pinned_;
  }

  get target(): number[] | null {
    return this.target_ ? this.target_.slice() : null;
  }

  get history(): readonly number[][] {
    return this.history_;
  }

  private checkIndex(i: number): void {
    if (!Number.isInteger(i) || i < 0 || i >= this.d) {
      throw new RangeError(`element ${i} out of range [0, ${this.d})`);
    }
  }

  /** Set one element (clamped). Pinned elements refuse edits. */
  set(i: number, value: number): boolean {
    this.checkIndex(i);
    if (this.pinned_.has(i)) return false;
    this.history_.push(this.values_.slice());
    this.values_[i] = clamp(value);
    return true;
  }

  setAll(values: number[]): void {
    if (values.length !== this.d) {
      throw new RangeError(`expected ${this.d} values, got ${values.length}`);
    }
    this.history_.push(this.values_.slice());
    this.values_ = values.map((v, i) => (this.pinned_.has(i) ? this.values_[i]! : clamp(v)));
  }

  reset(): void {
    this.history_.push(this.values_.slice());
    this.values_ = this.values_.map((v, i) => (this.pinned_.has(i) ? v : 0));
  }

  pin(i: number): void {
    this.checkIndex(i);
    this.pinned_.add(i);
  }

  unpin(i: number): void {
    this.checkIndex(i);
    this.pinned_.delete(i);
  }

  saveTarget(): void {
    this.target_ = this.values_.slice();
  }

  /** Stage index owning element i, from the served partition table. */
  stageOf(i: number): number {
    this.checkIndex(i);
    const k = this.partitions.findIndex(([a, b]) => i >= a && i < b);
    return k;
  }

  exportSession(): Session {
    return {
      values: this.values_.slice(),
      pinned: [...this.pinned_].sort((a, b) => a - b),
      target: this.target_ ? this.target_.slice() : null,
    };
  }

  importSession(session: Session): void {
    if (session.values.length !== this.d) {
      throw new RangeError(`session has ${session.values.length} values, model wants ${this.d}`);
    }
    for (const i of session.pinned) this.checkIndex(i);
    if (session.target !== null && session.target.length !== this.d) {
      throw new RangeError("session target length mismatch");
    }
    this.values_ = session.values.map(clamp);
    this.pinned_ = new Set(session.pinned);
    this.target_ = session.target ? session.target.map(clamp) : null;
  }
}
