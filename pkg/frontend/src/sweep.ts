/** Payload builders for element sweeps and interpolation strips.
 *
 * Pure functions from state to wire payloads, so tests can assert the
 * frozen-elements and frame-count contracts on exactly what would be sent.
 */

import type { InterpolateRequest } from "./api.js";
import { clamp } from "./state.js";

export const MAX_SWEEP_STEPS = 64;

/** Codes for sweeping element `index` across [-1, 1] in `steps` stops,
 * all other elements frozen at `base`. Rejected client-side beyond 64. */
export function buildSweepCodes(base: number[], index: number, steps: number): number[][] {
  if (!Number.isInteger(steps) || steps < 2) {
    throw new RangeError("steps must be an integer >= 2");
  }
  if (steps > MAX_SWEEP_STEPS) {
    throw new RangeError(`steps must be <= ${MAX_SWEEP_STEPS}`);
  }
  if (!Number.isInteger(index) || index < 0 || index >= base.length) {
    throw new RangeError(`element ${index} out of range [0, ${base.length})`);
  }
  const codes: number[][] = [];
  for (let k = 0; k < steps; k++) {
    const code = base.map(clamp);
    code[index] = -1 + (2 * k) / (steps - 1);
    codes.push(code);
  }
  return codes;
}

export function buildInterpolation(
  from: number[],
  to: number[],
  steps: number,
): InterpolateRequest {
  if (from.length !== to.length) {
    throw new RangeError(`endpoint lengths differ: ${from.length} vs ${to.length}`);
  }
  if (!Number.isInteger(steps) || steps < 2) {
    throw new RangeError("steps must be an integer >= 2");
  }
  if (steps > MAX_SWEEP_STEPS) {
    throw new RangeError(`steps must be <= ${MAX_SWEEP_STEPS}`);
  }
  return { from: from.map(clamp), to: to.map(clamp), steps };
}
