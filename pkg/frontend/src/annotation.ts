// Eight-click annotation workflow: two clicks bound the repetition range,
// then three click pairs bound the instance ranges. Clicks snap to nearby
// trajectory extrema so boundaries land on exact frames.

import type { AnnotationPayload, Range } from './types.js';

export const CLICKS_REQUIRED = 8;
export const SNAP_RADIUS_PX = 5;

export function snapToExtremum(
  frame: number,
  extrema: number[],
  pxPerFrame: number,
  radiusPx: number = SNAP_RADIUS_PX,
): number {
  let best = Math.round(frame);
  let bestDist = Infinity;
  for (const e of extrema) {
    const d = Math.abs(e - frame) * pxPerFrame;
    if (d <= radiusPx && d < bestDist) {
      best = e;
      bestDist = d;
    }
  }
  return best;
}

function asRange(a: number, b: number): Range {
  return a <= b ? [a, b] : [b, a];
}

export class AnnotationDraft {
  readonly clicks: number[] = [];

  constructor(
    public readonly sequenceId: string,
    public concept: string,
  ) {}

  addClick(frame: number, extrema: number[] = [], pxPerFrame = 1): void {
    if (this.isComplete()) {
      throw new Error('draft already has 8 clicks');
    }
    this.clicks.push(snapToExtremum(frame, extrema, pxPerFrame));
  }

  undo(): void {
    this.clicks.pop();
  }

  isComplete(): boolean {
    return this.clicks.length === CLICKS_REQUIRED;
  }

  repetitionRange(): Range | null {
    if (this.clicks.length < 2) return null;
    return asRange(this.clicks[0], this.clicks[1]);
  }

  instanceRanges(): Range[] {
    const out: Range[] = [];
    for (let i = 2; i + 1 < this.clicks.length; i += 2) {
      out.push(asRange(this.clicks[i], this.clicks[i + 1]));
    }
    return out;
  }

  /** Human-readable problems; empty iff the draft can be submitted. */
  problems(): string[] {
    const out: string[] = [];
    if (!this.concept) out.push('pick a concept label');
    if (!this.isComplete()) {
      out.push(`need ${CLICKS_REQUIRED - this.clicks.length} more clicks`);
      return out;
    }
    const rep = this.repetitionRange()!;
    if (rep[0] >= rep[1]) out.push('repetition range is empty');
    const instances = this.instanceRanges();
    const sorted = [...instances].sort((a, b) => a[0] - b[0]);
    for (const [s, e] of instances) {
      if (s >= e) out.push(`instance range [${s}, ${e}) is empty`);
      if (s < rep[0] || e > rep[1])
        out.push(`instance [${s}, ${e}) outside the repetition range`);
    }
    for (let i = 1; i < sorted.length; i++) {
      if (sorted[i][0] < sorted[i - 1][1]) out.push('instance ranges overlap');
    }
    return out;
  }

  isValid(): boolean {
    return this.problems().length === 0;
  }

  /** Payload identical to one entry of the annotation file schema. */
  toPayload(): AnnotationPayload {
    if (!this.isValid()) {
      throw new Error(`draft not submittable: ${this.problems().join('; ')}`);
    }
    const instances = this.instanceRanges();
    return {
      concept: this.concept,
      repetition: this.repetitionRange()!,
      instances: [instances[0], instances[1], instances[2]],
    };
  }
}
