// Canvas skeleton rendering and fixed-fps playback of server-provided frames.
// The player renders exactly the frames returned by the API; no client-side
// interpolation.

export type Frame = number[][]; // (J, 2)

export interface DrawStyle {
  joint: string;
  bone: string;
  jointRadius: number;
}

const DEFAULT_STYLE: DrawStyle = { joint: '#ffb347', bone: '#4aa3ff', jointRadius: 4 };

export function drawSkeleton(
  ctx: CanvasRenderingContext2D,
  frame: Frame,
  bones: [number, number][],
  style: DrawStyle = DEFAULT_STYLE,
): void {
  ctx.lineWidth = 3;
  ctx.strokeStyle = style.bone;
  for (const [a, b] of bones) {
    if (a >= frame.length || b >= frame.length) continue;
    ctx.beginPath();
    ctx.moveTo(frame[a][0], frame[a][1]);
    ctx.lineTo(frame[b][0], frame[b][1]);
    ctx.stroke();
  }
  ctx.fillStyle = style.joint;
  for (const [x, y] of frame) {
    ctx.beginPath();
    ctx.arc(x, y, style.jointRadius, 0, Math.PI * 2);
    ctx.fill();
  }
}

export class Player {
  cursor = 0;
  private timer: number | null = null;

  constructor(
    private frames: Frame[],
    private fps: number,
    private onFrame: (frame: Frame, index: number) => void,
  ) {}

  get length(): number {
    return this.frames.length;
  }

  setFrames(frames: Frame[]): void {
    this.frames = frames;
    this.cursor = Math.min(this.cursor, Math.max(0, frames.length - 1));
    this.emit();
  }

  seek(index: number): void {
    this.cursor = Math.max(0, Math.min(index, this.frames.length - 1));
    this.emit();
  }

  private emit(): void {
    if (this.frames.length) this.onFrame(this.frames[this.cursor], this.cursor);
  }

  play(): void {
    if (this.timer !== null || !this.frames.length) return;
    this.timer = setInterval(() => {
      this.cursor = (this.cursor + 1) % this.frames.length;
      this.emit();
    }, 1000 / this.fps) as unknown as number;
  }

  pause(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
  }

  get playing(): boolean {
    return this.timer !== null;
  }
}
