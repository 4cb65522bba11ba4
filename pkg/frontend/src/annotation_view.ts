// Annotation workflow view: per-joint trajectory plots with extremum markers,
// an eight-click log, and submission through server validation.

import { ApiClient, ApiError } from './api.js';
import { AnnotationDraft, CLICKS_REQUIRED } from './annotation.js';
import type { TrajectoryResponse } from './types.js';

const PLOT_W = 900;
const PLOT_H = 220;

export class AnnotationView {
  private draft: AnnotationDraft | null = null;
  private trajectory: TrajectoryResponse | null = null;
  private axis: 'x' | 'y' = 'y';

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
  ) {}

  async mount(): Promise<void> {
    const [concepts, sequences] = await Promise.all([
      this.api.concepts(),
      this.api.listSequences(),
    ]);
    this.root.innerHTML = `
      <section class="panel">
        <h2>Annotate</h2>
        <div class="row">
          <label>Sequence
            <select id="ann-seq">${sequences.sequences
              .map((s) => `<option>${s}</option>`)
              .join('')}</select>
          </label>
          <label>Joint <input id="ann-joint" type="number" value="3" min="0"/></label>
          <label>Axis
            <select id="ann-axis"><option>y</option><option>x</option></select>
          </label>
          <label>Concept
            <select id="ann-concept">${concepts.labels
              .map((l) => `<option>${l}</option>`)
              .join('')}</select>
          </label>
          <button id="ann-load">Load trajectory</button>
        </div>
        <canvas id="ann-plot" width="${PLOT_W}" height="${PLOT_H}"></canvas>
        <div class="row">
          <span id="ann-status">upload a sequence, then load its trajectory</span>
          <button id="ann-undo">Undo click</button>
          <button id="ann-submit" disabled>Submit annotation</button>
        </div>
        <div id="ann-error" class="error"></div>
      </section>`;
    this.el('ann-load').addEventListener('click', () => void this.load());
    this.el('ann-undo').addEventListener('click', () => {
      this.draft?.undo();
      this.render();
    });
    this.el('ann-submit').addEventListener('click', () => void this.submit());
    const plot = this.el('ann-plot') as HTMLCanvasElement;
    plot.addEventListener('click', (ev) => this.onPlotClick(ev));
  }

  private el(id: string): HTMLElement {
    return this.root.querySelector(`#${id}`) as HTMLElement;
  }

  private async load(): Promise<void> {
    const seqId = (this.el('ann-seq') as HTMLSelectElement).value;
    const joint = Number((this.el('ann-joint') as HTMLInputElement).value);
    this.axis = (this.el('ann-axis') as HTMLSelectElement).value as 'x' | 'y';
    this.trajectory = await this.api.trajectories(seqId, joint);
    this.draft = new AnnotationDraft(
      seqId,
      (this.el('ann-concept') as HTMLSelectElement).value,
    );
    this.render();
  }

  private series(): number[] {
    return this.axis === 'y' ? this.trajectory!.y : this.trajectory!.x;
  }

  private extrema(): number[] {
    return this.axis === 'y' ? this.trajectory!.extrema_y : this.trajectory!.extrema_x;
  }

  private pxPerFrame(): number {
    return PLOT_W / Math.max(1, this.series().length - 1);
  }

  private onPlotClick(ev: MouseEvent): void {
    if (!this.trajectory || !this.draft || this.draft.isComplete()) return;
    const rect = (ev.target as HTMLCanvasElement).getBoundingClientRect();
    const frame = (ev.clientX - rect.left) / this.pxPerFrame();
    this.draft.addClick(frame, this.extrema(), this.pxPerFrame());
    this.render();
  }

  private async submit(): Promise<void> {
    if (!this.draft) return;
    this.draft.concept = (this.el('ann-concept') as HTMLSelectElement).value;
    try {
      const res = await this.api.submitAnnotation(
        this.draft.sequenceId,
        this.draft.toPayload(),
      );
      this.el('ann-error').textContent = '';
      this.el('ann-status').textContent =
        `saved (${res.count} annotations on ${this.draft.sequenceId})`;
      this.draft = new AnnotationDraft(this.draft.sequenceId, this.draft.concept);
      this.render();
    } catch (err) {
      this.el('ann-error').textContent =
        err instanceof ApiError ? JSON.stringify(err.body) : String(err);
    }
  }

  private render(): void {
    if (!this.trajectory || !this.draft) return;
    const ctx = (this.el('ann-plot') as HTMLCanvasElement).getContext('2d')!;
    const series = this.series();
    const lo = Math.min(...series);
    const hi = Math.max(...series);
    const scaleY = (v: number) =>
      PLOT_H - 15 - ((v - lo) / Math.max(1e-9, hi - lo)) * (PLOT_H - 30);
    const ppf = this.pxPerFrame();
    ctx.clearRect(0, 0, PLOT_W, PLOT_H);
    ctx.strokeStyle = '#4aa3ff';
    ctx.beginPath();
    series.forEach((v, f) => (f ? ctx.lineTo(f * ppf, scaleY(v)) : ctx.moveTo(0, scaleY(v))));
    ctx.stroke();
    ctx.fillStyle = '#ffb347';
    for (const e of this.extrema()) {
      ctx.beginPath();
      ctx.arc(e * ppf, scaleY(series[e]), 4, 0, Math.PI * 2);
      ctx.fill();
    }
    this.draft.clicks.forEach((f, i) => {
      ctx.strokeStyle = i < 2 ? '#ff5f5f' : '#7bd88f';
      ctx.beginPath();
      ctx.moveTo(f * ppf, 0);
      ctx.lineTo(f * ppf, PLOT_H);
      ctx.stroke();
    });
    const problems = this.draft.problems();
    this.el('ann-status').textContent =
      `${this.draft.clicks.length}/${CLICKS_REQUIRED} clicks` +
      (problems.length ? ` — ${problems[0]}` : ' — ready');
    (this.el('ann-submit') as HTMLButtonElement).disabled = !this.draft.isValid();
  }
}
