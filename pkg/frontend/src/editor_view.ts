// Editor view: concept timeline with relabel/insert/delete, per-primitive
// coefficient sliders, and canvas playback of server-rendered frames.

import { ApiClient, ApiError, ConflictError } from './api.js';
import { EditorSession } from './editor.js';
import { drawSkeleton, Player } from './skeleton.js';
import type { ConceptsResponse, EditCommandPayload } from './types.js';

export class EditorView {
  private session: EditorSession | null = null;
  private player: Player | null = null;
  private concepts: ConceptsResponse | null = null;
  private selected = 0;

  constructor(
    private api: ApiClient,
    private root: HTMLElement,
  ) {}

  async mount(): Promise<void> {
    this.concepts = await this.api.concepts();
    this.root.innerHTML = `
      <section class="panel">
        <h2>Edit</h2>
        <div class="row">
          <label>Script <input id="ed-script" size="40"
            value='[["${this.concepts.labels[0]}", 3]]'/></label>
          <label>Seed <input id="ed-seed" type="number" value="0"/></label>
          <button id="ed-open">Open session</button>
          <span id="ed-version"></span>
        </div>
        <div id="ed-timeline" class="timeline"></div>
        <div class="row">
          <label>Insert
            <select id="ed-concept">${this.concepts.labels
              .map((l) => `<option>${l}</option>`)
              .join('')}</select>
          </label>
          <button id="ed-insert">Insert after selected</button>
          <button id="ed-relabel">Relabel selected</button>
          <button id="ed-delete">Delete selected</button>
          <button id="ed-export">Export primitives</button>
        </div>
        <div class="row" id="ed-sliders"></div>
        <canvas id="ed-canvas" width="640" height="480"></canvas>
        <div class="row">
          <button id="ed-play">Play</button>
          <input id="ed-seek" type="range" min="0" value="0" style="flex:1"/>
        </div>
        <div id="ed-error" class="error"></div>
      </section>`;
    this.el('ed-open').addEventListener('click', () => void this.open());
    this.el('ed-delete').addEventListener('click', () =>
      void this.edit({ kind: 'delete', target: this.selected }));
    this.el('ed-relabel').addEventListener('click', () =>
      void this.edit({
        kind: 'relabel',
        target: this.selected,
        label: (this.el('ed-concept') as HTMLSelectElement).value,
      }));
    this.el('ed-insert').addEventListener('click', () =>
      void this.edit({
        kind: 'insert',
        target: this.selected + 1,
        entry: [(this.el('ed-concept') as HTMLSelectElement).value, 1],
      }));
    this.el('ed-export').addEventListener('click', () => void this.export());
    this.el('ed-play').addEventListener('click', () => this.togglePlay());
    (this.el('ed-seek') as HTMLInputElement).addEventListener('input', (ev) => {
      this.player?.pause();
      this.player?.seek(Number((ev.target as HTMLInputElement).value));
    });
  }

  private el(id: string): HTMLElement {
    return this.root.querySelector(`#${id}`) as HTMLElement;
  }

  private async open(): Promise<void> {
    const entries = JSON.parse((this.el('ed-script') as HTMLInputElement).value);
    const seed = Number((this.el('ed-seed') as HTMLInputElement).value);
    const payload = await this.api.openSession({ script: { entries, seed } });
    this.session = new EditorSession(this.api, payload);
    this.selected = 0;
    await this.refresh();
  }

  private async edit(command: EditCommandPayload): Promise<void> {
    if (!this.session) return;
    try {
      await this.session.apply(command);
      this.el('ed-error').textContent = '';
    } catch (err) {
      if (err instanceof ConflictError) {
        const retry = confirm(
          'This session changed elsewhere. Reload the latest state and retry the edit?',
        );
        if (retry) {
          await this.session.retryAfterConflict(command);
        } else {
          await this.session.reload();
        }
      } else if (err instanceof ApiError) {
        this.el('ed-error').textContent = JSON.stringify(err.body);
        return;
      } else {
        throw err;
      }
    }
    await this.refresh();
  }

  private async refresh(): Promise<void> {
    if (!this.session) return;
    const state = this.session.state;
    this.selected = Math.min(this.selected, state.segments.length - 1);
    this.el('ed-version').textContent = `session ${state.id} · v${state.version}`;
    const timeline = this.el('ed-timeline');
    timeline.innerHTML = '';
    state.segments.forEach((seg, i) => {
      const div = document.createElement('div');
      div.className = 'segment' + (i === this.selected ? ' selected' : '');
      div.style.flexGrow = String(seg.n_frames);
      div.textContent = `${seg.concept} (${seg.n_frames}f)`;
      div.addEventListener('click', () => {
        this.selected = i;
        void this.refresh();
      });
      timeline.appendChild(div);
    });
    this.renderSliders();
    const frames = await this.session.fetchFrames();
    const canvas = this.el('ed-canvas') as HTMLCanvasElement;
    canvas.width = frames.width;
    canvas.height = frames.height;
    const ctx = canvas.getContext('2d')!;
    const bones = this.concepts!.bones;
    const seek = this.el('ed-seek') as HTMLInputElement;
    seek.max = String(Math.max(0, frames.frames.length - 1));
    const wasPlaying = this.player?.playing ?? false;
    this.player?.pause();
    this.player = new Player(frames.frames, frames.fps, (frame, i) => {
      ctx.clearRect(0, 0, canvas.width, canvas.height);
      drawSkeleton(ctx, frame, bones);
      seek.value = String(i);
    });
    this.player.seek(0);
    if (wasPlaying) this.player.play();
  }

  private renderSliders(): void {
    if (!this.session) return;
    const seg = this.session.state.segments[this.selected];
    const box = this.el('ed-sliders');
    box.innerHTML = '';
    if (!seg) return;
    // expose the x/y intercepts (d coefficients) of the first primitive of
    // the selected segment; other coefficients follow the same path
    const jointNames = this.session.state.meta.joint_names;
    [0, 1].slice(0, Math.min(2, jointNames.length)).forEach((joint) => {
      [3, 7].forEach((coeffIdx) => {
        const label = document.createElement('label');
        const axis = coeffIdx === 3 ? 'x' : 'y';
        label.textContent = `${jointNames[joint]} d_${axis}`;
        const input = document.createElement('input');
        input.type = 'number';
        input.step = '5';
        input.placeholder = 'offset px';
        input.addEventListener('change', () => {
          const value = Number(input.value);
          if (Number.isFinite(value)) {
            void this.edit({
              kind: 'set_primitive_param',
              target: this.selected,
              param: [0, joint * 8 + coeffIdx, value],
            });
          }
        });
        label.appendChild(input);
        box.appendChild(label);
      });
    });
  }

  private async export(): Promise<void> {
    if (!this.session) return;
    const res = await this.session.export();
    this.el('ed-error').textContent = `exported to ${res.path}`;
  }

  private togglePlay(): void {
    if (!this.player) return;
    if (this.player.playing) this.player.pause();
    else this.player.play();
  }
}
