import { ApiClient } from './api.js';
import { AnnotationView } from './annotation_view.js';
import { EditorView } from './editor_view.js';

const api = new ApiClient('');

async function boot(): Promise<void> {
  const annRoot = document.getElementById('annotation-root')!;
  const edRoot = document.getElementById('editor-root')!;
  await new AnnotationView(api, annRoot).mount();
  await new EditorView(api, edRoot).mount();

  const upload = document.getElementById('upload-input') as HTMLInputElement;
  upload.addEventListener('change', async () => {
    const file = upload.files?.[0];
    if (!file) return;
    const doc = JSON.parse(await file.text());
    const res = await api.uploadSequence(doc);
    document.getElementById('upload-status')!.textContent = `uploaded ${res.id}`;
    await new AnnotationView(api, annRoot).mount();
  });

  const trainBtn = document.getElementById('train-btn')!;
  const trainStatus = document.getElementById('train-status')!;
  trainBtn.addEventListener('click', async () => {
    const { job_id } = await api.startTraining({ epochs: 60 });
    trainStatus.textContent = `job ${job_id}…`;
    const poll = setInterval(async () => {
      const job = await api.jobStatus(job_id);
      trainStatus.textContent = `job ${job_id}: ${job.status}`;
      if (job.status === 'done' || job.status === 'failed') clearInterval(poll);
    }, 1000);
  });
}

void boot();
