"""HTTP service backing the annotation/editing studio.

Project state lives on disk (one JSON file per object, written atomically
before any request is acknowledged), so a restarted service reloads an
identical project. Edit sessions use optimistic concurrency via integer
version tokens; training runs on a single background worker per project.
"""

from __future__ import annotations

import queue
import threading
import traceback
from pathlib import Path
import numpy as np
from fastapi import Body, FastAPI, HTTPException, Query
from fastapi.staticfiles import StaticFiles

from . import synth_bench
from .errors import PmcError, ValidationError
from .generator import (
    EditCommand,
    MotionScript,
    Occurrence,
    apply_edit,
    load_concept_models,
    sample_script,
    stitch,
)
from .network import ModelConfig
from .primitives import (
    DEFAULT_LAMBDA,
    SegmentationConfig,
    execute_primitives,
    segment_primitives,
)
from .training import TrainedModel, TrainingConfig, align_occurrences, describe, train
from .types import (
    FORMAT_VERSION,
    ConceptVocabulary,
    PoseSequence,
    WeakAnnotation,
    atomic_write_json,
    read_json,
)

SMOOTH_WINDOW = 5
EXTREMUM_HALF_WINDOW = 3


def moving_average(series: np.ndarray, window: int = SMOOTH_WINDOW) -> np.ndarray:
    if series.shape[0] < window:
        return series.copy()
    kernel = np.ones(window) / window
    pad = window // 2
    padded = np.concatenate([
        np.full(pad, series[0]),
        series,
        np.full(window - 1 - pad, series[-1]),
    ])
    return np.convolve(padded, kernel, mode="valid")


def local_extrema(series: np.ndarray, half_window: int = EXTREMUM_HALF_WINDOW) -> list[int]:
    """Frames that are a strict local min or max of the smoothed series over
    a +/- half_window neighborhood."""
    smooth = moving_average(series)
    n = smooth.shape[0]
    out = []
    for t in range(half_window, n - half_window):
        w = smooth[t - half_window : t + half_window + 1]
        center = smooth[t]
        others = np.delete(w, half_window)
        if np.all(center > others) or np.all(center < others):
            out.append(t)
    return out


class Project:
    """On-disk project: sequences, annotations, checkpoints, concept models,
    edit sessions, and training jobs."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.lock = threading.RLock()
        for sub in ("sequences", "annotations", "checkpoints", "models", "sessions", "jobs", "exports"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self.config_path = self.root / "project.json"
        if not self.config_path.exists():
            atomic_write_json(
                {
                    "version": FORMAT_VERSION,
                    "vocabulary": sorted(synth_bench.default_concept_specs()),
                    "bones": [list(b) for b in synth_bench.BONES],
                    "meta": {
                        "fps": 30.0,
                        "width": 640,
                        "height": 480,
                        "joint_names": list(synth_bench.JOINT_NAMES),
                    },
                    "counters": {"session": 0, "job": 0},
                },
                self.config_path,
            )
        self.config = read_json(self.config_path)
        # a restart cannot resume an in-flight training job
        for path in (self.root / "jobs").glob("*.json"):
            job = read_json(path)
            if job.get("status") in ("queued", "running"):
                job["status"] = "failed"
                job["error"] = "interrupted by service restart"
                atomic_write_json(job, path)

    # -- config helpers

    @property
    def vocabulary(self) -> ConceptVocabulary:
        return ConceptVocabulary(tuple(self.config["vocabulary"]))

    @property
    def meta(self) -> dict:
        return dict(self.config["meta"])

    def next_id(self, kind: str) -> str:
        with self.lock:
            self.config["counters"][kind] += 1
            atomic_write_json(self.config, self.config_path)
            return f"{kind}-{self.config['counters'][kind]:04d}"

    # -- sequences and annotations

    def sequence_path(self, seq_id: str) -> Path:
        return self.root / "sequences" / f"{seq_id}.json"

    def save_sequence(self, seq: PoseSequence) -> None:
        atomic_write_json(seq.to_json(), self.sequence_path(seq.id))

    def load_sequence(self, seq_id: str) -> PoseSequence:
        path = self.sequence_path(seq_id)
        if not path.exists():
            raise HTTPException(404, f"unknown sequence {seq_id!r}")
        return PoseSequence.from_json(read_json(path))

    def sequence_ids(self) -> list[str]:
        return sorted(p.stem for p in (self.root / "sequences").glob("*.json"))

    def annotation_path(self, seq_id: str) -> Path:
        return self.root / "annotations" / f"{seq_id}.json"

    def load_annotation_records(self, seq_id: str) -> list[dict]:
        path = self.annotation_path(seq_id)
        if not path.exists():
            return []
        return read_json(path)["annotations"]

    def annotations_of(self, seq_id: str) -> list[WeakAnnotation]:
        return [
            WeakAnnotation.from_json(rec, seq_id)
            for rec in self.load_annotation_records(seq_id)
        ]

    def append_annotation(self, seq_id: str, record: dict) -> int:
        ann = WeakAnnotation.from_json(record, seq_id)  # validates
        if ann.concept not in self.vocabulary.labels:
            raise ValidationError(f"unknown concept {ann.concept!r}")
        seq = self.load_sequence(seq_id)
        if ann.repetition_range[1] > seq.T:
            raise ValidationError("repetition range exceeds sequence length")
        with self.lock:
            records = self.load_annotation_records(seq_id)
            records.append(ann.to_json())
            atomic_write_json(
                {
                    "version": FORMAT_VERSION,
                    "sequence_id": seq_id,
                    "annotations": records,
                },
                self.annotation_path(seq_id),
            )
            return len(records)

    # -- sessions

    def session_path(self, sid: str) -> Path:
        return self.root / "sessions" / f"{sid}.json"

    def load_session(self, sid: str) -> dict:
        path = self.session_path(sid)
        if not path.exists():
            raise HTTPException(404, f"unknown session {sid!r}")
        return read_json(path)

    def save_session(self, session: dict) -> None:
        atomic_write_json(session, self.session_path(session["id"]))

    # -- jobs

    def job_path(self, jid: str) -> Path:
        return self.root / "jobs" / f"{jid}.json"

    def load_job(self, jid: str) -> dict:
        path = self.job_path(jid)
        if not path.exists():
            raise HTTPException(404, f"unknown job {jid!r}")
        return read_json(path)

    def save_job(self, job: dict) -> None:
        atomic_write_json(job, self.job_path(job["id"]))


def _session_segments(session: dict) -> list[Occurrence]:
    return [Occurrence.from_json(o) for o in session["segments"]]


def _session_payload(session: dict) -> dict:
    segs = _session_segments(session)
    bounds = []
    total = 0
    for seg in segs:
        bounds.append([total, total + seg.n_frames])
        total += seg.n_frames
    return {
        "id": session["id"],
        "version": session["version"],
        "segments": [
            {
                "concept": seg.concept,
                "num_splines": seg.num_splines,
                "n_frames": seg.n_frames,
                "frames": bounds[i],
            }
            for i, seg in enumerate(segs)
        ],
        "total_frames": total,
        "meta": session["meta"],
    }


def create_app(project_dir: str | Path) -> FastAPI:
    project = Project(project_dir)
    app = FastAPI(title="pmc studio service")
    jobs: "queue.Queue[str]" = queue.Queue()

    def train_worker() -> None:
        while True:
            jid = jobs.get()
            if jid is None:
                return
            job = project.load_job(jid)
            job["status"] = "running"
            project.save_job(job)
            try:
                cfg = job["config"]
                sequences = []
                annotations = []
                for seq_id in project.sequence_ids():
                    anns = project.annotations_of(seq_id)
                    if not anns:
                        continue
                    sequences.append(project.load_sequence(seq_id))
                    annotations.extend(anns)
                seg = SegmentationConfig(
                    lam=cfg.get("lambda", DEFAULT_LAMBDA),
                    min_segment_frames=cfg.get("min_segment_frames", 5),
                    max_segment_frames=cfg.get("max_segment_frames"),
                )
                vocab = project.vocabulary
                covered = {a.concept for a in annotations}
                trained_vocab = ConceptVocabulary(
                    tuple(l for l in vocab.labels if l in covered)
                )
                j = sequences[0].J if sequences else 0
                model_cfg = ModelConfig(
                    feature_dim=8 * j + 1,
                    num_classes=trained_vocab.num_classes,
                    hidden_dim=cfg.get("hidden_dim", 64),
                    window_size=cfg.get("window_size", 13),
                    cell_kind=cfg.get("cell_kind", "gru"),
                    seed=cfg.get("seed", 0),
                )
                train_cfg = TrainingConfig(
                    epochs=cfg.get("epochs", 50),
                    warmup_epochs=cfg.get("warmup_epochs"),
                    learning_rate=cfg.get("learning_rate", 1e-3),
                    final_learning_rate=cfg.get("final_learning_rate"),
                    seed=cfg.get("seed", 0),
                )
                model, history = train(
                    sequences, annotations, trained_vocab, seg, train_cfg, model_cfg
                )
                name = job["checkpoint"]
                model.save(project.root / "checkpoints" / f"{name}.json")
                job["status"] = "done"
                job["result"] = {
                    "checkpoint": name,
                    "epochs": len(history),
                    "final_loss": history[-1]["total"],
                }
            except Exception as exc:  # job errors must surface via the API
                job["status"] = "failed"
                job["error"] = f"{type(exc).__name__}: {exc}"
                job["trace"] = traceback.format_exc(limit=5)
            project.save_job(job)

    worker = threading.Thread(target=train_worker, daemon=True)
    worker.start()
    app.state.project = project

    def load_model(name: str | None) -> TrainedModel:
        ckpts = sorted((project.root / "checkpoints").glob("*.json"))
        if name is None:
            if not ckpts:
                raise HTTPException(404, "no checkpoint trained yet")
            path = ckpts[-1]
        else:
            path = project.root / "checkpoints" / f"{name}.json"
            if not path.exists():
                raise HTTPException(404, f"unknown checkpoint {name!r}")
        return TrainedModel.load(path)

    def load_models_dir() -> dict:
        try:
            return load_concept_models(project.root / "models")
        except PmcError as exc:
            raise HTTPException(404, f"no concept models: {exc}") from exc

    @app.exception_handler(PmcError)
    async def pmc_error_handler(_, exc: PmcError):
        from fastapi.responses import JSONResponse

        return JSONResponse(
            status_code=400,
            content={"error": {"type": type(exc).__name__, "message": str(exc)}},
        )

    # -- sequences

    @app.post("/sequences")
    def upload_sequence(body: dict = Body(...)):
        seq = PoseSequence.from_json(body)
        with project.lock:
            project.save_sequence(seq)
        return {"id": seq.id, "frames": seq.T, "joints": seq.J}

    @app.get("/sequences")
    def list_sequences():
        return {"sequences": project.sequence_ids()}

    @app.get("/sequences/{seq_id}/trajectories")
    def trajectories(seq_id: str, joint: int = Query(0, ge=0)):
        seq = project.load_sequence(seq_id)
        if joint >= seq.J:
            raise HTTPException(404, f"sequence has {seq.J} joints")
        x = seq.frames[:, joint, 0]
        y = seq.frames[:, joint, 1]
        ex, ey = local_extrema(x), local_extrema(y)
        return {
            "joint": joint,
            "joint_name": seq.joint_names[joint],
            "fps": seq.fps,
            "x": x.tolist(),
            "y": y.tolist(),
            "extrema_x": ex,
            "extrema_y": ey,
            "extrema": sorted(set(ex) | set(ey)),
        }

    @app.post("/sequences/{seq_id}/annotations")
    def add_annotation(seq_id: str, body: dict = Body(...)):
        count = project.append_annotation(seq_id, body)
        return {"sequence_id": seq_id, "count": count}

    @app.get("/sequences/{seq_id}/annotations")
    def get_annotations(seq_id: str):
        project.load_sequence(seq_id)  # 404 on unknown id
        return {
            "version": FORMAT_VERSION,
            "sequence_id": seq_id,
            "annotations": project.load_annotation_records(seq_id),
        }

    # -- vocabulary / models

    @app.get("/concepts")
    def concepts():
        vocab = project.vocabulary
        model_files = sorted(p.stem for p in (project.root / "models").glob("*.json"))
        ckpts = sorted(p.stem for p in (project.root / "checkpoints").glob("*.json"))
        return {
            "labels": list(vocab.labels),
            "blank_index": vocab.blank_index,
            "bones": project.config["bones"],
            "meta": project.meta,
            "models": model_files,
            "checkpoints": ckpts,
        }

    # -- training jobs

    @app.post("/train")
    def start_training(body: dict = Body(default={})):
        if not any(project.annotations_of(s) for s in project.sequence_ids()):
            raise HTTPException(400, "no annotated sequences to train on")
        with project.lock:
            jid = project.next_id("job")
            name = body.get("checkpoint", jid)
            job = {
                "version": FORMAT_VERSION,
                "id": jid,
                "status": "queued",
                "config": body,
                "checkpoint": name,
                "result": None,
                "error": None,
            }
            project.save_job(job)
        jobs.put(jid)
        return {"job_id": jid}

    @app.get("/jobs/{jid}")
    def job_status(jid: str):
        return project.load_job(jid)

    # -- description

    @app.post("/describe/{seq_id}")
    def describe_sequence(seq_id: str, body: dict = Body(default={})):
        seq = project.load_sequence(seq_id)
        model = load_model(body.get("checkpoint"))
        desc = describe(seq, model, beam_width=body.get("beam", 32))
        return desc.to_json()

    # -- edit sessions

    @app.post("/sessions")
    def open_session(body: dict = Body(...)):
        meta = {**project.meta, **body.get("meta", {})}
        if "script" in body:
            script = MotionScript.from_json(body["script"])
            models = load_models_dir()
            segments = sample_script(script, models)
            seed = script.seed
        elif "sequence_id" in body:
            seq = project.load_sequence(body["sequence_id"])
            model = load_model(body.get("checkpoint"))
            prims = segment_primitives(seq, model.seg_config)
            post = model.posterior(prims)
            aligned = align_occurrences(prims, post, model.blank, body.get("beam", 32))
            segments = []
            for occ in aligned:
                if not occ.primitive_indices:
                    continue
                segments.append(
                    Occurrence(
                        concept=model.vocabulary.label_of(occ.label_index),
                        splines=tuple(prims.primitives[i] for i in occ.primitive_indices),
                        source=(seq.id, occ.interval),
                    )
                )
            if not segments:
                raise HTTPException(400, "description is empty; nothing to edit")
            meta = {
                "fps": seq.fps,
                "width": seq.width,
                "height": seq.height,
                "joint_names": list(seq.joint_names),
            }
            seed = body.get("seed", 0)
        else:
            raise HTTPException(400, "provide either 'script' or 'sequence_id'")
        with project.lock:
            sid = project.next_id("session")
            session = {
                "version_format": FORMAT_VERSION,
                "id": sid,
                "version": 0,
                "seed": seed,
                "edit_count": 0,
                "meta": meta,
                "segments": [o.to_json() for o in segments],
            }
            project.save_session(session)
        return _session_payload(session)

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        return _session_payload(project.load_session(sid))

    @app.post("/sessions/{sid}/edits")
    def edit_session(sid: str, body: dict = Body(...)):
        if "version" not in body or "command" not in body:
            raise HTTPException(400, "body needs 'version' and 'command'")
        cmd = EditCommand.from_json(body["command"])
        needs_models = cmd.kind in ("relabel",) or (
            cmd.kind == "insert" and not isinstance(cmd.payload, Occurrence)
        )
        models = load_models_dir() if needs_models else {}
        with project.lock:
            session = project.load_session(sid)
            if int(body["version"]) != session["version"]:
                raise HTTPException(
                    409,
                    f"stale version token {body['version']} (current "
                    f"{session['version']}); reload the session",
                )
            rng = np.random.default_rng(
                np.random.SeedSequence(session["seed"], spawn_key=(session["edit_count"],))
            )
            segments = apply_edit(_session_segments(session), cmd, models, rng)
            session["segments"] = [o.to_json() for o in segments]
            session["version"] += 1
            session["edit_count"] += 1
            project.save_session(session)
        return _session_payload(session)

    @app.get("/sessions/{sid}/frames")
    def session_frames(sid: str):
        session = project.load_session(sid)
        segments = _session_segments(session)
        prims = stitch(segments)
        meta = session["meta"]
        poses = execute_primitives(
            prims,
            fps=meta["fps"],
            width=meta["width"],
            height=meta["height"],
            joint_names=meta["joint_names"],
            id=f"session:{sid}",
        )
        return {
            "fps": meta["fps"],
            "width": meta["width"],
            "height": meta["height"],
            "joint_names": meta["joint_names"],
            "version": session["version"],
            "frames": poses.frames.tolist(),
        }

    @app.post("/sessions/{sid}/export")
    def export_session(sid: str):
        with project.lock:
            session = project.load_session(sid)
            prims = stitch(_session_segments(session))
            payload = prims.to_json()
            name = f"{sid}-v{session['version']}.json"
            atomic_write_json(payload, project.root / "exports" / name)
        return {"path": f"exports/{name}", "primitives": payload}

    frontend = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    if frontend.exists():
        app.mount("/studio", StaticFiles(directory=frontend, html=True), name="studio")

    return app
