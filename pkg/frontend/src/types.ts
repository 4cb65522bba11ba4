// Payload shapes mirroring the server's JSON schemas.

export type Range = [number, number];

export interface AnnotationPayload {
  concept: string;
  repetition: Range;
  instances: [Range, Range, Range];
}

export interface TrajectoryResponse {
  joint: number;
  joint_name: string;
  fps: number;
  x: number[];
  y: number[];
  extrema_x: number[];
  extrema_y: number[];
  extrema: number[];
}

export interface ConceptsResponse {
  labels: string[];
  blank_index: number;
  bones: [number, number][];
  meta: SequenceMeta;
  models: string[];
  checkpoints: string[];
}

export interface SequenceMeta {
  fps: number;
  width: number;
  height: number;
  joint_names: string[];
}

export interface SegmentSummary {
  concept: string;
  num_splines: number;
  n_frames: number;
  frames: Range;
}

export interface SessionPayload {
  id: string;
  version: number;
  segments: SegmentSummary[];
  total_frames: number;
  meta: SequenceMeta;
}

export interface FramesResponse {
  fps: number;
  width: number;
  height: number;
  joint_names: string[];
  version: number;
  frames: number[][][];
}

export type EditCommandPayload =
  | { kind: 'delete'; target: number }
  | { kind: 'relabel'; target: number; label: string }
  | { kind: 'insert'; target: number; entry: [string, number] }
  | { kind: 'insert'; target: number; occurrence: unknown }
  | { kind: 'set_primitive_param'; target: number; param: [number, number, number] };

export interface DescriptionPayload {
  labels: string[];
  intervals: Range[];
  scores: number[];
}
