/**
 * Message schema of the backend wire protocol, adapter side.
 *
 * Every message: { version, request_id, kind, payload }. Kinds are
 * capabilities | detect | recognize | error. Request ids strictly
 * increase per connection; responses echo the request id. Encoding is
 * canonical JSON (sorted keys, no extra whitespace) so identical
 * responses are identical bytes.
 */

export const PROTOCOL_VERSION = 1;
export const KINDS = ['capabilities', 'detect', 'recognize', 'error'] as const;
export type Kind = (typeof KINDS)[number];

export interface WireMessage {
  version: number;
  request_id: number;
  kind: Kind;
  payload: Record<string, unknown>;
}

export interface WireKeypoint {
  part_id: number;
  x: number;
  y: number;
  confidence: number;
}

export interface WireSubject {
  subject_index: number;
  points: WireKeypoint[];
}

export interface WireBox {
  subject_index: number;
  x: number;
  y: number;
  l: number; // height, by convention
  w: number; // width
}

export interface WireWindowFrame {
  frame_index: number;
  frame: Record<string, unknown>;
  boxes: WireBox[];
}

export interface RecognizeRequest {
  fps: number;
  window_end_index: number;
  frames: WireWindowFrame[];
}

export interface WirePrediction {
  subject_index: number;
  window_end_index: number;
  scores: Record<string, number>;
}

export class FieldError extends Error {
  constructor(message: string, readonly field: string) {
    super(message);
  }
}

/** JSON.stringify with recursively sorted object keys. */
export function canonicalJson(value: unknown): string {
  if (Array.isArray(value)) {
    return `[${value.map(canonicalJson).join(',')}]`;
  }
  if (value !== null && typeof value === 'object') {
    const entries = Object.entries(value as Record<string, unknown>)
      .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
      .map(([k, v]) => `${JSON.stringify(k)}:${canonicalJson(v)}`);
    return `{${entries.join(',')}}`;
  }
  return JSON.stringify(value);
}

export function encodeMessage(msg: WireMessage): Buffer {
  return Buffer.from(canonicalJson(msg), 'utf-8');
}

export function parseMessage(payload: Buffer): WireMessage {
  let body: unknown;
  try {
    body = JSON.parse(payload.toString('utf-8'));
  } catch (err) {
    throw new FieldError(`message body is not valid JSON: ${String(err)}`, 'body');
  }
  if (typeof body !== 'object' || body === null || Array.isArray(body)) {
    throw new FieldError('message body must be a JSON object', 'body');
  }
  const obj = body as Record<string, unknown>;
  const version = obj['version'];
  if (!Number.isInteger(version)) {
    throw new FieldError("field 'version' must be an integer", 'version');
  }
  const requestId = obj['request_id'];
  if (!Number.isInteger(requestId) || (requestId as number) < 0) {
    throw new FieldError("field 'request_id' must be a non-negative integer", 'request_id');
  }
  const kind = obj['kind'];
  if (typeof kind !== 'string' || !KINDS.includes(kind as Kind)) {
    throw new FieldError(`unknown kind ${JSON.stringify(kind)}`, 'kind');
  }
  const payloadObj = obj['payload'] ?? {};
  if (typeof payloadObj !== 'object' || payloadObj === null || Array.isArray(payloadObj)) {
    throw new FieldError("field 'payload' must be an object", 'payload');
  }
  return {
    version: version as number,
    request_id: requestId as number,
    kind: kind as Kind,
    payload: payloadObj as Record<string, unknown>,
  };
}

export function parseRecognizeRequest(payload: Record<string, unknown>): RecognizeRequest {
  const fps = payload['fps'];
  if (!Number.isInteger(fps) || (fps as number) <= 0) {
    throw new FieldError("field 'fps' must be a positive integer", 'fps');
  }
  const end = payload['window_end_index'];
  if (!Number.isInteger(end)) {
    throw new FieldError("field 'window_end_index' must be an integer", 'window_end_index');
  }
  const rawFrames = payload['frames'];
  if (!Array.isArray(rawFrames)) {
    throw new FieldError("field 'frames' must be a list", 'frames');
  }
  const frames: WireWindowFrame[] = rawFrames.map((f, i) => {
    if (typeof f !== 'object' || f === null) {
      throw new FieldError(`frames[${i}] must be an object`, 'frames');
    }
    const frame = f as Record<string, unknown>;
    const frameIndex = frame['frame_index'];
    if (!Number.isInteger(frameIndex)) {
      throw new FieldError(`frames[${i}].frame_index must be an integer`, 'frames');
    }
    const boxes = Array.isArray(frame['boxes']) ? frame['boxes'] : [];
    return {
      frame_index: frameIndex as number,
      frame: (frame['frame'] ?? {}) as Record<string, unknown>,
      boxes: boxes.map((b, j) => parseBox(b, `frames[${i}].boxes[${j}]`)),
    };
  });
  if (frames.length !== fps) {
    throw new FieldError(
      `window must hold exactly fps=${fps} frames, got ${frames.length}`, 'frames');
  }
  for (let i = 1; i < frames.length; i++) {
    if (frames[i]!.frame_index <= frames[i - 1]!.frame_index) {
      throw new FieldError('window frame indices must be strictly increasing', 'frames');
    }
  }
  if (frames[frames.length - 1]!.frame_index !== end) {
    throw new FieldError(
      `window_end_index ${end} != last frame index`, 'window_end_index');
  }
  return { fps: fps as number, window_end_index: end as number, frames };
}

function parseBox(raw: unknown, where: string): WireBox {
  if (typeof raw !== 'object' || raw === null) {
    throw new FieldError(`${where} must be an object`, 'boxes');
  }
  const b = raw as Record<string, unknown>;
  for (const key of ['subject_index', 'x', 'y', 'l', 'w']) {
    if (typeof b[key] !== 'number') {
      throw new FieldError(`${where}.${key} must be a number`, 'boxes');
    }
  }
  return {
    subject_index: b['subject_index'] as number,
    x: b['x'] as number,
    y: b['y'] as number,
    l: b['l'] as number,
    w: b['w'] as number,
  };
}
