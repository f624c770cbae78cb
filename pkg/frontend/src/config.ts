/**
 * Adapter configuration.
 *
 * JSON schema:
 *   {
 *     "pose_model":   "echo" | "stub",
 *     "action_model": "stub",
 *     "device":       "cpu",                       // informational
 *     "part_map":     { "<model keypoint index>": <protocol part_id> | null },
 *     "calibration":  { "scale": 1.0, "offset": 0.0 },
 *     "scores":       { "A041": 0.5, ... },        // stub action emission
 *     "echo_points":  [ { "part": 0, "x": 0.5, "y": 0.25, "confidence": 0.9 } ]
 *   }
 *
 * `part_map` translates the pose model's own keypoint numbering into
 * the protocol's part scheme; a null value marks a model keypoint as
 * having no protocol equivalent (it is dropped). The map must cover
 * every keypoint index the configured model emits.
 */

import { readFileSync } from 'node:fs';

export const PROTOCOL_PART_COUNT = 88; // 18 body parts + 70 face landmarks

export interface Calibration {
  scale: number;
  offset: number;
}

export interface EchoPoint {
  part: number;
  x: number; // fraction of frame width
  y: number; // fraction of frame height
  confidence: number;
}

export interface AdapterConfig {
  poseModel: 'echo' | 'stub';
  actionModel: 'stub';
  device: string;
  partMap: Map<number, number | null>;
  calibration: Calibration;
  scores: Record<string, number>;
  echoPoints: EchoPoint[];
}

export class ConfigError extends Error {}

const DEFAULT_SCORES: Record<string, number> = { A041: 0.5 };

// The stub pose model emits keypoint indices 0..8 (see models.ts);
// identity-ish default mapping into head/shoulders/hips/ankles/eyes.
const DEFAULT_PART_MAP: Array<[number, number | null]> = [
  [0, 0],   // head top       -> nose
  [1, 2],   // right shoulder -> right_shoulder
  [2, 5],   // left shoulder  -> left_shoulder
  [3, 8],   // right hip      -> right_hip
  [4, 11],  // left hip       -> left_hip
  [5, 10],  // right foot     -> right_ankle
  [6, 13],  // left foot      -> left_ankle
  [7, 14],  // right eye      -> right_eye
  [8, 15],  // left eye       -> left_eye
];

export function loadConfig(path: string): AdapterConfig {
  let raw: unknown;
  try {
    raw = JSON.parse(readFileSync(path, 'utf-8'));
  } catch (err) {
    throw new ConfigError(`cannot load adapter config ${path}: ${String(err)}`);
  }
  return validateConfig(raw);
}

export function validateConfig(raw: unknown): AdapterConfig {
  if (typeof raw !== 'object' || raw === null) {
    throw new ConfigError('adapter config must be a JSON object');
  }
  const obj = raw as Record<string, unknown>;

  const poseModel = obj['pose_model'] ?? 'echo';
  if (poseModel !== 'echo' && poseModel !== 'stub') {
    throw new ConfigError(`unknown pose_model: ${JSON.stringify(poseModel)}`);
  }
  const actionModel = obj['action_model'] ?? 'stub';
  if (actionModel !== 'stub') {
    throw new ConfigError(`unknown action_model: ${JSON.stringify(actionModel)}`);
  }

  const partMap = new Map<number, number | null>(DEFAULT_PART_MAP);
  if (obj['part_map'] !== undefined) {
    if (typeof obj['part_map'] !== 'object' || obj['part_map'] === null) {
      throw new ConfigError('part_map must be an object');
    }
    partMap.clear();
    for (const [key, value] of Object.entries(obj['part_map'] as Record<string, unknown>)) {
      const modelIndex = Number(key);
      if (!Number.isInteger(modelIndex) || modelIndex < 0) {
        throw new ConfigError(`part_map key ${key} is not a keypoint index`);
      }
      if (value === null) {
        partMap.set(modelIndex, null); // explicitly absent
        continue;
      }
      if (!Number.isInteger(value) || (value as number) < 0 ||
          (value as number) >= PROTOCOL_PART_COUNT) {
        throw new ConfigError(
          `part_map[${key}] = ${JSON.stringify(value)} outside the part universe`);
      }
      partMap.set(modelIndex, value as number);
    }
  }

  let calibration: Calibration = { scale: 1.0, offset: 0.0 };
  if (obj['calibration'] !== undefined) {
    const c = obj['calibration'] as Record<string, unknown>;
    if (typeof c !== 'object' || c === null ||
        typeof c['scale'] !== 'number' || typeof c['offset'] !== 'number') {
      throw new ConfigError('calibration must be {scale, offset} numbers');
    }
    calibration = { scale: c['scale'], offset: c['offset'] };
  }

  let scores = DEFAULT_SCORES;
  if (obj['scores'] !== undefined) {
    const s = obj['scores'] as Record<string, unknown>;
    if (typeof s !== 'object' || s === null) {
      throw new ConfigError('scores must be an object of label -> value');
    }
    for (const [label, value] of Object.entries(s)) {
      if (typeof value !== 'number') {
        throw new ConfigError(`scores[${label}] must be a number`);
      }
    }
    scores = s as Record<string, number>;
  }

  let echoPoints: EchoPoint[] = [
    { part: 0, x: 0.5, y: 0.2, confidence: 0.9 },
    { part: 2, x: 0.4, y: 0.35, confidence: 0.9 },
    { part: 5, x: 0.6, y: 0.35, confidence: 0.9 },
    { part: 10, x: 0.45, y: 0.9, confidence: 0.8 },
    { part: 13, x: 0.55, y: 0.9, confidence: 0.8 },
  ];
  if (obj['echo_points'] !== undefined) {
    if (!Array.isArray(obj['echo_points'])) {
      throw new ConfigError('echo_points must be a list');
    }
    echoPoints = (obj['echo_points'] as unknown[]).map((p, i) => {
      const e = p as Record<string, unknown>;
      if (typeof e !== 'object' || e === null ||
          !Number.isInteger(e['part']) ||
          typeof e['x'] !== 'number' || typeof e['y'] !== 'number') {
        throw new ConfigError(`echo_points[${i}] malformed`);
      }
      return {
        part: e['part'] as number,
        x: e['x'] as number,
        y: e['y'] as number,
        confidence: typeof e['confidence'] === 'number' ? e['confidence'] : 0.9,
      };
    });
  }

  return {
    poseModel,
    actionModel,
    device: typeof obj['device'] === 'string' ? obj['device'] : 'cpu',
    partMap,
    calibration,
    scores,
    echoPoints,
  };
}
