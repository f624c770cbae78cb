/**
 * The models behind the adapter.
 *
 * The "stub" pose model is a real (if minimal) image analyzer: it
 * separates figure pixels from the background color and sketches
 * keypoints over the figure's bounding box. The "echo" pose model emits
 * configured points scaled to the frame, reading no pixels at all; it
 * exists for conformance runs and wiring checks. The stub action model
 * emits configured label scores through the calibration map, clamped to
 * [0, 1] -- scores outside the unit interval never leave this process.
 */

import { readFileSync } from 'node:fs';

import type { AdapterConfig } from './config.js';
import { FieldError, type RecognizeRequest, type WirePrediction, type WireSubject } from './protocol.js';
import { parsePpm, pixelAt, type Image } from './ppm.js';

const FIGURE_COLOR_DISTANCE = 48; // L1 RGB distance separating figure from background

export function loadFrame(frame: Record<string, unknown>): Image | null {
  if (typeof frame['path'] === 'string') {
    let data: Buffer;
    try {
      data = readFileSync(frame['path']);
    } catch (err) {
      throw new FieldError(`cannot read frame ${frame['path']}: ${String(err)}`, 'frame');
    }
    return parsePpm(data);
  }
  if (typeof frame['inline'] === 'string') {
    return parsePpm(Buffer.from(frame['inline'], 'base64'));
  }
  return null;
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

function clamp01(v: number): number {
  return clamp(v, 0, 1);
}

/** Model-space keypoints: indices are the MODEL's numbering. */
interface ModelPoint {
  modelIndex: number;
  x: number;
  y: number;
  confidence: number;
}

function mapToProtocol(
  points: ModelPoint[],
  config: AdapterConfig,
  width: number,
  height: number,
): WireSubject['points'] {
  const out: WireSubject['points'] = [];
  for (const p of points) {
    if (!config.partMap.has(p.modelIndex)) {
      throw new FieldError(
        `pose model emitted keypoint index ${p.modelIndex} missing from part_map`,
        'part_map');
    }
    const partId = config.partMap.get(p.modelIndex)!;
    if (partId === null) continue; // explicitly absent from the protocol scheme
    out.push({
      part_id: partId,
      x: clamp(p.x, 0, Math.max(0, width)),
      y: clamp(p.y, 0, Math.max(0, height)),
      confidence: clamp01(p.confidence),
    });
  }
  return out;
}

export function detectEcho(
  config: AdapterConfig,
  resolution: [number, number],
): WireSubject[] {
  const [w, h] = resolution;
  const points = config.echoPoints.map((p) => ({
    part_id: p.part,
    x: clamp(p.x * w, 0, w),
    y: clamp(p.y * h, 0, h),
    confidence: clamp01(p.confidence),
  }));
  return [{ subject_index: 0, points }];
}

/**
 * Figure detector: background is the most common corner color; every
 * pixel far enough from it belongs to the figure. One subject per
 * frame, keypoints laid out over the figure's bounding box.
 */
export function detectStub(
  config: AdapterConfig,
  image: Image,
): WireSubject[] {
  const { width, height } = image;
  const corners = [
    pixelAt(image, 0, 0),
    pixelAt(image, width - 1, 0),
    pixelAt(image, 0, height - 1),
    pixelAt(image, width - 1, height - 1),
  ];
  const bg = corners[0]!;

  let minX = width, minY = height, maxX = -1, maxY = -1, count = 0;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixelAt(image, x, y);
      const dist = Math.abs(r - bg[0]) + Math.abs(g - bg[1]) + Math.abs(b - bg[2]);
      if (dist > FIGURE_COLOR_DISTANCE) {
        count++;
        if (x < minX) minX = x;
        if (x > maxX) maxX = x;
        if (y < minY) minY = y;
        if (y > maxY) maxY = y;
      }
    }
  }
  if (count < 4 || maxX < minX || maxY < minY) {
    return []; // empty scene
  }
  const w = maxX - minX + 1;
  const h = maxY - minY + 1;
  const cx = minX + w / 2;
  const density = clamp01(count / (w * h));
  const confidence = clamp01(0.5 + density / 2);

  const points: ModelPoint[] = [
    { modelIndex: 0, x: cx, y: minY, confidence },                    // head top
    { modelIndex: 1, x: minX, y: minY + h * 0.25, confidence },       // right shoulder
    { modelIndex: 2, x: maxX, y: minY + h * 0.25, confidence },       // left shoulder
    { modelIndex: 3, x: minX + w * 0.25, y: minY + h * 0.6, confidence },
    { modelIndex: 4, x: maxX - w * 0.25, y: minY + h * 0.6, confidence },
    { modelIndex: 5, x: minX + w * 0.25, y: maxY, confidence },       // right foot
    { modelIndex: 6, x: maxX - w * 0.25, y: maxY, confidence },       // left foot
    { modelIndex: 7, x: cx - w * 0.1, y: minY + h * 0.05, confidence },
    { modelIndex: 8, x: cx + w * 0.1, y: minY + h * 0.05, confidence },
  ];
  return [{ subject_index: 0, points: mapToProtocol(points, config, width, height) }];
}

export function recognizeStub(
  config: AdapterConfig,
  request: RecognizeRequest,
): WirePrediction[] {
  const finalFrame = request.frames[request.frames.length - 1]!;
  const { scale, offset } = config.calibration;
  const scores: Record<string, number> = {};
  for (const [label, value] of Object.entries(config.scores)) {
    scores[label] = clamp01(scale * value + offset);
  }
  if (Object.keys(scores).length === 0) {
    return [];
  }
  const seen = new Set<number>();
  const predictions: WirePrediction[] = [];
  for (const box of finalFrame.boxes) {
    if (seen.has(box.subject_index)) continue;
    seen.add(box.subject_index);
    predictions.push({
      subject_index: box.subject_index,
      window_end_index: request.window_end_index,
      scores: { ...scores },
    });
  }
  return predictions;
}
