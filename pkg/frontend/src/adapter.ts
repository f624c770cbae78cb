/**
 * Adapter process: serves detect/recognize over stdio.
 *
 * Run: node dist/src/adapter.js --config <adapter config JSON>
 *
 * One connection, sequential request handling. Per-request failures are
 * answered with an error frame naming the offending field and the
 * connection stays up; protocol violations (bad version, non-increasing
 * request ids, unparseable frames) are answered with an error frame and
 * close the connection. The process exits when stdin closes.
 */

import process from 'node:process';

import { loadConfig, type AdapterConfig } from './config.js';
import { FrameReader, FrameError, writeFrame } from './framing.js';
import { detectEcho, detectStub, loadFrame, recognizeStub } from './models.js';
import {
  FieldError,
  PROTOCOL_VERSION,
  encodeMessage,
  parseMessage,
  parseRecognizeRequest,
  type WireMessage,
  type WireSubject,
} from './protocol.js';

function reply(msg: WireMessage): void {
  writeFrame(process.stdout, encodeMessage(msg));
}

function errorFrame(requestId: number, message: string, field?: string): void {
  const payload: Record<string, unknown> = { message };
  if (field) payload['field'] = field;
  reply({ version: PROTOCOL_VERSION, request_id: requestId, kind: 'error', payload });
}

function handleDetect(config: AdapterConfig, msg: WireMessage): void {
  const payload = msg.payload;
  const frame = payload['frame'];
  if (typeof frame !== 'object' || frame === null ||
      (!('path' in frame) && !('inline' in frame))) {
    throw new FieldError("detect request missing 'frame' reference", 'frame');
  }
  if (!Number.isInteger(payload['frame_index'])) {
    throw new FieldError("field 'frame_index' must be an integer", 'frame_index');
  }
  const rawRes = payload['resolution'];
  let resolution: [number, number] = [0, 0];
  if (Array.isArray(rawRes) && rawRes.length === 2 &&
      typeof rawRes[0] === 'number' && typeof rawRes[1] === 'number') {
    resolution = [rawRes[0], rawRes[1]];
  }

  let subjects: WireSubject[];
  if (config.poseModel === 'echo') {
    subjects = detectEcho(config, resolution);
  } else {
    const image = loadFrame(frame as Record<string, unknown>);
    if (image === null) {
      throw new FieldError("frame carries neither 'path' nor 'inline'", 'frame');
    }
    subjects = detectStub(config, image);
  }
  reply({
    version: PROTOCOL_VERSION,
    request_id: msg.request_id,
    kind: 'detect',
    payload: { subjects },
  });
}

function handleRecognize(config: AdapterConfig, msg: WireMessage): void {
  const request = parseRecognizeRequest(msg.payload);
  const predictions = recognizeStub(config, request);
  reply({
    version: PROTOCOL_VERSION,
    request_id: msg.request_id,
    kind: 'recognize',
    payload: { predictions },
  });
}

export async function serve(config: AdapterConfig): Promise<void> {
  const reader = new FrameReader(process.stdin);
  let lastId = 0;
  for (;;) {
    let raw: Buffer | null;
    try {
      raw = await reader.next();
    } catch (err) {
      errorFrame(0, err instanceof Error ? err.message : String(err));
      return;
    }
    if (raw === null) {
      return; // channel closed
    }
    let msg: WireMessage;
    try {
      msg = parseMessage(raw);
    } catch (err) {
      const field = err instanceof FieldError ? err.field : undefined;
      errorFrame(0, err instanceof Error ? err.message : String(err), field);
      return;
    }
    if (msg.version !== PROTOCOL_VERSION) {
      errorFrame(msg.request_id, `unsupported protocol version ${msg.version}`, 'version');
      return;
    }
    if (msg.request_id <= lastId) {
      errorFrame(msg.request_id,
        `request_id ${msg.request_id} not greater than ${lastId}`, 'request_id');
      return;
    }
    lastId = msg.request_id;

    try {
      switch (msg.kind) {
        case 'capabilities':
          reply({
            version: PROTOCOL_VERSION,
            request_id: msg.request_id,
            kind: 'capabilities',
            payload: { version: PROTOCOL_VERSION, kinds: ['detect', 'recognize'] },
          });
          break;
        case 'detect':
          handleDetect(config, msg);
          break;
        case 'recognize':
          handleRecognize(config, msg);
          break;
        default:
          errorFrame(msg.request_id, `kind '${msg.kind}' not servable`, 'kind');
      }
    } catch (err) {
      const field = err instanceof FieldError ? err.field : undefined;
      errorFrame(msg.request_id, err instanceof Error ? err.message : String(err), field);
    }
  }
}

function main(): void {
  const args = process.argv.slice(2);
  const flag = args.indexOf('--config');
  if (flag === -1 || flag + 1 >= args.length) {
    process.stderr.write('usage: adapter --config <adapter config JSON>\n');
    process.exit(2);
  }
  let config: AdapterConfig;
  try {
    config = loadConfig(args[flag + 1]!);
  } catch (err) {
    process.stderr.write(`${err instanceof Error ? err.message : String(err)}\n`);
    process.exit(2);
  }
  serve(config!).then(
    () => process.exit(0),
    (err) => {
      process.stderr.write(`adapter failure: ${String(err)}\n`);
      process.exit(1);
    },
  );
}

const isMain = process.argv[1]?.endsWith('adapter.js') ?? false;
if (isMain) {
  main();
}
