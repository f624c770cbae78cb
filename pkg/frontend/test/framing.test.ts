import assert from 'node:assert/strict';
import { test } from 'node:test';
import { PassThrough } from 'node:stream';

import { FrameReader, FrameError, writeFrame } from '../src/framing.js';

test('round-trips a frame', async () => {
  const stream = new PassThrough();
  writeFrame(stream, Buffer.from('hello'));
  stream.end();
  const reader = new FrameReader(stream);
  assert.deepEqual(await reader.next(), Buffer.from('hello'));
  assert.equal(await reader.next(), null);
});

test('reads frames split across chunks', async () => {
  const stream = new PassThrough();
  const reader = new FrameReader(stream);
  const header = Buffer.alloc(4);
  header.writeUInt32BE(6, 0);
  stream.write(header.subarray(0, 2));
  setTimeout(() => {
    stream.write(header.subarray(2));
    stream.write(Buffer.from('abc'));
    setTimeout(() => {
      stream.write(Buffer.from('def'));
      stream.end();
    }, 5);
  }, 5);
  assert.deepEqual(await reader.next(), Buffer.from('abcdef'));
  assert.equal(await reader.next(), null);
});

test('rejects truncated payload', async () => {
  const stream = new PassThrough();
  const header = Buffer.alloc(4);
  header.writeUInt32BE(100, 0);
  stream.write(header);
  stream.write(Buffer.from('short'));
  stream.end();
  const reader = new FrameReader(stream);
  await assert.rejects(() => reader.next(), FrameError);
});

test('rejects oversized length prefix', async () => {
  const stream = new PassThrough();
  stream.write(Buffer.from([0xff, 0xff, 0xff, 0xff]));
  stream.end();
  const reader = new FrameReader(stream);
  await assert.rejects(() => reader.next(), FrameError);
});
