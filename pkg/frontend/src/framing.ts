/**
 * Length-prefixed framing over byte streams.
 *
 * Wire format (both directions): 4-byte big-endian uint32 length, then
 * that many bytes of UTF-8 JSON. Oversized lengths are refused so a
 * corrupt peer cannot make us buffer unbounded data.
 */

import type { Readable, Writable } from 'node:stream';

export const MAX_FRAME_BYTES = 16 * 1024 * 1024;

export function writeFrame(stream: Writable, payload: Buffer): void {
  const header = Buffer.alloc(4);
  header.writeUInt32BE(payload.length, 0);
  stream.write(header);
  stream.write(payload);
}

export class FrameError extends Error {}

/** Incremental frame reader; `next()` resolves null on clean EOF. */
export class FrameReader {
  private chunks: Buffer[] = [];
  private buffered = 0;
  private ended = false;
  private waiting: (() => void) | null = null;

  constructor(stream: Readable) {
    stream.on('data', (chunk: Buffer) => {
      this.chunks.push(chunk);
      this.buffered += chunk.length;
      this.wake();
    });
    stream.on('end', () => {
      this.ended = true;
      this.wake();
    });
    stream.on('error', () => {
      this.ended = true;
      this.wake();
    });
  }

  private wake(): void {
    if (this.waiting) {
      const resume = this.waiting;
      this.waiting = null;
      resume();
    }
  }

  private take(n: number): Buffer {
    const out = Buffer.concat(this.chunks).subarray(0, n);
    const rest = Buffer.concat(this.chunks).subarray(n);
    this.chunks = rest.length ? [rest] : [];
    this.buffered -= n;
    return Buffer.from(out);
  }

  private async waitFor(n: number): Promise<boolean> {
    while (this.buffered < n) {
      if (this.ended) return false;
      await new Promise<void>((resolve) => {
        this.waiting = resolve;
      });
    }
    return true;
  }

  async next(): Promise<Buffer | null> {
    if (!(await this.waitFor(4))) {
      if (this.buffered === 0) return null;
      throw new FrameError(`truncated header: ${this.buffered} bytes`);
    }
    const header = this.take(4);
    const length = header.readUInt32BE(0);
    if (length > MAX_FRAME_BYTES) {
      throw new FrameError(`frame length ${length} exceeds ${MAX_FRAME_BYTES}`);
    }
    if (!(await this.waitFor(length))) {
      throw new FrameError(`truncated payload: expected ${length}, got ${this.buffered}`);
    }
    return this.take(length);
  }
}
