/** Binary PPM (P6, maxval 255) parsing: the frame format clips use. */

export interface Image {
  width: number;
  height: number;
  /** RGB, row-major, 3 bytes per pixel. */
  pixels: Buffer;
}

export class PpmError extends Error {}

export function parsePpm(data: Buffer): Image {
  // Header: "P6" <ws> width <ws> height <ws> 255 <single ws> pixel data.
  const match = /^P6\s+(\d+)\s+(\d+)\s+255\s/.exec(
    data.subarray(0, 64).toString('latin1'));
  if (!match) {
    throw new PpmError('not a maxval-255 binary PPM');
  }
  const width = parseInt(match[1]!, 10);
  const height = parseInt(match[2]!, 10);
  const offset = match[0].length;
  const expected = width * height * 3;
  const pixels = data.subarray(offset, offset + expected);
  if (pixels.length < expected) {
    throw new PpmError(`truncated pixel data (${pixels.length} < ${expected})`);
  }
  return { width, height, pixels: Buffer.from(pixels) };
}

export function pixelAt(image: Image, x: number, y: number): [number, number, number] {
  const base = (y * image.width + x) * 3;
  return [image.pixels[base]!, image.pixels[base + 1]!, image.pixels[base + 2]!];
}
