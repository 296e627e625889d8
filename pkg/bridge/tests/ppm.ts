import { Buffer } from "node:buffer";

/** Build a binary P6 image from a per-pixel RGB function. */
export function ppm(
  width: number,
  height: number,
  pixel: (x: number, y: number) => [number, number, number],
): Buffer {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, "ascii");
  const data = Buffer.alloc(width * height * 3);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = pixel(x, y);
      data[(y * width + x) * 3] = r;
      data[(y * width + x) * 3 + 1] = g;
      data[(y * width + x) * 3 + 2] = b;
    }
  }
  return Buffer.concat([header, data]);
}
