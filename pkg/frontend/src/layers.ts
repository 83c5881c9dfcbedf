/**
 * Paint layers for the editor: a binary mask layer and a sketch layer.
 *
 * Serialization is the load-bearing part. The service reads masks as 8-bit
 * greyscale where >= 128 means keep, so painted (editable) pixels must come
 * out as exactly 0 and everything else as exactly 255. Sketches are dark
 * strokes over the extracted source sketch, composited over white.
 */

import { encodePng, RawImage } from "./png.js";

export class PaintLayer {
  readonly width: number;
  readonly height: number;
  readonly data: Uint8Array; // 1 = painted

  constructor(width: number, height: number) {
    if (width < 1 || height < 1) {
      throw new Error(`layer dims must be positive, got ${width}x${height}`);
    }
    this.width = width;
    this.height = height;
    this.data = new Uint8Array(width * height);
  }

  paintDisc(cx: number, cy: number, radius: number, value: 0 | 1 = 1): void {
    const r = Math.max(0, radius);
    const x0 = Math.max(0, Math.ceil(cx - r));
    const x1 = Math.min(this.width - 1, Math.floor(cx + r));
    const y0 = Math.max(0, Math.ceil(cy - r));
    const y1 = Math.min(this.height - 1, Math.floor(cy + r));
    const r2 = r * r;
    for (let y = y0; y <= y1; y++) {
      for (let x = x0; x <= x1; x++) {
        const dx = x - cx;
        const dy = y - cy;
        if (dx * dx + dy * dy <= r2) {
          this.data[y * this.width + x] = value;
        }
      }
    }
  }

  paintStroke(
    x0: number,
    y0: number,
    x1: number,
    y1: number,
    radius: number,
    value: 0 | 1 = 1,
  ): void {
    const dist = Math.hypot(x1 - x0, y1 - y0);
    // half-pixel stamp spacing leaves no gaps at any angle
    const steps = Math.max(1, Math.ceil(dist * 2));
    for (let i = 0; i <= steps; i++) {
      const t = i / steps;
      this.paintDisc(x0 + (x1 - x0) * t, y0 + (y1 - y0) * t, radius, value);
    }
  }

  clear(): void {
    this.data.fill(0);
  }

  count(): number {
    let n = 0;
    for (let i = 0; i < this.data.length; i++) n += this.data[i];
    return n;
  }
}

/** Painted = editable = 0, untouched = keep = 255, 8-bit greyscale PNG. */
export function serializeMask(layer: PaintLayer): Uint8Array {
  const grey = new Uint8Array(layer.width * layer.height);
  for (let i = 0; i < grey.length; i++) {
    grey[i] = layer.data[i] ? 0 : 255;
  }
  const image: RawImage = {
    width: layer.width,
    height: layer.height,
    channels: 1,
    pixels: grey,
  };
  return encodePng(image);
}

export class SketchLayer {
  readonly width: number;
  readonly height: number;
  /** user strokes, rendered black */
  readonly dark: PaintLayer;
  /** erased cells, rendered white even where the base sketch has content */
  readonly white: PaintLayer;
  /** greyscale base (server-extracted source sketch), or null before load */
  base: Uint8Array | null = null;

  constructor(width: number, height: number) {
    this.width = width;
    this.height = height;
    this.dark = new PaintLayer(width, height);
    this.white = new PaintLayer(width, height);
  }

  drawStroke(x0: number, y0: number, x1: number, y1: number, radius: number): void {
    this.dark.paintStroke(x0, y0, x1, y1, radius, 1);
    this.white.paintStroke(x0, y0, x1, y1, radius, 0);
  }

  eraseStroke(x0: number, y0: number, x1: number, y1: number, radius: number): void {
    this.dark.paintStroke(x0, y0, x1, y1, radius, 0);
    this.white.paintStroke(x0, y0, x1, y1, radius, 1);
  }

  setBase(base: Uint8Array | null): void {
    if (base !== null && base.length !== this.width * this.height) {
      throw new Error(
        `sketch base length ${base.length} != ${this.width}x${this.height}`,
      );
    }
    this.base = base;
  }

  clear(): void {
    this.dark.clear();
    this.white.clear();
  }

  /** Flatten stroke / erase / base into one greyscale image over white. */
  flatten(): Uint8Array {
    const grey = new Uint8Array(this.width * this.height);
    for (let i = 0; i < grey.length; i++) {
      if (this.dark.data[i]) grey[i] = 0;
      else if (this.white.data[i]) grey[i] = 255;
      else grey[i] = this.base ? this.base[i] : 255;
    }
    return grey;
  }

  serialize(): Uint8Array {
    return encodePng({
      width: this.width,
      height: this.height,
      channels: 1,
      pixels: this.flatten(),
    });
  }
}
