import { existsSync, readFileSync, writeFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";

import { PaintLayer, serializeMask } from "../src/layers.js";
import { decodePng } from "../src/png.js";

const GOLDEN = fileURLToPath(new URL("./data/golden_mask.png", import.meta.url));

/**
 * The known pattern: a brush disc, a diagonal stroke, and an eraser bite
 * taken out of the disc. Any change to brush geometry, mask polarity, or
 * PNG serialization moves at least one byte of the golden file.
 */
function paintKnownPattern(): PaintLayer {
  const layer = new PaintLayer(32, 32);
  layer.paintDisc(10, 12, 4.5);
  layer.paintStroke(2, 28, 29, 25, 1.5);
  layer.paintDisc(10, 12, 1.5, 0);
  return layer;
}

describe("mask serialization golden file", () => {
  it("yields the golden PNG byte-for-byte", () => {
    const bytes = serializeMask(paintKnownPattern());
    if (!existsSync(GOLDEN)) {
      writeFileSync(GOLDEN, bytes);
      throw new Error("golden fixture created on first run; run again to verify");
    }
    const golden = new Uint8Array(readFileSync(GOLDEN));
    expect(bytes).toEqual(golden);
  });

  it("is deterministic across repeated serialization", () => {
    expect(serializeMask(paintKnownPattern())).toEqual(
      serializeMask(paintKnownPattern()),
    );
  });

  it("golden bytes decode to the painted geometry, 0/255 only", async () => {
    const layer = paintKnownPattern();
    const decoded = await decodePng(new Uint8Array(readFileSync(GOLDEN)));
    expect(decoded.width).toBe(32);
    expect(decoded.height).toBe(32);
    expect(decoded.channels).toBe(1);
    let editable = 0;
    for (let i = 0; i < decoded.pixels.length; i++) {
      expect(decoded.pixels[i]).toBe(layer.data[i] ? 0 : 255);
      if (decoded.pixels[i] === 0) editable++;
    }
    expect(editable).toBe(layer.count());
    expect(editable).toBeGreaterThan(0);
    expect(editable).toBeLessThan(32 * 32);
  });
});
