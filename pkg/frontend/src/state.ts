/**
 * Editor session state: source image, paint layers, prompt and sampling
 * settings, plus the append-only history of completed edits.
 *
 * Submission rules live here rather than in the DOM layer so they are
 * testable without a browser: at most one request in flight, and an empty
 * mask is rejected client-side (unless the debug toggle allows it, which
 * exists to exercise the all-keep degenerate case end to end).
 */

import { EditApi, EditRequestBody } from "./api.js";
import { PaintLayer, SketchLayer, serializeMask } from "./layers.js";
import { decodePng, fromBase64, RawImage, toBase64, toRgb } from "./png.js";

export interface RequestSummary {
  prompt: string;
  seed: number;
  steps: number;
  latentMask: boolean;
  maskPixels: number;
}

export interface HistoryEntry {
  summary: RequestSummary;
  maskPng: Uint8Array;
  sketchPng: Uint8Array;
  imageB64: string;
  image: RawImage;
  preError: number | null;
  durationMs: number;
}

export type SubmitOutcome =
  | { ok: true; entry: HistoryEntry }
  | { ok: false; reason: string };

function greyFromSketchPng(image: RawImage): Uint8Array {
  // server sketches are grey-in-RGB, so one channel carries everything
  const rgb = toRgb(image);
  const n = rgb.width * rgb.height;
  const grey = new Uint8Array(n);
  for (let i = 0; i < n; i++) grey[i] = rgb.pixels[i * 3];
  return grey;
}

export class EditorSession {
  readonly client: EditApi;
  sourcePng: Uint8Array;
  source: RawImage;
  readonly mask: PaintLayer;
  readonly sketch: SketchLayer;

  prompt = "";
  seed = 0;
  steps: number;
  latentMask = true;
  allowEmptyMask = false;

  pending = false;
  private readonly entries: HistoryEntry[] = [];

  private constructor(
    client: EditApi,
    sourcePng: Uint8Array,
    source: RawImage,
    steps: number,
  ) {
    this.client = client;
    this.sourcePng = sourcePng;
    this.source = toRgb(source);
    this.steps = steps;
    this.mask = new PaintLayer(source.width, source.height);
    this.sketch = new SketchLayer(source.width, source.height);
  }

  /** Decode the source, then pre-seed the sketch layer from the service. */
  static async open(
    client: EditApi,
    sourcePng: Uint8Array,
    opts: { steps?: number } = {},
  ): Promise<EditorSession> {
    const source = await decodePng(sourcePng);
    const steps = opts.steps ?? (await client.modelInfo()).T;
    const session = new EditorSession(client, sourcePng, source, steps);
    await session.reseedSketch();
    return session;
  }

  get history(): readonly HistoryEntry[] {
    return this.entries;
  }

  private async reseedSketch(): Promise<void> {
    const sketchB64 = await this.client.extractSketch(toBase64(this.sourcePng));
    const decoded = await decodePng(fromBase64(sketchB64));
    this.sketch.setBase(greyFromSketchPng(decoded));
  }

  async submit(): Promise<SubmitOutcome> {
    if (this.pending) {
      return { ok: false, reason: "an edit is already in flight" };
    }
    const maskPixels = this.mask.count();
    if (maskPixels === 0 && !this.allowEmptyMask) {
      return { ok: false, reason: "mask is empty: paint the region to edit first" };
    }
    const maskPng = serializeMask(this.mask);
    const sketchPng = this.sketch.serialize();
    const body: EditRequestBody = {
      image: toBase64(this.sourcePng),
      mask: toBase64(maskPng),
      sketch: toBase64(sketchPng),
      prompt: this.prompt,
      seed: this.seed,
      steps: this.steps,
      latent_mask: this.latentMask,
    };
    this.pending = true;
    try {
      const res = await this.client.edit(body);
      const entry: HistoryEntry = {
        summary: {
          prompt: this.prompt,
          seed: this.seed,
          steps: this.steps,
          latentMask: this.latentMask,
          maskPixels,
        },
        maskPng,
        sketchPng,
        imageB64: res.image,
        image: toRgb(await decodePng(fromBase64(res.image))),
        preError: res.pre_error,
        durationMs: res.duration_ms,
      };
      this.entries.push(entry);
      return { ok: true, entry };
    } catch (err) {
      return { ok: false, reason: err instanceof Error ? err.message : String(err) };
    } finally {
      this.pending = false;
    }
  }

  /** Make a history entry's result the new source; layers reset, history stays. */
  async promote(index: number): Promise<void> {
    const entry = this.entries[index];
    if (entry === undefined) {
      throw new Error(`no history entry at index ${index}`);
    }
    this.sourcePng = fromBase64(entry.imageB64);
    this.source = entry.image;
    this.mask.clear();
    this.sketch.clear();
    await this.reseedSketch();
  }
}
