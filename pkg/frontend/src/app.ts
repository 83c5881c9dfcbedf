/**
 * DOM wiring for the browser editor. All editing logic lives in the
 * framework-free modules (layers, state, api, png); this file only maps
 * pointer events and form controls onto an EditorSession and paints the
 * composite view. It is deliberately untested: everything it calls is.
 */

import { EditClient } from "./api.js";
import { EditorSession, HistoryEntry } from "./state.js";
import { RawImage } from "./png.js";

const SCALE = 12; // css upscale; canvas buffers stay at source resolution

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const fileInput = el<HTMLInputElement>("source-file");
const layerSelect = el<HTMLSelectElement>("layer-select");
const brushInput = el<HTMLInputElement>("brush-radius");
const eraserInput = el<HTMLInputElement>("eraser");
const promptInput = el<HTMLInputElement>("prompt");
const seedInput = el<HTMLInputElement>("seed");
const stepsInput = el<HTMLInputElement>("steps");
const latentMaskInput = el<HTMLInputElement>("latent-mask");
const allowEmptyInput = el<HTMLInputElement>("allow-empty-mask");
const submitButton = el<HTMLButtonElement>("submit");
const statusLine = el<HTMLElement>("status");
const canvas = el<HTMLCanvasElement>("editor-canvas");
const resultImg = el<HTMLImageElement>("result-image");
const resultMeta = el<HTMLElement>("result-meta");
const downloadLink = el<HTMLAnchorElement>("download");
const historyList = el<HTMLElement>("history");

const client = new EditClient("");
let session: EditorSession | null = null;

function setStatus(text: string, isError = false) {
  statusLine.textContent = text;
  statusLine.classList.toggle("error", isError);
}

function drawSource(ctx: CanvasRenderingContext2D, source: RawImage) {
  const data = ctx.createImageData(source.width, source.height);
  for (let i = 0; i < source.width * source.height; i++) {
    data.data[i * 4] = source.pixels[i * 3];
    data.data[i * 4 + 1] = source.pixels[i * 3 + 1];
    data.data[i * 4 + 2] = source.pixels[i * 3 + 2];
    data.data[i * 4 + 3] = 255;
  }
  ctx.putImageData(data, 0, 0);
}

function overlay(
  ctx: CanvasRenderingContext2D,
  width: number,
  test: (i: number) => boolean,
  style: string,
) {
  ctx.fillStyle = style;
  for (let i = 0; i < width * ctx.canvas.height; i++) {
    if (test(i)) ctx.fillRect(i % width, Math.floor(i / width), 1, 1);
  }
}

function redraw() {
  if (!session) return;
  const ctx = canvas.getContext("2d")!;
  drawSource(ctx, session.source);
  const sk = session.sketch;
  if (sk.base) {
    const base = sk.base;
    overlay(ctx, sk.width, (i) => base[i] < 128 && !sk.white.data[i], "rgba(70, 110, 255, 0.25)");
  }
  overlay(ctx, sk.width, (i) => sk.dark.data[i] === 1, "rgba(40, 70, 255, 0.6)");
  overlay(ctx, session.mask.width, (i) => session!.mask.data[i] === 1, "rgba(255, 60, 60, 0.45)");
}

function renderHistory() {
  if (!session) return;
  historyList.replaceChildren();
  session.history.forEach((entry, index) => {
    const item = document.createElement("div");
    item.className = "history-entry";
    const img = document.createElement("img");
    img.src = "data:image/png;base64," + entry.imageB64;
    img.width = entry.image.width * 3;
    img.style.imageRendering = "pixelated";
    const label = document.createElement("span");
    label.textContent = `#${index} seed ${entry.summary.seed} pre_err ${
      entry.preError === null ? "n/a" : entry.preError.toFixed(3)
    }`;
    const promote = document.createElement("button");
    promote.textContent = "promote";
    promote.onclick = async () => {
      await session!.promote(index);
      redraw();
      setStatus(`promoted result #${index} to source`);
    };
    item.append(img, label, promote);
    historyList.append(item);
  });
}

function showResult(entry: HistoryEntry) {
  resultImg.src = "data:image/png;base64," + entry.imageB64;
  resultImg.width = entry.image.width * SCALE;
  resultMeta.textContent =
    `pre_error ${entry.preError === null ? "n/a (no kept pixels)" : entry.preError}` +
    ` | ${entry.durationMs.toFixed(0)} ms | steps ${entry.summary.steps}`;
  downloadLink.href = "data:image/png;base64," + entry.imageB64;
  downloadLink.classList.remove("hidden");
}

function canvasPoint(ev: PointerEvent): { x: number; y: number } {
  const rect = canvas.getBoundingClientRect();
  return {
    x: ((ev.clientX - rect.left) / rect.width) * canvas.width,
    y: ((ev.clientY - rect.top) / rect.height) * canvas.height,
  };
}

let drawing = false;
let last = { x: 0, y: 0 };

canvas.addEventListener("pointerdown", (ev) => {
  if (!session) return;
  drawing = true;
  last = canvasPoint(ev);
  applyStroke(last, last);
  canvas.setPointerCapture(ev.pointerId);
});

canvas.addEventListener("pointermove", (ev) => {
  if (!drawing || !session) return;
  const pt = canvasPoint(ev);
  applyStroke(last, pt);
  last = pt;
});

canvas.addEventListener("pointerup", () => {
  drawing = false;
});

function applyStroke(a: { x: number; y: number }, b: { x: number; y: number }) {
  if (!session) return;
  const radius = Number(brushInput.value);
  const erase = eraserInput.checked;
  if (layerSelect.value === "mask") {
    session.mask.paintStroke(a.x, a.y, b.x, b.y, radius, erase ? 0 : 1);
  } else if (erase) {
    session.sketch.eraseStroke(a.x, a.y, b.x, b.y, radius);
  } else {
    session.sketch.drawStroke(a.x, a.y, b.x, b.y, radius);
  }
  redraw();
}

fileInput.addEventListener("change", async () => {
  const file = fileInput.files?.[0];
  if (!file) return;
  try {
    const bytes = new Uint8Array(await file.arrayBuffer());
    session = await EditorSession.open(client, bytes);
    canvas.width = session.source.width;
    canvas.height = session.source.height;
    canvas.style.width = `${session.source.width * SCALE}px`;
    canvas.style.height = `${session.source.height * SCALE}px`;
    stepsInput.value = String(session.steps);
    redraw();
    renderHistory();
    setStatus(`loaded ${file.name} (${session.source.width}x${session.source.height})`);
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err), true);
  }
});

submitButton.addEventListener("click", async () => {
  if (!session) {
    setStatus("load a source image first", true);
    return;
  }
  session.prompt = promptInput.value;
  session.seed = Number(seedInput.value);
  session.steps = Number(stepsInput.value);
  session.latentMask = latentMaskInput.checked;
  session.allowEmptyMask = allowEmptyInput.checked;

  submitButton.disabled = true;
  setStatus("running edit...");
  try {
    const outcome = await session.submit();
    if (outcome.ok) {
      showResult(outcome.entry);
      renderHistory();
      setStatus(`edit #${session.history.length - 1} done`);
    } else {
      setStatus(outcome.reason, true);
    }
  } finally {
    submitButton.disabled = false;
  }
});

client
  .health()
  .then((h) =>
    setStatus(h.model_loaded ? "service ready" : "service up, no model loaded", !h.model_loaded),
  )
  .catch(() => setStatus("service unreachable; is the server running?", true));
