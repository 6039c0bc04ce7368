/** Dashboard wiring: draft editor, live rescoring with deltas, saliency
 * overlay, and recommendation browsing. All numbers come from the service. */

import { ApiClient, ApiError, ContentDraft, Meta } from "./api.js";
import { composeOverlay, DimensionMismatchError } from "./overlay.js";
import { buildView, trustBadge } from "./recommend.js";
import { insertPhrase, Workspace } from "./state.js";

const api = new ApiClient("");
const workspace = new Workspace();

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const textArea = el<HTMLTextAreaElement>("draft-text");
const domainSelect = el<HTMLSelectElement>("draft-domain");
const featureBox = el<HTMLDivElement>("draft-features");
const imageInput = el<HTMLInputElement>("draft-image");
const scoreOut = el<HTMLSpanElement>("score-value");
const deltaOut = el<HTMLSpanElement>("score-delta");
const staleBadge = el<HTMLSpanElement>("score-stale");
const requestOut = el<HTMLSpanElement>("score-request");
const historyBody = el<HTMLTableSectionElement>("history-body");
const banner = el<HTMLDivElement>("error-banner");
const canvas = el<HTMLCanvasElement>("overlay-canvas");
const legendOut = el<HTMLSpanElement>("overlay-legend");
const togglePos = el<HTMLInputElement>("toggle-positive");
const toggleNeg = el<HTMLInputElement>("toggle-negative");
const recHost = el<HTMLDivElement>("recommendations");
const trustHost = el<HTMLSpanElement>("trust-badge");
const retryButton = el<HTMLButtonElement>("retry");

let meta: Meta | null = null;
let baseImage: { pixels: Uint8ClampedArray; width: number; height: number } | null = null;
let lastMaps: { positive: number[][] | null; negative: number[][] | null } = { positive: null, negative: null };
let debounceTimer: number | undefined;

function showError(message: string | null): void {
  banner.textContent = message ?? "";
  banner.style.display = message ? "block" : "none";
}

function currentDraft(): ContentDraft {
  const features = meta && meta.feature_dim > 0
    ? Array.from(featureBox.querySelectorAll<HTMLInputElement>("input")).map((box) => (box.checked ? 1 : 0))
    : null;
  return {
    text: textArea.value.trim() ? textArea.value.trim() : null,
    image_png_base64: workspace.draft.image_png_base64,
    domain: domainSelect.value || null,
    features,
  };
}

async function rescore(): Promise<void> {
  workspace.draft = currentDraft();
  const signal = workspace.beginRequest();
  try {
    const response = await api.score(workspace.draft, signal);
    const row = workspace.recordScore(response);
    scoreOut.textContent = response.score.toFixed(4);
    deltaOut.textContent = row.delta === null ? "" :
      `${row.delta >= 0 ? "+" : ""}${row.delta.toFixed(4)}`;
    deltaOut.className = row.delta === null ? "" : row.delta >= 0 ? "delta-up" : "delta-down";
    requestOut.textContent = `req ${response.request_id}`;
    staleBadge.style.display = "none";
    renderHistory();
    showError(null);
    await refreshOverlay(signal);
  } catch (err) {
    if ((err as DOMException).name === "AbortError") return;
    workspace.markStale();
    staleBadge.style.display = "inline";
    showError(err instanceof ApiError ? `${err.code}: ${err.message}` : String(err));
  }
}

function scheduleRescore(): void {
  workspace.markStale();
  staleBadge.style.display = "inline";
  window.clearTimeout(debounceTimer);
  debounceTimer = window.setTimeout(() => void rescore(), 400);
}

async function refreshOverlay(signal?: AbortSignal): Promise<void> {
  if (!baseImage || !workspace.draft.image_png_base64) return;
  const response = await api.attribute(workspace.draft, "integrated_gradients",
                                       { steps: 16, modalities: ["image"] }, signal);
  lastMaps = { positive: response.positive.image, negative: response.negative.image };
  drawOverlay();
}

function drawOverlay(): void {
  if (!baseImage) return;
  try {
    const { pixels, legend } = composeOverlay(
      baseImage.pixels, baseImage.width, baseImage.height,
      lastMaps.positive, lastMaps.negative,
      { showPositive: togglePos.checked, showNegative: toggleNeg.checked });
    const ctx = canvas.getContext("2d");
    if (!ctx) return;
    canvas.width = baseImage.width;
    canvas.height = baseImage.height;
    const frame = ctx.createImageData(baseImage.width, baseImage.height);
    frame.data.set(pixels);
    ctx.putImageData(frame, 0, 0);
    legendOut.textContent = `scores ${legend.min.toFixed(4)} .. ${legend.max.toFixed(4)}`;
    showError(null);
  } catch (err) {
    if (err instanceof DimensionMismatchError) {
      showError(err.message);
    } else {
      throw err;
    }
  }
}

function renderHistory(): void {
  historyBody.innerHTML = "";
  for (const row of [...workspace.history].reverse()) {
    const tr = document.createElement("tr");
    const delta = row.delta === null ? "-" : `${row.delta >= 0 ? "+" : ""}${row.delta.toFixed(4)}`;
    tr.innerHTML = `<td>${row.revision}</td><td>${row.score.toFixed(4)}</td>` +
      `<td>${delta}</td><td>${row.draft.text ?? ""}</td><td>${row.requestId}</td>`;
    historyBody.appendChild(tr);
  }
}

async function loadRecommendations(domain: string): Promise<void> {
  recHost.innerHTML = "";
  if (!domain) return;
  try {
    const text = await api.textRecommendations(domain);
    const patches = await api.patchRecommendations(domain).catch(() => null);
    const view = buildView(text, patches);
    const trust = await api.trust(domain, "text").catch(() => null);
    const badge = trustBadge(trust);
    trustHost.textContent = badge.label;
    trustHost.className = badge.warning ? "trust warn" : "trust";
    for (const [title, entries] of [["words", view.words], ["phrases", view.phrases]] as const) {
      const section = document.createElement("div");
      section.innerHTML = `<h3>${title}</h3>`;
      const list = document.createElement("ul");
      for (const entry of entries) {
        const item = document.createElement("li");
        item.className = entry.tone;
        item.textContent = `${entry.key}  (${entry.score.toFixed(4)}, n=${entry.support})`;
        item.title = "click to insert into the draft";
        item.addEventListener("click", () => {
          const at = textArea.selectionStart ?? textArea.value.length;
          const next = insertPhrase(textArea.value, at, entry.key);
          textArea.value = next.text;
          textArea.setSelectionRange(next.cursor, next.cursor);
          scheduleRescore();
        });
        list.appendChild(item);
      }
      section.appendChild(list);
      recHost.appendChild(section);
    }
    if (view.patches) {
      const section = document.createElement("div");
      section.innerHTML = "<h3>patches</h3>";
      for (const [tone, items] of [["positive", view.patches.positive],
                                   ["negative", view.patches.negative]] as const) {
        for (const patch of items) {
          const img = document.createElement("img");
          img.src = api.patchUrl(patch);
          img.className = `patch ${tone}`;
          img.title = `${tone} cluster ${patch.cluster}, score ${patch.score.toFixed(4)}`;
          section.appendChild(img);
        }
      }
      recHost.appendChild(section);
    }
  } catch (err) {
    recHost.innerHTML = err instanceof ApiError && err.status === 404
      ? "<p>No recommendations for this domain yet - run the insights pipeline.</p>"
      : `<p>${String(err)}</p>`;
  }
}

async function onImagePicked(): Promise<void> {
  const file = imageInput.files?.[0];
  if (!file) {
    workspace.draft.image_png_base64 = null;
    baseImage = null;
    scheduleRescore();
    return;
  }
  const bytes = new Uint8Array(await file.arrayBuffer());
  let binary = "";
  bytes.forEach((b) => { binary += String.fromCharCode(b); });
  workspace.draft.image_png_base64 = btoa(binary);
  const bitmap = await createImageBitmap(file);
  const scratch = document.createElement("canvas");
  scratch.width = bitmap.width;
  scratch.height = bitmap.height;
  const ctx = scratch.getContext("2d");
  if (ctx) {
    ctx.drawImage(bitmap, 0, 0);
    const data = ctx.getImageData(0, 0, bitmap.width, bitmap.height);
    baseImage = { pixels: new Uint8ClampedArray(data.data), width: bitmap.width, height: bitmap.height };
  }
  scheduleRescore();
}

async function boot(): Promise<void> {
  meta = await api.meta();
  domainSelect.innerHTML = "<option value=''>(no domain)</option>" +
    meta.domains.map((d) => `<option value="${d}">${d}</option>`).join("");
  featureBox.innerHTML = "";
  for (let i = 0; i < meta.feature_dim; i++) {
    const label = document.createElement("label");
    const box = document.createElement("input");
    box.type = "checkbox";
    box.addEventListener("change", scheduleRescore);
    label.appendChild(box);
    label.append(` f${i}`);
    featureBox.appendChild(label);
  }
  textArea.addEventListener("input", scheduleRescore);
  domainSelect.addEventListener("change", () => {
    scheduleRescore();
    void loadRecommendations(domainSelect.value);
  });
  imageInput.addEventListener("change", () => void onImagePicked());
  togglePos.addEventListener("change", drawOverlay);
  toggleNeg.addEventListener("change", drawOverlay);
  retryButton.addEventListener("click", () => void rescore());
}

void boot();
