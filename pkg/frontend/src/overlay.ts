/** Saliency overlay compositing.
 *
 * Pure function over pixel buffers so it is testable without a DOM. Positive
 * and negative contribution maps blend as a diverging two-hue overlay (teal
 * for positive, red for negative); per-pixel opacity is a monotone function
 * of the map value, and the legend reports the raw score range on display.
 */

export interface OverlayOptions {
  showPositive: boolean;
  showNegative: boolean;
  maxAlpha?: number; // opacity at the strongest score, default 0.65
}

export interface OverlayResult {
  pixels: Uint8ClampedArray; // RGBA, same geometry as the base image
  legend: { min: number; max: number };
}

const POSITIVE_HUE: [number, number, number] = [16, 185, 129];
const NEGATIVE_HUE: [number, number, number] = [220, 38, 38];

export class DimensionMismatchError extends Error {
  constructor(expected: string, got: string) {
    super(`saliency map is ${got} but the image is ${expected}; refusing to rescale silently`);
  }
}

function checkDims(map: number[][] | null, width: number, height: number): void {
  if (!map) return;
  if (map.length !== height || map.some((row) => row.length !== width)) {
    const got = `${map.length}x${map[0]?.length ?? 0}`;
    throw new DimensionMismatchError(`${height}x${width}`, got);
  }
}

export function composeOverlay(
  base: Uint8ClampedArray,
  width: number,
  height: number,
  positive: number[][] | null,
  negative: number[][] | null,
  options: OverlayOptions,
): OverlayResult {
  if (base.length !== width * height * 4) {
    throw new DimensionMismatchError(`${height}x${width}`, `${base.length / 4} pixels`);
  }
  checkDims(positive, width, height);
  checkDims(negative, width, height);

  const shown: Array<{ map: number[][]; hue: [number, number, number] }> = [];
  if (options.showPositive && positive) shown.push({ map: positive, hue: POSITIVE_HUE });
  if (options.showNegative && negative) shown.push({ map: negative, hue: NEGATIVE_HUE });

  const pixels = new Uint8ClampedArray(base);
  let lo = 0;
  let hi = 0;
  let peak = 0;
  for (const { map } of shown) {
    for (const row of map) {
      for (const value of row) {
        if (value < lo) lo = value;
        if (value > hi) hi = value;
        const mag = Math.abs(value);
        if (mag > peak) peak = mag;
      }
    }
  }
  if (peak === 0 || shown.length === 0) {
    return { pixels, legend: { min: lo, max: hi } };
  }

  const maxAlpha = options.maxAlpha ?? 0.65;
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      let alphaP = 0;
      let alphaN = 0;
      for (const { map, hue } of shown) {
        const intensity = Math.abs(map[y][x]) / peak; // monotone in |score|
        if (intensity <= 0) continue;
        const alpha = intensity * maxAlpha;
        const offset = (y * width + x) * 4;
        pixels[offset] = pixels[offset] * (1 - alpha) + hue[0] * alpha;
        pixels[offset + 1] = pixels[offset + 1] * (1 - alpha) + hue[1] * alpha;
        pixels[offset + 2] = pixels[offset + 2] * (1 - alpha) + hue[2] * alpha;
        if (hue === POSITIVE_HUE) alphaP = alpha;
        else alphaN = alpha;
      }
      void alphaP;
      void alphaN;
    }
  }
  return { pixels, legend: { min: lo, max: hi } };
}

/** Blended opacity applied at a given score, exposed for the monotonicity tests. */
export function overlayIntensity(value: number, peak: number, maxAlpha = 0.65): number {
  if (peak <= 0) return 0;
  return (Math.abs(value) / peak) * maxAlpha;
}
