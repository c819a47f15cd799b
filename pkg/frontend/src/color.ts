/** Symmetric diverging color scale for attribution values.
 *
 * Positive values fade white -> red, negative values white -> blue, zero is
 * white. The scale is normalized by the largest absolute value in the result
 * so the two directions use the same magnitude mapping.
 */

export function divergingColor(value: number, maxAbs: number): string {
  if (!Number.isFinite(value) || maxAbs <= 0) {
    return "rgb(255,255,255)";
  }
  const t = Math.max(-1, Math.min(1, value / maxAbs));
  const faded = Math.round(255 - 155 * Math.abs(t)); // keep text legible
  return t >= 0 ? `rgb(255,${faded},${faded})` : `rgb(${faded},${faded},255)`;
}

export function maxAbsolute(values: number[]): number {
  return values.reduce((acc, v) => Math.max(acc, Math.abs(v)), 0);
}

/** Parse an rgb(r,g,b) string, with or without spaces after the commas. */
export function rgbChannels(color: string): [number, number, number] {
  const match = /^rgb\((\d+),\s*(\d+),\s*(\d+)\)$/.exec(color);
  if (!match) {
    throw new Error(`not an rgb() color: ${color}`);
  }
  return [Number(match[1]), Number(match[2]), Number(match[3])];
}
