/** Same golden-ratio hue walk the backend uses for preview PNGs, so a
 * structure keeps one color across previews and the 3-D viewer. */

export function structureColor(structureId: number): [number, number, number] {
  const hue = (structureId * 0.6180339887498949) % 1.0;
  return hsvToRgb(hue, 0.65, 0.95);
}

export function structureColorHex(structureId: number): number {
  const [r, g, b] = structureColor(structureId);
  return (Math.round(r * 255) << 16) | (Math.round(g * 255) << 8) | Math.round(b * 255);
}

function hsvToRgb(h: number, s: number, v: number): [number, number, number] {
  const i = Math.floor(h * 6);
  const f = h * 6 - i;
  const p = v * (1 - s);
  const q = v * (1 - f * s);
  const t = v * (1 - (1 - f) * s);
  switch (i % 6) {
    case 0:
      return [v, t, p];
    case 1:
      return [q, v, p];
    case 2:
      return [p, v, t];
    case 3:
      return [p, q, v];
    case 4:
      return [t, p, v];
    default:
      return [v, p, q];
  }
}
