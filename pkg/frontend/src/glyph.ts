/** Deterministic color glyphs for items without images.
 *
 * The service ships a short hash of each item's feature vector; the
 * glyph is a pure function of that digest, so one item renders the
 * same four-patch swatch in every grid, every session, every browser.
 */

export interface GlyphColors {
  patches: [string, string, string, string];
  accent: string;
}

// 12 hex chars = 6 bytes: four patch hues + saturation/lightness seeds
export function glyphColors(digest: string): GlyphColors {
  const clean = digest.toLowerCase().replace(/[^0-9a-f]/g, "").padEnd(12, "0");
  const byte = (i: number) => parseInt(clean.slice(2 * i, 2 * i + 2), 16);
  const sat = 45 + (byte(4) % 40);
  const light = 38 + (byte(5) % 28);
  const hue = (i: number) => Math.round((byte(i) / 255) * 359);
  const patch = (i: number) => `hsl(${hue(i)}, ${sat}%, ${light}%)`;
  return {
    patches: [patch(0), patch(1), patch(2), patch(3)],
    accent: `hsl(${hue(0)}, ${sat}%, ${Math.max(20, light - 18)}%)`,
  };
}

export function glyphSvg(digest: string, size = 64): string {
  const { patches, accent } = glyphColors(digest);
  const h = size / 2;
  return (
    `<svg class="glyph" width="${size}" height="${size}" viewBox="0 0 ${size} ${size}" ` +
    `role="img" aria-label="feature glyph ${digest}">` +
    `<rect x="0" y="0" width="${h}" height="${h}" fill="${patches[0]}"/>` +
    `<rect x="${h}" y="0" width="${h}" height="${h}" fill="${patches[1]}"/>` +
    `<rect x="0" y="${h}" width="${h}" height="${h}" fill="${patches[2]}"/>` +
    `<rect x="${h}" y="${h}" width="${h}" height="${h}" fill="${patches[3]}"/>` +
    `<circle cx="${h}" cy="${h}" r="${size / 8}" fill="${accent}"/>` +
    `</svg>`
  );
}
