import type { BoxStats } from "./types";

const SVG_NS = "http://www.w3.org/2000/svg";

export interface BoxGeometry {
  whiskerLowX: number;
  boxLeftX: number;
  medianX: number;
  boxRightX: number;
  whiskerHighX: number;
}

/** Horizontal pixel positions for a box-and-whisker glyph over the
 *  fixed outcome domain [0, 1]. */
export function boxGeometry(stats: BoxStats, width: number): BoxGeometry {
  const x = (v: number) => Math.max(0, Math.min(1, v)) * width;
  return {
    whiskerLowX: x(stats.whisker_low),
    boxLeftX: x(stats.q1),
    medianX: x(stats.median),
    boxRightX: x(stats.q3),
    whiskerHighX: x(stats.whisker_high),
  };
}

export function renderBoxplot(
  doc: Document,
  stats: BoxStats,
  width = 120,
  height = 18,
): SVGSVGElement {
  const geom = boxGeometry(stats, width);
  const mid = height / 2;
  const svg = doc.createElementNS(SVG_NS, "svg");
  svg.setAttribute("class", "boxplot");
  svg.setAttribute("width", String(width));
  svg.setAttribute("height", String(height));
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);

  const line = (x1: number, y1: number, x2: number, y2: number, cls: string) => {
    const el = doc.createElementNS(SVG_NS, "line");
    el.setAttribute("x1", String(x1));
    el.setAttribute("y1", String(y1));
    el.setAttribute("x2", String(x2));
    el.setAttribute("y2", String(y2));
    el.setAttribute("class", cls);
    svg.appendChild(el);
  };

  line(geom.whiskerLowX, mid, geom.boxLeftX, mid, "whisker");
  line(geom.boxRightX, mid, geom.whiskerHighX, mid, "whisker");
  line(geom.whiskerLowX, 3, geom.whiskerLowX, height - 3, "whisker-cap");
  line(geom.whiskerHighX, 3, geom.whiskerHighX, height - 3, "whisker-cap");

  const box = doc.createElementNS(SVG_NS, "rect");
  box.setAttribute("class", "box");
  box.setAttribute("x", String(geom.boxLeftX));
  box.setAttribute("y", "2");
  box.setAttribute("width", String(Math.max(1, geom.boxRightX - geom.boxLeftX)));
  box.setAttribute("height", String(height - 4));
  svg.appendChild(box);

  line(geom.medianX, 1, geom.medianX, height - 1, "median");
  return svg;
}
