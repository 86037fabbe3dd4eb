/** Scatter layout for labeling: background sample, queried highlights, and
 * the current item enlarged. Pure geometry; DOM rendering lives in main.ts.
 * Falls back to a tabular feature card when 2-D coordinates are missing.
 */

import type {PendingItem} from './types';

export interface ScatterPoint {
  x: number;
  y: number;
  kind: 'background' | 'queried' | 'current';
  index?: number;
}

export interface ScatterView {
  mode: 'scatter';
  width: number;
  height: number;
  points: ScatterPoint[];
  projected: boolean;
}

export interface CardView {
  mode: 'card';
  index: number;
  rows: {name: string; value: string}[];
}

export type ItemView = ScatterView | CardView;

const PADDING = 20;

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!isFinite(lo)) return [0, 1];
  if (lo === hi) return [lo - 1, hi + 1];
  return [lo, hi];
}

/** Layout the background sample plus queried items in pixel space. */
export function renderScatter(
  items: PendingItem[],
  allPointsSample: number[][],
  current: PendingItem | null,
  width = 480,
  height = 360,
): ItemView {
  const twoD =
    items.every((it) => it.coords.length === 2) &&
    allPointsSample.every((p) => p.length === 2);
  if (!twoD || (items.length === 0 && allPointsSample.length === 0)) {
    return featureCard(current ?? items[0] ?? null);
  }

  const xs = allPointsSample.map((p) => p[0]).concat(items.map((i) => i.coords[0]));
  const ys = allPointsSample.map((p) => p[1]).concat(items.map((i) => i.coords[1]));
  const [x0, x1] = extent(xs);
  const [y0, y1] = extent(ys);
  const sx = (v: number) => PADDING + ((v - x0) / (x1 - x0)) * (width - 2 * PADDING);
  const sy = (v: number) => height - PADDING - ((v - y0) / (y1 - y0)) * (height - 2 * PADDING);

  const points: ScatterPoint[] = allPointsSample.map((p) => ({
    x: sx(p[0]),
    y: sy(p[1]),
    kind: 'background' as const,
  }));
  for (const it of items) {
    points.push({
      x: sx(it.coords[0]),
      y: sy(it.coords[1]),
      kind: current !== null && it.index === current.index ? 'current' : 'queried',
      index: it.index,
    });
  }
  return {
    mode: 'scatter',
    width,
    height,
    points,
    projected: items.some((it) => it.projected),
  };
}

/** Tabular fallback when there is nothing sensible to plot. */
export function featureCard(item: PendingItem | null): CardView {
  if (item === null) {
    return {mode: 'card', index: -1, rows: []};
  }
  const rows = item.features.map((v, i) => ({
    name: `f${i}`,
    value: v.toPrecision(5),
  }));
  rows.push({name: 'score', value: item.score.toPrecision(5)});
  return {mode: 'card', index: item.index, rows};
}
