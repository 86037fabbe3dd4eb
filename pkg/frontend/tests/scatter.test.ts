import {describe, expect, it} from 'vitest';

import {renderScatter, featureCard} from '../src/scatter';
import type {PendingItem} from '../src/types';

function item(index: number, coords: [number, number], projected = false): PendingItem {
  return {index, coords, projected, features: [coords[0], coords[1], 3.5], score: 0.2};
}

const BACKGROUND = [
  [0, 0],
  [1, 1],
  [2, 0.5],
];

describe('renderScatter', () => {
  it('lays out background, queried, and current points in bounds', () => {
    const items = [item(5, [0.5, 0.5]), item(8, [1.5, 0.2])];
    const view = renderScatter(items, BACKGROUND, items[1], 400, 300);
    expect(view.mode).toBe('scatter');
    if (view.mode !== 'scatter') return;
    expect(view.points).toHaveLength(5);
    for (const p of view.points) {
      expect(p.x).toBeGreaterThanOrEqual(0);
      expect(p.x).toBeLessThanOrEqual(400);
      expect(p.y).toBeGreaterThanOrEqual(0);
      expect(p.y).toBeLessThanOrEqual(300);
    }
    const kinds = view.points.map((p) => p.kind);
    expect(kinds.filter((k) => k === 'background')).toHaveLength(3);
    expect(kinds.filter((k) => k === 'queried')).toHaveLength(1);
    expect(kinds.filter((k) => k === 'current')).toHaveLength(1);
    const current = view.points.find((p) => p.kind === 'current');
    expect(current?.index).toBe(8);
  });

  it('flags projected coordinate views', () => {
    const items = [item(1, [0, 0], true)];
    const view = renderScatter(items, BACKGROUND, items[0]);
    expect(view.mode).toBe('scatter');
    if (view.mode === 'scatter') expect(view.projected).toBe(true);
  });

  it('keeps degenerate single-point extents finite', () => {
    const items = [item(1, [2, 2])];
    const view = renderScatter(items, [[2, 2]], items[0]);
    expect(view.mode).toBe('scatter');
    if (view.mode === 'scatter') {
      for (const p of view.points) {
        expect(Number.isFinite(p.x)).toBe(true);
        expect(Number.isFinite(p.y)).toBe(true);
      }
    }
  });

  it('falls back to the feature card without 2-D data', () => {
    const bad = {...item(3, [1, 2]), coords: [1] as unknown as [number, number]};
    const view = renderScatter([bad], [], bad);
    expect(view.mode).toBe('card');
    if (view.mode === 'card') {
      expect(view.index).toBe(3);
      expect(view.rows.map((r) => r.name)).toContain('score');
    }
  });
});

describe('featureCard', () => {
  it('renders one row per feature plus the score', () => {
    const card = featureCard(item(2, [0.1, -0.4]));
    expect(card.rows).toHaveLength(4);
    expect(card.rows[0]).toEqual({name: 'f0', value: (0.1).toPrecision(5)});
  });

  it('handles the empty state', () => {
    expect(featureCard(null).rows).toHaveLength(0);
  });
});
