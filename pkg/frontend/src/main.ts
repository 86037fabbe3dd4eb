/** DOM wiring: one session at a time, verdicts resolve on button clicks. */

import {LabelServiceClient} from './api';
import {labelFlow, SessionView} from './session';
import {renderScatter, ItemView} from './scatter';
import type {PendingItem, Verdict} from './types';

const SERVER_URL =
  new URLSearchParams(window.location.search).get('server') ??
  'http://127.0.0.1:8765';

const client = new LabelServiceClient(SERVER_URL);

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function drawView(view: ItemView, host: HTMLElement): void {
  host.replaceChildren();
  if (view.mode === 'card') {
    const table = el('table', {class: 'feature-card'});
    for (const row of view.rows) {
      const tr = el('tr');
      tr.append(el('td', {}, row.name), el('td', {}, row.value));
      table.append(tr);
    }
    host.append(table);
    return;
  }
  const svg = document.createElementNS('http://www.w3.org/2000/svg', 'svg');
  svg.setAttribute('viewBox', `0 0 ${view.width} ${view.height}`);
  svg.setAttribute('width', String(view.width));
  for (const p of view.points) {
    const c = document.createElementNS('http://www.w3.org/2000/svg', 'circle');
    c.setAttribute('cx', p.x.toFixed(1));
    c.setAttribute('cy', p.y.toFixed(1));
    c.setAttribute('r', p.kind === 'current' ? '9' : p.kind === 'queried' ? '5' : '2');
    c.setAttribute('class', `pt-${p.kind}`);
    svg.append(c);
  }
  host.append(svg);
  if (view.projected) {
    host.append(el('p', {class: 'hint'},
      'showing the first two embedding coordinates (projection)'));
  }
}

function statusLine(view: SessionView): string {
  if (view.phase === 'done' && view.summary) {
    return `done - estimated contamination ${(view.summary.alphaHat * 100).toFixed(1)}%` +
      `, test AUC ${(view.summary.testAuc * 100).toFixed(1)}%`;
  }
  return `${view.phase} - labeled ${view.labeledCount}/${view.budget}`;
}

async function run(): Promise<void> {
  const app = document.getElementById('app')!;
  const status = el('p', {id: 'status'}, 'connecting...');
  const banner = el('p', {id: 'banner', class: 'banner'});
  const plot = el('div', {id: 'plot'});
  const controls = el('div', {id: 'controls'});
  const normalBtn = el('button', {}, 'Normal');
  const anomalyBtn = el('button', {}, 'Anomaly');
  controls.append(normalBtn, anomalyBtn);
  app.replaceChildren(status, banner, plot, controls);

  const params = new URLSearchParams(window.location.search);
  let sessionId = params.get('session');
  if (!sessionId) {
    const snap = await client.createSession({
      dataset: params.get('dataset') ?? 'toy',
      seed: Number(params.get('seed') ?? '0'),
      plan: {budget: Number(params.get('budget') ?? '20')},
    });
    sessionId = snap.id;
    history.replaceState(null, '', `?session=${sessionId}`);
  }

  let currentView: SessionView | null = null;

  const decide = (item: PendingItem): Promise<Verdict> =>
    new Promise((resolve) => {
      if (currentView) {
        drawView(
          renderScatter(currentView.pending, currentView.background, item),
          plot,
        );
      }
      normalBtn.onclick = () => resolve(0);
      anomalyBtn.onclick = () => resolve(1);
    });

  const final = await labelFlow(client, sessionId, decide, {
    onUpdate: (view) => {
      currentView = view;
      status.textContent = statusLine(view);
      banner.textContent = view.banner ?? '';
    },
  });
  status.textContent = statusLine(final);
  controls.remove();
}

run().catch((err) => {
  const status = document.getElementById('status');
  if (status) status.textContent = `error: ${String(err)}`;
});
