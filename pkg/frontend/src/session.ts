/** Session view model and the labeling flow driver.
 *
 * The view mirrors server state; the only local mutation is the optimistic
 * removal of an item while its POST is in flight, rolled back if the POST
 * fails. Labels are never kept client-side past a successful acknowledgment
 * (the server is the ledger; a reload restores pending from it).
 */

import {LabelServiceApi, ServiceError} from './api';
import type {
  PendingItem,
  SessionSnapshot,
  SessionPhase,
  Verdict,
} from './types';

export const POLL_INTERVAL_MS = 1000;

export interface SessionView {
  id: string;
  phase: SessionPhase;
  pending: PendingItem[];
  labeledCount: number;
  budget: number;
  background: number[][];
  summary: {alphaHat: number; testAuc: number} | null;
  banner: string | null;
}

/** Next verdict provider: the UI resolves it on a button click. */
export type Decide = (item: PendingItem) => Promise<Verdict> | Verdict;

export function emptyView(id: string): SessionView {
  return {
    id,
    phase: 'warming_up',
    pending: [],
    labeledCount: 0,
    budget: 0,
    background: [],
    summary: null,
    banner: null,
  };
}

export function applySnapshot(
  view: SessionView,
  snap: SessionSnapshot,
): SessionView {
  return {
    ...view,
    phase: snap.state,
    labeledCount: snap.received_count,
    budget: snap.budget,
    background: snap.scatter_background ?? view.background,
    summary: snap.result
      ? {alphaHat: snap.result.alpha_hat, testAuc: snap.result.test_auc}
      : view.summary,
  };
}

const sleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export interface FlowOptions {
  pollMs?: number;
  maxRetries?: number;
  onUpdate?: (view: SessionView) => void;
}

/** Submit one verdict with optimistic pending removal.
 *
 * Returns the updated view. On a conflict the pending list is refreshed
 * from the server; on a network failure the item is restored and a retry
 * banner is set.
 */
export async function submitVerdict(
  client: LabelServiceApi,
  view: SessionView,
  item: PendingItem,
  verdict: Verdict,
): Promise<SessionView> {
  const optimistic: SessionView = {
    ...view,
    pending: view.pending.filter((p) => p.index !== item.index),
    banner: null,
  };
  try {
    const counts = await client.submitLabel(view.id, item.index, verdict);
    return {...optimistic, labeledCount: counts.received};
  } catch (err) {
    if (err instanceof ServiceError && err.status === 409) {
      // someone else labeled it (or state moved on): trust the server
      try {
        const pending = await client.getPending(view.id);
        return {...view, pending, banner: `refreshed: ${err.message}`};
      } catch {
        return {...view, banner: `refreshed: ${err.message}`, pending: []};
      }
    }
    // network or server failure: roll back, surface a retry banner
    return {
      ...view,
      banner: `submit failed, will retry: ${String(err)}`,
    };
  }
}

/** Drive a session to completion: wait for queries, label each pending
 * item via `decide`, then poll until the final summary is available. */
export async function labelFlow(
  client: LabelServiceApi,
  sessionId: string,
  decide: Decide,
  opts: FlowOptions = {},
): Promise<SessionView> {
  const pollMs = opts.pollMs ?? POLL_INTERVAL_MS;
  const maxRetries = opts.maxRetries ?? 30;
  let view = emptyView(sessionId);
  const push = () => opts.onUpdate?.(view);

  let retries = 0;
  while (true) {
    try {
      view = applySnapshot(view, await client.getStatus(sessionId));
      retries = 0;
    } catch (err) {
      if (++retries > maxRetries) throw err;
      view = {...view, banner: `server unreachable, retrying: ${String(err)}`};
      push();
      await sleep(pollMs);
      continue;
    }
    push();

    if (view.phase === 'failed') {
      throw new Error(`session failed server-side`);
    }
    if (view.phase === 'done') {
      return view;
    }
    if (view.phase === 'awaiting_labels') {
      view = {...view, pending: await client.getPending(sessionId)};
      push();
      while (view.pending.length > 0) {
        const item = view.pending[0];
        const before = view.pending.length;
        view = await submitVerdict(client, view, item, await decide(item));
        push();
        if (view.banner !== null && view.pending.length === before) {
          await sleep(pollMs); // rolled back: wait before retrying
        }
      }
      continue; // all submitted: fall through to polling for the summary
    }
    await sleep(pollMs);
  }
}
