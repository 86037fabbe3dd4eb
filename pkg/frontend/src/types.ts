/** Wire types mirrored from the labeling service HTTP API. */

export type SessionPhase =
  | 'warming_up'
  | 'awaiting_labels'
  | 'estimating'
  | 'training'
  | 'done'
  | 'failed';

export interface SessionSnapshot {
  id: string;
  dataset: string;
  state: SessionPhase;
  budget: number;
  pending_count: number;
  received_count: number;
  result: SessionResult | null;
  error: string | null;
  scatter_background?: number[][];
}

export interface SessionResult {
  alpha_hat: number;
  alpha_tilde: number | null;
  test_auc: number;
  epochs_run: number;
}

export interface PendingItem {
  index: number;
  coords: [number, number];
  projected: boolean;
  features: number[];
  score: number;
}

export type Verdict = 0 | 1;

export interface SubmitCounts {
  pending: number;
  received: number;
}

export interface ApiError {
  code: string;
  message: string;
}
