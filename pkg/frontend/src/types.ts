/** Payload shapes of the dialogue server's JSON API. */

export interface ModelInfo {
  config: Record<string, unknown>;
  variant: string;
  attention: boolean;
  snapshot: boolean;
  belief: string;
  vocabSize: number;
  indicatorSpec: string[];
}

export interface SessionCreated {
  sessionId: string;
}

export interface BeliefRow {
  values: number;
  dontcare: number;
  none: number;
}

export interface BeliefSummary {
  informable: Record<string, BeliefRow>;
  requestable: Record<string, number>;
}

export interface HeatMapPayload {
  tokens: string[];
  trackers: string[];
  rows: number[][];
}

export interface TracePayload {
  tokens: string[];
  indicators: string[];
  values: number[][];
}

export interface UtteranceReply {
  surface: string;
  skeletal: string[];
  beliefSummary: BeliefSummary;
  dbMatchBin: number;
  dbMatchCount: number;
  offeredEntity?: string;
  failedTokens?: string[];
  attentionHeatMap?: HeatMapPayload;
  snapshotTrace?: TracePayload;
}
