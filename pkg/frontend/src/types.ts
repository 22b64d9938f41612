// Wire types mirrored from the session service JSON API. The server is the
// single source of truth; nothing here performs budget math.

export interface TrialStateDto {
  budget_label: string;
  budget_value: number;
  scenario: string;
  visual_idx: number;
  audio_idx: number;
  smell_on: boolean;
  dependent_mode: boolean;
  spent: number;
  remaining: number;
}

export interface SessionResponse {
  session_id: string;
  trial_index: number;
  total_trials: number;
  completed: boolean;
  state: TrialStateDto | null;
  accepted?: boolean;
  record?: AllocationRecordDto;
}

export interface AllocationRecordDto {
  budget_label: string;
  budget_regressor: number;
  scenario: string;
  smell_on: boolean;
  visual_pct: number;
  audio_pct: number;
  weight: number;
}

export interface LadderLevelDto {
  index: number;
  descriptor: string;
  cost: number;
}

export interface CatalogueDto {
  visual_ladder: LadderLevelDto[];
  audio_ladder: LadderLevelDto[];
  budgets: { label: string; value: number; level_count: number | null }[];
  smell_costs: Record<string, number>;
}

export interface SessionLogDto {
  session_id: string;
  participant_id: string;
  seed: number;
  combos: [string, string][];
  events: SessionEventDto[];
  records: AllocationRecordDto[];
}

export interface SessionEventDto {
  seq: number;
  ts: number;
  kind: string;
  payload: Record<string, unknown>;
  state: TrialStateDto | null;
}

export type ModalityId = 'visual' | 'audio';
