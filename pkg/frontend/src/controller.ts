import { ApiClient, ApiError } from './api.js';
import type {
  CatalogueDto,
  ModalityId,
  SessionResponse,
  TrialStateDto,
} from './types.js';

// What the DOM layer renders. A pure projection of the last server-confirmed
// state plus the optimistic thumb positions of an in-progress gesture; no
// budget arithmetic done here is authoritative.
export interface UiTrialView {
  connected: boolean;
  notice: string | null;
  completed: boolean;
  trialNumber: number;        // 1-based for display
  totalTrials: number;
  visualIndex: number;        // displayed thumb positions (may be optimistic)
  audioIndex: number;
  visualMax: number;
  audioMax: number;
  visualAffordableMax: number; // greyed above this position
  audioAffordableMax: number;
  smellOn: boolean;
  smellIndicator: boolean;     // fires only on a server-confirmed ON toggle
  dependentMode: boolean;
  budgetFill: number;          // spent / budget, in [0, 1]
  remainingText: string;
  pending: boolean;            // a mutating request is in flight or queued
}

type Action =
  | { kind: 'level'; modality: ModalityId; index: number }
  | { kind: 'smell' }
  | { kind: 'commit' };

export interface ControllerOptions {
  debounceMs?: number;
  maxAttempts?: number;
  retryDelayMs?: number;
}

const DEFAULTS: Required<ControllerOptions> = {
  debounceMs: 80,
  maxAttempts: 3,
  retryDelayMs: 150,
};

function sleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

/**
 * Drives one allocation session against the service. Slider drags are
 * debounced into a single request per gesture, at most one mutating request
 * is in flight (later actions queue), every optimistic update is replaced by
 * the server's answer, and transient network failures are retried before a
 * hard error is surfaced.
 */
export class UiController {
  private confirmed: TrialStateDto | null = null;
  private session: SessionResponse | null = null;
  private catalogue: CatalogueDto | null = null;
  private optimistic: { visual: number | null; audio: number | null } = {
    visual: null,
    audio: null,
  };
  private gestureTimers: Partial<Record<ModalityId, ReturnType<typeof setTimeout>>> = {};
  private queue: Action[] = [];
  private inFlight = false;
  private connected = true;
  private notice: string | null = null;
  private smellIndicator = false;
  private listeners: ((view: UiTrialView) => void)[] = [];
  private readonly opts: Required<ControllerOptions>;
  private idleResolvers: (() => void)[] = [];

  constructor(private readonly api: ApiClient, options: ControllerOptions = {}) {
    this.opts = { ...DEFAULTS, ...options };
  }

  subscribe(listener: (view: UiTrialView) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  get sessionId(): string | null {
    return this.session?.session_id ?? null;
  }

  async start(participantId: string, seed: number, budgets?: string[],
              scenarios?: string[]): Promise<void> {
    this.catalogue = await this.api.getCatalogue();
    this.applyResponse(await this.api.createSession(participantId, seed,
                                                    budgets, scenarios));
  }

  /** Called for every thumb position while dragging; only the final position
   * of the gesture reaches the server. */
  moveSlider(modality: ModalityId, index: number): void {
    this.optimistic[modality] = index;
    this.emit();
    const existing = this.gestureTimers[modality];
    if (existing !== undefined) clearTimeout(existing);
    this.gestureTimers[modality] = setTimeout(() => {
      delete this.gestureTimers[modality];
      this.enqueue({ kind: 'level', modality, index });
    }, this.opts.debounceMs);
  }

  toggleSmell(): void {
    this.enqueue({ kind: 'smell' });
  }

  next(): void {
    this.enqueue({ kind: 'commit' });
  }

  /** Resolves once the queue has drained; test and scripting hook. */
  flush(): Promise<void> {
    if (!this.inFlight && this.queue.length === 0
        && Object.keys(this.gestureTimers).length === 0) {
      return Promise.resolve();
    }
    return new Promise((resolve) => this.idleResolvers.push(resolve));
  }

  view(): UiTrialView {
    const s = this.confirmed;
    const visualMax = this.catalogue?.visual_ladder.length ?? 0;
    const audioMax = this.catalogue?.audio_ladder.length ?? 0;
    return {
      connected: this.connected,
      notice: this.notice,
      completed: this.session?.completed ?? false,
      trialNumber: (this.session?.trial_index ?? 0) + 1,
      totalTrials: this.session?.total_trials ?? 0,
      visualIndex: this.optimistic.visual ?? s?.visual_idx ?? 0,
      audioIndex: this.optimistic.audio ?? s?.audio_idx ?? 0,
      visualMax,
      audioMax,
      visualAffordableMax: this.affordableMax('visual'),
      audioAffordableMax: this.affordableMax('audio'),
      smellOn: s?.smell_on ?? false,
      smellIndicator: this.smellIndicator,
      dependentMode: s?.dependent_mode ?? false,
      budgetFill: s ? Math.min(1, s.spent / s.budget_value) : 0,
      remainingText: s ? s.remaining.toFixed(4) : '-',
      pending: this.inFlight || this.queue.length > 0,
    };
  }

  /** Highest slider position still affordable given the other modality and
   * the smell reservation (display hint only; the server re-validates). */
  private affordableMax(modality: ModalityId): number {
    const s = this.confirmed;
    if (!s || !this.catalogue) return 0;
    const ladder = modality === 'visual'
      ? this.catalogue.visual_ladder : this.catalogue.audio_ladder;
    const other = modality === 'visual'
      ? this.levelCost('audio', s.audio_idx) : this.levelCost('visual', s.visual_idx);
    const smell = s.smell_on
      ? this.catalogue.smell_costs[s.scenario] ?? 0 : 0;
    const headroom = s.budget_value - other - smell + 1e-9;
    let best = 0;
    for (let i = 1; i <= ladder.length; i += 1) {
      const level = ladder[i - 1];
      if (level !== undefined && level.cost <= headroom) best = i;
      else break;
    }
    return best;
  }

  private levelCost(modality: ModalityId, idx: number): number {
    if (!this.catalogue || idx <= 0) return 0;
    const ladder = modality === 'visual'
      ? this.catalogue.visual_ladder : this.catalogue.audio_ladder;
    return ladder[idx - 1]?.cost ?? 0;
  }

  private emit(): void {
    const view = this.view();
    for (const listener of this.listeners) listener(view);
  }

  private enqueue(action: Action): void {
    this.queue.push(action);
    this.emit();
    void this.pump();
  }

  private applyResponse(resp: SessionResponse): void {
    const before = this.confirmed;
    this.session = resp;
    this.confirmed = resp.state;
    if (resp.state && before && !before.smell_on && resp.state.smell_on) {
      this.smellIndicator = true;   // confirmed ON transition
    } else if (!resp.state?.smell_on) {
      this.smellIndicator = false;
    }
  }

  private async pump(): Promise<void> {
    if (this.inFlight) return;
    const action = this.queue.shift();
    if (action === undefined) {
      this.maybeIdle();
      return;
    }
    this.inFlight = true;
    this.emit();
    try {
      const resp = await this.send(action);
      this.notice = null;
      this.connected = true;
      this.applyResponse(resp);
      if (action.kind === 'level') {
        // server answer replaces the optimistic thumb (snap-back on reject)
        this.optimistic[action.modality] = null;
      } else if (action.kind === 'commit') {
        this.optimistic = { visual: null, audio: null };
      }
    } catch (err) {
      this.optimistic = { visual: null, audio: null };
      if (err instanceof ApiError) {
        this.notice = err.message;          // server refused; state unchanged
        this.connected = true;
      } else {
        this.notice = 'connection lost; retry failed';
        this.connected = false;             // reconnect banner
        this.queue = [];
      }
    } finally {
      this.inFlight = false;
      this.emit();
      if (this.queue.length > 0) void this.pump();
      else this.maybeIdle();
    }
  }

  private maybeIdle(): void {
    if (this.inFlight || this.queue.length > 0
        || Object.keys(this.gestureTimers).length > 0) {
      return;
    }
    const resolvers = this.idleResolvers;
    this.idleResolvers = [];
    for (const resolve of resolvers) resolve();
  }

  private async send(action: Action): Promise<SessionResponse> {
    const id = this.session?.session_id;
    if (!id) throw new ApiError(0, 'no active session');
    let lastError: unknown;
    for (let attempt = 1; attempt <= this.opts.maxAttempts; attempt += 1) {
      try {
        if (action.kind === 'level') {
          return await this.api.setLevel(id, action.modality, action.index);
        }
        if (action.kind === 'smell') {
          return await this.api.toggleSmell(id);
        }
        return await this.api.commit(id);
      } catch (err) {
        if (err instanceof ApiError) throw err;   // a real server answer
        lastError = err;                          // transient: queued retry
        if (attempt < this.opts.maxAttempts) {
          await sleep(this.opts.retryDelayMs);
        }
      }
    }
    throw lastError;
  }
}
