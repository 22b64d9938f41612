import { afterEach, beforeEach, describe, expect, test, vi } from 'vitest';

import { ApiClient, ApiError } from '../src/api.js';
import { UiController } from '../src/controller.js';
import type {
  CatalogueDto,
  ModalityId,
  SessionResponse,
  TrialStateDto,
} from '../src/types.js';

// In-memory stand-in for the service with the same acceptance rules the
// server applies (simplified ladder: cost i/10 per level, budget 0.5).
class FakeApi {
  calls: { kind: string; modality?: ModalityId; index?: number }[] = [];
  failNext = 0;            // how many upcoming requests should network-fail
  state: TrialStateDto = {
    budget_label: 'T',
    budget_value: 0.5,
    scenario: 'Car',
    visual_idx: 0,
    audio_idx: 0,
    smell_on: false,
    dependent_mode: false,
    spent: 0,
    remaining: 0.5,
  };
  trialIndex = 0;
  totalTrials = 3;

  private levelCost(idx: number): number {
    return idx / 10;
  }

  private respond(accepted?: boolean): SessionResponse {
    return {
      session_id: 'fake',
      trial_index: this.trialIndex,
      total_trials: this.totalTrials,
      completed: this.trialIndex >= this.totalTrials,
      state: this.trialIndex >= this.totalTrials ? null : { ...this.state },
      ...(accepted === undefined ? {} : { accepted }),
    };
  }

  private maybeFail(): void {
    if (this.failNext > 0) {
      this.failNext -= 1;
      throw new TypeError('fetch failed');
    }
  }

  async getCatalogue(): Promise<CatalogueDto> {
    return {
      visual_ladder: Array.from({ length: 5 }, (_, i) => ({
        index: i + 1, descriptor: `v${i + 1}`, cost: this.levelCost(i + 1),
      })),
      audio_ladder: Array.from({ length: 5 }, (_, i) => ({
        index: i + 1, descriptor: `a${i + 1}`, cost: this.levelCost(i + 1),
      })),
      budgets: [{ label: 'T', value: 0.5, level_count: 5 }],
      smell_costs: { Car: 0.05 },
    };
  }

  async createSession(): Promise<SessionResponse> {
    this.calls.push({ kind: 'create' });
    return this.respond();
  }

  async getTrial(): Promise<SessionResponse> {
    return this.respond();
  }

  async setLevel(_id: string, modality: ModalityId,
                 index: number): Promise<SessionResponse> {
    this.maybeFail();
    this.calls.push({ kind: 'level', modality, index });
    const next = { ...this.state };
    if (modality === 'visual') next.visual_idx = index;
    else next.audio_idx = index;
    const spent = this.levelCost(next.visual_idx) + this.levelCost(next.audio_idx)
      + (next.smell_on ? 0.05 : 0);
    if (spent <= next.budget_value + 1e-9) {
      next.spent = spent;
      next.remaining = next.budget_value - spent;
      this.state = next;
      return this.respond(true);
    }
    if (!this.state.dependent_mode) {
      this.state = { ...this.state, dependent_mode: true };
    }
    return this.respond(false);
  }

  async toggleSmell(): Promise<SessionResponse> {
    this.maybeFail();
    this.calls.push({ kind: 'smell' });
    const on = !this.state.smell_on;
    const spent = this.state.spent + (on ? 0.05 : -0.05);
    this.state = { ...this.state, smell_on: on, spent,
                   remaining: this.state.budget_value - spent };
    return this.respond();
  }

  async commit(): Promise<SessionResponse> {
    this.maybeFail();
    this.calls.push({ kind: 'commit' });
    this.trialIndex += 1;
    this.state = { ...this.state, visual_idx: 0, audio_idx: 0, smell_on: false,
                   dependent_mode: false, spent: 0, remaining: 0.5 };
    return this.respond();
  }
}

function makeController(fake: FakeApi): UiController {
  return new UiController(fake as unknown as ApiClient,
                          { debounceMs: 50, retryDelayMs: 10 });
}

describe('UiController', () => {
  let fake: FakeApi;
  let controller: UiController;

  beforeEach(async () => {
    fake = new FakeApi();
    controller = makeController(fake);
    await controller.start('p1', 1);
  });

  afterEach(() => {
    vi.useRealTimers();
  });

  test('drag gesture debounces to a single call with the final index', async () => {
    for (const idx of [1, 2, 3, 4, 5]) controller.moveSlider('visual', idx);
    await controller.flush();
    const levelCalls = fake.calls.filter((c) => c.kind === 'level');
    expect(levelCalls).toEqual([{ kind: 'level', modality: 'visual', index: 5 }]);
    expect(controller.view().visualIndex).toBe(5);
  });

  test('optimistic thumb shows immediately, confirmed replaces it', async () => {
    controller.moveSlider('visual', 3);
    expect(controller.view().visualIndex).toBe(3);   // optimistic
    expect(fake.calls.filter((c) => c.kind === 'level')).toHaveLength(0);
    await controller.flush();
    expect(controller.view().visualIndex).toBe(3);   // confirmed
  });

  test('over-budget move snaps back within one round trip', async () => {
    controller.moveSlider('visual', 4);
    await controller.flush();
    controller.moveSlider('audio', 3);               // 0.4 + 0.3 > 0.5
    expect(controller.view().audioIndex).toBe(3);    // optimistic
    await controller.flush();
    const view = controller.view();
    expect(view.audioIndex).toBe(0);                 // snapped back
    expect(view.dependentMode).toBe(true);           // rejection carried the flag
  });

  test('mutations queue behind the in-flight request', async () => {
    controller.moveSlider('visual', 2);
    controller.toggleSmell();
    controller.next();
    await controller.flush();
    const kinds = fake.calls.map((c) => c.kind);
    // order preserved: smell, commit queued; the debounced level lands when
    // its gesture settles
    expect(kinds.filter((k) => k !== 'create')).toEqual(
      ['smell', 'commit', 'level']);
  });

  test('transient network failures retry and recover', async () => {
    fake.failNext = 2;                               // two failures, then ok
    controller.toggleSmell();
    await controller.flush();
    expect(controller.view().connected).toBe(true);
    expect(controller.view().smellOn).toBe(true);
    expect(fake.calls.filter((c) => c.kind === 'smell')).toHaveLength(1);
  });

  test('hard error surfaces after three failed attempts', async () => {
    fake.failNext = 3;
    controller.toggleSmell();
    await controller.flush();
    const view = controller.view();
    expect(view.connected).toBe(false);
    expect(view.notice).toMatch(/connection/);
    expect(view.smellOn).toBe(false);                // reverted to confirmed
  });

  test('server refusal is surfaced as a notice, not a retry', async () => {
    const original = fake.toggleSmell.bind(fake);
    let calls = 0;
    fake.toggleSmell = async () => {
      calls += 1;
      throw new ApiError(409, 'smell cost exceeds budget');
    };
    controller.toggleSmell();
    await controller.flush();
    expect(calls).toBe(1);                           // no retry on 409
    expect(controller.view().notice).toMatch(/409/);
    expect(controller.view().connected).toBe(true);
    fake.toggleSmell = original;
  });

  test('smell indicator fires only on the confirmed ON transition', async () => {
    expect(controller.view().smellIndicator).toBe(false);
    controller.toggleSmell();
    expect(controller.view().smellIndicator).toBe(false);  // not yet confirmed
    await controller.flush();
    expect(controller.view().smellIndicator).toBe(true);
    controller.toggleSmell();
    await controller.flush();
    expect(controller.view().smellIndicator).toBe(false);
  });

  test('affordable maximum reflects the other slider and smell reservation', async () => {
    controller.moveSlider('visual', 3);
    await controller.flush();
    // audio headroom = 0.5 - 0.3 = 0.2 -> highest affordable audio level 2
    expect(controller.view().audioAffordableMax).toBe(2);
    controller.toggleSmell();
    await controller.flush();
    // smell reserves 0.05 -> headroom 0.15 -> still level 1 only
    expect(controller.view().audioAffordableMax).toBe(1);
  });

  test('next advances the trial counter and completion state', async () => {
    controller.next();
    controller.next();
    controller.next();
    await controller.flush();
    const view = controller.view();
    expect(view.completed).toBe(true);
    expect(view.trialNumber).toBe(4);
  });
});
