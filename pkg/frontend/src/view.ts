import type { UiController, UiTrialView } from './controller.js';
import type { ModalityId } from './types.js';

// DOM projection of the controller's view. Budget pressure is shown as red
// stripes growing across the bar; levels beyond the affordable maximum are
// greyed out on the slider rails.

const TEMPLATE = `
<div class="panel">
  <div class="banner" data-role="banner" hidden>connection lost - retrying</div>
  <div class="notice" data-role="notice" hidden></div>
  <h2>Form the best multi-sensory experience</h2>
  <div class="trial-counter"><span data-role="trial-counter">-</span></div>

  <div class="budget">
    <div class="budget-bar"><div class="budget-fill" data-role="budget-fill"></div></div>
    <div class="budget-remaining">remaining: <span data-role="remaining">-</span></div>
  </div>

  <div class="slider-row" data-modality="visual">
    <label>Visual quality</label>
    <input type="range" min="0" value="0" step="1" data-role="visual-slider">
    <div class="rail-shade" data-role="visual-shade"></div>
  </div>
  <div class="slider-row" data-modality="audio">
    <label>Audio quality</label>
    <input type="range" min="0" value="0" step="1" data-role="audio-slider">
    <div class="rail-shade" data-role="audio-shade"></div>
  </div>

  <div class="smell-row">
    <button data-role="smell-on">Smell ON</button>
    <button data-role="smell-off">Smell OFF</button>
    <span class="smell-indicator" data-role="smell-indicator" hidden>releasing scent</span>
  </div>

  <div class="dependency" data-role="dependency" hidden>
    controls are now linked: raising one lowers the other
  </div>

  <button class="next" data-role="next">Next</button>
  <div class="done" data-role="done" hidden>session complete - thank you</div>
</div>
`;

export class ExperimentView {
  private root: HTMLElement;
  private readonly els: Record<string, HTMLElement>;

  constructor(container: HTMLElement, private readonly controller: UiController) {
    container.innerHTML = TEMPLATE;
    this.root = container;
    this.els = {};
    for (const el of Array.from(container.querySelectorAll<HTMLElement>('[data-role]'))) {
      this.els[el.dataset['role'] as string] = el;
    }
    this.bind();
    controller.subscribe((view) => this.render(view));
  }

  private slider(modality: ModalityId): HTMLInputElement {
    return this.els[`${modality}-slider`] as HTMLInputElement;
  }

  private bind(): void {
    for (const modality of ['visual', 'audio'] as ModalityId[]) {
      const slider = this.slider(modality);
      slider.addEventListener('input', () => {
        this.controller.moveSlider(modality, Number(slider.value));
      });
    }
    this.els['smell-on']?.addEventListener('click', () => {
      this.controller.toggleSmell();
    });
    this.els['smell-off']?.addEventListener('click', () => {
      this.controller.toggleSmell();
    });
    this.els['next']?.addEventListener('click', () => this.controller.next());
  }

  render(view: UiTrialView): void {
    const counter = this.els['trial-counter'];
    if (counter) {
      counter.textContent = view.completed
        ? 'finished'
        : `trial ${view.trialNumber} of ${view.totalTrials}`;
    }
    const banner = this.els['banner'];
    if (banner) banner.hidden = view.connected;
    const notice = this.els['notice'];
    if (notice) {
      notice.hidden = view.notice === null;
      notice.textContent = view.notice ?? '';
    }
    for (const modality of ['visual', 'audio'] as ModalityId[]) {
      const slider = this.slider(modality);
      const max = modality === 'visual' ? view.visualMax : view.audioMax;
      const index = modality === 'visual' ? view.visualIndex : view.audioIndex;
      const affordable = modality === 'visual'
        ? view.visualAffordableMax : view.audioAffordableMax;
      slider.max = String(max);
      if (Number(slider.value) !== index) slider.value = String(index);
      // grey the unaffordable top of the rail
      const shade = this.els[`${modality}-shade`];
      if (shade && max > 0) {
        const pct = Math.round((affordable / max) * 100);
        shade.style.background =
          `linear-gradient(to right, transparent ${pct}%, #bbb ${pct}%)`;
        shade.title = `levels above ${affordable} unaffordable`;
      }
    }
    const smellOnBtn = this.els['smell-on'] as HTMLButtonElement | undefined;
    const smellOffBtn = this.els['smell-off'] as HTMLButtonElement | undefined;
    if (smellOnBtn) smellOnBtn.disabled = view.smellOn || view.completed;
    if (smellOffBtn) smellOffBtn.disabled = !view.smellOn || view.completed;
    const indicator = this.els['smell-indicator'];
    if (indicator) indicator.hidden = !view.smellIndicator;
    const dependency = this.els['dependency'];
    if (dependency) dependency.hidden = !view.dependentMode;
    const fill = this.els['budget-fill'];
    if (fill) {
      const pct = Math.round(view.budgetFill * 100);
      fill.style.width = `${pct}%`;
      // red stripes grow as the budget depletes
      fill.style.background =
        'repeating-linear-gradient(45deg, #d33 0 8px, #f6f6f6 8px 12px)';
    }
    const remaining = this.els['remaining'];
    if (remaining) remaining.textContent = view.remainingText;
    const nextBtn = this.els['next'] as HTMLButtonElement | undefined;
    if (nextBtn) nextBtn.disabled = view.completed || view.pending;
    const done = this.els['done'];
    if (done) done.hidden = !view.completed;
  }
}
