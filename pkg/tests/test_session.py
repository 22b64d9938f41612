import numpy as np
import pytest
from hypothesis import settings, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, initialize, invariant, rule

from trisense import session as ss
from trisense.costs import CostConfig

CFG = CostConfig()
TOP_V = len(CFG.visual_ladder)
TOP_A = len(CFG.audio_ladder)


# --- new_trial -----------------------------------------------------------------

def test_new_trial_null_start():
    t = ss.new_trial(CFG, "B2", "Car")
    assert (t.visual_idx, t.audio_idx) == (0, 0)
    assert not t.smell_on and not t.dependent_mode
    assert t.spent == 0.0
    assert t.remaining == pytest.approx(0.11)


def test_new_trial_b5_medium_start():
    t = ss.new_trial(CFG, "B5", "Bath")
    assert t.visual_idx > 0 and t.audio_idx > 0
    # both thumbs snap down to the ladder grid, half the surplus each
    assert ss.level_cost(CFG.visual_ladder, t.visual_idx) <= 0.06 + ss.EPS
    assert ss.level_cost(CFG.audio_ladder, t.audio_idx) <= 0.06 + ss.EPS
    assert t.spent <= 0.12 + ss.EPS
    assert t.spent >= 0.10   # close to the intended 0.12 on the default grid
    assert t.remaining == pytest.approx(1.12 - t.spent)


def test_new_trial_unknown_inputs():
    with pytest.raises(Exception):
        ss.new_trial(CFG, "B9", "Car")
    import trisense.costs as costs
    with pytest.raises(costs.UnknownScenarioError):
        ss.new_trial(CFG, "B1", "Garage")


# --- set_level -----------------------------------------------------------------

def test_budget_b4_affords_top_visual():
    t = ss.new_trial(CFG, "B4", "Car")
    t = ss.set_level(CFG, t, "visual", TOP_V)
    assert t.visual_idx == TOP_V
    assert t.remaining == pytest.approx(0.0, abs=1e-12)
    assert not t.dependent_mode


def test_first_over_budget_rejected_and_flips_dependent():
    t = ss.new_trial(CFG, "B1", "Car")
    t2 = ss.set_level(CFG, t, "visual", TOP_V)
    assert t2.visual_idx == 0            # rejected
    assert t2.dependent_mode             # mode flipped
    assert t2.spent == t.spent


def test_dependent_mode_compensates_other_slider():
    cfg = CostConfig()
    t = ss.new_trial(cfg, "B2", "Car")
    t = ss.set_level(cfg, t, "visual", 40)       # (40th level cost)
    t = ss.set_level(cfg, t, "audio", 20)
    # force over budget until dependent, then raise visual: audio must yield
    while not t.dependent_mode:
        t = ss.set_level(cfg, t, "audio", TOP_A)
    before_audio = t.audio_idx
    t2 = ss.set_level(cfg, t, "visual", 55)
    assert t2.visual_idx == 55
    assert t2.audio_idx <= before_audio
    assert t2.spent <= t2.budget.value + ss.EPS


def test_dependent_mode_brute_force_other_index():
    # the compensated audio index must be the highest that fits
    cfg = CostConfig()
    t = ss.new_trial(cfg, "B2", "Car")
    t = ss.set_level(cfg, t, "visual", TOP_V)    # reject, flip dependent
    assert t.dependent_mode
    t = ss.set_level(cfg, t, "audio", 20)        # affordable on its own
    assert t.audio_idx == 20
    t = ss.set_level(cfg, t, "visual", 40)       # now over budget together
    headroom = t.budget.value - ss.level_cost(cfg.visual_ladder, 40)
    best = max((i for i in range(len(cfg.audio_ladder) + 1)
                if ss.level_cost(cfg.audio_ladder, i) <= headroom + ss.EPS),
               default=0)
    assert t.visual_idx == 40
    assert t.audio_idx == best
    assert best < 20                             # compensation actually bit


def test_dependent_unaffordable_request_rejected_outright():
    cfg = CostConfig()
    t = ss.new_trial(cfg, "B2", "Car")
    t = ss.set_level(cfg, t, "visual", TOP_V)    # reject, flip dependent
    t2 = ss.set_level(cfg, t, "audio", 30)       # 30/240 = 0.125 > 0.11 alone
    assert t2 == t                               # nothing to compensate with


def test_set_level_index_out_of_range():
    t = ss.new_trial(CFG, "B1", "Car")
    with pytest.raises(ss.IndexOutOfRangeError):
        ss.set_level(CFG, t, "visual", TOP_V + 1)
    with pytest.raises(ss.IndexOutOfRangeError):
        ss.set_level(CFG, t, "audio", -1)


# --- toggle_smell -----------------------------------------------------------------

def test_toggle_reserves_scenario_cost():
    t = ss.new_trial(CFG, "B3", "Kitchen")
    on = ss.toggle_smell(CFG, t)
    assert on.smell_on
    assert on.spent == pytest.approx(0.040)
    assert on.remaining == pytest.approx(0.21)


def test_toggle_involution_when_no_reduction():
    t = ss.new_trial(CFG, "B3", "Kitchen")
    t = ss.set_level(CFG, t, "visual", 10)
    on = ss.toggle_smell(CFG, t)
    off = ss.toggle_smell(CFG, on)
    assert off == t


def test_toggle_reduces_audio_first():
    cfg = CostConfig()
    t = ss.new_trial(cfg, "B2", "Car")
    # fill the budget almost exactly with audio + visual
    t = ss.set_level(cfg, t, "visual", 30)
    v_cost = ss.level_cost(cfg.visual_ladder, 30)
    audio_best = ss.max_affordable_idx(cfg.audio_ladder, 0.11 - v_cost)
    t = ss.set_level(cfg, t, "audio", audio_best)
    on = ss.toggle_smell(cfg, t)
    assert on.smell_on
    assert on.visual_idx == 30          # visual untouched
    assert on.audio_idx <= audio_best   # audio yielded
    assert on.spent <= 0.11 + ss.EPS


def test_toggle_reduces_visual_when_audio_not_enough():
    cfg = CostConfig()
    t = ss.new_trial(cfg, "B1", "Car")
    v_best = ss.max_affordable_idx(cfg.visual_ladder, 0.0625)
    t = ss.set_level(cfg, t, "visual", v_best)
    on = ss.toggle_smell(cfg, t)
    assert on.smell_on
    assert on.audio_idx == 0
    assert on.visual_idx <= v_best
    assert on.spent <= 0.0625 + ss.EPS


def test_smell_unaffordable():
    cfg = CostConfig(smell_costs={"Car": 0.2})
    t = ss.new_trial(cfg, "B1", "Car")   # budget 0.0625 < 0.2
    with pytest.raises(ss.SmellUnaffordableError):
        ss.toggle_smell(cfg, t)


# --- commit / session flow -----------------------------------------------------------

def test_commit_percentages():
    sess = ss.Session(CFG, "p", seed=1, budgets=["B4"], scenarios=["Car"])
    sess.set_level("visual", 60)
    sess.set_level("audio", 40)
    sess.toggle_smell()
    state = sess.state
    record = sess.commit()
    assert record.visual_pct == pytest.approx(
        ss.level_cost(CFG.visual_ladder, state.visual_idx) * 100)
    assert record.audio_pct == pytest.approx(
        ss.level_cost(CFG.audio_ladder, state.audio_idx) * 100)
    assert record.smell_on
    assert record.budget_regressor == 100.0


def test_full_session_fifteen_records():
    sess = ss.Session(CFG, "p", seed=2)
    assert sess.total_trials == 15      # 5 budgets x 3 scenarios
    combos = set()
    while not sess.completed:
        rec = sess.commit()
        combos.add((rec.budget_label, rec.scenario))
    assert len(sess.log.records) == 15
    assert len(combos) == 15            # each combination exactly once
    with pytest.raises(ss.SessionCompleteError):
        sess.commit()


def test_session_order_randomized_but_seed_stable():
    a = ss.Session(CFG, "p", seed=3)
    b = ss.Session(CFG, "p", seed=3)
    c = ss.Session(CFG, "p", seed=4)
    assert a.log.combos == b.log.combos
    assert a.log.combos != c.log.combos


# --- persistence / replay -------------------------------------------------------------

def run_random_session(seed: int) -> ss.Session:
    sess = ss.Session(CFG, f"p{seed}", seed=seed)
    rng = np.random.default_rng(seed)
    while not sess.completed:
        for _ in range(int(rng.integers(0, 5))):
            m = "visual" if rng.random() < 0.5 else "audio"
            sess.set_level(m, int(rng.integers(0, len(CFG.ladder(m)) + 1)))
        if rng.random() < 0.6:
            try:
                sess.toggle_smell()
            except ss.SmellUnaffordableError:
                pass
        sess.commit()
    return sess


def test_persist_load_roundtrip(tmp_path):
    sess = run_random_session(10)
    path = tmp_path / "store.jsonl"
    ss.persist(sess.log, str(path))
    (loaded,) = ss.load(str(path))
    assert loaded == sess.log


def test_persist_byte_stable(tmp_path):
    sess = run_random_session(11)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    ss.persist(sess.log, str(p1))
    ss.persist(sess.log, str(p2))
    assert p1.read_bytes() == p2.read_bytes()


def test_multi_session_store_order_preserved(tmp_path):
    s1, s2 = run_random_session(12), run_random_session(13)
    path = tmp_path / "store.jsonl"
    ss.persist(s1.log, str(path))
    ss.persist(s2.log, str(path))
    logs = ss.load(str(path))
    assert [lg.session_id for lg in logs] == [s1.log.session_id,
                                              s2.log.session_id]
    assert logs[0] == s1.log and logs[1] == s2.log


def test_truncated_store_detected(tmp_path):
    sess = run_random_session(14)
    path = tmp_path / "store.jsonl"
    ss.persist(sess.log, str(path))
    data = path.read_bytes()
    path.write_bytes(data[:-30])
    with pytest.raises(ss.CorruptLogError):
        ss.load(str(path))


def test_tampered_store_detected(tmp_path):
    sess = run_random_session(15)
    path = tmp_path / "store.jsonl"
    ss.persist(sess.log, str(path))
    text = path.read_text().replace('"visual_idx": 0', '"visual_idx": 1', 1)
    path.write_text(text)
    with pytest.raises(ss.CorruptLogError):
        ss.load(str(path))


def test_replay_reproduces_states(tmp_path):
    sess = run_random_session(16)
    path = tmp_path / "store.jsonl"
    ss.persist(sess.log, str(path))
    (loaded,) = ss.load(str(path))
    replayed = ss.replay(CFG, loaded)
    assert replayed.log.records == sess.log.records
    assert [e["state"] for e in replayed.log.events] == \
        [e["state"] for e in sess.log.events]


def test_replay_flags_divergence():
    sess = run_random_session(17)
    log = sess.log
    log.events[3]["state"] = dict(log.events[3]["state"], spent=99.0)
    with pytest.raises(ss.ReplayMismatchError):
        ss.replay(CFG, log)


def test_export_records():
    s1, s2 = run_random_session(18), run_random_session(19)
    records = ss.export_records([s1.log, s2.log])
    assert records == s1.log.records + s2.log.records


# --- safety properties -------------------------------------------------------------

class TrialMachine(RuleBasedStateMachine):
    """Random walks over one trial must never overspend, and dependent mode
    must never revert."""

    @initialize(budget=st.sampled_from([b.label for b in CFG.budgets]),
                scenario=st.sampled_from(["Bathroom", "Car", "Kitchen", "Kitti"]))
    def start(self, budget, scenario):
        self.state = ss.new_trial(CFG, budget, scenario)
        self.was_dependent = False

    @rule(modality=st.sampled_from(["visual", "audio"]),
          idx=st.integers(0, max(TOP_V, TOP_A)))
    def move_slider(self, modality, idx):
        idx = min(idx, len(CFG.ladder(modality)))
        self.state = ss.set_level(CFG, self.state, modality, idx)

    @rule()
    def toggle(self):
        try:
            self.state = ss.toggle_smell(CFG, self.state)
        except ss.SmellUnaffordableError:
            pass

    @invariant()
    def never_overspent(self):
        if not hasattr(self, "state"):
            return
        assert self.state.spent <= self.state.budget.value + ss.EPS
        assert self.state.remaining >= -ss.EPS

    @invariant()
    def dependent_mode_monotone(self):
        if not hasattr(self, "state"):
            return
        if self.was_dependent:
            assert self.state.dependent_mode
        self.was_dependent = self.state.dependent_mode

    @invariant()
    def spent_matches_components(self):
        if not hasattr(self, "state"):
            return
        s = self.state
        expected = (ss.level_cost(CFG.visual_ladder, s.visual_idx)
                    + ss.level_cost(CFG.audio_ladder, s.audio_idx)
                    + (CFG.smell_cost(s.scenario) if s.smell_on else 0.0))
        assert s.spent == pytest.approx(expected, abs=1e-12)


TestTrialMachine = TrialMachine.TestCase
TestTrialMachine.settings = settings(max_examples=60, stateful_step_count=30,
                                     deadline=None)
