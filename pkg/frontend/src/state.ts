// Cockpit state machine.
//
// The view model is a pure function of (duel start, received lap frames,
// form inputs); rendering reads it and nothing else, which keeps the whole
// cockpit snapshot-testable. Frames arriving twice (e.g. on websocket
// reconnect replay) are idempotent because they are keyed by lap number.

import {
  ActionForm,
  COMPOUND_NAMES,
  DuelStart,
  LapFrame,
  PS_LABELS,
  Recommendation,
} from './types.js'

export interface CockpitState {
  start: DuelStart | null
  frames: LapFrame[] // ordered, frames[k] is lap k+1
  form: ActionForm
  pendingSubmit: boolean
  formError: string | null
  recommendation: Recommendation | null
}

export function initialState(): CockpitState {
  return {
    start: null,
    frames: [],
    form: { d_ef: 1.0, d_eb: 0.0, ps: 0 },
    pendingSubmit: false,
    formError: null,
    recommendation: null,
  }
}

export function withDuel(state: CockpitState, start: DuelStart): CockpitState {
  return { ...initialState(), form: state.form, start }
}

/** Insert a frame idempotently (frames are keyed by lap number). */
export function withFrame(state: CockpitState, frame: LapFrame): CockpitState {
  const frames = state.frames.slice()
  frames[frame.lap - 1] = frame
  return { ...state, frames, pendingSubmit: false, formError: null }
}

export function withSubmitPending(state: CockpitState): CockpitState {
  return { ...state, pendingSubmit: true, formError: null }
}

export function withFormError(state: CockpitState, message: string): CockpitState {
  return { ...state, pendingSubmit: false, formError: message }
}

export function withForm(state: CockpitState, form: Partial<ActionForm>): CockpitState {
  return { ...state, form: { ...state.form, ...form } }
}

export function withRecommendation(
  state: CockpitState,
  rec: Recommendation | null,
): CockpitState {
  return { ...state, recommendation: rec }
}

// ---- derived view model ----------------------------------------------------

export interface GaugeView {
  fuelPct: number
  battPct: number
  compound: string
  tireAge: number
  massKg: number
  raceTime: number
  compoundRuleMet: boolean
  lastLapTime: number | null
}

export interface OpponentView {
  tireAge: number
  lastPitCall: string
  compoundRuleMet: boolean
  gap: number
}

export interface PitMarker {
  lap: number
  compound: string
}

export interface CockpitViewModel {
  connected: boolean
  lap: number
  lapsTotal: number
  lapsRemaining: number
  done: boolean
  awaitingAction: boolean
  formError: string | null
  ego: GaugeView | null
  opponent: OpponentView | null
  /** gap of the human car per completed lap, chart-ready */
  gapHistory: number[]
  pitMarkers: PitMarker[]
  agentPitMarkers: PitMarker[]
  recommendation: Recommendation | null
  result: 'won' | 'lost' | 'tied' | null
}

function latest(state: CockpitState): LapFrame | null {
  return state.frames.length ? state.frames[state.frames.length - 1] : null
}

export function viewModel(state: CockpitState): CockpitViewModel {
  const start = state.start
  if (!start) {
    return {
      connected: false,
      lap: 0,
      lapsTotal: 0,
      lapsRemaining: 0,
      done: false,
      awaitingAction: false,
      formError: null,
      ego: null,
      opponent: null,
      gapHistory: [],
      pitMarkers: [],
      agentPitMarkers: [],
      recommendation: state.recommendation,
      result: null,
    }
  }
  const frame = latest(state)
  const human = frame ? frame.human : start.human
  const opp = frame ? frame.agent : start.agent_card
  const lap = frame ? frame.lap : 0
  const done = frame ? frame.done : false

  const pitMarkers: PitMarker[] = []
  const agentPitMarkers: PitMarker[] = []
  for (const f of state.frames) {
    if (!f) continue
    if (f.human_lap.ps > 0) {
      pitMarkers.push({ lap: f.lap, compound: COMPOUND_NAMES[f.human_lap.ps] })
    }
    if (f.agent_lap.ps > 0) {
      agentPitMarkers.push({ lap: f.lap, compound: COMPOUND_NAMES[f.agent_lap.ps] })
    }
  }

  let result: CockpitViewModel['result'] = null
  if (done && frame) {
    result = frame.gap < 0 ? 'won' : frame.gap > 0 ? 'lost' : 'tied'
    if (!human.b_cpd && opp.b_cpd) result = 'lost' // compound-rule violation
  }

  return {
    connected: true,
    lap,
    lapsTotal: start.n_laps,
    lapsRemaining: start.n_laps - lap,
    done,
    awaitingAction: !done && !state.pendingSubmit,
    formError: state.formError,
    ego: {
      // the race starts on a full tank, so the start frame defines capacity
      fuelPct: (100 * human.e_f) / Math.max(start.human.e_f, 1e-9),
      battPct: 100 * human.e_b,
      compound: COMPOUND_NAMES[human.tc] ?? String(human.tc),
      tireAge: human.ta,
      massKg: human.m_car,
      raceTime: human.t_race,
      compoundRuleMet: human.b_cpd,
      lastLapTime: frame ? frame.human_lap.t_lap : null,
    },
    opponent: {
      tireAge: opp.ta,
      lastPitCall: PS_LABELS[frame ? frame.agent_last_ps : 0],
      compoundRuleMet: opp.b_cpd,
      gap: opp.t_gap,
    },
    gapHistory: state.frames.filter(Boolean).map((f) => f.gap),
    pitMarkers,
    agentPitMarkers,
    recommendation: state.recommendation,
    result,
  }
}

/** Ego/opponent observation vectors for the stateless /recommend endpoint. */
export function observationVectors(state: CockpitState): {
  ego: number[]
  opponent: number[]
} | null {
  const start = state.start
  if (!start) return null
  const frame = latest(state)
  const human = frame ? frame.human : start.human
  const opp = frame ? frame.agent : start.agent_card
  const lap = frame ? frame.lap : 0
  return {
    ego: [
      human.e_b,
      human.e_f,
      human.m_car,
      human.t_race,
      human.b_cpd ? 1 : 0,
      human.tc,
      human.tw,
      human.b_outlap ? 1 : 0,
      frame ? frame.human_lap.t_lap : 0,
      start.n_laps - lap,
    ],
    opponent: [opp.ta, frame ? frame.agent_last_ps : 0, opp.b_cpd ? 1 : 0, opp.t_gap],
  }
}
