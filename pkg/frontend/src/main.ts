// Cockpit wiring: one duel per page, one websocket per session.
//
// Rendering is a function of the view model only. The submit button stays
// disabled from the moment an action is posted until its lap frame arrives
// (either from the POST response or the stream, whichever lands first).

import { ConsoleClient, ApiError } from './api.js'
import { drawGapChart, drawStintBars, pitMarkersToStints } from './charts.js'
import {
  CockpitState,
  initialState,
  observationVectors,
  viewModel,
  withDuel,
  withForm,
  withFormError,
  withFrame,
  withRecommendation,
  withSubmitPending,
} from './state.js'
import { buildGhost, ghostAt, GhostTimeline } from './traces.js'
import { LapFrame, PS_LABELS } from './types.js'

const api = new ConsoleClient('')
let state: CockpitState = initialState()
let duelId: string | null = null
let stream: WebSocket | null = null
let ghost: GhostTimeline | null = null

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id)
  if (!el) throw new Error(`missing element #${id}`)
  return el as T
}

function setState(next: CockpitState): void {
  state = next
  render()
}

function fmt(x: number | null | undefined, digits = 2): string {
  return x == null ? '–' : x.toFixed(digits)
}

function render(): void {
  const vm = viewModel(state)
  $('lap-counter').textContent = vm.connected
    ? `lap ${vm.lap} / ${vm.lapsTotal} (${vm.lapsRemaining} to go)`
    : 'no session'

  const ego = vm.ego
  $('gauge-fuel').textContent = ego ? `${fmt(ego.fuelPct, 1)} %` : '–'
  $('gauge-batt').textContent = ego ? `${fmt(ego.battPct, 1)} %` : '–'
  $('gauge-tire').textContent = ego ? `${ego.compound}, ${ego.tireAge} laps` : '–'
  $('gauge-mass').textContent = ego ? `${fmt(ego.massKg, 1)} kg` : '–'
  $('gauge-time').textContent = ego ? `${fmt(ego.raceTime, 1)} s` : '–'
  $('gauge-lastlap').textContent = ego ? `${fmt(ego.lastLapTime)} s` : '–'
  $('gauge-rule').textContent = ego ? (ego.compoundRuleMet ? 'met' : 'open') : '–'

  const opp = vm.opponent
  $('opp-ta').textContent = opp ? `${opp.tireAge} laps` : '–'
  $('opp-ps').textContent = opp ? opp.lastPitCall : '–'
  $('opp-rule').textContent = opp ? (opp.compoundRuleMet ? 'met' : 'open') : '–'
  $('opp-gap').textContent = opp ? `${fmt(opp.gap)} s` : '–'

  const submit = $<HTMLButtonElement>('submit-action')
  submit.disabled = !vm.awaitingAction
  $('form-error').textContent = vm.formError ?? ''

  const banner = $('result-banner')
  banner.textContent = vm.result ? `race over: you ${vm.result}` : ''
  banner.className = vm.result ? `banner ${vm.result}` : 'banner'

  const rec = vm.recommendation
  const box = $('recommendation')
  if (rec) {
    box.innerHTML =
      `<div>nominal: [${rec.a_nom.map((v) => v.toFixed(3)).join(', ')}]</div>` +
      `<div>correction: [${rec.delta.map((v) => v.toFixed(3)).join(', ')}]</div>` +
      `<div>composed: fuel ${rec.action.d_ef.toFixed(3)}, batt ${rec.action.d_eb.toFixed(3)}, ${rec.pit_decision}</div>` +
      `<div>predicted lap: ${rec.predicted.t_lap.toFixed(2)} s ` +
      `(base ${rec.predicted.t_nom.toFixed(2)} + tires ${rec.predicted.dt_tire.toFixed(2)} + wake ${rec.predicted.dt_int.toFixed(2)})</div>`
  } else {
    box.textContent = 'no recommendation requested'
  }

  drawGapChart($<HTMLCanvasElement>('gap-chart'), vm.gapHistory, vm.lapsTotal)
  drawStintBars(
    $<HTMLCanvasElement>('stint-chart'),
    [
      { label: 'you', stints: pitMarkersToStints(vm.pitMarkers, vm.lap), pits: vm.pitMarkers.map((m) => m.lap) },
      { label: 'agent', stints: pitMarkersToStints(vm.agentPitMarkers, vm.lap), pits: vm.agentPitMarkers.map((m) => m.lap) },
    ],
    vm.lapsTotal,
  )
}

function onFrame(frame: LapFrame): void {
  setState(withFrame(state, frame))
}

async function startDuel(): Promise<void> {
  const agent = $<HTMLSelectElement>('agent-select').value
  const gap = Number($<HTMLInputElement>('gap-input').value)
  const seed = Number($<HTMLInputElement>('seed-input').value)
  const start = await api.startDuel(agent, gap, seed)
  duelId = start.id
  if (stream) stream.close()
  stream = api.openStream(start.id, onFrame)
  setState(withDuel(state, start))
}

async function submitAction(): Promise<void> {
  if (!duelId) return
  setState(withSubmitPending(state))
  try {
    const frame = await api.submitAction(duelId, state.form)
    onFrame(frame)
  } catch (err) {
    const msg =
      err instanceof ApiError ? JSON.stringify(err.detail) : String(err)
    setState(withFormError(state, msg))
  }
}

async function fetchRecommendation(): Promise<void> {
  const obs = observationVectors(state)
  const agent = $<HTMLSelectElement>('agent-select').value
  if (!obs) return
  const rec = await api.recommend(agent, obs.ego, obs.opponent)
  setState(withRecommendation(state, rec))
}

async function loadLeaderboard(): Promise<void> {
  const board = await api.leaderboard()
  const tbody = $('leaderboard-body')
  tbody.innerHTML = board.ranking
    .map(
      (row) =>
        `<tr><td>${row.rank}</td><td>${row.agent}</td>` +
        `<td>${row.rating.toFixed(1)}</td><td>${row.matches}</td></tr>`,
    )
    .join('')
}

function renderGhost(): void {
  if (!ghost) return
  const lap = Number($<HTMLInputElement>('ghost-scrub').value)
  $('ghost-lap').textContent = `lap ${lap} / ${ghost.laps}`
  const a = ghostAt(ghost, 1, lap)
  $('ghost-state').textContent = a
    ? `car 1: gap ${a.t_gap.toFixed(2)} s, fuel ${a.e_f.toFixed(1)}, tires ${a.ta} laps`
    : 'pre-race'
  const rows = [...ghost.cars.keys()].sort().map((car) => ({
    label: `car ${car}`,
    stints: ghost!.stints.get(car) ?? [],
    pits: ghost!.pitLaps.get(car) ?? [],
  }))
  drawStintBars($<HTMLCanvasElement>('ghost-chart'), rows, ghost.laps)
  const gaps = (ghost.cars.get(1) ?? []).slice(0, lap).map((r) => r.t_gap)
  drawGapChart($<HTMLCanvasElement>('ghost-gap-chart'), gaps, ghost.laps)
}

async function loadGhostFile(file: File): Promise<void> {
  ghost = buildGhost(await file.text())
  const scrub = $<HTMLInputElement>('ghost-scrub')
  scrub.max = String(ghost.laps)
  scrub.value = String(ghost.laps)
  renderGhost()
}

async function init(): Promise<void> {
  const agents = await api.agents()
  $('agent-select').innerHTML = agents
    .map((a) => `<option value="${a.id}">${a.id}${a.elo ? ` (elo ${a.elo.toFixed(0)})` : ''}</option>`)
    .join('')
  $('start-duel').addEventListener('click', () => void startDuel())
  $('submit-action').addEventListener('click', () => void submitAction())
  $('recommend-btn').addEventListener('click', () => void fetchRecommendation())
  $('refresh-board').addEventListener('click', () => void loadLeaderboard())
  $<HTMLInputElement>('ghost-scrub').addEventListener('input', renderGhost)
  $<HTMLInputElement>('ghost-file').addEventListener('change', (ev) => {
    const file = (ev.target as HTMLInputElement).files?.[0]
    if (file) void loadGhostFile(file)
  })
  for (const field of ['d_ef', 'd_eb', 'ps'] as const) {
    $<HTMLInputElement>(`form-${field}`).addEventListener('input', (ev) => {
      const value = Number((ev.target as HTMLInputElement).value)
      setState(withForm(state, { [field]: value }))
    })
  }
  await loadLeaderboard()
  render()
  $('ps-labels').textContent = PS_LABELS.map((l, i) => `${i}=${l}`).join('  ')
}

void init()
