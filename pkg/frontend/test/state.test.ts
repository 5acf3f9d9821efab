import { describe, expect, it } from 'vitest'

import {
  initialState,
  observationVectors,
  viewModel,
  withDuel,
  withForm,
  withFormError,
  withFrame,
  withSubmitPending,
} from '../src/state.js'
import { DuelStart, HumanCar, LapFrame, OpponentCard } from '../src/types.js'

function humanCar(overrides: Partial<HumanCar> = {}): HumanCar {
  return {
    e_b: 1.0,
    e_f: 57.0,
    m_car: 899.978,
    t_race: 0.0,
    b_cpd: false,
    tc: 2,
    tw: 0.0,
    b_outlap: false,
    ta: 0,
    t_gap: 0.5,
    ...overrides,
  }
}

function card(overrides: Partial<OpponentCard> = {}): OpponentCard {
  return { ta: 0, b_cpd: false, t_gap: -0.5, ...overrides }
}

function duelStart(): DuelStart {
  return {
    id: 'd1',
    agent: 'alpha',
    human_side: '1',
    n_laps: 57,
    lap: 0,
    human: humanCar(),
    agent_card: card(),
    awaiting_action: true,
  }
}

function lapFrame(lap: number, overrides: Partial<LapFrame> = {}): LapFrame {
  return {
    lap,
    done: false,
    reward: 4.2,
    human: humanCar({ e_f: 57 - lap, t_race: 95 * lap, ta: lap }),
    agent: card({ t_gap: -0.4 }),
    agent_last_ps: 0,
    human_lap: {
      t_lap: 95.1,
      d_ef: 1.0,
      d_eb: 0.0,
      ps: 0,
      dt_int: 0.0,
      clipped_fuel: false,
      clipped_batt: false,
    },
    agent_lap: { t_lap: 95.0, ps: 0 },
    gap: 0.4,
    ...overrides,
  }
}

describe('view model', () => {
  it('starts disconnected', () => {
    const vm = viewModel(initialState())
    expect(vm.connected).toBe(false)
    expect(vm.awaitingAction).toBe(false)
  })

  it('is a pure function of frames + form state', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFrame(s, lapFrame(1))
    const a = viewModel(s)
    const b = viewModel(s)
    expect(a).toEqual(b)
    expect(a.lap).toBe(1)
    expect(a.lapsRemaining).toBe(56)
  })

  it('matches the cockpit snapshot after three laps', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFrame(s, lapFrame(1))
    s = withFrame(s, lapFrame(2, { gap: 0.2 }))
    s = withFrame(s, lapFrame(3, { gap: -0.1 }))
    expect(viewModel(s)).toMatchSnapshot()
  })

  it('never exposes opponent battery, fuel or wear', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFrame(s, lapFrame(1))
    const opponent = viewModel(s).opponent!
    expect(Object.keys(opponent).sort()).toEqual([
      'compoundRuleMet',
      'gap',
      'lastPitCall',
      'tireAge',
    ])
  })

  it('blocks input while a submit is pending and unblocks on the frame', () => {
    let s = withDuel(initialState(), duelStart())
    s = withSubmitPending(s)
    expect(viewModel(s).awaitingAction).toBe(false)
    s = withFrame(s, lapFrame(1))
    expect(viewModel(s).awaitingAction).toBe(true)
  })

  it('applies frames idempotently by lap number (reconnect replay)', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFrame(s, lapFrame(1))
    s = withFrame(s, lapFrame(2, { gap: 0.1 }))
    s = withFrame(s, lapFrame(1)) // replayed history frame
    const vm = viewModel(s)
    expect(vm.lap).toBe(2)
    expect(vm.gapHistory).toEqual([0.4, 0.1])
  })

  it('appends exactly one gap point per lap', () => {
    let s = withDuel(initialState(), duelStart())
    for (let lap = 1; lap <= 5; lap++) {
      s = withFrame(s, lapFrame(lap, { gap: 0.5 - lap * 0.1 }))
    }
    expect(viewModel(s).gapHistory.length).toBe(5)
  })

  it('records pit markers and resets shown tire age next lap', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFrame(
      s,
      lapFrame(1, {
        human: humanCar({ ta: 0, tc: 1 }),
        human_lap: { ...lapFrame(1).human_lap, ps: 1 },
      }),
    )
    const vm = viewModel(s)
    expect(vm.pitMarkers).toEqual([{ lap: 1, compound: 'soft' }])
    expect(vm.ego!.tireAge).toBe(0)
    expect(vm.ego!.compound).toBe('soft')
  })

  it('declares the result from the final gap and compound rule', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFrame(
      s,
      lapFrame(57, {
        done: true,
        gap: -3.2,
        human: humanCar({ b_cpd: true }),
        agent: card({ b_cpd: true }),
      }),
    )
    expect(viewModel(s).result).toBe('won')

    let s2 = withDuel(initialState(), duelStart())
    s2 = withFrame(
      s2,
      lapFrame(57, {
        done: true,
        gap: -3.2,
        human: humanCar({ b_cpd: false }),
        agent: card({ b_cpd: true }),
      }),
    )
    expect(viewModel(s2).result).toBe('lost')
  })

  it('surfaces form errors inline and clears them on success', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFormError(s, 'fuel allocation out of range')
    expect(viewModel(s).formError).toContain('fuel')
    s = withFrame(s, lapFrame(1))
    expect(viewModel(s).formError).toBeNull()
  })

  it('keeps form edits', () => {
    let s = initialState()
    s = withForm(s, { d_ef: 1.1, ps: 2 })
    expect(s.form).toEqual({ d_ef: 1.1, d_eb: 0.0, ps: 2 })
  })
})

describe('observation vectors for /recommend', () => {
  it('builds the 10- and 4-vectors in contract order', () => {
    let s = withDuel(initialState(), duelStart())
    s = withFrame(s, lapFrame(2, { agent_last_ps: 1 }))
    const obs = observationVectors(s)!
    expect(obs.ego).toHaveLength(10)
    expect(obs.opponent).toHaveLength(4)
    expect(obs.ego[9]).toBe(55) // laps remaining
    expect(obs.opponent[1]).toBe(1) // opponent's last pit call
  })

  it('is null before a session exists', () => {
    expect(observationVectors(initialState())).toBeNull()
  })
})
