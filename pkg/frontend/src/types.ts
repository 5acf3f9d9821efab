// Wire types for the gridwall console API.

export interface AgentInfo {
  id: string
  elo: number | null
  meta: Record<string, unknown>
  config_hash: string
}

export interface LeaderboardRow {
  rank: number
  agent: string
  rating: number
  matches: number
}

export interface HumanCar {
  e_b: number
  e_f: number
  m_car: number
  t_race: number
  b_cpd: boolean
  tc: number // compound code: 1 soft, 2 medium, 3 hard
  tw: number
  b_outlap: boolean
  ta: number
  t_gap: number
}

/** The opponent card: only publicly observable fields ever appear here. */
export interface OpponentCard {
  ta: number
  b_cpd: boolean
  t_gap: number
}

export interface DuelStart {
  id: string
  agent: string
  human_side: string
  n_laps: number
  lap: number
  human: HumanCar
  agent_card: OpponentCard
  awaiting_action: boolean
}

export interface LapFrame {
  lap: number
  done: boolean
  reward: number
  human: HumanCar
  agent: OpponentCard
  agent_last_ps: number
  human_lap: {
    t_lap: number
    d_ef: number
    d_eb: number
    ps: number
    dt_int: number
    clipped_fuel: boolean
    clipped_batt: boolean
  }
  agent_lap: {
    t_lap: number
    ps: number
  }
  gap: number
}

export interface ActionForm {
  d_ef: number
  d_eb: number
  ps: number
}

export interface Recommendation {
  a_nom: number[]
  delta: number[]
  action: { d_ef: number; d_eb: number; ps: number }
  pit_decision: string
  predicted: { t_nom: number; dt_tire: number; dt_int: number; t_lap: number }
}

export const COMPOUND_NAMES: Record<number, string> = { 1: 'soft', 2: 'medium', 3: 'hard' }
export const PS_LABELS = ['stay out', 'pit soft', 'pit medium', 'pit hard']
