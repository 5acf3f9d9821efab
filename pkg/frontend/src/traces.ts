// Trace CSV parsing and the ghost-replay timeline.
//
// A ghost replays a finished match trace as a scrubbable timeline: pure
// data in, per-lap snapshots out. Stint bars mirror the compound actually
// raced (a pit lap is driven on the outgoing set).

export interface TraceRow {
  lap: number
  car: number
  e_b: number
  e_f: number
  m_car: number
  tc: number
  tw: number
  ta: number
  ps: number
  d_ef_realized: number
  d_eb_realized: number
  t_lap: number
  t_race: number
  t_gap: number
  dt_int: number
  clipped_flags: string
}

export interface Stint {
  fromLap: number // inclusive, 1-based
  toLap: number // inclusive
  compound: number
}

export interface GhostTimeline {
  laps: number
  cars: Map<number, TraceRow[]>
  stints: Map<number, Stint[]>
  pitLaps: Map<number, number[]>
}

const NUMERIC = new Set([
  'lap', 'car', 'e_b', 'e_f', 'm_car', 'tc', 'tw', 'ta', 'ps',
  'd_ef_realized', 'd_eb_realized', 't_lap', 't_race', 't_gap', 'dt_int',
])

export function parseTraceCsv(text: string): TraceRow[] {
  const lines = text.trim().split(/\r?\n/)
  if (lines.length < 2) throw new Error('empty trace')
  const header = lines[0].split(',')
  const rows: TraceRow[] = []
  for (const line of lines.slice(1)) {
    const parts = line.split(',')
    const row: Record<string, number | string> = {}
    header.forEach((name, i) => {
      row[name] = NUMERIC.has(name) ? Number(parts[i]) : parts[i] ?? ''
    })
    rows.push(row as unknown as TraceRow)
  }
  return rows
}

export function stintsOf(rows: TraceRow[], startCompound = 2): Stint[] {
  const stints: Stint[] = []
  let from = 1
  for (let i = 0; i < rows.length; i++) {
    if (rows[i].ps > 0) {
      const outgoing = i > 0 ? rows[i - 1].tc : startCompound
      stints.push({ fromLap: from, toLap: rows[i].lap, compound: outgoing })
      from = rows[i].lap + 1
    }
  }
  if (rows.length && from <= rows[rows.length - 1].lap) {
    stints.push({
      fromLap: from,
      toLap: rows[rows.length - 1].lap,
      compound: rows[rows.length - 1].tc,
    })
  }
  return stints
}

export function buildGhost(text: string): GhostTimeline {
  const rows = parseTraceCsv(text)
  const cars = new Map<number, TraceRow[]>()
  for (const row of rows) {
    const list = cars.get(row.car) ?? []
    list.push(row)
    cars.set(row.car, list)
  }
  const stints = new Map<number, Stint[]>()
  const pitLaps = new Map<number, number[]>()
  let laps = 0
  for (const [car, list] of cars) {
    list.sort((a, b) => a.lap - b.lap)
    stints.set(car, stintsOf(list))
    pitLaps.set(
      car,
      list.filter((r) => r.ps > 0).map((r) => r.lap),
    )
    laps = Math.max(laps, list.length ? list[list.length - 1].lap : 0)
  }
  return { laps, cars, stints, pitLaps }
}

/** State of one car at scrub position `lap` (1-based; 0 = pre-race). */
export function ghostAt(ghost: GhostTimeline, car: number, lap: number): TraceRow | null {
  const rows = ghost.cars.get(car)
  if (!rows || lap <= 0) return null
  const idx = Math.min(lap, rows.length) - 1
  return rows[idx]
}
