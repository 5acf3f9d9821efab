// Console API client: thin fetch wrappers plus the duel stream socket.

import {
  ActionForm,
  AgentInfo,
  DuelStart,
  LapFrame,
  LeaderboardRow,
  Recommendation,
} from './types.js'

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(`API error ${status}: ${JSON.stringify(detail)}`)
  }
}

async function request<T>(base: string, path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(base + path, {
    headers: { 'content-type': 'application/json' },
    ...init,
  })
  if (!res.ok) {
    let detail: unknown
    try {
      detail = (await res.json()).detail
    } catch {
      detail = await res.text()
    }
    throw new ApiError(res.status, detail)
  }
  return (await res.json()) as T
}

export class ConsoleClient {
  constructor(public base: string = '') {}

  agents(): Promise<AgentInfo[]> {
    return request(this.base, '/agents')
  }

  leaderboard(): Promise<{ ranking: LeaderboardRow[] }> {
    return request(this.base, '/arena/leaderboard')
  }

  startDuel(agent: string, gap: number, seed: number): Promise<DuelStart> {
    return request(this.base, '/duels', {
      method: 'POST',
      body: JSON.stringify({ agent, human_side: '1', gap, seed }),
    })
  }

  submitAction(duelId: string, form: ActionForm): Promise<LapFrame> {
    return request(this.base, `/duels/${duelId}/action`, {
      method: 'POST',
      body: JSON.stringify(form),
    })
  }

  recommend(agent: string, ego: number[], opponent: number[]): Promise<Recommendation> {
    return request(this.base, '/recommend', {
      method: 'POST',
      body: JSON.stringify({ agent, ego, opponent }),
    })
  }

  matchTrace(matchId: string): Promise<string> {
    return fetch(`${this.base}/matches/${matchId}/trace`).then((r) => {
      if (!r.ok) throw new ApiError(r.status, 'trace not found')
      return r.text()
    })
  }

  /**
   * Open the lap stream. The server replays every past frame on connect,
   * so reconnecting after a drop resumes from the full history; the state
   * layer applies frames idempotently by lap number.
   */
  openStream(duelId: string, onFrame: (frame: LapFrame) => void): WebSocket {
    const wsBase = this.base.replace(/^http/, 'ws') || `ws://${location.host}`
    const ws = new WebSocket(`${wsBase}/duels/${duelId}/stream`)
    ws.onmessage = (ev) => onFrame(JSON.parse(ev.data) as LapFrame)
    return ws
  }
}
