// Canvas renderers: gap history line chart and compound stint bars.

import { PitMarker } from './state.js'
import { Stint } from './traces.js'

export const COMPOUND_FILL: Record<number, string> = {
  1: '#d62728', // soft
  2: '#f2c200', // medium
  3: '#e8e8e8', // hard
}

export function drawGapChart(
  canvas: HTMLCanvasElement,
  gaps: number[],
  lapsTotal: number,
): void {
  const ctx = canvas.getContext('2d')
  if (!ctx) return
  const { width: w, height: h } = canvas
  ctx.clearRect(0, 0, w, h)
  ctx.strokeStyle = '#404040'
  ctx.strokeRect(0.5, 0.5, w - 1, h - 1)

  const span = Math.max(2, ...gaps.map((g) => Math.abs(g) * 1.15))
  const x = (lap: number) => (lap / Math.max(lapsTotal, 1)) * (w - 20) + 10
  const y = (gap: number) => h / 2 - (gap / span) * (h / 2 - 8)

  // zero line: above it the human is ahead
  ctx.strokeStyle = '#666'
  ctx.setLineDash([4, 4])
  ctx.beginPath()
  ctx.moveTo(10, y(0))
  ctx.lineTo(w - 10, y(0))
  ctx.stroke()
  ctx.setLineDash([])

  if (!gaps.length) return
  ctx.strokeStyle = '#4ea1ff'
  ctx.lineWidth = 2
  ctx.beginPath()
  gaps.forEach((gap, i) => {
    const px = x(i + 1)
    const py = y(-gap) // negative gap = ahead = plotted up
    if (i === 0) ctx.moveTo(px, py)
    else ctx.lineTo(px, py)
  })
  ctx.stroke()
  ctx.lineWidth = 1
}

export function drawStintBars(
  canvas: HTMLCanvasElement,
  rows: { label: string; stints: Stint[]; pits: number[] }[],
  lapsTotal: number,
): void {
  const ctx = canvas.getContext('2d')
  if (!ctx) return
  const { width: w, height: h } = canvas
  ctx.clearRect(0, 0, w, h)
  const rowH = h / Math.max(rows.length, 1)
  const x = (lap: number) => (lap / Math.max(lapsTotal, 1)) * (w - 70) + 60

  rows.forEach((row, i) => {
    const yTop = i * rowH + rowH * 0.25
    ctx.fillStyle = '#ccc'
    ctx.font = '11px sans-serif'
    ctx.fillText(row.label, 4, yTop + rowH * 0.35)
    for (const stint of row.stints) {
      ctx.fillStyle = COMPOUND_FILL[stint.compound] ?? '#999'
      const x0 = x(stint.fromLap - 1)
      ctx.fillRect(x0, yTop, x(stint.toLap) - x0, rowH * 0.5)
      ctx.strokeStyle = '#222'
      ctx.strokeRect(x0, yTop, x(stint.toLap) - x0, rowH * 0.5)
    }
    ctx.fillStyle = '#111'
    for (const lap of row.pits) {
      const px = x(lap)
      ctx.beginPath()
      ctx.moveTo(px, yTop - 2)
      ctx.lineTo(px - 4, yTop - 8)
      ctx.lineTo(px + 4, yTop - 8)
      ctx.closePath()
      ctx.fill()
    }
  })
}

export function pitMarkersToStints(markers: PitMarker[], upToLap: number, startCompound = 2): Stint[] {
  // cockpit-side stint bars derived from pit markers only
  const codeOf: Record<string, number> = { soft: 1, medium: 2, hard: 3 }
  const stints: Stint[] = []
  let from = 1
  let compound = startCompound
  for (const m of markers) {
    stints.push({ fromLap: from, toLap: m.lap, compound })
    compound = codeOf[m.compound] ?? compound
    from = m.lap + 1
  }
  if (from <= upToLap) stints.push({ fromLap: from, toLap: upToLap, compound })
  return stints
}
