import { describe, expect, it } from 'vitest'

import {
  normalizedRect,
  pointInPolygon,
  pointInRect,
  resolvePolygon,
  resolveRect,
} from '../src/selection.js'

function randomMeans(n: number, seed = 42): Float32Array {
  // deterministic LCG so the suite is reproducible
  let s = seed >>> 0
  const next = () => {
    s = (s * 1664525 + 1013904223) >>> 0
    return s / 4294967296
  }
  const out = new Float32Array(n * 2)
  for (let i = 0; i < out.length; i++) out[i] = next() * 1.4 - 0.2
  return out
}

describe('selection predicates', () => {
  it('rect is inclusive on its boundary', () => {
    const r = { minX: 0, minY: 0, maxX: 1, maxY: 1 }
    expect(pointInRect(0, 0, r)).toBe(true)
    expect(pointInRect(1, 1, r)).toBe(true)
    expect(pointInRect(1.0001, 1, r)).toBe(false)
  })

  it('normalizedRect orders any two corners', () => {
    expect(normalizedRect(0.9, 0.1, 0.2, 0.8)).toEqual({
      minX: 0.2,
      minY: 0.1,
      maxX: 0.9,
      maxY: 0.8,
    })
  })

  it('unit-square polygon agrees with the rect predicate', () => {
    const means = randomMeans(500)
    const square: [number, number][] = [
      [0, 0],
      [1, 0],
      [1, 1],
      [0, 1],
    ]
    const byPolygon = resolvePolygon(means, square)
    const byRect = resolveRect(means, { minX: 0, minY: 0, maxX: 1, maxY: 1 })
    expect(byPolygon).toEqual(byRect)
  })

  it('even-odd rule handles a concave polygon', () => {
    // U-shape: the notch in the middle is outside
    const u: [number, number][] = [
      [0, 0],
      [3, 0],
      [3, 3],
      [2, 3],
      [2, 1],
      [1, 1],
      [1, 3],
      [0, 3],
    ]
    expect(pointInPolygon(0.5, 2, u)).toBe(true)
    expect(pointInPolygon(1.5, 2, u)).toBe(false)
    expect(pointInPolygon(2.5, 2, u)).toBe(true)
    expect(pointInPolygon(1.5, 0.5, u)).toBe(true)
  })

  it('results are ascending indices', () => {
    const means = randomMeans(200, 7)
    const ids = resolveRect(means, { minX: 0.2, minY: 0.2, maxX: 0.8, maxY: 0.8 })
    const sorted = [...ids].sort((a, b) => a - b)
    expect(ids).toEqual(sorted)
  })

  it('degenerate polygon selects nothing', () => {
    const means = randomMeans(50)
    expect(resolvePolygon(means, [[0, 0], [1, 1]])).toEqual([])
  })
})
