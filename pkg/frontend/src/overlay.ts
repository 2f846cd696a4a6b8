// Overlay helpers: which Gaussian centers to draw, and where.

import { domainToPixel, ImageSize } from './coords.js'

export const OVERLAY_LIMIT = 20_000

function mulberry32(seed: number): () => number {
  let a = seed >>> 0
  return () => {
    a |= 0
    a = (a + 0x6d2b79f5) | 0
    let t = Math.imul(a ^ (a >>> 15), 1 | a)
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296
  }
}

/** Indices of the centers to draw: all of them up to the interactivity
 * limit, otherwise a seeded random subset so screenshots reproduce. */
export function decimate(count: number, limit = OVERLAY_LIMIT, seed = 1234): number[] {
  if (count <= limit) {
    return Array.from({ length: count }, (_, i) => i)
  }
  const rand = mulberry32(seed)
  const chosen = new Set<number>()
  while (chosen.size < limit) {
    chosen.add(Math.floor(rand() * count))
  }
  return [...chosen].sort((a, b) => a - b)
}

export interface Dot {
  index: number
  px: number
  py: number
}

export function dotPositions(
  means: Float32Array,
  indices: number[],
  size: ImageSize,
  zoom: number,
): Dot[] {
  return indices.map((index) => {
    const [px, py] = domainToPixel(means[index * 2], means[index * 2 + 1], size)
    return { index, px: px * zoom, py: py * zoom }
  })
}
