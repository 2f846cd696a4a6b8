// Client-side selection resolution over the cached means. Predicates mirror
// the server's: rect is inclusive, polygons use the even-odd rule, results
// are ascending indices. Resolving locally keeps drag latency low; tests
// cross-check against the server.

export interface Rect {
  minX: number
  minY: number
  maxX: number
  maxY: number
}

export function pointInRect(x: number, y: number, r: Rect): boolean {
  return x >= r.minX && x <= r.maxX && y >= r.minY && y <= r.maxY
}

export function pointInPolygon(
  x: number,
  y: number,
  vertices: [number, number][],
): boolean {
  let inside = false
  const n = vertices.length
  for (let a = 0; a < n; a++) {
    const [x1, y1] = vertices[a]
    const [x2, y2] = vertices[(a + 1) % n]
    if (y1 > y !== y2 > y) {
      const xAt = x1 + ((y - y1) * (x2 - x1)) / (y2 - y1)
      if (x < xAt) inside = !inside
    }
  }
  return inside
}

export function resolveRect(means: Float32Array, r: Rect): number[] {
  const out: number[] = []
  for (let i = 0; i * 2 + 1 < means.length; i++) {
    if (pointInRect(means[i * 2], means[i * 2 + 1], r)) out.push(i)
  }
  return out
}

export function resolvePolygon(
  means: Float32Array,
  vertices: [number, number][],
): number[] {
  if (vertices.length < 3) return []
  const out: number[] = []
  for (let i = 0; i * 2 + 1 < means.length; i++) {
    if (pointInPolygon(means[i * 2], means[i * 2 + 1], vertices)) out.push(i)
  }
  return out
}

export function normalizedRect(
  ax: number,
  ay: number,
  bx: number,
  by: number,
): Rect {
  return {
    minX: Math.min(ax, bx),
    minY: Math.min(ay, by),
    maxX: Math.max(ax, bx),
    maxY: Math.max(ay, by),
  }
}
