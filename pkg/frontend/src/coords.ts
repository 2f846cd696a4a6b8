// Pixel <-> domain mapping. The image maps to [0, W/S] x [0, H/S] with
// S = max(W, H); pixel (i, j) sits at ((j+0.5)/S, (i+0.5)/S). The canvas
// inverse must match exactly or overlay dots drift off their Gaussians.

export interface ImageSize {
  width: number
  height: number
}

export function domainScale(size: ImageSize): number {
  return Math.max(size.width, size.height)
}

export function domainToPixel(
  x: number,
  y: number,
  size: ImageSize,
): [number, number] {
  const s = domainScale(size)
  return [x * s - 0.5, y * s - 0.5]
}

export function pixelToDomain(
  px: number,
  py: number,
  size: ImageSize,
): [number, number] {
  const s = domainScale(size)
  return [(px + 0.5) / s, (py + 0.5) / s]
}

export function pixelDeltaToDomain(
  dx: number,
  dy: number,
  size: ImageSize,
): [number, number] {
  const s = domainScale(size)
  return [dx / s, dy / s]
}
