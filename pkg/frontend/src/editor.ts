// Editor session state: cached means, current selection, tool mode, and the
// render-version bookkeeping. All mutations go through the service; this
// class only mirrors what the server confirmed.

import { ApiClient, EditOp, GaussianData, RenderRequest, RenderResult } from './api.js'
import { pixelDeltaToDomain, ImageSize } from './coords.js'
import { Rect, resolvePolygon, resolveRect } from './selection.js'

export type ToolMode =
  | 'select-rect'
  | 'select-lasso'
  | 'translate'
  | 'rotate'
  | 'scale'

export class EditorState {
  selection: number[] = []
  tool: ToolMode = 'select-rect'
  overlayVisible = true
  renderVersion = 0
  undoDepth = 0
  gaussians: GaussianData | null = null

  private inFlight = false
  private pendingRender: RenderRequest | null = null

  constructor(
    readonly api: ApiClient,
    readonly imageSize: ImageSize,
    private readonly onRender: (r: RenderResult) => void,
  ) {}

  async refreshGaussians(): Promise<GaussianData> {
    this.gaussians = await this.api.gaussians()
    this.selection = this.selection.filter((i) => i < this.gaussians!.count)
    return this.gaussians
  }

  selectRect(rect: Rect): number[] {
    if (!this.gaussians) return []
    this.selection = resolveRect(this.gaussians.means, rect)
    return this.selection
  }

  selectLasso(vertices: [number, number][]): number[] {
    if (!this.gaussians) return []
    this.selection = resolvePolygon(this.gaussians.means, vertices)
    return this.selection
  }

  selectAll(): number[] {
    if (!this.gaussians) return []
    this.selection = Array.from({ length: this.gaussians.count }, (_, i) => i)
    return this.selection
  }

  clearSelection(): void {
    this.selection = []
  }

  /** Ops for dragging the selection by a canvas-pixel delta. */
  translateOps(dxPixels: number, dyPixels: number): EditOp[] {
    if (this.selection.length === 0 || (dxPixels === 0 && dyPixels === 0)) {
      return []
    }
    const [dx, dy] = pixelDeltaToDomain(dxPixels, dyPixels, this.imageSize)
    return [
      {
        select: { kind: 'indices', indices: [...this.selection] },
        transform: { kind: 'translate', v: [dx, dy] },
      },
    ]
  }

  rotateOps(center: [number, number], angle: number): EditOp[] {
    if (this.selection.length === 0 || angle === 0) return []
    return [
      {
        select: { kind: 'indices', indices: [...this.selection] },
        transform: { kind: 'rotate', center, angle },
      },
    ]
  }

  scaleOps(center: [number, number], sx: number, sy: number): EditOp[] {
    if (this.selection.length === 0 || (sx === 1 && sy === 1)) return []
    return [
      {
        select: { kind: 'indices', indices: [...this.selection] },
        transform: { kind: 'scale', center, sx, sy },
      },
    ]
  }

  async applyOps(ops: EditOp[]): Promise<number> {
    if (ops.length === 0) return this.renderVersion
    this.renderVersion = await this.api.edit(ops)
    this.undoDepth = Math.min(this.undoDepth + 1, 64)
    await this.refreshGaussians()
    return this.renderVersion
  }

  async undo(): Promise<number> {
    this.renderVersion = await this.api.undo()
    this.undoDepth = Math.max(0, this.undoDepth - 1)
    await this.refreshGaussians()
    return this.renderVersion
  }

  /** Latest-wins render: at most one request in flight; rapid calls coalesce
   * to the most recent one. */
  requestRender(req: RenderRequest): void {
    this.pendingRender = req
    if (!this.inFlight) {
      void this.drain()
    }
  }

  private async drain(): Promise<void> {
    this.inFlight = true
    try {
      while (this.pendingRender) {
        const req = this.pendingRender
        this.pendingRender = null
        try {
          const result = await this.api.renderPng(req)
          this.onRender(result)
        } catch (err) {
          console.warn('render failed', err)
        }
      }
    } finally {
      this.inFlight = false
    }
  }
}
