// Live message stream: training progress points for the sparkline and
// preview pings that tell the viewport to refresh.

export interface ProgressPoint {
  iter: number
  loss: number
  psnr: number | null
}

export type ServerMessage =
  | { type: 'progress'; iter: number; loss: number; psnr: number | string | null }
  | { type: 'preview'; version: number }

export interface StreamHandlers {
  onProgress?: (p: ProgressPoint) => void
  onPreview?: (version: number) => void
  /** Called on every (re)connect so the client can resync from /api/status. */
  onConnect?: () => void
}

/** Parse one raw frame; returns null (after a console warning) on garbage. */
export function parseMessage(raw: string): ServerMessage | null {
  let msg: unknown
  try {
    msg = JSON.parse(raw)
  } catch {
    console.warn('ignoring malformed stream message', raw)
    return null
  }
  const m = msg as Record<string, unknown>
  if (m && m['type'] === 'progress' && typeof m['iter'] === 'number') {
    return m as ServerMessage
  }
  if (m && m['type'] === 'preview' && typeof m['version'] === 'number') {
    return m as ServerMessage
  }
  console.warn('ignoring malformed stream message', raw)
  return null
}

export function toProgressPoint(
  m: Extract<ServerMessage, { type: 'progress' }>,
): ProgressPoint {
  // "inf" marks an infinite PSNR (perfect reconstruction); plot as null
  const psnr = typeof m.psnr === 'number' ? m.psnr : null
  return { iter: m.iter, loss: m.loss, psnr }
}

export class ProgressStream {
  points: ProgressPoint[] = []
  private socket: WebSocket | null = null
  private closed = false

  constructor(
    readonly url: string,
    readonly handlers: StreamHandlers,
    readonly reconnectDelayMs = 1000,
  ) {}

  start(): void {
    this.closed = false
    this.connect()
  }

  stop(): void {
    this.closed = true
    this.socket?.close()
    this.socket = null
  }

  private connect(): void {
    const socket = new WebSocket(this.url)
    this.socket = socket
    socket.onopen = () => this.handlers.onConnect?.()
    socket.onmessage = (ev) => this.handleFrame(String(ev.data))
    socket.onclose = () => {
      if (!this.closed) {
        setTimeout(() => this.connect(), this.reconnectDelayMs)
      }
    }
  }

  handleFrame(raw: string): void {
    const msg = parseMessage(raw)
    if (!msg) return
    if (msg.type === 'progress') {
      const point = toProgressPoint(msg)
      this.points.push(point)
      this.handlers.onProgress?.(point)
    } else {
      this.handlers.onPreview?.(msg.version)
    }
  }
}
