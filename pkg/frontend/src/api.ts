// Typed client for the model service. Only documented endpoints are used;
// the server stays the source of truth for applied edits.

export type SelectionPayload =
  | { kind: 'all' }
  | { kind: 'indices'; indices: number[] }
  | { kind: 'rect'; min: [number, number]; max: [number, number] }
  | { kind: 'polygon'; vertices: [number, number][] }

export type TransformPayload =
  | { kind: 'translate'; v: [number, number] }
  | { kind: 'rotate'; center: [number, number]; angle: number }
  | { kind: 'scale'; center: [number, number]; sx: number; sy: number }
  | { kind: 'displace'; offsets: [number, number][] }

export interface EditOp {
  select: SelectionPayload
  transform: TransformPayload
}

export interface StatusBody {
  state: 'idle' | 'running' | 'done' | 'error'
  iter: number | null
  loss: number | null
  psnr: number | string | null
  error?: string | null
}

export interface GaussianData {
  means: Float32Array
  count: number
  embedDim: number
  baked: boolean
  trainWidth: number
  trainHeight: number
}

export interface RenderRequest {
  width: number
  height: number
  region?: [number, number, number, number]
}

export interface RenderResult {
  bytes: ArrayBuffer
  version: number
}

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(detail)
  }
}

async function raiseForStatus(resp: Response): Promise<void> {
  if (resp.ok) return
  let detail = resp.statusText
  try {
    const body = await resp.json()
    if (body && typeof body.detail === 'string') detail = body.detail
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(resp.status, detail)
}

export class ApiClient {
  constructor(readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, '') + path
  }

  async status(): Promise<StatusBody> {
    const resp = await fetch(this.url('/api/status'))
    await raiseForStatus(resp)
    return resp.json()
  }

  async gaussians(): Promise<GaussianData> {
    const resp = await fetch(this.url('/api/gaussians'))
    await raiseForStatus(resp)
    const bytes = await resp.arrayBuffer()
    return {
      means: new Float32Array(bytes),
      count: Number(resp.headers.get('x-gaussian-count')),
      embedDim: Number(resp.headers.get('x-embed-dim')),
      baked: resp.headers.get('x-baked') === '1',
      trainWidth: Number(resp.headers.get('x-train-width') ?? 128),
      trainHeight: Number(resp.headers.get('x-train-height') ?? 128),
    }
  }

  async edit(ops: EditOp[]): Promise<number> {
    const resp = await fetch(this.url('/api/edit'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ ops }),
    })
    await raiseForStatus(resp)
    return (await resp.json()).render_version
  }

  async undo(): Promise<number> {
    const resp = await fetch(this.url('/api/undo'), { method: 'POST' })
    await raiseForStatus(resp)
    return (await resp.json()).render_version
  }

  async renderPng(req: RenderRequest): Promise<RenderResult> {
    const resp = await fetch(this.url('/api/render'), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ ...req, format: 'png' }),
    })
    await raiseForStatus(resp)
    return {
      bytes: await resp.arrayBuffer(),
      version: Number(resp.headers.get('x-render-version')),
    }
  }

  wsUrl(): string {
    return this.url('/ws').replace(/^http/, 'ws')
  }
}
