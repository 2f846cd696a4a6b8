import { afterEach, describe, expect, it, vi } from 'vitest'

import { ApiClient } from '../src/api.js'
import { EditorState } from '../src/editor.js'
import { parseMessage, ProgressStream } from '../src/ws.js'

const SIZE = { width: 24, height: 24 }

function meansResponse(means: Float32Array): Response {
  return new Response(means.buffer.slice(0) as ArrayBuffer, {
    status: 200,
    headers: {
      'x-gaussian-count': String(means.length / 2),
      'x-embed-dim': '8',
      'x-baked': '1',
    },
  })
}

afterEach(() => {
  vi.restoreAllMocks()
})

describe('EditorState', () => {
  it('zero-length drag produces no ops and no request', async () => {
    const fetchSpy = vi.spyOn(globalThis, 'fetch')
    const editor = new EditorState(new ApiClient('http://x'), SIZE, () => {})
    editor.gaussians = {
      means: new Float32Array([0.5, 0.5]),
      count: 1,
      embedDim: 8,
      baked: true,
      trainWidth: 24,
      trainHeight: 24,
    }
    editor.selectAll()
    const ops = editor.translateOps(0, 0)
    expect(ops).toEqual([])
    await editor.applyOps(ops)
    expect(fetchSpy).not.toHaveBeenCalled()
  })

  it('drag by pixels translates by pixels over the domain scale', () => {
    const editor = new EditorState(new ApiClient('http://x'), SIZE, () => {})
    editor.gaussians = {
      means: new Float32Array([0.5, 0.5, 0.1, 0.1]),
      count: 2,
      embedDim: 8,
      baked: true,
      trainWidth: 24,
      trainHeight: 24,
    }
    editor.selection = [1]
    const ops = editor.translateOps(6, -3)
    expect(ops).toHaveLength(1)
    expect(ops[0].select).toEqual({ kind: 'indices', indices: [1] })
    expect(ops[0].transform).toEqual({
      kind: 'translate',
      v: [6 / 24, -3 / 24],
    })
  })

  it('applyOps tracks the server version and refreshes means', async () => {
    const means = new Float32Array([0.2, 0.2])
    vi.spyOn(globalThis, 'fetch').mockImplementation(async (input, init) => {
      const url = String(input)
      if (url.endsWith('/api/edit')) {
        expect(init?.method).toBe('POST')
        return Response.json({ render_version: 5 })
      }
      if (url.endsWith('/api/gaussians')) return meansResponse(means)
      throw new Error(`unexpected ${url}`)
    })
    const editor = new EditorState(new ApiClient('http://x'), SIZE, () => {})
    editor.gaussians = {
      means, count: 1, embedDim: 8, baked: true, trainWidth: 24, trainHeight: 24,
    }
    editor.selection = [0]
    const version = await editor.applyOps(editor.translateOps(1, 1))
    expect(version).toBe(5)
    expect(editor.renderVersion).toBe(5)
    expect(editor.undoDepth).toBe(1)
  })

  it('coalesces rapid render requests to the latest one', async () => {
    const served: number[] = []
    let release: (() => void) | null = null
    vi.spyOn(globalThis, 'fetch').mockImplementation(async (input, init) => {
      const body = JSON.parse(String(init?.body))
      served.push(body.width)
      if (served.length === 1) {
        await new Promise<void>((resolve) => {
          release = resolve
        })
      }
      return new Response(new ArrayBuffer(4), {
        status: 200,
        headers: { 'x-render-version': '1' },
      })
    })
    const results: number[] = []
    const editor = new EditorState(new ApiClient('http://x'), SIZE, () => {
      results.push(1)
    })
    editor.requestRender({ width: 10, height: 10 })
    editor.requestRender({ width: 11, height: 11 })
    editor.requestRender({ width: 12, height: 12 })
    await new Promise((r) => setTimeout(r, 10))
    release!()
    await new Promise((r) => setTimeout(r, 20))
    // first request went out, intermediate one was dropped, last one served
    expect(served).toEqual([10, 12])
    expect(results).toHaveLength(2)
  })
})

describe('progress stream', () => {
  it('parses progress and preview frames', () => {
    expect(
      parseMessage('{"type":"progress","iter":100,"loss":0.5,"psnr":30.1}'),
    ).toMatchObject({ type: 'progress', iter: 100 })
    expect(parseMessage('{"type":"preview","version":3}')).toMatchObject({
      type: 'preview',
      version: 3,
    })
  })

  it('ignores malformed frames with a console warning', () => {
    const warn = vi.spyOn(console, 'warn').mockImplementation(() => {})
    expect(parseMessage('not json')).toBeNull()
    expect(parseMessage('{"type":"progress"}')).toBeNull()
    expect(warn).toHaveBeenCalledTimes(2)
  })

  it('appends points in arrival order', () => {
    const seen: number[] = []
    const stream = new ProgressStream('ws://unused', {
      onProgress: (p) => seen.push(p.iter),
    })
    stream.handleFrame('{"type":"progress","iter":100,"loss":1.0,"psnr":10}')
    stream.handleFrame('{"type":"progress","iter":200,"loss":0.5,"psnr":"inf"}')
    stream.handleFrame('garbage')
    expect(seen).toEqual([100, 200])
    expect(stream.points[1].psnr).toBeNull()
  })
})
