// DOM wiring: canvas viewport, toolbar, drag gestures, progress sparkline.

import { ApiClient } from './api.js'
import { pixelToDomain } from './coords.js'
import { EditorState, ToolMode } from './editor.js'
import { decimate, dotPositions } from './overlay.js'
import { normalizedRect } from './selection.js'
import { ProgressStream } from './ws.js'

const ZOOM = 4

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id)
  if (!node) throw new Error(`missing element #${id}`)
  return node as T
}

async function boot() {
  const api = new ApiClient('')
  const canvas = el<HTMLCanvasElement>('viewport')
  const ctx = canvas.getContext('2d')!
  const statusLine = el<HTMLDivElement>('status')
  const spark = el<HTMLCanvasElement>('sparkline')
  const sparkCtx = spark.getContext('2d')!

  const status = await api.status()
  statusLine.textContent = `state: ${status.state}`

  const gaussians = await api.gaussians().catch(() => null)
  if (!gaussians) {
    statusLine.textContent = 'no model loaded; train one first'
    return
  }

  const imageSize = { width: gaussians.trainWidth, height: gaussians.trainHeight }
  canvas.width = imageSize.width * ZOOM
  canvas.height = imageSize.height * ZOOM

  let lastFrame: ImageBitmap | null = null
  const editor = new EditorState(api, imageSize, (result) => {
    void createImageBitmap(new Blob([result.bytes], { type: 'image/png' })).then(
      (bmp) => {
        lastFrame = bmp
        editor.renderVersion = result.version
        draw()
      },
    )
  })
  editor.gaussians = gaussians

  const overlayIds = decimate(gaussians.count)

  function draw() {
    ctx.clearRect(0, 0, canvas.width, canvas.height)
    if (lastFrame) {
      ctx.imageSmoothingEnabled = false
      ctx.drawImage(lastFrame, 0, 0, canvas.width, canvas.height)
    }
    if (editor.overlayVisible && editor.gaussians) {
      const selected = new Set(editor.selection)
      for (const dot of dotPositions(
        editor.gaussians.means, overlayIds, imageSize, ZOOM,
      )) {
        ctx.fillStyle = selected.has(dot.index) ? '#ff4d4d' : 'rgba(64,160,255,0.6)'
        ctx.fillRect(dot.px - 1, dot.py - 1, 2, 2)
      }
    }
    statusLine.textContent =
      `version ${editor.renderVersion} | selected ${editor.selection.length}` +
      ` | undo depth ${editor.undoDepth}`
  }

  function refresh() {
    editor.requestRender({ width: imageSize.width, height: imageSize.height })
  }

  // --- toolbar
  const tools: ToolMode[] = ['select-rect', 'select-lasso', 'translate', 'rotate', 'scale']
  for (const tool of tools) {
    el<HTMLButtonElement>(`tool-${tool}`).onclick = () => {
      editor.tool = tool
      for (const other of tools) {
        el(`tool-${other}`).classList.toggle('active', other === tool)
      }
    }
  }
  el<HTMLButtonElement>('toggle-overlay').onclick = () => {
    editor.overlayVisible = !editor.overlayVisible
    draw()
  }
  el<HTMLButtonElement>('select-all').onclick = () => {
    editor.selectAll()
    draw()
  }
  el<HTMLButtonElement>('undo').onclick = () => {
    void editor.undo().then(() => {
      refresh()
      draw()
    }).catch((err) => {
      statusLine.textContent = `undo failed: ${err.message}`
    })
  }

  // --- gestures
  let dragStart: [number, number] | null = null
  let lassoPath: [number, number][] = []

  canvas.onpointerdown = (ev) => {
    const rect = canvas.getBoundingClientRect()
    dragStart = [ev.clientX - rect.left, ev.clientY - rect.top]
    lassoPath = [canvasToDomain(dragStart)]
    canvas.setPointerCapture(ev.pointerId)
  }
  canvas.onpointermove = (ev) => {
    if (!dragStart || editor.tool !== 'select-lasso') return
    const rect = canvas.getBoundingClientRect()
    lassoPath.push(canvasToDomain([ev.clientX - rect.left, ev.clientY - rect.top]))
  }
  canvas.onpointerup = (ev) => {
    if (!dragStart) return
    const rect = canvas.getBoundingClientRect()
    const end: [number, number] = [ev.clientX - rect.left, ev.clientY - rect.top]
    const start = dragStart
    dragStart = null

    if (editor.tool === 'select-rect') {
      const [ax, ay] = canvasToDomain(start)
      const [bx, by] = canvasToDomain(end)
      editor.selectRect(normalizedRect(ax, ay, bx, by))
      draw()
    } else if (editor.tool === 'select-lasso') {
      if (lassoPath.length >= 3) editor.selectLasso(lassoPath)
      draw()
    } else if (editor.tool === 'translate') {
      const ops = editor.translateOps(
        (end[0] - start[0]) / ZOOM,
        (end[1] - start[1]) / ZOOM,
      )
      void editor.applyOps(ops).then(() => {
        refresh()
        draw()
      })
    } else if (editor.tool === 'rotate' || editor.tool === 'scale') {
      const center = canvasToDomain(start)
      const dx = (end[0] - start[0]) / ZOOM
      const ops =
        editor.tool === 'rotate'
          ? editor.rotateOps(center, dx * 0.02)
          : editor.scaleOps(center, 1 + dx * 0.01, 1 + dx * 0.01)
      void editor.applyOps(ops).then(() => {
        refresh()
        draw()
      })
    }
  }

  function canvasToDomain(p: [number, number]): [number, number] {
    return pixelToDomain(p[0] / ZOOM - 0.5, p[1] / ZOOM - 0.5, imageSize)
  }

  // --- live progress sparkline
  const stream = new ProgressStream(api.wsUrl(), {
    onProgress: (point) => {
      const pts = stream.points
      sparkCtx.clearRect(0, 0, spark.width, spark.height)
      sparkCtx.strokeStyle = '#3fa34d'
      sparkCtx.beginPath()
      const usable = pts.filter((p) => p.psnr !== null)
      const maxPsnr = Math.max(...usable.map((p) => p.psnr!), 1)
      usable.forEach((p, i) => {
        const x = (i / Math.max(1, usable.length - 1)) * spark.width
        const y = spark.height - (p.psnr! / maxPsnr) * spark.height
        i === 0 ? sparkCtx.moveTo(x, y) : sparkCtx.lineTo(x, y)
      })
      sparkCtx.stroke()
      statusLine.textContent = `iter ${point.iter} | loss ${point.loss.toExponential(2)}`
    },
    onPreview: () => refresh(),
    onConnect: () => {
      void api.status().then((s) => {
        if (s.iter !== null) statusLine.textContent = `state: ${s.state} | iter ${s.iter}`
      })
    },
  })
  stream.start()

  refresh()
  draw()
}

boot().catch((err) => {
  const node = document.getElementById('status')
  if (node) node.textContent = `failed to start: ${err.message}`
  console.error(err)
})
