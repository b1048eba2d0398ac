/**
 * DOM wiring: canvas, orbit/light drag, sliders, component-mask toggles,
 * connection banner, and the latency overlay.
 */
import { fetchInfo, InteractiveSession } from "./net.js";
import { gizmoDrag, gizmoToPosition, LightGizmo, orbitDrag, orbitZoom } from "./orbit.js";
import { defaultState, lightingKey, ViewerState } from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startViewer(baseUrl: string): void {
  const state: ViewerState = defaultState();
  const canvas = el<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d")!;
  const banner = el<HTMLDivElement>("banner");
  const overlay = el<HTMLDivElement>("overlay");
  const infoBox = el<HTMLDivElement>("model-info");

  let gizmo: LightGizmo = { azimuth: 0.8, elevation: 0.7, distance: 2.8 };
  let lastKey = lightingKey(state);
  let lightInteractions = 0;

  const wsUrl = baseUrl.replace(/^http/, "ws") + "/interactive";
  const session = new InteractiveSession(wsUrl, {
    onFrame: (frame) => {
      // Tight copy: the view's backing buffer still holds the seq prefix.
      const bytes = frame.png.slice();
      const blob = new Blob([bytes.buffer as ArrayBuffer], { type: "image/png" });
      createImageBitmap(blob).then((bmp) => {
        canvas.width = bmp.width;
        canvas.height = bmp.height;
        ctx.drawImage(bmp, 0, 0);
        overlay.textContent = `seq ${frame.seq} · ${frame.latencyMs.toFixed(0)} ms`;
      });
    },
    onStatus: (connected) => {
      banner.textContent = connected ? "" : "reconnecting…";
      banner.classList.toggle("visible", !connected);
      if (connected) push();
    },
    onError: (message) => {
      overlay.textContent = `server rejected update: ${message}`;
    },
  });

  function push(): void {
    const key = lightingKey(state);
    if (key !== lastKey) {
      lightInteractions += 1;
      lastKey = key;
    }
    session.update(state);
  }

  // Camera orbit: left drag. Light gizmo: drag with shift held.
  let dragging: "camera" | "light" | null = null;
  let last: [number, number] = [0, 0];
  canvas.addEventListener("pointerdown", (ev) => {
    dragging = ev.shiftKey ? "light" : "camera";
    last = [ev.clientX, ev.clientY];
    canvas.setPointerCapture(ev.pointerId);
  });
  canvas.addEventListener("pointermove", (ev) => {
    if (!dragging) return;
    const dx = ev.clientX - last[0];
    const dy = ev.clientY - last[1];
    last = [ev.clientX, ev.clientY];
    if (dragging === "camera") {
      state.camera = orbitDrag(state.camera, dx, dy);
    } else if (state.light.kind === "point") {
      gizmo = gizmoDrag(gizmo, dx, dy);
      state.light.position = gizmoToPosition(gizmo);
    }
    push();
  });
  canvas.addEventListener("pointerup", () => (dragging = null));
  canvas.addEventListener("wheel", (ev) => {
    ev.preventDefault();
    state.camera = orbitZoom(state.camera, ev.deltaY);
    push();
  });

  // Point-light sliders.
  for (const [axis, idx] of [["x", 0], ["y", 1], ["z", 2]] as const) {
    const slider = el<HTMLInputElement>(`light-${axis}`);
    slider.addEventListener("input", () => {
      if (state.light.kind === "point") {
        state.light.position[idx] = parseFloat(slider.value);
        push();
      }
    });
  }
  el<HTMLInputElement>("light-intensity").addEventListener("input", (ev) => {
    const v = parseFloat((ev.target as HTMLInputElement).value);
    if (state.light.kind === "point") {
      state.light.intensity = [v, v, v];
      push();
    }
  });

  // Environment selector: empty value returns to the point light.
  el<HTMLSelectElement>("env-select").addEventListener("change", (ev) => {
    const id = (ev.target as HTMLSelectElement).value;
    state.light = id
      ? { kind: "env", id, samples: 128 }
      : { kind: "point", position: gizmoToPosition(gizmo), intensity: [8, 8, 8] };
    push();
  });

  // Component mask checkboxes.
  for (const name of ["diffuse", "directional", "direct", "indirect"] as const) {
    const box = el<HTMLInputElement>(`mask-${name}`);
    box.checked = state.mask[name];
    box.addEventListener("change", () => {
      state.mask[name] = box.checked;
      push();
    });
  }

  fetchInfo(baseUrl)
    .then((info) => {
      infoBox.textContent =
        `${info.primitive_count.toLocaleString()} primitives · ` +
        `${info.parameter_count.toLocaleString()} parameters · ` +
        `${(info.memory_bytes / 1e6).toFixed(1)} MB`;
    })
    .catch((err) => (infoBox.textContent = String(err)));

  session.connect();
}
