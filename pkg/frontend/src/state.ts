/**
 * Viewer state and its serialization to the render service's wire schema.
 *
 * The state is the single source of truth for the UI; `toRenderRequest`
 * must produce exactly what POST /render and the /interactive channel
 * accept, so a streamed frame is byte-identical to a scripted render of
 * the same state.
 */

export interface OrbitCamera {
  azimuth: number;
  elevation: number;
  radius: number;
  target: [number, number, number];
  fovDeg: number;
}

export interface PointLightState {
  kind: "point";
  position: [number, number, number];
  intensity: [number, number, number];
}

export interface EnvLightState {
  kind: "env";
  id: string;
  samples: number;
}

export type LightState = PointLightState | EnvLightState;

export interface ComponentMask {
  diffuse: boolean;
  directional: boolean;
  direct: boolean;
  indirect: boolean;
}

export interface ViewerState {
  camera: OrbitCamera;
  light: LightState;
  mask: ComponentMask;
  width: number;
  height: number;
}

/** Keep elevation strictly inside the poles and the radius positive. */
export const MIN_RADIUS = 0.1;
export const MAX_ELEVATION = Math.PI / 2 - 0.01;

export function clampCamera(camera: OrbitCamera): OrbitCamera {
  return {
    ...camera,
    radius: Math.max(MIN_RADIUS, camera.radius),
    elevation: Math.min(MAX_ELEVATION, Math.max(-MAX_ELEVATION, camera.elevation)),
  };
}

export function defaultState(): ViewerState {
  return {
    camera: { azimuth: 0.5, elevation: 0.45, radius: 3.2, target: [0, 0, 0], fovDeg: 50 },
    light: { kind: "point", position: [1.5, 2.0, 1.5], intensity: [8, 8, 8] },
    mask: { diffuse: true, directional: true, direct: true, indirect: true },
    width: 256,
    height: 256,
  };
}

/** Serialize to the service's render-request schema. */
export function toRenderRequest(state: ViewerState): object {
  const camera = clampCamera(state.camera);
  const lights =
    state.light.kind === "point"
      ? [{ type: "point", position: state.light.position, intensity: state.light.intensity }]
      : [{ type: "env", id: state.light.id, samples: state.light.samples }];
  return {
    camera: {
      width: state.width,
      height: state.height,
      orbit: {
        azimuth: camera.azimuth,
        elevation: camera.elevation,
        radius: camera.radius,
        target: camera.target,
        fov_deg: camera.fovDeg,
      },
    },
    lights,
    mask: { ...state.mask },
    tone_map: true,
  };
}

/**
 * Lighting fingerprint mirroring the server's cache key inputs: camera-only
 * interactions keep it constant, so the UI can predict relight-counter
 * behavior and label interactions as cheap or expensive.
 */
export function lightingKey(state: ViewerState): string {
  const m = state.mask;
  return JSON.stringify([state.light, m.diffuse, m.directional, m.direct, m.indirect]);
}
