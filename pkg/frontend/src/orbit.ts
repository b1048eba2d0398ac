/**
 * Orbit-camera interaction math: pointer drags to angles, wheel to radius,
 * and a drag gizmo that moves the point light on a sphere around the
 * target.
 */
import { clampCamera, OrbitCamera } from "./state.js";

export const DRAG_SPEED = 0.008; // radians per pixel

export function orbitDrag(camera: OrbitCamera, dxPixels: number, dyPixels: number): OrbitCamera {
  return clampCamera({
    ...camera,
    azimuth: camera.azimuth - dxPixels * DRAG_SPEED,
    elevation: camera.elevation + dyPixels * DRAG_SPEED,
  });
}

export function orbitZoom(camera: OrbitCamera, wheelDelta: number): OrbitCamera {
  // Exponential zoom feels uniform at any distance.
  return clampCamera({ ...camera, radius: camera.radius * Math.exp(wheelDelta * 1e-3) });
}

export function orbitEye(camera: OrbitCamera): [number, number, number] {
  const c = clampCamera(camera);
  return [
    c.target[0] + c.radius * Math.cos(c.elevation) * Math.sin(c.azimuth),
    c.target[1] + c.radius * Math.sin(c.elevation),
    c.target[2] + c.radius * Math.cos(c.elevation) * Math.cos(c.azimuth),
  ];
}

/** Spherical parameterization for the light-position drag gizmo. */
export interface LightGizmo {
  azimuth: number;
  elevation: number;
  distance: number;
}

export function gizmoToPosition(g: LightGizmo): [number, number, number] {
  return [
    g.distance * Math.cos(g.elevation) * Math.sin(g.azimuth),
    g.distance * Math.sin(g.elevation),
    g.distance * Math.cos(g.elevation) * Math.cos(g.azimuth),
  ];
}

export function gizmoDrag(g: LightGizmo, dxPixels: number, dyPixels: number): LightGizmo {
  const elevation = Math.min(
    Math.PI / 2 - 0.01,
    Math.max(-Math.PI / 2 + 0.01, g.elevation + dyPixels * DRAG_SPEED),
  );
  return { ...g, azimuth: g.azimuth - dxPixels * DRAG_SPEED, elevation };
}
