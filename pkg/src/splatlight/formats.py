"""File formats: model binary, PFM images, PNG previews, OLAT manifests.

Model file layout (little-endian throughout):

    offset  size  field
    0x00    4     magic "BIGS"
    0x04    4     format version, uint32
    0x08    8     primitive count, uint64
    0x10    ...   count x 1089 float32 per-primitive records

Each record stores position(3), rotation(4), log_scale(3), opacity_logit(1),
albedo_logit(3), t_dir(25), t_ind(75, channels R,G,B of 25), s(975, channels
R,G,B of 325): 4,356 bytes per primitive. Round trips are bit-identical.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .scene import (
    PARAMS_PER_PRIMITIVE,
    DirectionalLight,
    EnvironmentLight,
    GaussianScene,
    PointLight,
    fibonacci_hemisphere,
)

MODEL_MAGIC = b"BIGS"
MODEL_VERSION = 1
BYTES_PER_PRIMITIVE = PARAMS_PER_PRIMITIVE * 4
HEADER = struct.Struct("<4sIQ")


class FormatError(ValueError):
    """Malformed or mismatched file content."""


def save_model(scene: GaussianScene, path) -> None:
    rows = scene.to_rows().astype("<f4")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MODEL_MAGIC, MODEL_VERSION, len(scene)))
        fh.write(rows.tobytes())


def load_model(path) -> GaussianScene:
    data = Path(path).read_bytes()
    if len(data) < HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, count = HEADER.unpack_from(data)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    want = HEADER.size + count * BYTES_PER_PRIMITIVE
    if len(data) != want:
        raise FormatError(f"{path}: expected {want} bytes for {count} primitives, found {len(data)}")
    rows = np.frombuffer(data, dtype="<f4", offset=HEADER.size)
    rows = rows.reshape(count, PARAMS_PER_PRIMITIVE).astype(np.float64)
    return GaussianScene.from_rows(rows)


# --- PFM (portable float map, color "PF" variant) -----------------------------

def write_pfm(image: np.ndarray, path) -> None:
    """Write (h, w, 3) float32 data; rows stored bottom-to-top, scale -1.0."""
    image = np.asarray(image, dtype="<f4")
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError("PFM writer expects an (h, w, 3) image")
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(b"PF\n")
        fh.write(f"{w} {h}\n".encode("ascii"))
        fh.write(b"-1.0\n")
        fh.write(image[::-1].tobytes())


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().strip() != b"PF":
            raise FormatError(f"{path}: not a color PFM file")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise FormatError(f"{path}: malformed dimension line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline().strip())
        payload = fh.read()
    if len(payload) != w * h * 3 * 4:
        raise FormatError(f"{path}: payload size mismatch")
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(payload, dtype=dtype).reshape(h, w, 3)
    return img[::-1].astype(np.float64)


# --- PNG ---------------------------------------------------------------------

def write_png(image: np.ndarray, path) -> None:
    """Write an LDR image with values in [0, 1] as 8-bit RGB."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise FormatError("PNG writer expects an (h, w, 3) image")
    if image.min() < 0.0 or image.max() > 1.0:
        raise FormatError("PNG writer expects values in [0, 1]")
    quantized = np.round(image * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path, format="PNG")


def png_bytes(image: np.ndarray) -> bytes:
    import io as _io
    buf = _io.BytesIO()
    quantized = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0


# --- environment maps ----------------------------------------------------------

def env_lookup(env_image: np.ndarray, directions: np.ndarray) -> np.ndarray:
    """Bilinear equirectangular lookup.

    The +z pole maps to the top row, longitude comes from atan2 over (x, y).
    directions: (..., 3) unit vectors; returns (..., 3) radiance.
    """
    env_image = np.asarray(env_image, dtype=np.float64)
    h, w = env_image.shape[:2]
    d = np.asarray(directions, dtype=np.float64)
    single = d.ndim == 1
    d = np.atleast_2d(d)

    theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))       # 0 at +z (top row)
    phi = np.arctan2(d[..., 1], d[..., 0])                 # [-pi, pi)

    row = theta / np.pi * h - 0.5
    col = (phi + np.pi) / (2.0 * np.pi) * w - 0.5
    r0 = np.floor(row).astype(int)
    c0 = np.floor(col).astype(int)
    fr = row - r0
    fc = col - c0

    r0c = np.clip(r0, 0, h - 1)
    r1c = np.clip(r0 + 1, 0, h - 1)
    c0w = np.mod(c0, w)
    c1w = np.mod(c0 + 1, w)

    v00 = env_image[r0c, c0w]
    v01 = env_image[r0c, c1w]
    v10 = env_image[r1c, c0w]
    v11 = env_image[r1c, c1w]
    fr = fr[..., None]
    fc = fc[..., None]
    out = (v00 * (1 - fr) * (1 - fc) + v01 * (1 - fr) * fc
           + v10 * fr * (1 - fc) + v11 * fr * fc)
    return out[0] if single else out


def load_environment(path, sample_count: int = 128) -> EnvironmentLight:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        image = read_pfm(path)
    else:
        image = read_png(path)
    return EnvironmentLight(image=image, sample_count=sample_count, name=path.name)


# --- OLAT manifest -------------------------------------------------------------

@dataclass
class ManifestCamera:
    id: str
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray
    translation: np.ndarray


@dataclass
class ManifestLight:
    id: str
    type: str                      # "point" | "directional"
    position: np.ndarray | None
    direction: np.ndarray | None
    intensity: np.ndarray


@dataclass
class ManifestFrame:
    image: str
    camera: str
    light: str                     # light id or "all-on"
    partition: str                 # "train" | "all-on" | "holdout"


@dataclass
class OLATManifest:
    name: str
    cameras: dict
    lights: dict
    frames: list
    root: Path = field(default_factory=Path)

    def frames_in(self, partition: str) -> list:
        return [f for f in self.frames if f.partition == partition]

    def camera_object(self, cam_id: str):
        from .rasterize import Camera
        c = self.cameras[cam_id]
        return Camera(fx=c.fx, fy=c.fy, cx=c.cx, cy=c.cy, width=c.width,
                      height=c.height, rotation=c.rotation, translation=c.translation)

    def light_object(self, light_id: str):
        li = self.lights[light_id]
        if li.type == "point":
            return PointLight(position=li.position, intensity=li.intensity)
        return DirectionalLight(direction=li.direction, radiance=li.intensity)

    def all_light_objects(self) -> list:
        return [self.light_object(i) for i in sorted(self.lights)]

    def image_path(self, frame: ManifestFrame) -> Path:
        return self.root / frame.image


def save_manifest(manifest: OLATManifest, path) -> None:
    doc = {
        "name": manifest.name,
        "cameras": [
            {"id": c.id, "fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy,
             "width": c.width, "height": c.height,
             "rotation": np.asarray(c.rotation).reshape(-1).tolist(),
             "translation": np.asarray(c.translation).tolist()}
            for c in manifest.cameras.values()
        ],
        "lights": [
            {"id": li.id, "type": li.type,
             **({"position": np.asarray(li.position).tolist()} if li.position is not None else {}),
             **({"direction": np.asarray(li.direction).tolist()} if li.direction is not None else {}),
             "intensity": np.asarray(li.intensity).tolist()}
            for li in manifest.lights.values()
        ],
        "frames": [
            {"image": f.image, "camera": f.camera, "light": f.light,
             "partition": f.partition}
            for f in manifest.frames
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_manifest(path) -> OLATManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid manifest JSON: {exc}") from exc

    cameras = {}
    for i, c in enumerate(doc.get("cameras", [])):
        try:
            cameras[c["id"]] = ManifestCamera(
                id=c["id"], fx=float(c["fx"]), fy=float(c["fy"]),
                cx=float(c["cx"]), cy=float(c["cy"]),
                width=int(c["width"]), height=int(c["height"]),
                rotation=np.asarray(c["rotation"], dtype=np.float64).reshape(3, 3),
                translation=np.asarray(c["translation"], dtype=np.float64),
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: cameras[{i}]: {exc}") from exc

    lights = {}
    for i, li in enumerate(doc.get("lights", [])):
        try:
            lights[li["id"]] = ManifestLight(
                id=li["id"], type=li["type"],
                position=np.asarray(li["position"], dtype=np.float64) if "position" in li else None,
                direction=np.asarray(li["direction"], dtype=np.float64) if "direction" in li else None,
                intensity=np.asarray(li["intensity"], dtype=np.float64),
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"{path}: lights[{i}]: {exc}") from exc
        if lights[li["id"]].type not in ("point", "directional"):
            raise FormatError(f"{path}: lights[{i}]: unknown type {li['type']!r}")

    frames = []
    for i, f in enumerate(doc.get("frames", [])):
        try:
            frame = ManifestFrame(image=f["image"], camera=f["camera"],
                                  light=f["light"], partition=f["partition"])
        except KeyError as exc:
            raise FormatError(f"{path}: frames[{i}]: missing {exc}") from exc
        if frame.camera not in cameras:
            raise FormatError(f"{path}: frames[{i}]: unknown camera {frame.camera!r}")
        if frame.light != "all-on" and frame.light not in lights:
            raise FormatError(f"{path}: frames[{i}]: unknown light {frame.light!r}")
        if frame.partition not in ("train", "all-on", "holdout"):
            raise FormatError(f"{path}: frames[{i}]: unknown partition {frame.partition!r}")
        if not (path.parent / frame.image).exists():
            raise FormatError(f"{path}: frames[{i}]: missing image file {frame.image!r}")
        frames.append(frame)

    return OLATManifest(name=doc.get("name", path.stem), cameras=cameras,
                        lights=lights, frames=frames, root=path.parent)


# --- synthetic OLAT dataset -----------------------------------------------------

def make_synthetic_dataset(gt_scene: GaussianScene, n_lights: int, n_cams: int,
                           resolution: int, out_dir, n_holdout: int | None = None,
                           light_radius: float = 3.0, cam_radius: float = 3.2,
                           light_intensity: float = 18.0,
                           name: str = "synthetic") -> OLATManifest:
    """Render an OLAT dataset from a ground-truth scene.

    Lights and cameras sit on the +y hemisphere around the origin. Every
    (light, camera) pair becomes a training frame; each camera also gets an
    all-lights-on frame. Holdout lights are a second, azimuth-offset
    hemisphere set (disjoint from training), each rendered from one
    training camera. Everything is deterministic, so regeneration is
    bit-identical.
    """
    from .rasterize import Camera, render

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if n_holdout is None:
        n_holdout = max(1, n_lights // 2)

    light_pos = fibonacci_hemisphere(n_lights, up_axis=1) * light_radius
    holdout_pos = fibonacci_hemisphere(n_holdout, up_axis=1, phase=np.pi / 3.0) * light_radius
    cam_pos = fibonacci_hemisphere(n_cams, up_axis=1, phase=np.pi / 7.0) * cam_radius

    intensity = np.full(3, float(light_intensity))
    lights = {}
    for i, p in enumerate(light_pos):
        lights[f"light_{i:03d}"] = ManifestLight(
            id=f"light_{i:03d}", type="point", position=p, direction=None,
            intensity=intensity)
    for i, p in enumerate(holdout_pos):
        lights[f"holdout_{i:03d}"] = ManifestLight(
            id=f"holdout_{i:03d}", type="point", position=p, direction=None,
            intensity=intensity)

    cameras = {}
    cam_objects = {}
    for i, p in enumerate(cam_pos):
        cam = Camera.look_at(eye=p, target=(0.0, 0.0, 0.0), width=resolution,
                             height=resolution)
        cid = f"cam_{i:03d}"
        cameras[cid] = ManifestCamera(
            id=cid, fx=cam.fx, fy=cam.fy, cx=cam.cx, cy=cam.cy,
            width=cam.width, height=cam.height, rotation=cam.rotation,
            translation=cam.translation)
        cam_objects[cid] = cam

    frames = []

    def emit(image, stem, cam_id, light_id, partition):
        rel = f"{stem}.pfm"
        write_pfm(image, out_dir / rel)
        frames.append(ManifestFrame(image=rel, camera=cam_id, light=light_id,
                                    partition=partition))

    train_light_objs = {
        lid: PointLight(position=li.position, intensity=li.intensity)
        for lid, li in lights.items() if not lid.startswith("holdout")
    }
    for lid, light in train_light_objs.items():
        for cid, cam in cam_objects.items():
            img = render(gt_scene, [light], cam)
            emit(img, f"olat_{lid}_{cid}", cid, lid, "train")

    all_on = list(train_light_objs.values())
    for cid, cam in cam_objects.items():
        img = render(gt_scene, all_on, cam)
        emit(img, f"allon_{cid}", cid, "all-on", "all-on")

    cam_ids = sorted(cam_objects)
    for i, (lid, li) in enumerate(sorted(
            (k, v) for k, v in lights.items() if k.startswith("holdout"))):
        cid = cam_ids[i % len(cam_ids)]
        light = PointLight(position=li.position, intensity=li.intensity)
        img = render(gt_scene, [light], cam_objects[cid])
        emit(img, f"holdout_{lid}_{cid}", cid, lid, "holdout")

    manifest = OLATManifest(name=name, cameras=cameras, lights=lights,
                            frames=frames, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
