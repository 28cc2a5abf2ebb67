//! Pinhole projection and a small deterministic rasterizer.
//!
//! The camera frame is x right, y down, z forward. Pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` and is sampled at its center; edges follow the
//! top-left fill rule so shared edges are drawn exactly once. Triangles are
//! clipped against the plane `z = NEAR_PLANE` and drawn double-sided.

use std::path::{Path, PathBuf};
use std::collections::BTreeMap;

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CameraPose, HomogeneousMatrix, Vec3};
use crate::hand::CameraIntrinsics;
use crate::robot::{link_poses, FkOptions, Geometry, JointConfig, RobotError, RobotModel};

/// Near clipping plane, meters.
pub const NEAR_PLANE: f64 = 1e-3;
/// Points closer than this (camera z) are rejected by [`project`].
pub const MIN_PROJECT_DEPTH: f64 = 1e-6;
pub const CYLINDER_SEGMENTS: usize = 24;
pub const SPHERE_SLICES: usize = 24;
pub const SPHERE_STACKS: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RenderError {
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f64),
    #[error("bad mesh: {0}")]
    BadMesh(String),
    #[error("mesh {0:?} was not loaded")]
    MissingMesh(String),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error("i/o error on {path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Projects a world point through the pinhole camera.
pub fn project(intrinsics: &CameraIntrinsics, cam: &CameraPose, point: Vec3) -> Result<Projection, RenderError> {
    let pc = cam.world_to_camera(point);
    if !(pc.z > MIN_PROJECT_DEPTH) {
        return Err(RenderError::BehindCamera(pc.z));
    }
    Ok(Projection {
        u: intrinsics.fx * pc.x / pc.z + intrinsics.cx,
        v: intrinsics.fy * pc.y / pc.z + intrinsics.cy,
        depth: pc.z,
    })
}

/// World point seen at pixel `(u, v)` with camera depth `depth`.
pub fn unproject(intrinsics: &CameraIntrinsics, cam: &CameraPose, u: f64, v: f64, depth: f64) -> Vec3 {
    let pc = Vec3::new((u - intrinsics.cx) / intrinsics.fx * depth, (v - intrinsics.cy) / intrinsics.fy * depth, depth);
    cam.camera_to_world(pc)
}

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Reads `v` and triangular `f` records of an OBJ file. Other records
/// (normals, texture coordinates, groups, materials) are ignored. Faces must
/// be triangles, and every vertex must be used by some face.
pub fn parse_obj(text: &str) -> Result<TriMesh, RenderError> {
    let mut mesh = TriMesh::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|t| t.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| RenderError::BadMesh(format!("line {}: {e}", lineno + 1)))?;
                if coords.len() != 3 || coords.iter().any(|c| !c.is_finite()) {
                    return Err(RenderError::BadMesh(format!("line {}: vertex needs 3 finite coordinates", lineno + 1)));
                }
                mesh.vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<&str> = parts.collect();
                if idx.len() != 3 {
                    return Err(RenderError::BadMesh(format!(
                        "line {}: face has {} vertices, only triangles are supported",
                        lineno + 1,
                        idx.len()
                    )));
                }
                let mut tri = [0u32; 3];
                for (slot, tok) in tri.iter_mut().zip(idx) {
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| RenderError::BadMesh(format!("line {}: bad index {tok:?}", lineno + 1)))?;
                    // OBJ indices are 1-based; negatives count from the end
                    let n = mesh.vertices.len() as i64;
                    let resolved = if i > 0 { i - 1 } else { n + i };
                    if resolved < 0 || resolved >= n {
                        return Err(RenderError::BadMesh(format!("line {}: index {i} out of range", lineno + 1)));
                    }
                    *slot = resolved as u32;
                }
                mesh.triangles.push(tri);
            }
            _ => {}
        }
    }
    let mut used = vec![false; mesh.vertices.len()];
    for t in &mesh.triangles {
        for &i in t {
            used[i as usize] = true;
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(RenderError::BadMesh(format!("vertex {} is not referenced by any face", i + 1)));
    }
    Ok(mesh)
}

/// OBJ meshes referenced by a model, keyed by their path in the description.
#[derive(Debug, Clone, Default)]
pub struct MeshLibrary {
    meshes: BTreeMap<String, TriMesh>,
}

impl MeshLibrary {
    pub fn new() -> Self {
        MeshLibrary::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, mesh: TriMesh) {
        self.meshes.insert(path.into(), mesh);
    }

    pub fn get(&self, path: &str) -> Option<&TriMesh> {
        self.meshes.get(path)
    }

    /// Loads every mesh the model references, relative to `base_dir`.
    pub fn load_for(model: &RobotModel, base_dir: &Path) -> Result<MeshLibrary, RenderError> {
        let mut lib = MeshLibrary::new();
        for v in model.links.iter().flat_map(|l| &l.visuals) {
            if let Geometry::Mesh { path, .. } = &v.geometry {
                if lib.meshes.contains_key(path) {
                    continue;
                }
                let full = base_dir.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| RenderError::Io { path: full.clone(), message: e.to_string() })?;
                lib.insert(path.clone(), parse_obj(&text)?);
            }
        }
        Ok(lib)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [Vec3; 3],
    pub color: [f64; 3],
}

fn push_quad(out: &mut Vec<[Vec3; 3]>, a: Vec3, b: Vec3, c: Vec3, d: Vec3) {
    out.push([a, b, c]);
    out.push([a, c, d]);
}

/// Triangles of one primitive in its own frame.
pub fn tessellate_geometry(geometry: &Geometry, meshes: &MeshLibrary) -> Result<Vec<[Vec3; 3]>, RenderError> {
    let mut out = Vec::new();
    match geometry {
        Geometry::Box { size } => {
            let h = *size * 0.5;
            let c = |sx: f64, sy: f64, sz: f64| Vec3::new(sx * h.x, sy * h.y, sz * h.z);
            let faces = [
                [c(1., -1., -1.), c(1., 1., -1.), c(1., 1., 1.), c(1., -1., 1.)],
                [c(-1., -1., -1.), c(-1., -1., 1.), c(-1., 1., 1.), c(-1., 1., -1.)],
                [c(-1., 1., -1.), c(-1., 1., 1.), c(1., 1., 1.), c(1., 1., -1.)],
                [c(-1., -1., -1.), c(1., -1., -1.), c(1., -1., 1.), c(-1., -1., 1.)],
                [c(-1., -1., 1.), c(1., -1., 1.), c(1., 1., 1.), c(-1., 1., 1.)],
                [c(-1., -1., -1.), c(-1., 1., -1.), c(1., 1., -1.), c(1., -1., -1.)],
            ];
            for [a, b, cc, d] in faces {
                push_quad(&mut out, a, b, cc, d);
            }
        }
        Geometry::Cylinder { radius, length } => {
            let n = CYLINDER_SEGMENTS;
            let hz = length / 2.0;
            let ring = |i: usize, z: f64| {
                let a = std::f64::consts::TAU * (i % n) as f64 / n as f64;
                Vec3::new(radius * a.cos(), radius * a.sin(), z)
            };
            let (top, bottom) = (Vec3::new(0.0, 0.0, hz), Vec3::new(0.0, 0.0, -hz));
            for i in 0..n {
                push_quad(&mut out, ring(i, -hz), ring(i + 1, -hz), ring(i + 1, hz), ring(i, hz));
                out.push([top, ring(i, hz), ring(i + 1, hz)]);
                out.push([bottom, ring(i + 1, -hz), ring(i, -hz)]);
            }
        }
        Geometry::Sphere { radius } => {
            let (ns, nt) = (SPHERE_SLICES, SPHERE_STACKS);
            let point = |s: usize, t: usize| {
                let theta = std::f64::consts::PI * t as f64 / nt as f64;
                let phi = std::f64::consts::TAU * (s % ns) as f64 / ns as f64;
                Vec3::new(radius * theta.sin() * phi.cos(), radius * theta.sin() * phi.sin(), radius * theta.cos())
            };
            for t in 0..nt {
                for s in 0..ns {
                    let (a, b, c, d) = (point(s, t), point(s + 1, t), point(s + 1, t + 1), point(s, t + 1));
                    if t == 0 {
                        out.push([a, c, d]);
                    } else if t == nt - 1 {
                        out.push([a, b, c]);
                    } else {
                        push_quad(&mut out, a, b, c, d);
                    }
                }
            }
        }
        Geometry::Mesh { path, scale } => {
            let mesh = meshes.get(path).ok_or_else(|| RenderError::MissingMesh(path.clone()))?;
            let s = |v: Vec3| Vec3::new(v.x * scale.x, v.y * scale.y, v.z * scale.z);
            for t in &mesh.triangles {
                out.push(t.map(|i| s(mesh.vertices[i as usize])));
            }
        }
    }
    Ok(out)
}

/// Triangles of all visuals of a link, in the link frame.
pub fn tessellate(visuals: &[crate::robot::Visual], meshes: &MeshLibrary) -> Result<Vec<Triangle>, RenderError> {
    let mut out = Vec::new();
    for v in visuals {
        let t = v.origin.transform();
        for tri in tessellate_geometry(&v.geometry, meshes)? {
            out.push(Triangle { vertices: tri.map(|p| t.transform_point(p)), color: v.color });
        }
    }
    Ok(out)
}

/// Tessellated robot, ready to be posed and drawn. Immutable and shareable
/// across threads.
#[derive(Debug, Clone)]
pub struct RobotScene {
    /// Per link (indexed like `model.links`), triangles in the link frame.
    link_triangles: Vec<Vec<Triangle>>,
}

impl RobotScene {
    pub fn new(model: &RobotModel, meshes: &MeshLibrary) -> Result<RobotScene, RenderError> {
        let link_triangles = model
            .links
            .iter()
            .map(|l| tessellate(&l.visuals, meshes))
            .collect::<Result<_, _>>()?;
        Ok(RobotScene { link_triangles })
    }

    pub fn triangle_count(&self) -> usize {
        self.link_triangles.iter().map(Vec::len).sum()
    }
}

/// Light travelling along `direction` (camera frame). `z > 0` means the light
/// comes from the camera side of the scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightSettings {
    pub direction: Vec3,
    pub color: [f64; 3],
    pub ambient: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for LightSettings {
    fn default() -> Self {
        LightSettings {
            direction: Vec3::new(0.3, 0.5, 1.0).normalized().unwrap(),
            color: [1.0, 1.0, 1.0],
            ambient: 0.35,
            seed: None,
        }
    }
}

/// Random light: direction uniform on the `z >= 0` hemisphere, color channels
/// uniform in [0.6, 1.0], ambient uniform in [0.2, 0.5].
pub fn randomize_light(seed: u64) -> LightSettings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z: f64 = rng.gen_range(0.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    let direction = Vec3::new(r * phi.cos(), r * phi.sin(), z).normalized().unwrap_or(Vec3::Z);
    let color = [rng.gen_range(0.6..=1.0), rng.gen_range(0.6..=1.0), rng.gen_range(0.6..=1.0)];
    LightSettings { direction, color, ambient: rng.gen_range(0.2..=0.5), seed: Some(seed) }
}

/// Rendered robot: color, binary mask and camera depth (meters, +inf where empty).
#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub rgb: RgbImage,
    pub mask: GrayImage,
    pub depth: Vec<f32>,
}

impl Overlay {
    pub fn empty(width: u32, height: u32) -> Overlay {
        Overlay {
            rgb: RgbImage::new(width, height),
            mask: GrayImage::new(width, height),
            depth: vec![f32::INFINITY; (width * height) as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.mask.width()
    }

    pub fn height(&self) -> u32 {
        self.mask.height()
    }

    pub fn depth_at(&self, x: u32, y: u32) -> f32 {
        self.depth[(y * self.width() + x) as usize]
    }

    pub fn mask_count(&self) -> usize {
        self.mask.as_raw().iter().filter(|&&m| m == 255).count()
    }

    /// `mask == 255` exactly where depth is finite, and mask values are binary.
    pub fn invariant_holds(&self) -> bool {
        self.mask
            .as_raw()
            .iter()
            .zip(&self.depth)
            .all(|(&m, d)| (m == 255 && d.is_finite()) || (m == 0 && d.is_infinite()))
    }

    /// Depth as 16-bit millimeters, saturating at 65.535 m; empty pixels are 0.
    pub fn depth_mm(&self) -> ImageBuffer<Luma<u16>, Vec<u16>> {
        let w = self.width();
        ImageBuffer::from_fn(w, self.height(), |x, y| {
            let d = self.depth[(y * w + x) as usize];
            Luma([if d.is_finite() { (d as f64 * 1000.0).round().clamp(0.0, 65535.0) as u16 } else { 0 }])
        })
    }

    /// Writes `{stem}_rgb.png`, `{stem}_mask.png` and `{stem}_depth.png`.
    pub fn save_pngs(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, RenderError> {
        let io = |path: &Path, e: image::ImageError| RenderError::Io { path: path.to_path_buf(), message: e.to_string() };
        let paths = [
            dir.join(format!("{stem}_rgb.png")),
            dir.join(format!("{stem}_mask.png")),
            dir.join(format!("{stem}_depth.png")),
        ];
        self.rgb.save(&paths[0]).map_err(|e| io(&paths[0], e))?;
        self.mask.save(&paths[1]).map_err(|e| io(&paths[1], e))?;
        self.depth_mm().save(&paths[2]).map_err(|e| io(&paths[2], e))?;
        Ok(paths.to_vec())
    }
}

/// Screen-space vertex: pixel coordinates and reciprocal depth.
#[derive(Debug, Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    inv_z: f64,
}

fn edge(a: ScreenVertex, b: ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Top-left rule for triangles with positive [`edge`] area (clockwise on a
/// y-down screen).
fn is_top_left(a: ScreenVertex, b: ScreenVertex) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

fn clip_near(tri: &[Vec3; 3]) -> ([Vec3; 4], usize) {
    let mut out = [Vec3::ZERO; 4];
    let mut n = 0;
    for i in 0..3 {
        let a = tri[i];
        let b = tri[(i + 1) % 3];
        let a_in = a.z >= NEAR_PLANE;
        let b_in = b.z >= NEAR_PLANE;
        if a_in {
            out[n] = a;
            n += 1;
        }
        if a_in != b_in {
            let t = (NEAR_PLANE - a.z) / (b.z - a.z);
            let mut p = a + (b - a) * t;
            p.z = NEAR_PLANE;
            out[n] = p;
            n += 1;
        }
    }
    (out, n)
}

struct Target<'a> {
    intr: &'a CameraIntrinsics,
    overlay: &'a mut Overlay,
    zbuf: Vec<f64>,
}

impl Target<'_> {
    fn to_screen(&self, p: Vec3) -> ScreenVertex {
        ScreenVertex {
            x: self.intr.fx * p.x / p.z + self.intr.cx,
            y: self.intr.fy * p.y / p.z + self.intr.cy,
            inv_z: 1.0 / p.z,
        }
    }

    fn fill(&mut self, v: [ScreenVertex; 3], rgb: [u8; 3]) {
        let (mut v0, v1, mut v2) = (v[0], v[1], v[2]);
        let mut area = edge(v0, v1, v2.x, v2.y);
        if area == 0.0 || !area.is_finite() {
            return;
        }
        if area < 0.0 {
            std::mem::swap(&mut v0, &mut v2);
            area = -area;
        }
        let (w, h) = (self.overlay.width() as i64, self.overlay.height() as i64);
        let min_x = v0.x.min(v1.x).min(v2.x);
        let max_x = v0.x.max(v1.x).max(v2.x);
        let min_y = v0.y.min(v1.y).min(v2.y);
        let max_y = v0.y.max(v1.y).max(v2.y);
        let x0 = ((min_x - 0.5).ceil() as i64).max(0);
        let x1 = ((max_x - 0.5).floor() as i64).min(w - 1);
        let y0 = ((min_y - 0.5).ceil() as i64).max(0);
        let y1 = ((max_y - 0.5).floor() as i64).min(h - 1);
        if x0 > x1 || y0 > y1 {
            return;
        }
        let tl = [is_top_left(v1, v2), is_top_left(v2, v0), is_top_left(v0, v1)];
        let inv_area = 1.0 / area;
        for py in y0..=y1 {
            let fy = py as f64 + 0.5;
            let row = (py * w) as usize;
            for px in x0..=x1 {
                let fx = px as f64 + 0.5;
                let w0 = edge(v1, v2, fx, fy);
                let w1 = edge(v2, v0, fx, fy);
                let w2 = edge(v0, v1, fx, fy);
                let inside = (w0 > 0.0 || (w0 == 0.0 && tl[0]))
                    && (w1 > 0.0 || (w1 == 0.0 && tl[1]))
                    && (w2 > 0.0 || (w2 == 0.0 && tl[2]));
                if !inside {
                    continue;
                }
                let inv_z = (w0 * v0.inv_z + w1 * v1.inv_z + w2 * v2.inv_z) * inv_area;
                if !(inv_z > 0.0) {
                    continue;
                }
                let z = 1.0 / inv_z;
                let idx = row + px as usize;
                if z < self.zbuf[idx] {
                    self.zbuf[idx] = z;
                    self.overlay.depth[idx] = z as f32;
                    self.overlay.mask.as_mut()[idx] = 255;
                    let o = idx * 3;
                    self.overlay.rgb.as_mut()[o..o + 3].copy_from_slice(&rgb);
                }
            }
        }
    }
}

fn shade(color: [f64; 3], normal: Vec3, light: &LightSettings) -> [u8; 3] {
    let diffuse = normal.dot(-light.direction).max(0.0);
    let k = (light.ambient + (1.0 - light.ambient) * diffuse).clamp(0.0, 1.0);
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = ((color[c] * light.color[c] * k).clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    out
}

/// Draws world-space triangles into a fresh overlay.
pub fn rasterize_triangles<'a>(
    triangles: impl IntoIterator<Item = (&'a HomogeneousMatrix, &'a Triangle)>,
    intrinsics: &CameraIntrinsics,
    cam: &CameraPose,
    light: &LightSettings,
) -> Overlay {
    let mut overlay = Overlay::empty(intrinsics.width, intrinsics.height);
    let n = overlay.depth.len();
    let mut target = Target { intr: intrinsics, overlay: &mut overlay, zbuf: vec![f64::INFINITY; n] };
    let world_to_cam = cam.to_transform().inverse();
    let mut cached: Option<(*const HomogeneousMatrix, HomogeneousMatrix)> = None;
    for (pose, tri) in triangles {
        let to_cam = match cached {
            Some((ptr, t)) if std::ptr::eq(ptr, pose) => t,
            _ => {
                let t = world_to_cam.compose(pose);
                cached = Some((pose as *const _, t));
                t
            }
        };
        let pc = tri.vertices.map(|p| to_cam.transform_point(p));
        if pc.iter().all(|p| p.z < NEAR_PLANE) {
            continue;
        }
        let Some(mut normal) = (pc[1] - pc[0]).cross(pc[2] - pc[0]).normalized() else {
            continue;
        };
        if normal.dot(pc[0]) > 0.0 {
            normal = -normal;
        }
        let rgb = shade(tri.color, normal, light);
        let (poly, count) = clip_near(&pc);
        if count < 3 {
            continue;
        }
        let s0 = target.to_screen(poly[0]);
        for i in 1..count - 1 {
            let tri_s = [s0, target.to_screen(poly[i]), target.to_screen(poly[i + 1])];
            target.fill(tri_s, rgb);
        }
    }
    overlay
}

/// Renders the robot at `config`, with its root placed at `base_pose`, seen
/// from `cam`.
pub fn rasterize(
    scene: &RobotScene,
    model: &RobotModel,
    config: &JointConfig,
    base_pose: &HomogeneousMatrix,
    intrinsics: &CameraIntrinsics,
    cam: &CameraPose,
    light: &LightSettings,
) -> Result<Overlay, RenderError> {
    let poses: Vec<HomogeneousMatrix> = link_poses(model, config, FkOptions::default())?
        .iter()
        .map(|p| base_pose.compose(p))
        .collect();
    let tris = poses
        .iter()
        .zip(&scene.link_triangles)
        .flat_map(|(pose, tris)| tris.iter().map(move |t| (pose, t)));
    Ok(rasterize_triangles(tris, intrinsics, cam, light))
}

/// RGB color as 8-bit pixel.
pub fn rgb8(c: [f64; 3]) -> Rgb<u8> {
    Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RotationMatrix;
    use crate::robot::{parse_robot_description, Origin, Visual};

    fn cam500() -> CameraIntrinsics {
        CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    #[test]
    fn projection_examples() {
        let id = CameraPose::default();
        let p = project(&cam500(), &id, Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((p.u, p.v, p.depth), (320.0, 240.0, 2.0));
        let p = project(&cam500(), &id, Vec3::new(0.1, 0.0, 2.0)).unwrap();
        assert!((p.u - 345.0).abs() < 1e-12 && p.v == 240.0 && p.depth == 2.0);
        assert!(matches!(project(&cam500(), &id, Vec3::new(0.0, 0.0, -1.0)), Err(RenderError::BehindCamera(_))));
    }

    #[test]
    fn unproject_round_trip() {
        let cam = CameraPose::new(Vec3::new(0.3, -0.2, 1.0), RotationMatrix::from_rpy(0.2, 2.9, -0.4));
        for (u, v, d) in [(0.0, 0.0, 0.5), (639.5, 479.5, 3.0), (123.25, 400.0, 1.7)] {
            let p = unproject(&cam500(), &cam, u, v, d);
            let q = project(&cam500(), &cam, p).unwrap();
            assert!((q.u - u).abs() < 1e-6 && (q.v - v).abs() < 1e-6 && (q.depth - d).abs() < 1e-9);
        }
    }

    #[test]
    fn tessellation_counts() {
        let lib = MeshLibrary::new();
        let bx = tessellate_geometry(&Geometry::Box { size: Vec3::new(1.0, 1.0, 1.0) }, &lib).unwrap();
        assert_eq!(bx.len(), 12);
        let mut distinct: Vec<[u64; 3]> = bx.iter().flatten().map(|v| v.to_array().map(f64::to_bits)).collect();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 8);
        let cyl = tessellate_geometry(&Geometry::Cylinder { radius: 0.1, length: 1.0 }, &lib).unwrap();
        assert_eq!(cyl.len(), 2 * 24 + 2 * 24);
        let sph = tessellate_geometry(&Geometry::Sphere { radius: 0.1 }, &lib).unwrap();
        assert_eq!(sph.len(), 24 * 2 + 24 * 10 * 2);
    }

    #[test]
    fn obj_parsing() {
        let m = parse_obj("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1\n").unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2]]);
        assert!(matches!(parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"), Err(RenderError::BadMesh(_))));
        assert!(matches!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 5 5 5\nf 1 2 3\n"), Err(RenderError::BadMesh(_))));
        assert!(matches!(parse_obj("v 0 0 0\nf 1 2 3\n"), Err(RenderError::BadMesh(_))));
        let neg = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n").unwrap();
        assert_eq!(neg.triangles, vec![[0, 1, 2]]);
    }

    #[test]
    fn mesh_visual_uses_library() {
        let mesh = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        let mut lib = MeshLibrary::new();
        let v = Visual {
            geometry: Geometry::Mesh { path: "m.obj".into(), scale: Vec3::new(2.0, 2.0, 2.0) },
            origin: Origin::new(Vec3::new(0.0, 0.0, 1.0), Vec3::ZERO),
            color: [1.0, 0.0, 0.0],
        };
        assert!(matches!(tessellate(std::slice::from_ref(&v), &lib), Err(RenderError::MissingMesh(_))));
        lib.insert("m.obj", mesh);
        let tris = tessellate(&[v], &lib).unwrap();
        assert_eq!(tris[0].vertices[1], Vec3::new(2.0, 0.0, 1.0));
    }

    fn box_scene(boxes: &[(Vec3, f64)]) -> (RobotModel, RobotScene) {
        let mut xml = String::from("<robot name=\"boxes\"><link name=\"base\">");
        for (c, s) in boxes {
            xml += &format!(
                "<visual><origin xyz=\"{} {} {}\"/><geometry><box size=\"{s} {s} {s}\"/></geometry></visual>",
                c.x, c.y, c.z
            );
        }
        xml += "</link></robot>";
        let m = parse_robot_description(&xml).unwrap();
        let s = RobotScene::new(&m, &MeshLibrary::new()).unwrap();
        (m, s)
    }

    fn render(m: &RobotModel, s: &RobotScene, base: HomogeneousMatrix, cam: CameraPose) -> Overlay {
        rasterize(s, m, &JointConfig::new(), &base, &cam500(), &cam, &LightSettings::default()).unwrap()
    }

    #[test]
    fn outside_frustum_is_empty() {
        let (m, s) = box_scene(&[(Vec3::new(0.0, 0.0, -3.0), 1.0), (Vec3::new(50.0, 0.0, 2.0), 1.0)]);
        let o = render(&m, &s, HomogeneousMatrix::IDENTITY, CameraPose::default());
        assert_eq!(o.mask_count(), 0);
        assert!(o.depth.iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        // a box straddling the camera plane still covers the frame center
        let (m, s) = box_scene(&[(Vec3::new(0.0, 0.0, 0.2), 1.0)]);
        let o = render(&m, &s, HomogeneousMatrix::IDENTITY, CameraPose::default());
        assert!(o.invariant_holds());
        assert_eq!(o.mask.get_pixel(320, 240)[0], 255);
        assert!((o.depth_at(320, 240) - 0.7).abs() < 1e-6);
    }

    #[test]
    fn z_buffer_keeps_nearest() {
        let (m, s) = box_scene(&[(Vec3::new(0.0, 0.0, 3.5), 1.0), (Vec3::new(0.3, 0.0, 2.5), 1.0)]);
        let o = render(&m, &s, HomogeneousMatrix::IDENTITY, CameraPose::default());
        assert!(o.invariant_holds());
        // center pixel hits both boxes' front faces (z=2 and z=3); nearer wins
        assert!((o.depth_at(320, 240) - 2.0).abs() < 1e-6);
        assert!((o.depth_at(250, 240) - 3.0).abs() < 1e-6);
    }

    #[test]
    fn shared_edges_drawn_once() {
        // two triangles forming a square: every covered pixel must be hit once, so
        // drawing them in either order gives the same coverage as the quad area
        let t = |a: Vec3, b: Vec3, c: Vec3| Triangle { vertices: [a, b, c], color: [1.0; 3] };
        let z = 2.0;
        let (p0, p1, p2, p3) = (
            Vec3::new(-0.2, -0.2, z),
            Vec3::new(0.2, -0.2, z),
            Vec3::new(0.2, 0.2, z),
            Vec3::new(-0.2, 0.2, z),
        );
        let tris = [t(p0, p1, p2), t(p0, p2, p3)];
        let id = HomogeneousMatrix::IDENTITY;
        let o = rasterize_triangles(tris.iter().map(|t| (&id, t)), &cam500(), &CameraPose::default(), &LightSettings::default());
        assert_eq!(o.mask_count(), 100 * 100);
    }

    #[test]
    fn light_randomization() {
        assert_eq!(randomize_light(5), randomize_light(5));
        let mut zsum = 0.0;
        for seed in 0..1000 {
            let l = randomize_light(seed);
            assert!((l.direction.norm() - 1.0).abs() < 1e-9);
            assert!(l.direction.z >= 0.0);
            assert!(l.color.iter().all(|c| (0.6..=1.0).contains(c)));
            assert!((0.2..=0.5).contains(&l.ambient));
            zsum += l.direction.z;
        }
        let mean = zsum / 1000.0;
        assert!(mean > 0.4 && mean < 0.6, "{mean}");
    }

    #[test]
    fn depth_png_saturates() {
        let mut o = Overlay::empty(2, 1);
        o.depth[0] = 70.0;
        o.mask.as_mut()[0] = 255;
        let d = o.depth_mm();
        assert_eq!(d.get_pixel(0, 0)[0], 65535);
        assert_eq!(d.get_pixel(1, 0)[0], 0);
    }
}
