//! Procedural video world: moving shapes rasterized with analytically exact
//! depth maps and point tracks. This stands in for learned depth/track
//! extractors so every control signal has a closed-form ground truth.
//!
//! Dataset layout written by [`make_corpus`]:
//! `out_dir/manifest.json` + `clip_{i}.lvt` (rgb record, depth record) +
//! `clip_{i}.tracks.json`. Pointmaps are not stored; they are re-rendered
//! deterministically from the track table.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{read_tensor_from, write_tensor_to, Tensor};

pub const BACKGROUND_DEPTH: f32 = 1.0;
pub const BACKGROUND_COLOR: [f32; 3] = [0.06, 0.06, 0.10];

/// Fixed injective colormap for depth-colorized points (and, in the toy
/// preset, shape fills): c(d) = (d, 1-d, 0.5).
pub fn depth_colormap(d: f32) -> [f32; 3] {
    [d, 1.0 - d, 0.5]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpriteKind {
    Circle,
    Rect,
}

/// One moving shape. Position follows x(t) = start + t * velocity exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sprite {
    pub kind: SpriteKind,
    /// Depth layer in (0, 1]; smaller is closer to the camera.
    pub depth_layer: f32,
    pub start: (f32, f32),
    /// Pixels per frame (vx, vy).
    pub velocity: (f32, f32),
    /// Radius (circle) or half-extent (rect).
    pub size: f32,
    pub color: [f32; 3],
}

impl Sprite {
    pub fn center_at(&self, frame: usize) -> (f32, f32) {
        (
            self.start.0 + frame as f32 * self.velocity.0,
            self.start.1 + frame as f32 * self.velocity.1,
        )
    }

    fn covers(&self, frame: usize, x: f32, y: f32) -> bool {
        let (cx, cy) = self.center_at(frame);
        match self.kind {
            SpriteKind::Circle => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy <= self.size * self.size
            }
            SpriteKind::Rect => (x - cx).abs() <= self.size && (y - cy).abs() <= self.size,
        }
    }

    fn partially_visible(&self, frame: usize, w: usize, h: usize) -> bool {
        let (cx, cy) = self.center_at(frame);
        cx + self.size >= 0.0
            && cx - self.size <= (w - 1) as f32
            && cy + self.size >= 0.0
            && cy - self.size <= (h - 1) as f32
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub shapes: Vec<Sprite>,
    /// Track points are seeded on a track_grid x track_grid lattice.
    pub track_grid: usize,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_frames == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::InvalidArgument {
                op: "scene_spec",
                detail: "empty frame geometry".into(),
            });
        }
        for s in &self.shapes {
            if !(s.depth_layer > 0.0 && s.depth_layer <= 1.0) {
                return Err(Error::InvalidArgument {
                    op: "scene_spec",
                    detail: format!("depth_layer {} outside (0, 1]", s.depth_layer),
                });
            }
        }
        for (i, a) in self.shapes.iter().enumerate() {
            for b in &self.shapes[i + 1..] {
                if a.depth_layer == b.depth_layer {
                    return Err(Error::InvalidArgument {
                        op: "scene_spec",
                        detail: format!("two shapes share depth layer {}", a.depth_layer),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Generation parameters for random toy scenes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenePreset {
    pub num_frames: usize,
    pub height: usize,
    pub width: usize,
    pub track_grid: usize,
    pub min_shapes: usize,
    pub max_shapes: usize,
    /// Bind shape fill colors to the depth colormap (keeps the dense control
    /// signal maximally informative at toy scale).
    pub color_from_depth: bool,
}

impl Default for ScenePreset {
    fn default() -> Self {
        ScenePreset {
            num_frames: 13,
            height: 32,
            width: 32,
            track_grid: 7,
            min_shapes: 2,
            max_shapes: 3,
            color_from_depth: true,
        }
    }
}

impl ScenePreset {
    /// Deterministic random scene for `seed`. The first shape stays at least
    /// partially visible for the whole clip; later shapes may drift out.
    pub fn random_spec(&self, seed: u64) -> SceneSpec {
        let mut rng = Rng::new(seed).stream("scene");
        let n = self.min_shapes as u64 + rng.below((self.max_shapes - self.min_shapes + 1) as u64);
        let mut shapes = Vec::with_capacity(n as usize);
        let f = self.num_frames as f32;
        for i in 0..n {
            let kind = if rng.coin(0.5) { SpriteKind::Circle } else { SpriteKind::Rect };
            // Distinct layers by construction: evenly spread then jittered.
            let depth_layer = ((i as f32 + 0.5) / n as f32 * 0.8 + 0.1
                + rng.uniform_in(-0.03, 0.03))
            .clamp(0.05, 0.95);
            let size = rng.uniform_in(4.0, 8.0);
            let (start, velocity) = if i == 0 {
                // Anchor shape: crosses at most a quarter of the frame.
                let start = (
                    rng.uniform_in(0.3, 0.7) * self.width as f32,
                    rng.uniform_in(0.3, 0.7) * self.height as f32,
                );
                let v = (
                    rng.uniform_in(-0.25, 0.25) * self.width as f32 / f,
                    rng.uniform_in(-0.25, 0.25) * self.height as f32 / f,
                );
                (start, v)
            } else {
                let start = (
                    rng.uniform_in(0.1, 0.9) * self.width as f32,
                    rng.uniform_in(0.1, 0.9) * self.height as f32,
                );
                let v = (rng.uniform_in(-1.5, 1.5), rng.uniform_in(-1.5, 1.5));
                (start, v)
            };
            let color = if self.color_from_depth {
                depth_colormap(depth_layer)
            } else {
                [rng.uniform(), rng.uniform(), rng.uniform()]
            };
            shapes.push(Sprite { kind, depth_layer, start, velocity, size, color });
        }
        SceneSpec {
            seed,
            num_frames: self.num_frames,
            height: self.height,
            width: self.width,
            shapes,
            track_grid: self.track_grid,
        }
    }

    pub fn with_frames(mut self, num_frames: usize) -> Self {
        self.num_frames = num_frames;
        self
    }
}

/// One tracked point's state at one frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackState {
    pub frame: usize,
    pub x: f32,
    pub y: f32,
    pub depth: f32,
    pub visible: bool,
}

/// A point seeded at frame 0, following its attached surface's kinematics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Track {
    pub point_id: usize,
    pub states: Vec<TrackState>,
}

/// One synthetic clip: RGB, exact depth, exact tracks, and the spec that
/// produced them.
#[derive(Debug, Clone)]
pub struct SceneClip {
    pub rgb: Tensor,
    pub depth: Tensor,
    pub tracks: Vec<Track>,
    pub spec: SceneSpec,
}

/// Front-most covering shape index at a pixel, or None for background.
fn front_shape(spec: &SceneSpec, frame: usize, x: f32, y: f32) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in spec.shapes.iter().enumerate() {
        if s.covers(frame, x, y) {
            best = match best {
                Some(b) if spec.shapes[b].depth_layer <= s.depth_layer => Some(b),
                _ => Some(i),
            };
        }
    }
    best
}

/// Render a spec into frames, depth maps, and tracks. Deterministic.
pub fn gen_scene(spec: &SceneSpec) -> Result<SceneClip> {
    spec.validate()?;
    let (f, h, w) = (spec.num_frames, spec.height, spec.width);

    for (i, s) in spec.shapes.iter().enumerate() {
        if !(0..f).any(|t| s.partially_visible(t, w, h)) {
            return Err(Error::InvalidArgument {
                op: "gen_scene",
                detail: format!("shape {i} is fully off-screen for the entire clip"),
            });
        }
    }
    for t in 0..f {
        if !spec.shapes.iter().any(|s| s.partially_visible(t, w, h)) {
            return Err(Error::InvalidArgument {
                op: "gen_scene",
                detail: format!("no shape is even partially visible at frame {t}"),
            });
        }
    }

    let mut rgb = vec![0.0f32; f * 3 * h * w];
    let mut depth = vec![0.0f32; f * h * w];
    for t in 0..f {
        for i in 0..h {
            for j in 0..w {
                let (x, y) = (j as f32, i as f32);
                let (color, d) = match front_shape(spec, t, x, y) {
                    Some(si) => (spec.shapes[si].color, spec.shapes[si].depth_layer),
                    None => (BACKGROUND_COLOR, BACKGROUND_DEPTH),
                };
                for c in 0..3 {
                    rgb[((t * 3 + c) * h + i) * w + j] = color[c];
                }
                depth[(t * h + i) * w + j] = d;
            }
        }
    }

    let tracks = tracks_for_window(spec, 0..f);

    Ok(SceneClip {
        rgb: Tensor::new(&[f, 3, h, w], rgb)?,
        depth: Tensor::new(&[f, 1, h, w], depth)?,
        tracks,
        spec: spec.clone(),
    })
}

/// Seed a fresh track lattice at `window.start` and follow the attached
/// surfaces' kinematics through the window. Frame indices in the returned
/// states are absolute. A point is visible while its rounded pixel is in
/// bounds and its surface is still front-most there.
pub fn tracks_for_window(spec: &SceneSpec, window: Range<usize>) -> Vec<Track> {
    let (h, w, g) = (spec.height, spec.width, spec.track_grid);
    let seed_frame = window.start;
    let mut tracks = Vec::with_capacity(g * g);
    for gi in 0..g {
        for gj in 0..g {
            let sx = (gj as f32 + 0.5) * w as f32 / g as f32;
            let sy = (gi as f32 + 0.5) * h as f32 / g as f32;
            let attached = front_shape(spec, seed_frame, sx, sy);
            let (vel, d) = match attached {
                Some(si) => (spec.shapes[si].velocity, spec.shapes[si].depth_layer),
                None => ((0.0, 0.0), BACKGROUND_DEPTH),
            };
            let mut states = Vec::with_capacity(window.len());
            for t in window.clone() {
                let dt = (t - seed_frame) as f32;
                let x = sx + dt * vel.0;
                let y = sy + dt * vel.1;
                let (pi, pj) = (y.round() as isize, x.round() as isize);
                let in_bounds = pi >= 0 && pi < h as isize && pj >= 0 && pj < w as isize;
                let visible = in_bounds && {
                    let front = front_shape(spec, t, pj as f32, pi as f32)
                        .map(|si| spec.shapes[si].depth_layer)
                        .unwrap_or(BACKGROUND_DEPTH);
                    front == d
                };
                states.push(TrackState { frame: t, x, y, depth: d, visible });
            }
            tracks.push(Track { point_id: gi * g + gj, states });
        }
    }
    tracks
}

/// Render sparse control frames for a frame range: zero everywhere except at
/// visible tracked points, which carry the colormap of `depth_map(depth)`.
/// `num_points` tracks are chosen (all when equal to the available count,
/// otherwise sampled without replacement).
pub fn render_pointmap_range(
    tracks: &[Track],
    frames: Range<usize>,
    height: usize,
    width: usize,
    num_points: usize,
    rng: &mut Rng,
    depth_map: impl Fn(f32) -> f32,
) -> Result<Tensor> {
    if num_points == 0 {
        return Err(Error::InvalidArgument {
            op: "render_pointmap",
            detail: "num_points == 0".into(),
        });
    }
    if num_points > tracks.len() {
        return Err(Error::InvalidArgument {
            op: "render_pointmap",
            detail: format!("num_points {} > available {}", num_points, tracks.len()),
        });
    }
    let chosen: Vec<usize> = if num_points == tracks.len() {
        (0..tracks.len()).collect()
    } else {
        // Partial Fisher-Yates over indices.
        let mut idx: Vec<usize> = (0..tracks.len()).collect();
        for i in 0..num_points {
            let j = i + rng.below((idx.len() - i) as u64) as usize;
            idx.swap(i, j);
        }
        idx.truncate(num_points);
        idx
    };
    let f = frames.len();
    let mut data = vec![0.0f32; f * 3 * height * width];
    for ti in &chosen {
        for st in &tracks[*ti].states {
            if !frames.contains(&st.frame) || !st.visible {
                continue;
            }
            let t = st.frame - frames.start;
            let (pi, pj) = (st.y.round() as isize, st.x.round() as isize);
            if pi < 0 || pi >= height as isize || pj < 0 || pj >= width as isize {
                continue;
            }
            let color = depth_colormap(depth_map(st.depth));
            for c in 0..3 {
                data[((t * 3 + c) * height + pi as usize) * width + pj as usize] = color[c];
            }
        }
    }
    Tensor::new(&[f, 3, height, width], data)
}

/// Sparse control frames for a whole clip, colorized by raw depth.
pub fn render_pointmap(clip: &SceneClip, num_points: usize, rng: &mut Rng) -> Result<Tensor> {
    render_pointmap_range(
        &clip.tracks,
        0..clip.spec.num_frames,
        clip.spec.height,
        clip.spec.width,
        num_points,
        rng,
        |d| d,
    )
}

// ── Corpus on disk ───────────────────────────────────────────────────

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub clip_file: String,
    pub tracks_file: String,
    pub spec: SceneSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub base_seed: u64,
    pub preset: ScenePreset,
    pub clips: Vec<ManifestEntry>,
}

/// Generate `count` clips under `out_dir` with per-clip seeds
/// `base_seed + index`. Rerunning with the same arguments rewrites an
/// identical corpus.
pub fn make_corpus(
    preset: &ScenePreset,
    count: usize,
    base_seed: u64,
    out_dir: &Path,
) -> Result<Manifest> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let mut clips = Vec::with_capacity(count);
    for i in 0..count {
        let spec = preset.random_spec(base_seed + i as u64);
        let clip = gen_scene(&spec)?;
        let clip_file = format!("clip_{i}.lvt");
        let tracks_file = format!("clip_{i}.tracks.json");

        let mut buf = Vec::new();
        write_tensor_to(&mut buf, &clip.rgb).expect("vec write");
        write_tensor_to(&mut buf, &clip.depth).expect("vec write");
        crate::fsutil::atomic_write(&out_dir.join(&clip_file), &buf)?;
        crate::fsutil::write_json(&out_dir.join(&tracks_file), &clip.tracks)?;
        clips.push(ManifestEntry { index: i, clip_file, tracks_file, spec });
    }
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        base_seed,
        preset: preset.clone(),
        clips,
    };
    crate::fsutil::write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<Manifest> {
    let manifest: Manifest = crate::fsutil::read_json(&dir.join("manifest.json"))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Format {
            path: dir.join("manifest.json").display().to_string(),
            detail: format!(
                "format version {} != supported {}",
                manifest.format_version, MANIFEST_VERSION
            ),
        });
    }
    Ok(manifest)
}

pub fn load_clip(dir: &Path, entry: &ManifestEntry) -> Result<SceneClip> {
    let path = dir.join(&entry.clip_file);
    let mut f = std::fs::File::open(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let name = path.display().to_string();
    let rgb = read_tensor_from(&mut f, &name)?;
    let depth = read_tensor_from(&mut f, &name)?;
    let tracks: Vec<Track> = crate::fsutil::read_json(&dir.join(&entry.tracks_file))?;
    Ok(SceneClip { rgb, depth, tracks, spec: entry.spec.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::record_size;

    fn simple_spec() -> SceneSpec {
        SceneSpec {
            seed: 1,
            num_frames: 5,
            height: 16,
            width: 16,
            shapes: vec![
                Sprite {
                    kind: SpriteKind::Circle,
                    depth_layer: 0.4,
                    start: (8.0, 8.0),
                    velocity: (0.0, 0.0),
                    size: 4.0,
                    color: [1.0, 0.0, 0.0],
                },
                Sprite {
                    kind: SpriteKind::Rect,
                    depth_layer: 0.7,
                    start: (4.0, 10.0),
                    velocity: (1.0, 0.0),
                    size: 3.0,
                    color: [0.0, 1.0, 0.0],
                },
            ],
            track_grid: 4,
        }
    }

    #[test]
    fn same_spec_twice_is_bit_identical() {
        let a = gen_scene(&simple_spec()).unwrap();
        let b = gen_scene(&simple_spec()).unwrap();
        assert_eq!(a.rgb.data(), b.rgb.data());
        assert_eq!(a.depth.data(), b.depth.data());
        assert_eq!(
            serde_json::to_string(&a.tracks).unwrap(),
            serde_json::to_string(&b.tracks).unwrap()
        );
    }

    #[test]
    fn static_shape_tracks_are_constant() {
        let mut spec = simple_spec();
        spec.shapes.truncate(1); // static circle only
        let clip = gen_scene(&spec).unwrap();
        for tr in &clip.tracks {
            let x0 = tr.states[0].x;
            let y0 = tr.states[0].y;
            for st in &tr.states {
                assert_eq!(st.x, x0);
                assert_eq!(st.y, y0);
            }
        }
    }

    #[test]
    fn unit_velocity_gives_arithmetic_progression() {
        let spec = simple_spec();
        let clip = gen_scene(&spec).unwrap();
        // Find a track attached to the moving rect (depth 0.7).
        let tr = clip
            .tracks
            .iter()
            .find(|t| t.states[0].depth == 0.7)
            .expect("a lattice point lands on the rect");
        for (t, st) in tr.states.iter().enumerate() {
            assert_eq!(st.x, tr.states[0].x + t as f32, "x(t) = x0 + t*vx");
            assert_eq!(st.y, tr.states[0].y);
        }
    }

    #[test]
    fn depth_equals_front_most_layer_exhaustively() {
        let spec = simple_spec();
        let clip = gen_scene(&spec).unwrap();
        let (f, h, w) = (spec.num_frames, spec.height, spec.width);
        for t in 0..f {
            for i in 0..h {
                for j in 0..w {
                    let d = clip.depth.data()[(t * h + i) * w + j];
                    let expect = front_shape(&spec, t, j as f32, i as f32)
                        .map(|si| spec.shapes[si].depth_layer)
                        .unwrap_or(BACKGROUND_DEPTH);
                    assert_eq!(d, expect, "frame {t} pixel ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn track_positions_match_kinematics_exactly() {
        let clip = gen_scene(&simple_spec()).unwrap();
        for tr in &clip.tracks {
            let s0 = &tr.states[0];
            let vel = clip
                .spec
                .shapes
                .iter()
                .find(|s| s.depth_layer == s0.depth)
                .map(|s| s.velocity)
                .unwrap_or((0.0, 0.0));
            for (t, st) in tr.states.iter().enumerate() {
                assert_eq!(st.x, s0.x + t as f32 * vel.0);
                assert_eq!(st.y, s0.y + t as f32 * vel.1);
            }
        }
    }

    #[test]
    fn fully_offscreen_shape_rejected() {
        let mut spec = simple_spec();
        spec.shapes[1].start = (-100.0, -100.0);
        spec.shapes[1].velocity = (0.0, 0.0);
        assert!(gen_scene(&spec).is_err());
    }

    #[test]
    fn duplicate_depth_layers_rejected() {
        let mut spec = simple_spec();
        spec.shapes[1].depth_layer = spec.shapes[0].depth_layer;
        assert!(gen_scene(&spec).is_err());
    }

    #[test]
    fn pointmap_sparsity_bound() {
        let clip = gen_scene(&simple_spec()).unwrap();
        let mut rng = Rng::new(3);
        let pm = render_pointmap(&clip, 10, &mut rng).unwrap();
        let (h, w) = (clip.spec.height, clip.spec.width);
        for t in 0..clip.spec.num_frames {
            let mut nonzero_pixels = 0;
            for i in 0..h {
                for j in 0..w {
                    let any = (0..3).any(|c| pm.data()[((t * 3 + c) * h + i) * w + j] != 0.0);
                    if any {
                        nonzero_pixels += 1;
                    }
                }
            }
            assert!(nonzero_pixels <= 10, "frame {t} has {nonzero_pixels} lit pixels");
        }
    }

    #[test]
    fn pointmap_depth_zero_paints_endpoint_color() {
        // Hand-build one track at depth 0 (visible, with identity depth map).
        let tracks = vec![Track {
            point_id: 0,
            states: vec![TrackState { frame: 0, x: 2.0, y: 3.0, depth: 0.0, visible: true }],
        }];
        let mut rng = Rng::new(0);
        let pm = render_pointmap_range(&tracks, 0..1, 8, 8, 1, &mut rng, |d| d).unwrap();
        let px = |c: usize| pm.data()[(c * 8 + 3) * 8 + 2];
        assert_eq!([px(0), px(1), px(2)], depth_colormap(0.0));
    }

    #[test]
    fn pointmap_invalid_counts_rejected() {
        let clip = gen_scene(&simple_spec()).unwrap();
        let mut rng = Rng::new(0);
        assert!(render_pointmap(&clip, 0, &mut rng).is_err());
        assert!(render_pointmap(&clip, clip.tracks.len() + 1, &mut rng).is_err());
    }

    #[test]
    fn offscreen_frame_is_all_zero() {
        // Single point that leaves the frame after t=0.
        let tracks = vec![Track {
            point_id: 0,
            states: vec![
                TrackState { frame: 0, x: 7.0, y: 7.0, depth: 0.5, visible: true },
                TrackState { frame: 1, x: 70.0, y: 7.0, depth: 0.5, visible: false },
            ],
        }];
        let mut rng = Rng::new(0);
        let pm = render_pointmap_range(&tracks, 0..2, 8, 8, 1, &mut rng, |d| d).unwrap();
        let frame1 = &pm.data()[3 * 8 * 8..];
        assert!(frame1.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn corpus_zero_count_is_empty_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_corpus(&ScenePreset::default(), 0, 7, dir.path()).unwrap();
        assert!(m.clips.is_empty());
        assert!(dir.path().join("manifest.json").exists());
        assert!(!dir.path().join("clip_0.lvt").exists());
    }

    #[test]
    fn corpus_rerun_is_identical() {
        let preset = ScenePreset { num_frames: 6, ..ScenePreset::default() };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        make_corpus(&preset, 2, 99, d1.path()).unwrap();
        make_corpus(&preset, 2, 99, d2.path()).unwrap();
        for f in ["manifest.json", "clip_0.lvt", "clip_1.lvt", "clip_0.tracks.json"] {
            let a = std::fs::read(d1.path().join(f)).unwrap();
            let b = std::fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "{f} differs across reruns");
        }
    }

    #[test]
    fn corpus_clip_file_size_matches_format_arithmetic() {
        let preset = ScenePreset::default();
        let dir = tempfile::tempdir().unwrap();
        let m = make_corpus(&preset, 3, 11, dir.path()).unwrap();
        let (f, h, w) = (preset.num_frames, preset.height, preset.width);
        // rgb record + depth record: F*(3+1)*H*W*4 payload bytes plus headers.
        let expected = record_size(&[f, 3, h, w]) + record_size(&[f, 1, h, w]);
        assert_eq!(expected, f * (3 + 1) * h * w * 4 + 2 * (8 + 16));
        for e in &m.clips {
            let len = std::fs::metadata(dir.path().join(&e.clip_file)).unwrap().len() as usize;
            assert_eq!(len, expected);
        }
    }

    #[test]
    fn corpus_roundtrip_loads_identical_clip() {
        let preset = ScenePreset::default();
        let dir = tempfile::tempdir().unwrap();
        let m = make_corpus(&preset, 1, 5, dir.path()).unwrap();
        let clip = load_clip(dir.path(), &m.clips[0]).unwrap();
        let direct = gen_scene(&m.clips[0].spec).unwrap();
        assert_eq!(clip.rgb.data(), direct.rgb.data());
        assert_eq!(clip.depth.data(), direct.depth.data());
        assert_eq!(clip.tracks.len(), direct.tracks.len());
    }

    #[test]
    fn random_specs_satisfy_invariants() {
        let preset = ScenePreset::default();
        for seed in 0..30 {
            let spec = preset.random_spec(seed);
            spec.validate().unwrap();
            gen_scene(&spec).unwrap();
        }
    }
}
