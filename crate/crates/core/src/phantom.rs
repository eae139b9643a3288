//! Synthetic cine sequences with exact ground truth: a disk translating across
//! the canvas, and a cyclically contracting annulus.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{GrayFrame, Label, LabelMask};
use crate::tracking::CineSequence;

pub const BACKGROUND_INTENSITY: f64 = 0.2;
pub const DISK_INTENSITY: f64 = 0.7;
pub const ANNULUS_BACKGROUND_INTENSITY: f64 = 0.6;
pub const WALL_INTENSITY: f64 = 0.1;
pub const CAVITY_INTENSITY: f64 = 0.9;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.05;

/// Minimum clearance between any shape and the image border, in pixels.
pub const BORDER_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub frame_count: usize,
    /// Standard deviation of the additive Gaussian noise.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl PhantomSpec {
    pub fn new(width: usize, height: usize, frame_count: usize) -> Self {
        Self {
            width,
            height,
            frame_count,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::invalid(format!(
                "phantom canvas {}x{} is too small",
                self.width, self.height
            )));
        }
        if self.frame_count < 2 {
            return Err(Error::invalid(format!(
                "phantom needs at least 2 frames, got {}",
                self.frame_count
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid(
                "noise sigma must be finite and non-negative",
            ));
        }
        Ok(())
    }

    fn fits(&self, cx: f64, cy: f64, r: f64) -> bool {
        cx - r >= BORDER_MARGIN
            && cy - r >= BORDER_MARGIN
            && cx + r <= (self.width - 1) as f64 - BORDER_MARGIN
            && cy + r <= (self.height - 1) as f64 - BORDER_MARGIN
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircleParams {
    /// Disk center at frame 0, in pixel coordinates.
    pub center: (f64, f64),
    pub radius: f64,
    /// Per-frame translation.
    pub shift: (f64, f64),
}

impl CircleParams {
    /// Places the trajectory symmetrically about the canvas center.
    pub fn centered(spec: &PhantomSpec, radius: f64, shift: (f64, f64)) -> Self {
        let travel = (spec.frame_count.saturating_sub(1)) as f64;
        let center = (
            ((spec.width - 1) as f64 / 2.0 - travel * shift.0 / 2.0).round(),
            ((spec.height - 1) as f64 / 2.0 - travel * shift.1 / 2.0).round(),
        );
        Self {
            center,
            radius,
            shift,
        }
    }

    pub fn center_at(&self, t: usize) -> (f64, f64) {
        (
            self.center.0 + t as f64 * self.shift.0,
            self.center.1 + t as f64 * self.shift.1,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnulusParams {
    pub center: (f64, f64),
    /// Radii at end-diastole.
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Fractional radius reduction at end-systole, in `(0, 1)`; 0 freezes the shape.
    pub contraction: f64,
    /// Frame at which the annulus is largest (end-diastole).
    pub phase_offset: usize,
    /// Clean intensities of background, ring and cavity.
    pub intensities: [f64; 3],
}

impl AnnulusParams {
    pub fn centered(
        spec: &PhantomSpec,
        inner_radius: f64,
        outer_radius: f64,
        contraction: f64,
    ) -> Self {
        Self {
            center: (
                ((spec.width - 1) / 2) as f64,
                ((spec.height - 1) / 2) as f64,
            ),
            inner_radius,
            outer_radius,
            contraction,
            phase_offset: 0,
            intensities: [
                ANNULUS_BACKGROUND_INTENSITY,
                WALL_INTENSITY,
                CAVITY_INTENSITY,
            ],
        }
    }

    /// Radius scale `1 - c sin^2(pi t / T)`, evaluated on the folded phase so
    /// that frames `t` and `T - t` are bit-identical.
    pub fn scale_at(&self, t: usize, frame_count: usize) -> f64 {
        let phase = (t + frame_count - self.phase_offset % frame_count) % frame_count;
        let folded = phase.min(frame_count - phase);
        let s = (std::f64::consts::PI * folded as f64 / frame_count as f64).sin();
        1.0 - self.contraction * s * s
    }

    pub fn ed_index(&self, frame_count: usize) -> usize {
        self.phase_offset % frame_count
    }

    pub fn es_index(&self, frame_count: usize) -> usize {
        (self.phase_offset + frame_count / 2) % frame_count
    }
}

/// A phantom sequence plus the exact mask at every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub sequence: CineSequence,
    pub truth: Vec<LabelMask>,
}

fn noisy_frame(
    clean: Vec<f64>,
    spec: &PhantomSpec,
    noise: Option<&Normal<f64>>,
    rng: &mut ChaCha8Rng,
) -> GrayFrame {
    let pixels = match noise {
        Some(n) => clean
            .into_iter()
            .map(|v| (v + n.sample(rng)).clamp(0.0, 1.0))
            .collect(),
        None => clean,
    };
    GrayFrame::from_raw_unchecked(spec.width, spec.height, pixels)
}

fn noise_source(spec: &PhantomSpec) -> (Option<Normal<f64>>, ChaCha8Rng) {
    let normal = (spec.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.noise_sigma).expect("sigma validated"));
    (normal, ChaCha8Rng::seed_from_u64(spec.seed))
}

/// A bright disk on a dark background translating by `shift` each frame.
/// Disk membership is `d^2 < r^2` on pixel centers. ED is frame 0, ES the
/// last frame.
pub fn moving_circle(spec: &PhantomSpec, circle: &CircleParams) -> Result<Phantom> {
    spec.validate()?;
    if circle.radius.is_nan() || circle.radius <= 0.0 {
        return Err(Error::invalid("circle radius must be positive"));
    }
    for t in 0..spec.frame_count {
        let (cx, cy) = circle.center_at(t);
        if !spec.fits(cx, cy, circle.radius) {
            return Err(Error::invalid(format!(
                "disk at frame {t} (center ({cx}, {cy}), radius {}) leaves the canvas",
                circle.radius
            )));
        }
    }
    let (w, h) = (spec.width, spec.height);
    let (noise, mut rng) = noise_source(spec);
    let r2 = circle.radius * circle.radius;
    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut truth = Vec::with_capacity(spec.frame_count);
    for t in 0..spec.frame_count {
        let (cx, cy) = circle.center_at(t);
        let inside: Vec<bool> = (0..w * h)
            .map(|p| {
                let dx = (p % w) as f64 - cx;
                let dy = (p / w) as f64 - cy;
                dx * dx + dy * dy < r2
            })
            .collect();
        let clean = inside
            .iter()
            .map(|&i| {
                if i {
                    DISK_INTENSITY
                } else {
                    BACKGROUND_INTENSITY
                }
            })
            .collect();
        frames.push(noisy_frame(clean, spec, noise.as_ref(), &mut rng));
        let labels = inside
            .iter()
            .map(|&i| u8::from(i) * Label::RightVentricle.value())
            .collect();
        truth.push(LabelMask::from_raw_unchecked(w, h, labels));
    }
    let last = spec.frame_count - 1;
    let sequence = CineSequence::new(frames, 0, last, truth[0].clone(), Some(truth[last].clone()))?;
    Ok(Phantom { sequence, truth })
}

/// A ring (label 2) enclosing a cavity (label 3) whose radii contract and
/// relax once per cycle. ED is the phase of largest radius, ES half a cycle
/// later.
pub fn beating_annulus(spec: &PhantomSpec, annulus: &AnnulusParams) -> Result<Phantom> {
    spec.validate()?;
    if !(annulus.inner_radius > 0.0 && annulus.inner_radius < annulus.outer_radius) {
        return Err(Error::invalid(format!(
            "annulus radii must satisfy 0 < inner < outer, got {} and {}",
            annulus.inner_radius, annulus.outer_radius
        )));
    }
    if annulus.intensities.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("annulus intensities must lie in [0, 1]"));
    }
    if !(0.0..1.0).contains(&annulus.contraction) {
        return Err(Error::invalid(format!(
            "contraction must lie in [0, 1), got {}",
            annulus.contraction
        )));
    }
    let (cx, cy) = annulus.center;
    if !spec.fits(cx, cy, annulus.outer_radius) {
        return Err(Error::invalid("annulus leaves the canvas"));
    }
    let (w, h) = (spec.width, spec.height);
    let (noise, mut rng) = noise_source(spec);
    let mut frames = Vec::with_capacity(spec.frame_count);
    let mut truth = Vec::with_capacity(spec.frame_count);
    for t in 0..spec.frame_count {
        let s = annulus.scale_at(t, spec.frame_count);
        let inner2 = (annulus.inner_radius * s).powi(2);
        let outer2 = (annulus.outer_radius * s).powi(2);
        let labels: Vec<u8> = (0..w * h)
            .map(|p| {
                let dx = (p % w) as f64 - cx;
                let dy = (p / w) as f64 - cy;
                let d2 = dx * dx + dy * dy;
                if d2 < inner2 {
                    Label::LvCavity.value()
                } else if d2 < outer2 {
                    Label::Myocardium.value()
                } else {
                    Label::Background.value()
                }
            })
            .collect();
        let [bg, wall, cavity] = annulus.intensities;
        let clean = labels
            .iter()
            .map(|&l| match l {
                3 => cavity,
                2 => wall,
                _ => bg,
            })
            .collect();
        frames.push(noisy_frame(clean, spec, noise.as_ref(), &mut rng));
        truth.push(LabelMask::from_raw_unchecked(w, h, labels));
    }
    let (ed, es) = (
        annulus.ed_index(spec.frame_count),
        annulus.es_index(spec.frame_count),
    );
    let sequence = CineSequence::new(frames, ed, es, truth[ed].clone(), Some(truth[es].clone()))?;
    Ok(Phantom { sequence, truth })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_circle_frames_identical() {
        let mut spec = PhantomSpec::new(40, 40, 5);
        spec.noise_sigma = 0.0;
        let p = moving_circle(&spec, &CircleParams::centered(&spec, 10.0, (0.0, 0.0))).unwrap();
        let frames = p.sequence.frames();
        assert!(frames.iter().all(|f| f == &frames[0]));
        assert!(p.truth.iter().all(|m| m == &p.truth[0]));
    }

    #[test]
    fn final_disk_membership() {
        let mut spec = PhantomSpec::new(64, 64, 10);
        spec.noise_sigma = 0.0;
        let c = CircleParams::centered(&spec, 20.0, (1.0, 0.0));
        let p = moving_circle(&spec, &c).unwrap();
        let (x0, y0) = (c.center.0 as usize, c.center.1 as usize);
        for t in 0..10 {
            assert_eq!(c.center_at(t).0, (x0 + t) as f64);
        }
        let probe = x0 + 9 + 19;
        for (t, m) in p.truth.iter().enumerate() {
            assert_eq!(m.get(probe, y0) == 1, t == 9, "frame {t}");
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let spec = PhantomSpec {
            seed: 99,
            ..PhantomSpec::new(32, 32, 3)
        };
        let c = CircleParams::centered(&spec, 8.0, (1.0, 0.0));
        let a = moving_circle(&spec, &c).unwrap();
        assert_eq!(a, moving_circle(&spec, &c).unwrap());
        let b = moving_circle(&PhantomSpec { seed: 100, ..spec }, &c).unwrap();
        assert_ne!(a.sequence.frames()[0], b.sequence.frames()[0]);
    }

    #[test]
    fn rejects_escaping_trajectory() {
        let spec = PhantomSpec::new(64, 64, 10);
        let c = CircleParams {
            center: (30.0, 32.0),
            radius: 20.0,
            shift: (3.0, 0.0),
        };
        assert!(moving_circle(&spec, &c).is_err());
        assert!(moving_circle(&PhantomSpec::new(64, 64, 1), &c).is_err());
    }

    #[test]
    fn annulus_area_and_symmetry() {
        let mut spec = PhantomSpec::new(128, 128, 20);
        spec.noise_sigma = 0.0;
        let a = AnnulusParams::centered(&spec, 22.0, 36.0, 0.3);
        let p = beating_annulus(&spec, &a).unwrap();
        assert_eq!(p.sequence.es_index(), 10);
        let area = |m: &LabelMask| m.count(Label::Myocardium) as f64;
        let ed_area = area(&p.truth[0]);
        let es_area = area(&p.truth[10]);
        assert!((es_area / (0.49 * ed_area) - 1.0).abs() <= 0.03);
        for t in 1..20 {
            assert_eq!(p.truth[t], p.truth[20 - t]);
        }
        let still = beating_annulus(
            &spec,
            &AnnulusParams {
                contraction: 0.0,
                ..a
            },
        )
        .unwrap();
        assert!(still.truth.iter().all(|m| m == &still.truth[0]));
        assert!(beating_annulus(
            &spec,
            &AnnulusParams {
                inner_radius: 40.0,
                ..a
            }
        )
        .is_err());
    }
}
