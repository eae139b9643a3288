//! Grid-seeded local k-means superpixels (SLIC family) for grayscale frames.
//!
//! Each pixel carries the feature `(intensity, x, y)`. The distance between a
//! pixel and a seed is
//!
//! ```text
//! D = sqrt(dI^2 + (m / S)^2 * ds^2)
//! ```
//!
//! where `S` is the grid spacing, `m` the compactness, `dI` the absolute
//! intensity difference and `ds` the Euclidean pixel distance. A pixel is
//! compared only against seeds whose `2S x 2S` window covers it, plus the
//! seed it is currently assigned to; keeping the current seed as a candidate
//! makes the clustering objective non-increasing between assignment steps.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::imgcore::{neighbours4, GrayFrame, SuperpixelMap};

/// Mean cell area, in pixels, used when the cell count is derived from the
/// frame size.
pub const DEFAULT_CELL_AREA: f64 = 100.0;
pub const DEFAULT_COMPACTNESS: f64 = 0.2;
pub const DEFAULT_MAX_ITERATIONS: usize = 10;
pub const DEFAULT_CONVERGENCE_TOL: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperpixelConfig {
    /// Requested number of cells `K`.
    pub target_cells: usize,
    /// Spatial-vs-intensity weight `m`.
    pub compactness: f64,
    pub max_iterations: usize,
    /// Stop once the mean seed displacement (pixels) drops to this value.
    pub convergence_tol: f64,
}

impl SuperpixelConfig {
    pub fn new(target_cells: usize) -> Self {
        Self {
            target_cells,
            compactness: DEFAULT_COMPACTNESS,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            convergence_tol: DEFAULT_CONVERGENCE_TOL,
        }
    }

    /// Default configuration for a frame: one cell per [`DEFAULT_CELL_AREA`]
    /// pixels.
    pub fn for_dims(width: usize, height: usize) -> Self {
        Self::new(cells_for_area(width, height, DEFAULT_CELL_AREA))
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if width < 2 || height < 2 {
            return Err(Error::invalid(format!(
                "superpixels need a frame of at least 2x2, got {width}x{height}"
            )));
        }
        if self.target_cells == 0 {
            return Err(Error::invalid("target cell count must be at least 1"));
        }
        if self.target_cells > width * height {
            return Err(Error::invalid(format!(
                "target cell count {} exceeds pixel count {}",
                self.target_cells,
                width * height
            )));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(Error::invalid(format!(
                "compactness must be positive, got {}",
                self.compactness
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol < 0.0 {
            return Err(Error::invalid("convergence tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// `floor(width * height / area)`, at least 1.
pub fn cells_for_area(width: usize, height: usize, area: f64) -> usize {
    (((width * height) as f64 / area).floor() as usize).max(1)
}

/// Grid spacing `S = sqrt(N / K)`.
pub fn grid_spacing(width: usize, height: usize, target_cells: usize) -> f64 {
    ((width * height) as f64 / target_cells as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Seed {
    intensity: f64,
    x: f64,
    y: f64,
}

/// A SLIC run with its diagnostics.
#[derive(Debug, Clone)]
pub struct SlicOutcome {
    pub map: SuperpixelMap,
    /// Raw nearest-seed assignment before connectivity repair.
    pub raw_assignment: Vec<u32>,
    /// Sum of `D^2` after each assignment step.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub spacing: f64,
    pub seed_count: usize,
}

pub fn slic_segment(frame: &GrayFrame, config: &SuperpixelConfig) -> Result<SuperpixelMap> {
    slic_segment_traced(frame, config).map(|o| o.map)
}

pub fn slic_segment_traced(frame: &GrayFrame, config: &SuperpixelConfig) -> Result<SlicOutcome> {
    let (w, h) = frame.dims();
    config.validate(w, h)?;
    let spacing = grid_spacing(w, h, config.target_cells);
    let pixels = frame.pixels();

    // Initial partition: a regular grid of nx x ny rectangles.
    let nx = ((w as f64 / spacing).round() as usize).clamp(1, w);
    let ny = ((h as f64 / spacing).round() as usize).clamp(1, h);
    let mut labels: Vec<u32> = (0..w * h)
        .map(|p| {
            let (x, y) = (p % w, p / w);
            ((y * ny / h) * nx + x * nx / w) as u32
        })
        .collect();
    let mut seeds = vec![
        Seed {
            intensity: 0.0,
            x: 0.0,
            y: 0.0
        };
        nx * ny
    ];
    update_seeds(pixels, w, &labels, &mut seeds);

    let spatial_weight = (config.compactness / spacing).powi(2);
    let dist2 = |p: usize, s: &Seed| {
        let di = pixels[p] - s.intensity;
        let dx = (p % w) as f64 - s.x;
        let dy = (p / w) as f64 - s.y;
        di * di + spatial_weight * (dx * dx + dy * dy)
    };

    let mut objective = Vec::with_capacity(config.max_iterations);
    let mut best = vec![0.0f64; w * h];
    let mut iterations = 0;
    for _ in 0..config.max_iterations {
        iterations += 1;
        for p in 0..w * h {
            best[p] = dist2(p, &seeds[labels[p] as usize]);
        }
        for (k, seed) in seeds.iter().enumerate() {
            let k = k as u32;
            let x0 = (seed.x - spacing).ceil().max(0.0) as usize;
            let x1 = ((seed.x + spacing).floor() as isize).min(w as isize - 1);
            let y0 = (seed.y - spacing).ceil().max(0.0) as usize;
            let y1 = ((seed.y + spacing).floor() as isize).min(h as isize - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let p = y * w + x;
                    let d = dist2(p, seed);
                    if d < best[p] || (d == best[p] && k < labels[p]) {
                        best[p] = d;
                        labels[p] = k;
                    }
                }
            }
        }
        objective.push(best.iter().sum());

        let previous = seeds.clone();
        update_seeds(pixels, w, &labels, &mut seeds);
        let shift: f64 = previous
            .iter()
            .zip(&seeds)
            .map(|(a, b)| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt())
            .sum::<f64>()
            / seeds.len() as f64;
        if shift <= config.convergence_tol {
            break;
        }
    }

    let map = enforce_connectivity_by_intensity(&labels, frame, spacing)?;
    Ok(SlicOutcome {
        map,
        raw_assignment: labels,
        objective,
        iterations,
        spacing,
        seed_count: seeds.len(),
    })
}

/// Moves each seed to the mean feature of its pixels; empty clusters keep
/// their previous seed.
fn update_seeds(pixels: &[f64], w: usize, labels: &[u32], seeds: &mut [Seed]) {
    let mut acc = vec![(0.0f64, 0.0f64, 0.0f64, 0usize); seeds.len()];
    for (p, &l) in labels.iter().enumerate() {
        let a = &mut acc[l as usize];
        a.0 += pixels[p];
        a.1 += (p % w) as f64;
        a.2 += (p / w) as f64;
        a.3 += 1;
    }
    for (seed, &(i, x, y, n)) in seeds.iter_mut().zip(&acc) {
        if n > 0 {
            let n = n as f64;
            *seed = Seed {
                intensity: i / n,
                x: x / n,
                y: y / n,
            };
        }
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
    intensity_sum: Vec<f64>,
}

impl DisjointSet {
    fn new(sizes: Vec<usize>, intensity_sum: Vec<f64>) -> Self {
        Self {
            parent: (0..sizes.len()).collect(),
            size: sizes,
            intensity_sum,
        }
    }

    fn find(&mut self, mut a: usize) -> usize {
        while self.parent[a] != a {
            self.parent[a] = self.parent[self.parent[a]];
            a = self.parent[a];
        }
        a
    }

    fn mean(&self, root: usize) -> f64 {
        self.intensity_sum[root] / self.size[root] as f64
    }

    /// Union keeping the smaller index as root.
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        let (root, child) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[child] = root;
        self.size[root] += self.size[child];
        self.intensity_sum[root] += self.intensity_sum[child];
    }
}

/// Which neighbour absorbs an undersized fragment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeTarget {
    /// The neighbouring component with the most pixels.
    Largest,
    /// The neighbouring component whose mean intensity is closest to the
    /// fragment's own mean.
    ClosestIntensity,
}

/// Splits an assignment into 4-connected components, folds every component
/// smaller than `S^2 / 4` pixels into its largest neighbouring component, and
/// renumbers the survivors densely in scan order.
pub fn enforce_connectivity(
    assignment: &[u32],
    width: usize,
    height: usize,
    spacing: f64,
) -> Result<SuperpixelMap> {
    repair_connectivity(
        assignment,
        None,
        width,
        height,
        spacing,
        MergeTarget::Largest,
    )
}

/// Same as [`enforce_connectivity`], but fragments join the neighbour with
/// the closest mean intensity in `frame`. Ties fall back to the larger, then
/// lower-indexed, neighbour. This is the repair used by [`slic_segment`].
pub fn enforce_connectivity_by_intensity(
    assignment: &[u32],
    frame: &GrayFrame,
    spacing: f64,
) -> Result<SuperpixelMap> {
    let (w, h) = frame.dims();
    repair_connectivity(
        assignment,
        Some(frame.pixels()),
        w,
        h,
        spacing,
        MergeTarget::ClosestIntensity,
    )
}

fn repair_connectivity(
    assignment: &[u32],
    intensities: Option<&[f64]>,
    width: usize,
    height: usize,
    spacing: f64,
    target_rule: MergeTarget,
) -> Result<SuperpixelMap> {
    if width == 0 || height == 0 || assignment.len() != width * height {
        return Err(Error::invalid(format!(
            "assignment of {} values does not match {width}x{height}",
            assignment.len()
        )));
    }
    let n = width * height;
    let min_size = spacing * spacing / 4.0;

    let mut component = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut sums = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let label = assignment[start];
        component[start] = id;
        queue.push_back(start);
        let (mut size, mut sum) = (0, 0.0);
        while let Some(p) = queue.pop_front() {
            size += 1;
            sum += intensities.map_or(0.0, |px| px[p]);
            for q in neighbours4(p, width, height) {
                if component[q] == usize::MAX && assignment[q] == label {
                    component[q] = id;
                    queue.push_back(q);
                }
            }
        }
        sizes.push(size);
        sums.push(sum);
    }

    let mut edges = Vec::new();
    for p in 0..n {
        let a = component[p];
        if p % width + 1 < width && component[p + 1] != a {
            edges.push((a.min(component[p + 1]), a.max(component[p + 1])));
        }
        if p + width < n && component[p + width] != a {
            edges.push((a.min(component[p + width]), a.max(component[p + width])));
        }
    }
    edges.sort_unstable();
    edges.dedup();

    let count = sizes.len();
    let mut sets = DisjointSet::new(sizes, sums);
    loop {
        let mut merged = false;
        for c in 0..count {
            let root = sets.find(c);
            if root != c || (sets.size[root] as f64) >= min_size {
                continue;
            }
            let own_mean = sets.mean(root);
            // (neighbour root, size, intensity distance)
            let mut target: Option<(usize, usize, f64)> = None;
            for &(a, b) in &edges {
                let (ra, rb) = (sets.find(a), sets.find(b));
                let other = if ra == root && rb != root {
                    rb
                } else if rb == root && ra != root {
                    ra
                } else {
                    continue;
                };
                let size = sets.size[other];
                let dist = match target_rule {
                    MergeTarget::Largest => 0.0,
                    MergeTarget::ClosestIntensity => (sets.mean(other) - own_mean).abs(),
                };
                let better = match target {
                    None => true,
                    Some((t, ts, td)) => {
                        dist < td || (dist == td && (size > ts || (size == ts && other < t)))
                    }
                };
                if better {
                    target = Some((other, size, dist));
                }
            }
            if let Some((t, _, _)) = target {
                sets.union(root, t);
                merged = true;
            }
        }
        if !merged {
            break;
        }
    }

    let mut dense = vec![u32::MAX; count];
    let mut next = 0u32;
    let mut cells = Vec::with_capacity(n);
    for &c in &component {
        let root = sets.find(c);
        if dense[root] == u32::MAX {
            dense[root] = next;
            next += 1;
        }
        cells.push(dense[root]);
    }
    Ok(SuperpixelMap::from_raw_unchecked(
        width,
        height,
        cells,
        next as usize,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell() {
        let f = GrayFrame::new(5, 4, (0..20).map(|v| v as f64 / 19.0).collect()).unwrap();
        let map = slic_segment(&f, &SuperpixelConfig::new(1)).unwrap();
        assert_eq!(map.cell_count(), 1);
        map.validate().unwrap();
    }

    #[test]
    fn uniform_frame_gives_quadrants() {
        let f = GrayFrame::filled(20, 20, 0.4).unwrap();
        for m in [DEFAULT_COMPACTNESS, 10.0] {
            let config = SuperpixelConfig {
                compactness: m,
                ..SuperpixelConfig::new(4)
            };
            let out = slic_segment_traced(&f, &config).unwrap();
            assert_eq!(out.map.cell_count(), 4);
            for y in 0..20 {
                for x in 0..20 {
                    let expected = (y / 10) * 2 + x / 10;
                    assert_eq!(
                        out.map.cell_at(x, y) as usize,
                        expected,
                        "pixel ({x},{y}), m={m}"
                    );
                }
            }
        }
    }

    #[test]
    fn two_band_boundary_follows_edge() {
        let f = GrayFrame::new(
            20,
            10,
            (0..200)
                .map(|p| if p % 20 < 10 { 0.0 } else { 1.0 })
                .collect(),
        )
        .unwrap();
        let map = slic_segment(&f, &SuperpixelConfig::new(2)).unwrap();
        assert_eq!(map.cell_count(), 2);
        for y in 0..10 {
            for x in 0..20 {
                assert_eq!(map.cell_at(x, y), u32::from(x >= 10), "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let f = GrayFrame::filled(4, 4, 0.0).unwrap();
        assert!(slic_segment(&f, &SuperpixelConfig::new(17)).is_err());
        assert!(slic_segment(&f, &SuperpixelConfig::new(0)).is_err());
        let tiny = GrayFrame::filled(1, 4, 0.0).unwrap();
        assert!(slic_segment(&tiny, &SuperpixelConfig::new(1)).is_err());
    }

    #[test]
    fn isolated_pixel_is_absorbed() {
        let mut a = vec![1u32; 25];
        a[12] = 0;
        let map = enforce_connectivity(&a, 5, 5, 5.0).unwrap();
        assert_eq!(map.cell_count(), 1);
        assert!(map.cells().iter().all(|&c| c == 0));
    }

    #[test]
    fn connected_assignment_only_renumbered() {
        let a: Vec<u32> = (0..36).map(|p| if p % 6 < 3 { 7 } else { 3 }).collect();
        let map = enforce_connectivity(&a, 6, 6, 3.0).unwrap();
        assert_eq!(map.cell_count(), 2);
        for p in 0..36 {
            assert_eq!(map.cells()[p], u32::from(p % 6 >= 3));
        }
    }

    #[test]
    fn checkerboard_resolves_to_valid_partition() {
        let a: Vec<u32> = (0..16).map(|p| ((p % 4 + p / 4) % 2) as u32).collect();
        let map = enforce_connectivity(&a, 4, 4, 2.0).unwrap();
        map.validate().unwrap();
        // same checkerboard with a larger spacing must merge
        let merged = enforce_connectivity(&a, 4, 4, 4.0).unwrap();
        merged.validate().unwrap();
        assert!(merged.cell_count() < 16);
    }

    #[test]
    fn intensity_merge_prefers_similar_neighbour() {
        // 3-pixel fragment of cell 2 (bright) touches a large dark cell 0 and
        // a smaller bright cell 1
        let w = 8;
        let mut a = vec![0u32; 64];
        let mut px = vec![0.1; 64];
        for p in 0..64 {
            if p % w >= 5 {
                a[p] = 1;
                px[p] = 0.9;
            }
        }
        for p in [4, 12, 20] {
            a[p] = 2;
            px[p] = 0.85;
        }
        let f = GrayFrame::new(w, 8, px).unwrap();
        let by_size = enforce_connectivity(&a, w, 8, 4.0).unwrap();
        assert_eq!(by_size.cell_at(4, 0), by_size.cell_at(0, 0));
        let by_intensity = enforce_connectivity_by_intensity(&a, &f, 4.0).unwrap();
        assert_eq!(by_intensity.cell_at(4, 0), by_intensity.cell_at(7, 0));
        by_intensity.validate().unwrap();
    }

    #[test]
    fn cells_for_area_floor() {
        assert_eq!(cells_for_area(256, 216, 100.0), 552);
        assert_eq!(cells_for_area(5, 5, 100.0), 1);
    }
}
