//! Randomized accuracy check of [`combine`] against exact matrix composition.
//!
//! Each trial draws two random affine motions `Ma` (1 to 2) and `Mb` (2 to 3),
//! builds the two known flows of the chosen mode from their matrices with
//! random references, composes them, and compares the result with the flow
//! built directly from the exact matrix of the unknown motion. Errors are
//! taken over the valid area of the computed flow only.
//!
//! Randomness comes from `ChaCha8Rng`: trial `k` uses the generator seeded
//! with `seed_from_u64(seed)` on stream `k`, so reports depend only on the
//! seed and not on thread scheduling.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::compose::{combine, ComposeMode};
use crate::error::{FlowError, Result};
use crate::exec;
use crate::field::{FlowField, Point, Reference};
use crate::transform::AffineTransform;

/// True magnitudes below this are left out of the relative error.
pub const REL_MIN_MAGNITUDE: f64 = 1e-6;

/// Error statistics over all valid vectors of all trials.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyReport {
    pub n_vectors: u64,
    pub mean_abs_err: f64,
    pub max_abs_err: f64,
    pub frac_abs_below_005: f64,
    pub frac_abs_below_0005: f64,
    pub frac_rel_below_0005: f64,
    pub frac_rel_below_00005: f64,
}

impl AccuracyReport {
    /// Single-line `key=value` record.
    pub fn to_record(&self) -> String {
        format!(
            "n_vectors={} mean_abs_err={:.6} max_abs_err={:.6} frac_abs_below_005={:.6} \
             frac_abs_below_0005={:.6} frac_rel_below_0005={:.6} frac_rel_below_00005={:.6}",
            self.n_vectors,
            self.mean_abs_err,
            self.max_abs_err,
            self.frac_abs_below_005,
            self.frac_abs_below_0005,
            self.frac_rel_below_0005,
            self.frac_rel_below_00005
        )
    }
}

const TABLE_HEADER: [&str; 8] = [
    "mode",
    "n_vectors",
    "mean_abs",
    "max_abs",
    "abs<0.05",
    "abs<0.005",
    "rel<0.005",
    "rel<0.0005",
];

/// Aligned text table with one row per mode.
pub fn format_table(rows: &[(ComposeMode, AccuracyReport)]) -> String {
    let mut cells = vec![TABLE_HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for (mode, r) in rows {
        cells.push(vec![
            mode.to_string(),
            r.n_vectors.to_string(),
            format!("{:.4}", r.mean_abs_err),
            format!("{:.4}", r.max_abs_err),
            format!("{:.4}", r.frac_abs_below_005),
            format!("{:.4}", r.frac_abs_below_0005),
            format!("{:.4}", r.frac_rel_below_0005),
            format!("{:.4}", r.frac_rel_below_00005),
        ]);
    }
    let widths: Vec<usize> = (0..TABLE_HEADER.len())
        .map(|k| cells.iter().map(|row| row[k].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c:>w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

impl fmt::Display for AccuracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "vectors            {}", self.n_vectors)?;
        writeln!(f, "E_abs mean (px)    {:.6}", self.mean_abs_err)?;
        writeln!(f, "E_abs max (px)     {:.6}", self.max_abs_err)?;
        writeln!(f, "E_abs < 0.05 px    {:.4}", self.frac_abs_below_005)?;
        writeln!(f, "E_abs < 0.005 px   {:.4}", self.frac_abs_below_0005)?;
        writeln!(f, "E_rel < 0.005      {:.4}", self.frac_rel_below_0005)?;
        write!(f, "E_rel < 0.0005     {:.4}", self.frac_rel_below_00005)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct ErrorStats {
    n: u64,
    sum: f64,
    max: f64,
    abs_005: u64,
    abs_0005: u64,
    n_rel: u64,
    rel_0005: u64,
    rel_00005: u64,
}

impl ErrorStats {
    fn push(&mut self, err: f64, truth_magnitude: f64) {
        self.n += 1;
        self.sum += err;
        self.max = self.max.max(err);
        self.abs_005 += u64::from(err < 0.05);
        self.abs_0005 += u64::from(err < 0.005);
        if truth_magnitude >= REL_MIN_MAGNITUDE {
            let rel = err / truth_magnitude;
            self.n_rel += 1;
            self.rel_0005 += u64::from(rel < 0.005);
            self.rel_00005 += u64::from(rel < 0.0005);
        }
    }

    fn merge(mut self, o: &ErrorStats) -> Self {
        self.n += o.n;
        self.sum += o.sum;
        self.max = self.max.max(o.max);
        self.abs_005 += o.abs_005;
        self.abs_0005 += o.abs_0005;
        self.n_rel += o.n_rel;
        self.rel_0005 += o.rel_0005;
        self.rel_00005 += o.rel_00005;
        self
    }

    fn report(&self) -> AccuracyReport {
        let frac = |k: u64, n: u64| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        AccuracyReport {
            n_vectors: self.n,
            mean_abs_err: if self.n == 0 { 0.0 } else { self.sum / self.n as f64 },
            max_abs_err: self.max,
            frac_abs_below_005: frac(self.abs_005, self.n),
            frac_abs_below_0005: frac(self.abs_0005, self.n),
            frac_rel_below_0005: frac(self.rel_0005, self.n_rel),
            frac_rel_below_00005: frac(self.rel_00005, self.n_rel),
        }
    }
}

/// End-point error statistics of `computed` against `truth` over the valid
/// area of `computed`.
pub fn compare(computed: &FlowField, truth: &FlowField) -> Result<AccuracyReport> {
    Ok(compare_stats(computed, truth)?.report())
}

fn compare_stats(computed: &FlowField, truth: &FlowField) -> Result<ErrorStats> {
    if computed.shape() != truth.shape() {
        return Err(FlowError::ShapeMismatch(format!(
            "computed {:?} vs truth {:?}",
            computed.shape(),
            truth.shape()
        )));
    }
    let (a, b) = (computed.vectors(), truth.vectors());
    let mut stats = ErrorStats::default();
    for ((r, c), &valid) in computed.mask().indexed_iter() {
        if valid {
            let (tx, ty) = (b[[r, c, 0]], b[[r, c, 1]]);
            let err = (a[[r, c, 0]] - tx).hypot(a[[r, c, 1]] - ty);
            stats.push(err, tx.hypot(ty));
        }
    }
    Ok(stats)
}

/// Which motions a trial may draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MotionKinds {
    /// Rotation, translation or scaling, equally likely.
    Affine,
    /// Translations only.
    Translations,
}

/// Full parameter set of a verification run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialConfig {
    pub mode: ComposeMode,
    pub trials: usize,
    /// `(height, width)`.
    pub size: (usize, usize),
    pub max_magnitude: f64,
    pub seed: u64,
    pub kinds: MotionKinds,
    /// Fixed `[first input, second input, output]` references instead of
    /// random ones.
    pub references: Option<[Reference; 3]>,
}

impl TrialConfig {
    pub fn new(mode: ComposeMode, trials: usize, size: (usize, usize), max_magnitude: f64, seed: u64) -> Self {
        Self {
            mode,
            trials,
            size,
            max_magnitude,
            seed,
            kinds: MotionKinds::Affine,
            references: None,
        }
    }
}

/// Runs `trials` random compositions in `mode` and aggregates the errors.
pub fn run_trials(
    mode: ComposeMode,
    trials: usize,
    size: (usize, usize),
    max_magnitude: f64,
    seed: u64,
) -> Result<AccuracyReport> {
    run(&TrialConfig::new(mode, trials, size, max_magnitude, seed))
}

/// Runs a verification with full control over the draw.
pub fn run(config: &TrialConfig) -> Result<AccuracyReport> {
    if config.trials == 0 {
        return Err(FlowError::InvalidArgument("at least one trial is required".into()));
    }
    if !(config.max_magnitude > 0.0 && config.max_magnitude.is_finite()) {
        return Err(FlowError::InvalidArgument(format!(
            "maximum magnitude must be positive, got {}",
            config.max_magnitude
        )));
    }
    if config.size.0 < 2 || config.size.1 < 2 {
        return Err(FlowError::InvalidArgument(format!(
            "field must be at least 2x2, got {}x{}",
            config.size.0, config.size.1
        )));
    }
    let per_trial: Vec<ErrorStats> = if exec::is_deterministic() {
        (0..config.trials)
            .map(|k| run_one(config, k))
            .collect::<Result<_>>()?
    } else {
        (0..config.trials)
            .into_par_iter()
            .map(|k| run_one(config, k))
            .collect::<Result<_>>()?
    };
    Ok(per_trial
        .iter()
        .fold(ErrorStats::default(), |acc, s| acc.merge(s))
        .report())
}

/// Inputs and exact answer of one composition trial.
#[derive(Clone, Debug)]
pub struct Trial {
    pub first: FlowField,
    pub second: FlowField,
    pub output_reference: Reference,
    pub truth: FlowField,
}

/// Draws trial `index` of `config`.
pub fn draw_trial(config: &TrialConfig, index: usize) -> Result<Trial> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(index as u64);
    let ma = random_motion(&mut rng, config.size, config.max_magnitude, config.kinds);
    let mb = random_motion(&mut rng, config.size, config.max_magnitude, config.kinds);
    let mut pick = || {
        if rng.random::<bool>() {
            Reference::Source
        } else {
            Reference::Target
        }
    };
    let [r1, r2, out] = config.references.unwrap_or_else(|| [pick(), pick(), pick()]);

    let m12 = ma;
    let m23 = mb;
    let m13 = mb.then_after(&ma);
    let ((k1, k2), unknown) = match config.mode {
        ComposeMode::One => ((m23, m13), m12),
        ComposeMode::Two => ((m12, m13), m23),
        ComposeMode::Three => ((m12, m23), m13),
    };
    let size = config.size;
    Ok(Trial {
        first: FlowField::from_matrix(&k1, size, r1, None)?,
        second: FlowField::from_matrix(&k2, size, r2, None)?,
        output_reference: out,
        truth: FlowField::from_matrix(&unknown, size, out, None)?,
    })
}

fn run_one(config: &TrialConfig, index: usize) -> Result<ErrorStats> {
    let t = draw_trial(config, index)?;
    let computed = combine(&t.first, &t.second, config.mode, Some(t.output_reference))?;
    compare_stats(&computed, &t.truth)
}

/// Largest source-reference vector length of `m` over the four grid corners
/// and `extra`. For rotations, scalings and translations the maximum over the
/// grid is attained there.
pub fn corner_magnitude(m: &AffineTransform, size: (usize, usize), extra: Point) -> f64 {
    let (h, w) = size;
    let (xm, ym) = ((w - 1) as f64, (h - 1) as f64);
    [
        Point::new(0.0, 0.0),
        Point::new(xm, 0.0),
        Point::new(0.0, ym),
        Point::new(xm, ym),
        extra,
    ]
    .into_iter()
    .map(|p| {
        let q = m.apply(p);
        (q.x - p.x).hypot(q.y - p.y)
    })
    .fold(0.0, f64::max)
}

/// Distance from `center` to the farthest grid corner.
fn max_radius(center: Point, size: (usize, usize)) -> f64 {
    corner_magnitude(
        &AffineTransform::scaling(center.x, center.y, 2.0),
        size,
        center,
    )
}

/// A random rotation, translation or scaling whose largest source-reference
/// vector on the grid has a length drawn uniformly from `(0, max_magnitude]`.
pub fn random_motion<R: Rng>(
    rng: &mut R,
    size: (usize, usize),
    max_magnitude: f64,
    kinds: MotionKinds,
) -> AffineTransform {
    let (h, w) = size;
    let kind = match kinds {
        MotionKinds::Affine => rng.random_range(0..3u8),
        MotionKinds::Translations => 1,
    };
    // (0, max]
    let m = max_magnitude * (1.0 - rng.random::<f64>());
    let positive = rng.random::<bool>();
    match kind {
        1 => {
            let phi = rng.random_range(0.0..std::f64::consts::TAU);
            AffineTransform::translation(m * phi.cos(), m * phi.sin())
        }
        k => {
            let center = Point::new(
                rng.random_range(0.0..=(w - 1) as f64),
                rng.random_range(0.0..=(h - 1) as f64),
            );
            let r = max_radius(center, size);
            if k == 0 {
                // |R p - p| = 2 r sin(theta / 2)
                let theta = 2.0 * (m / (2.0 * r)).min(1.0).asin();
                let deg = theta.to_degrees();
                AffineTransform::rotation(center.x, center.y, if positive { deg } else { -deg })
            } else {
                // |s p - p| = |s - 1| r
                let d = m / r;
                let factor = if positive || d >= 1.0 { 1.0 + d } else { 1.0 - d };
                AffineTransform::scaling(center.x, center.y, factor)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn motion_magnitude_is_within_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let size = (150, 250);
        for _ in 0..300 {
            let m = random_motion(&mut rng, size, 50.0, MotionKinds::Affine);
            let peak = corner_magnitude(&m, size, Point::new(0.0, 0.0));
            assert!(peak > 0.0 && peak <= 50.0 + 1e-9, "{peak}");
            // Brute force over the grid agrees with the corner rule.
            let mut brute: f64 = 0.0;
            for r in (0..150).step_by(7).chain([149]) {
                for c in (0..250).step_by(7).chain([249]) {
                    let p = Point::new(c as f64, r as f64);
                    let q = m.apply(p);
                    brute = brute.max((q.x - p.x).hypot(q.y - p.y));
                }
            }
            assert!(brute <= peak + 1e-9);
        }
    }

    #[test]
    fn same_seed_same_report() {
        let a = run_trials(ComposeMode::Two, 3, (40, 60), 10.0, 11).unwrap();
        let b = run_trials(ComposeMode::Two, 3, (40, 60), 10.0, 11).unwrap();
        assert_eq!(a, b);
        let c = run_trials(ComposeMode::Two, 3, (40, 60), 10.0, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn translations_compose_exactly() {
        for mode in ComposeMode::ALL {
            let mut cfg = TrialConfig::new(mode, 8, (30, 40), 5.0, 3);
            cfg.kinds = MotionKinds::Translations;
            let r = run(&cfg).unwrap();
            assert!(r.n_vectors > 0);
            assert!(r.max_abs_err < 1e-9, "mode {mode}: {}", r.max_abs_err);
            assert_eq!(r.frac_abs_below_0005, 1.0);
        }
    }

    #[test]
    fn report_invariants_and_formatting() {
        let r = run_trials(ComposeMode::Three, 4, (40, 60), 15.0, 5).unwrap();
        assert!(r.mean_abs_err <= r.max_abs_err);
        for f in [
            r.frac_abs_below_005,
            r.frac_abs_below_0005,
            r.frac_rel_below_0005,
            r.frac_rel_below_00005,
        ] {
            assert!((0.0..=1.0).contains(&f));
        }
        let rec = r.to_record();
        assert!(rec.starts_with(&format!("n_vectors={} ", r.n_vectors)));
        assert_eq!(rec.split(' ').count(), 7);
        let table = format_table(&[(ComposeMode::Three, r)]);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].len(), lines[1].len());
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(run_trials(ComposeMode::One, 0, (10, 10), 1.0, 0).is_err());
        assert!(run_trials(ComposeMode::One, 1, (10, 10), 0.0, 0).is_err());
        assert!(run_trials(ComposeMode::One, 1, (1, 10), 1.0, 0).is_err());
    }

    #[test]
    fn compare_excludes_tiny_truth_from_relative_error() {
        let truth = FlowField::zeros((3, 3), Reference::Source).unwrap();
        let r = compare(&truth, &truth).unwrap();
        assert_eq!(r.n_vectors, 9);
        assert_eq!(r.mean_abs_err, 0.0);
        assert_eq!(r.frac_rel_below_0005, 0.0);
    }
}
