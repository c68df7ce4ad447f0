use super::network::{LossPlacement, LstmNetwork, NetworkShape};
use crate::error::Result;
use crate::rng::Rng;

/// Small random problem used to compare analytic and numeric gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSpec {
    pub shape: NetworkShape,
    pub steps: usize,
    pub seed: u64,
    /// Central-difference step.
    pub epsilon: f64,
    /// Parameters start uniform in `[-init_range, init_range]`.
    pub init_range: f64,
    pub loss: LossPlacement,
}

impl Default for GradCheckSpec {
    fn default() -> Self {
        Self {
            shape: NetworkShape {
                inputs: 10,
                units: 8,
                classes: 5,
            },
            steps: 7,
            seed: 1234,
            epsilon: 1e-4,
            init_range: 0.5,
            loss: LossPlacement::AllFrames,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter block and index with the largest error.
    pub worst_block: &'static str,
    pub worst_index: usize,
    /// Largest error per parameter block.
    pub per_block: Vec<(&'static str, f64)>,
    pub parameters_checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

// Gradients smaller than this are compared in absolute terms.
const REL_FLOOR: f64 = 1e-8;

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares BPTT gradients with central finite differences in `f64`.
pub fn gradient_check(spec: &GradCheckSpec, tolerance: f64) -> Result<GradCheckReport> {
    gradient_check_with(spec, tolerance, |_| {})
}

/// As [`gradient_check`], but `tamper` may modify the analytic gradients
/// before comparison (for fault injection).
pub fn gradient_check_with(
    spec: &GradCheckSpec,
    tolerance: f64,
    tamper: impl FnOnce(&mut LstmNetwork<f64>),
) -> Result<GradCheckReport> {
    spec.shape.validate()?;
    let mut net = LstmNetwork::<f64>::init_uniform(spec.shape, spec.init_range, spec.seed);
    let mut rng = Rng::stream(spec.seed, 2);
    let frames: Vec<Vec<f64>> = (0..spec.steps.max(1))
        .map(|_| (0..spec.shape.inputs).map(|_| rng.normal()).collect())
        .collect();
    let label = rng.below(spec.shape.classes);

    let (_, mut analytic) = net.loss_and_gradients(&frames, label, spec.loss)?;
    tamper(&mut analytic);

    let mut per_block = Vec::new();
    let mut worst = (0.0f64, "", 0usize);
    let mut checked = 0;
    let analytic_blocks: Vec<Vec<f64>> = analytic.blocks().iter().map(|(_, b)| b.to_vec()).collect();
    for (block_idx, grads) in analytic_blocks.iter().enumerate() {
        let mut block_max = 0.0f64;
        let name = net.blocks()[block_idx].0;
        for (i, &g) in grads.iter().enumerate() {
            let original = net.blocks()[block_idx].1[i];
            net.blocks_mut()[block_idx].1[i] = original + spec.epsilon;
            let (plus, _) = net.loss_and_gradients(&frames, label, spec.loss)?;
            net.blocks_mut()[block_idx].1[i] = original - spec.epsilon;
            let (minus, _) = net.loss_and_gradients(&frames, label, spec.loss)?;
            net.blocks_mut()[block_idx].1[i] = original;
            let numeric = (plus - minus) / (2.0 * spec.epsilon);
            let err = relative_error(g, numeric);
            block_max = block_max.max(err);
            if err > worst.0 {
                worst = (err, name, i);
            }
            checked += 1;
        }
        per_block.push((name, block_max));
    }

    Ok(GradCheckReport {
        max_relative_error: worst.0,
        worst_block: worst.1,
        worst_index: worst.2,
        per_block,
        parameters_checked: checked,
        tolerance,
        passed: worst.0 < tolerance,
    })
}
