use super::{ArchConfig, BoundParams, HeadKind};
use crate::autodiff::{sigmoid, Tape, Var};
use crate::error::Result;

/// Decodes embeddings `B × d` into raw outputs `B × 1`: logits for the linear
/// classifier, values for the MLP regressor (d → d → 1, relu hidden layer).
pub fn head_forward(arch: &ArchConfig, params: &BoundParams, tape: &mut Tape, e: Var) -> Result<Var> {
    match arch.head {
        HeadKind::LinearClassifier => {
            let w = params.get("head.w")?;
            let b = params.get("head.b")?;
            let z = tape.matmul_nt(e, w)?;
            tape.add(z, b)
        }
        HeadKind::MlpRegressor => {
            let w1 = params.get("head.w1")?;
            let b1 = params.get("head.b1")?;
            let w2 = params.get("head.w2")?;
            let b2 = params.get("head.b2")?;
            let h = tape.matmul_nt(e, w1)?;
            let h = tape.add(h, b1)?;
            let h = tape.relu(h);
            let y = tape.matmul_nt(h, w2)?;
            tape.add(y, b2)
        }
    }
}

/// Scores from raw head outputs: probabilities for classification, the raw
/// value for regression.
pub fn to_predictions(head: HeadKind, raw: &[f64]) -> Vec<f64> {
    match head {
        HeadKind::LinearClassifier => raw.iter().map(|&z| sigmoid(z)).collect(),
        HeadKind::MlpRegressor => raw.to_vec(),
    }
}
