use rand::Rng;

use crate::{Error, Result};

/// Categorical distribution restricted to the allowed actions of a mask.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedDistribution {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    mask: Vec<bool>,
}

/// Softmax over the mask-true logits (max-subtracted); masked entries get probability 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<MaskedDistribution> {
    if logits.len() != mask.len() {
        return Err(Error::DimensionMismatch {
            context: "mask",
            expected: logits.len(),
            got: mask.len(),
        });
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyMask);
    }
    let sum: f64 = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| (l - max).exp())
        .sum();
    let log_z = sum.ln();
    let mut probs = Vec::with_capacity(logits.len());
    let mut log_probs = Vec::with_capacity(logits.len());
    for (l, m) in logits.iter().zip(mask) {
        if *m {
            let lp = l - max - log_z;
            log_probs.push(lp);
            probs.push(lp.exp());
        } else {
            log_probs.push(f64::NEG_INFINITY);
            probs.push(0.0);
        }
    }
    Ok(MaskedDistribution {
        probs,
        log_probs,
        mask: mask.to_vec(),
    })
}

impl MaskedDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Inverse-CDF sample over the support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, (p, m)) in self.probs.iter().zip(&self.mask).enumerate() {
            if !*m {
                continue;
            }
            last = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// Most probable allowed action; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = None;
        for (i, (p, m)) in self.probs.iter().zip(&self.mask).enumerate() {
            if *m && best.is_none_or(|(_, bp)| *p > bp) {
                best = Some((i, *p));
            }
        }
        best.map(|(i, _)| i).expect("mask has a true entry")
    }

    pub fn log_prob(&self, action: usize) -> Result<f64> {
        match self.mask.get(action) {
            Some(true) => Ok(self.log_probs[action]),
            _ => Err(Error::MaskedAction(action)),
        }
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .zip(&self.mask)
            .filter(|(_, m)| **m)
            .map(|((p, lp), _)| -p * lp)
            .sum()
    }
}
