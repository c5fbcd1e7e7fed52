//! Q statistics and every applicable p-value for one set of 2×2 tables.

use crate::effects::{estimate_effect, Measure, StudyTable};
use crate::error::Result;
use crate::qdist::{
    p_value_chisq, p_value_farebrother, p_value_two_moment, plug_in_probs, qf_moments_from,
    study_moments, ApproxMethod, PlugInMode,
};
use crate::qstat::{cochran_q, q_matrix, QResult};

/// Minimum number of studies for any test to be reported.
pub const MIN_STUDIES: usize = 3;

/// p-values indexed by [`ApproxMethod`]; `None` when a method could not be
/// evaluated for this replication.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PValues(pub [Option<f64>; 5]);

impl PValues {
    pub fn get(&self, m: ApproxMethod) -> Option<f64> {
        self.0[m.index()]
    }

    pub fn set(&mut self, m: ApproxMethod, p: Option<f64>) {
        self.0[m.index()] = p;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    /// `Q_IV` over the studies with positive estimated variance.
    pub q_iv: Option<QResult>,
    pub q_f: QResult,
    pub p_values: PValues,
}

/// Studies with zero estimated variance (risk difference with both arms at
/// 0 or n) are left out of `Q_IV`; `Q_F` always uses every study.
pub fn analyze(studies: &[StudyTable], measure: Measure) -> Result<Analysis> {
    let est: Vec<_> = studies.iter().map(|s| estimate_effect(s, measure)).collect();
    let theta: Vec<f64> = est.iter().map(|e| e.estimate).collect();

    let mut p_values = PValues::default();

    let (iv_theta, iv_w): (Vec<f64>, Vec<f64>) = est
        .iter()
        .filter(|e| e.var_hat > 0.0)
        .map(|e| (e.estimate, 1.0 / e.var_hat))
        .unzip();
    let q_iv = if iv_w.len() >= MIN_STUDIES {
        let r = cochran_q(&iv_theta, &iv_w)?;
        p_values.set(ApproxMethod::ChiSq, Some(p_value_chisq(r.q, r.k)?.p_value));
        Some(r)
    } else {
        None
    };

    let ssw: Vec<f64> = studies.iter().map(StudyTable::effective_size).collect();
    let q_f = cochran_q(&theta, &ssw)?;
    let a = q_matrix(&ssw);
    for mode in [PlugInMode::Naive, PlugInMode::ModelBased] {
        let ctx = plug_in_probs(studies, measure, mode)?;
        let moments = study_moments(&ctx, studies, measure)?;
        let (two, fare) = match mode {
            PlugInMode::Naive => (ApproxMethod::TwoMomentNaive, ApproxMethod::FarebrotherNaive),
            PlugInMode::ModelBased => (ApproxMethod::TwoMomentModel, ApproxMethod::FarebrotherModel),
        };
        let p2 = qf_moments_from(&moments, &ssw)
            .and_then(|m| p_value_two_moment(q_f.q, &m, mode))
            .ok()
            .map(|r| r.p_value);
        p_values.set(two, p2);
        let m2: Vec<f64> = moments.iter().map(|m| m.m2).collect();
        let pf = p_value_farebrother(q_f.q, &a, &m2, mode).ok().map(|r| r.p_value);
        p_values.set(fare, pf);
    }

    Ok(Analysis {
        q_iv,
        q_f,
        p_values,
    })
}
