//! Tabulation of the sufficient sample size for a fixed instance.

use serde::{Deserialize, Serialize};

use crate::entropy::{a1_auto, default_cq, sample_size_branches, CONTROL_SAMPLE};
use crate::error::{invalid, Error, Result};
use crate::problem::{Instance, ScenarioSet};
use crate::rng::SeedLineage;
use crate::sets::{localized_set_spec, SetLabel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizeRow {
    pub q: f64,
    pub rho: f64,
    pub eps: f64,
    pub l0_sq: f64,
    pub centered_norm: f64,
    pub a1: f64,
    /// (3/ρ)^{1/(q−1)}.
    pub moment_branch: f64,
    /// 4C_q(1 + ln(3/ρ))/ε².
    pub variance_branch: f64,
    pub n: f64,
    /// "moment" or "variance".
    pub binding: String,
}

/// L₀² = P𝖫₀² and ‖𝖫₀² − L₀²‖_q, by closed form or control sample.
pub fn envelope_moments(instance: &Instance, q: f64) -> Result<(f64, f64)> {
    let f = instance.oracle.function(0);
    let loss = &instance.program.losses[0];
    let control = || ScenarioSet::generate(&instance.program.law, CONTROL_SAMPLE, SeedLineage::new(0xc0de, 1));
    let l0_sq = match f.envelope_sq_mean() {
        Some(v) => v,
        None => {
            let s = control()?;
            s.iter().map(|xi| loss.envelope(xi).powi(2)).sum::<f64>() / s.n() as f64
        }
    };
    let norm = match f.envelope_sq_centered_norm(q) {
        Some(v) => v,
        None => {
            let s = control()?;
            let m = s.iter().map(|xi| (loss.envelope(xi).powi(2) - l0_sq).abs().powf(q)).sum::<f64>() / s.n() as f64;
            m.powf(1.0 / q)
        }
    };
    Ok((l0_sq, norm))
}

/// A₁ of the objective level set X*₀,₂ε.
pub fn level_set_a1(instance: &Instance, eps: f64) -> Result<f64> {
    match localized_set_spec(&instance.oracle, SetLabel::LevelObjective, 2.0 * eps).and_then(|s| a1_auto(&s, 1e-4)) {
        Ok(a) => Ok(a.value),
        Err(Error::EmptySet) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// One row per (q, ρ, ε) with both branches and the one that binds.
pub fn sample_size_table(qs: &[f64], rhos: &[f64], epss: &[f64], instance: &Instance) -> Result<Vec<SampleSizeRow>> {
    if qs.is_empty() || rhos.is_empty() || epss.is_empty() {
        return Err(invalid("sample-size grids must be nonempty"));
    }
    let a1s = epss.iter().map(|&e| level_set_a1(instance, e)).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &q in qs {
        let (l0_sq, centered_norm) = envelope_moments(instance, q)?;
        for &rho in rhos {
            for (&eps, &a1) in epss.iter().zip(&a1s) {
                rows.push(table_row(q, rho, eps, l0_sq, centered_norm, a1)?);
            }
        }
    }
    Ok(rows)
}

pub fn table_row(q: f64, rho: f64, eps: f64, l0_sq: f64, centered_norm: f64, a1: f64) -> Result<SampleSizeRow> {
    let (m, v) = sample_size_branches(q, rho, eps, l0_sq, centered_norm, a1, default_cq(q))?;
    Ok(SampleSizeRow {
        q,
        rho,
        eps,
        l0_sq,
        centered_norm,
        a1,
        moment_branch: m,
        variance_branch: v,
        n: m.max(v).ceil(),
        binding: if m >= v { "moment" } else { "variance" }.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_rho_moment_branch() {
        let r = table_row(10.0, 1e-10, 1.0, 1.0, 0.0, 1e-6).unwrap();
        assert!((r.moment_branch - (3e10f64).powf(1.0 / 9.0)).abs() < 1e-9);
        assert!((r.moment_branch - 14.59).abs() < 0.01);
        assert_eq!(r.binding, "moment");
    }

    #[test]
    fn large_eps_moment_binds() {
        let r = table_row(2.0, 0.1, 1e6, 2.0, 1.0, 3.0).unwrap();
        assert_eq!(r.binding, "moment");
        assert_eq!(r.n, 30.0);
    }

    #[test]
    fn doubling_a1_quadruples_variance_branch() {
        let a = table_row(3.0, 0.05, 0.01, 2.0, 1.5, 3.0).unwrap();
        let b = table_row(3.0, 0.05, 0.01, 2.0, 1.5, 6.0).unwrap();
        assert!((b.variance_branch / a.variance_branch - 4.0).abs() < 1e-12);
        assert_eq!(a.binding, "variance");
    }

    #[test]
    fn empty_grid_rejected() {
        let d = crate::problem::descriptor::InstanceDescriptor::parse(
            r#"{"schema_version":1,"id":"s","dimension":1,"m":0,"hard_set":{"kind":"box","center":[0.0],"radius":1.0},
               "loss_family":"norm","noise":{"family":"pareto","tail_index":4.5,"scale":0.7777777777777778},"objective_center":[0.0]}"#,
        )
        .unwrap();
        let inst = d.build().unwrap();
        assert!(sample_size_table(&[], &[0.1], &[0.1], &inst).is_err());
        let t = sample_size_table(&[2.0], &[0.1], &[0.05, 0.1], &inst).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].a1 > 0.0 && t[0].a1 < t[1].a1);
    }
}
