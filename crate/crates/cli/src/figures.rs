//! CSV series for the evaluation figures.

use std::fmt::Write;

use num_rational::Ratio;
use ratematch::m_layer::{
    baseline_correction_efficiency, correction_efficiency_limit, error_correction_efficiency,
    rounded_share,
};
use ratematch::two_layer::{plan_parameters, TwoLayerError};

/// Renders `v` with 9 significant digits.
pub fn sig9(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (8 - exp).max(0) as usize;
    format!("{v:.decimals$}")
}

fn ratio(r: Ratio<i128>) -> String {
    sig9(*r.numer() as f64 / *r.denom() as f64)
}

/// Detection targets swept by the block-count and efficiency figures:
/// a near-zero target, then `1 - 10^-k` for `k = 1..=9`.
pub fn default_detection_targets() -> Vec<f64> {
    let mut v = vec![1e-9];
    v.extend((1..=9).map(|k| 1.0 - 10f64.powi(-k)));
    v
}

#[derive(Clone, Debug)]
pub struct TwoLayerSweep {
    pub n: usize,
    pub malicious: usize,
    pub p: f64,
    pub b_f: u64,
    pub p_det: Vec<f64>,
}

impl Default for TwoLayerSweep {
    fn default() -> Self {
        TwoLayerSweep {
            n: 30,
            malicious: 11,
            p: 0.2,
            b_f: 14_000_000_000,
            p_det: default_detection_targets(),
        }
    }
}

/// `p_det,theta_l,theta_h`.
pub fn fig1(s: &TwoLayerSweep) -> Result<String, TwoLayerError> {
    let mut out = String::from("p_det,theta_l,theta_h\n");
    for &p_det in &s.p_det {
        let plan = plan_parameters(s.n, s.malicious, s.p, p_det, s.b_f)?;
        writeln!(out, "{},{},{}", sig9(p_det), plan.theta_l, plan.theta_h).unwrap();
    }
    Ok(out)
}

/// `p_det,eta,b_f`.
pub fn fig2(s: &TwoLayerSweep) -> Result<String, TwoLayerError> {
    let mut out = String::from("p_det,eta,b_f\n");
    for &p_det in &s.p_det {
        let plan = plan_parameters(s.n, s.malicious, s.p, p_det, s.b_f)?;
        writeln!(
            out,
            "{},{},{}",
            sig9(p_det),
            sig9(plan.efficiency_ratio()),
            s.b_f
        )
        .unwrap();
    }
    Ok(out)
}

/// `d,delta_c,delta_c_baseline` for `m` layers over `d = 1..=n-2`.
pub fn fig3(n: usize, m: usize) -> String {
    let mut out = String::from("d,delta_c,delta_c_baseline\n");
    for d in 1..n.saturating_sub(1) {
        let a = error_correction_efficiency(n, m, d);
        let b = baseline_correction_efficiency(n, d);
        writeln!(out, "{d},{},{}", ratio(a), ratio(b)).unwrap();
    }
    out
}

/// `m,d,delta_c,delta_c_baseline` with `d = Round(d0/m)` for `m = 2..=16`.
pub fn fig6(n: usize, d0: usize) -> String {
    let mut out = String::from("m,d,delta_c,delta_c_baseline\n");
    for m in 2..=16 {
        let d = rounded_share(d0, m);
        if d >= n {
            continue;
        }
        let a = error_correction_efficiency(n, m, d);
        let b = baseline_correction_efficiency(n, d);
        writeln!(out, "{m},{d},{},{}", ratio(a), ratio(b)).unwrap();
    }
    out
}

/// `m` then `delta_c` and its limit for each fixed degree, `m = 2..=16`.
pub fn fig7(n: usize, degrees: &[usize]) -> String {
    let mut out = String::from("m");
    for d in degrees {
        write!(out, ",delta_c_d{d},limit_d{d}").unwrap();
    }
    out.push('\n');
    for m in 2..=16 {
        write!(out, "{m}").unwrap();
        for &d in degrees {
            let a = error_correction_efficiency(n, m, d);
            write!(
                out,
                ",{},{}",
                ratio(a),
                ratio(correction_efficiency_limit(n, d))
            )
            .unwrap();
        }
        out.push('\n');
    }
    out
}
