//! Unit-mean tilts `h` of a stable density. A tilt selects one member
//! `PK_beta(h f_beta)` of the stable Poisson-Kingman class.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, numeric, Result};
use crate::quad::{integrate_positive, QuadOptions};
use crate::special_fn::{ln_stable_neg_moment, ml_function, StableIndex};
use crate::stable_density::StableDensity;

/// Allowed deviation of `E[h(T_beta)]` from one at construction.
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TiltKind {
    Unit,
    /// `t^{-theta} / E[T^{-theta}]`, giving PD(beta, theta).
    PdTheta { theta: f64 },
    /// `exp(-lambda t^{-beta}) / E_beta(-lambda)`, the Mittag-Leffler class.
    MlLambda { lambda: f64 },
    /// Generalized gamma tilt; `m = 1` is its size-biased version.
    GgZeta { zeta: f64, m: u8 },
    Custom { label: String },
}

type TiltFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct TiltFunction {
    index: StableIndex,
    kind: TiltKind,
    sup_bound: Option<f64>,
    // log of the multiplicative constant in front of the shape
    ln_c: f64,
    custom: Option<TiltFn>,
}

impl fmt::Debug for TiltFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TiltFunction")
            .field("index", &self.index)
            .field("kind", &self.kind)
            .field("sup_bound", &self.sup_bound)
            .finish()
    }
}

impl fmt::Display for TiltFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions::new(1e-300, 1e-10, 4000)
}

impl TiltFunction {
    fn build(index: StableIndex, kind: TiltKind, sup_bound: Option<f64>, ln_c: f64, custom: Option<TiltFn>) -> Result<Self> {
        let h = TiltFunction {
            index,
            kind,
            sup_bound,
            ln_c,
            custom,
        };
        let err = h.normalization_error()?;
        if err > NORMALIZATION_TOL {
            return domain(format!("tilt {} has E[h(T)] off by {err:.3e}", h.label()));
        }
        Ok(h)
    }

    pub fn unit(index: StableIndex) -> Self {
        TiltFunction {
            index,
            kind: TiltKind::Unit,
            sup_bound: Some(1.0),
            ln_c: 0.0,
            custom: None,
        }
    }

    pub fn pd_theta(index: StableIndex, theta: f64) -> Result<Self> {
        if !(theta > -index.get()) || !theta.is_finite() {
            return domain(format!("pd tilt needs theta > -{}, got {theta}", index.get()));
        }
        let sup = if theta == 0.0 { Some(1.0) } else { None };
        Self::build(index, TiltKind::PdTheta { theta }, sup, -ln_stable_neg_moment(index, theta), None)
    }

    pub fn ml_lambda(index: StableIndex, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return domain(format!("Mittag-Leffler tilt needs lambda >= 0, got {lambda}"));
        }
        let e = ml_function(index, lambda)?;
        Self::build(index, TiltKind::MlLambda { lambda }, Some(1.0 / e), -e.ln(), None)
    }

    pub fn gg_zeta(index: StableIndex, zeta: f64, m: u8) -> Result<Self> {
        if !(zeta > 0.0) || !zeta.is_finite() {
            return domain(format!("generalized gamma tilt needs zeta > 0, got {zeta}"));
        }
        let b = index.get();
        let (sup, ln_c) = match m {
            0 => (zeta.exp(), zeta),
            1 => (
                (zeta - 1.0).exp() / (b * zeta),
                (1.0 / b - 1.0) * zeta.ln() + zeta - b.ln(),
            ),
            _ => return domain(format!("generalized gamma tilt needs m in {{0,1}}, got {m}")),
        };
        Self::build(index, TiltKind::GgZeta { zeta, m }, Some(sup), ln_c, None)
    }

    /// A user-supplied tilt; normalization is checked by quadrature.
    pub fn custom<F>(index: StableIndex, label: &str, f: F, sup_bound: Option<f64>) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::build(
            index,
            TiltKind::Custom { label: label.to_string() },
            sup_bound,
            0.0,
            Some(Arc::new(f)),
        )
    }

    pub fn index(&self) -> StableIndex {
        self.index
    }

    pub fn kind(&self) -> &TiltKind {
        &self.kind
    }

    pub fn sup_bound(&self) -> Option<f64> {
        self.sup_bound
    }

    pub fn label(&self) -> String {
        match &self.kind {
            TiltKind::Unit => "unit".to_string(),
            TiltKind::PdTheta { theta } => format!("pd_theta({theta})"),
            TiltKind::MlLambda { lambda } => format!("ml_lambda({lambda})"),
            TiltKind::GgZeta { zeta, m } => format!("gg_zeta({zeta},{m})"),
            TiltKind::Custom { label } => label.clone(),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if !(t > 0.0) {
            return 0.0;
        }
        let b = self.index.get();
        match &self.kind {
            TiltKind::Unit => 1.0,
            TiltKind::PdTheta { theta } => (self.ln_c - theta * t.ln()).exp(),
            TiltKind::MlLambda { lambda } => (self.ln_c - lambda * t.powf(-b)).exp(),
            TiltKind::GgZeta { zeta, m } => {
                let rate = zeta.powf(1.0 / b);
                if *m == 0 {
                    (self.ln_c - rate * t).exp()
                } else {
                    (self.ln_c + t.ln() - rate * t).exp()
                }
            }
            TiltKind::Custom { .. } => (self.custom.as_ref().expect("custom tilt"))(t),
        }
    }

    /// `|E[h(T)] - 1|` by quadrature against the stable density.
    pub fn normalization_error(&self) -> Result<f64> {
        let dens = StableDensity::shared(self.index)?;
        let v = integrate_positive(|t| self.eval(t) * dens.pdf(t).unwrap_or(f64::NAN), &quad_opts())?;
        Ok((v - 1.0).abs())
    }

    /// `E[h(s^{-1/alpha} T_{beta/alpha}^{1/alpha})]` for `alpha > beta`, the tilt of
    /// the alpha-diversity law after fragmentation to index `alpha`.
    pub fn subordinated_mean(&self, alpha: StableIndex, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return domain(format!("need s > 0, got {s}"));
        }
        let b = self.index.get();
        let a = alpha.get();
        let ratio = self.index.ratio(alpha)?;
        match &self.kind {
            TiltKind::Unit => Ok(1.0),
            TiltKind::PdTheta { theta } => {
                Ok(((theta / a) * s.ln() + ln_gamma(theta + 1.0) - ln_gamma(theta / a + 1.0)).exp())
            }
            TiltKind::MlLambda { lambda } => {
                Ok(ml_function(ratio, lambda * s.powf(b / a))? * self.ln_c.exp())
            }
            _ => {
                let dens = StableDensity::shared(ratio)?;
                let scale = s.powf(-1.0 / a);
                integrate_positive(
                    |t| self.eval(scale * t.powf(1.0 / a)) * dens.pdf(t).unwrap_or(f64::NAN),
                    &quad_opts(),
                )
                .map_err(|e| numeric(format!("subordinated tilt mean failed: {e}"), f64::NAN))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(a: f64) -> StableIndex {
        StableIndex::new(a).unwrap()
    }

    #[test]
    fn families_are_normalized() {
        let b = idx(0.45);
        for h in [
            TiltFunction::pd_theta(b, 0.7).unwrap(),
            TiltFunction::pd_theta(b, -0.3).unwrap(),
            TiltFunction::ml_lambda(b, 1.5).unwrap(),
            TiltFunction::gg_zeta(b, 0.8, 0).unwrap(),
            TiltFunction::gg_zeta(b, 2.0, 1).unwrap(),
        ] {
            assert!(h.normalization_error().unwrap() < 1e-8, "{h}");
        }
    }

    #[test]
    fn sup_bounds_hold() {
        let b = idx(0.6);
        for h in [TiltFunction::ml_lambda(b, 1.0).unwrap(), TiltFunction::gg_zeta(b, 1.3, 0).unwrap(), TiltFunction::gg_zeta(b, 1.3, 1).unwrap()] {
            let sup = h.sup_bound().unwrap();
            for i in 0..2000 {
                let t = (-8.0 + i as f64 * 0.01).exp();
                assert!(h.eval(t) <= sup * (1.0 + 1e-12), "{h} t={t}");
            }
        }
    }

    #[test]
    fn unnormalized_custom_tilt_rejected() {
        assert!(TiltFunction::custom(idx(0.5), "twice", |_| 2.0, Some(2.0)).is_err());
        assert!(TiltFunction::custom(idx(0.5), "one", |_| 1.0, Some(1.0)).is_ok());
        assert!(TiltFunction::gg_zeta(idx(0.5), 1.0, 2).is_err());
        assert!(TiltFunction::pd_theta(idx(0.5), -0.5).is_err());
    }

    #[test]
    fn subordinated_mean_closed_forms_agree_with_quadrature() {
        let b = idx(0.4);
        let a = idx(0.8);
        let ml = TiltFunction::ml_lambda(b, 1.0).unwrap();
        let lam_custom = {
            let e = ml_function(b, 1.0).unwrap();
            TiltFunction::custom(b, "ml copy", move |t| (-t.powf(-0.4)).exp() / e, None).unwrap()
        };
        let pd = TiltFunction::pd_theta(b, 0.5).unwrap();
        let pd_custom = {
            let c = (-ln_stable_neg_moment(b, 0.5)).exp();
            TiltFunction::custom(b, "pd copy", move |t| c * t.powf(-0.5), None).unwrap()
        };
        for &s in &[0.3, 1.0, 2.5] {
            let x = ml.subordinated_mean(a, s).unwrap();
            let y = lam_custom.subordinated_mean(a, s).unwrap();
            assert!((x - y).abs() < 1e-8, "s={s}: {x} vs {y}");
            let x = pd.subordinated_mean(a, s).unwrap();
            let y = pd_custom.subordinated_mean(a, s).unwrap();
            assert!((x / y - 1.0).abs() < 1e-8, "s={s}: {x} vs {y}");
        }
    }
}
