//! Central finite-difference verification of tape gradients.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Graph, Var};

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    pub step: f64,
    pub tolerance: f64,
    /// Fault injection: add 1.0 to the first analytic coordinate of this parameter.
    pub corrupt: Option<String>,
}

impl GradCheckConfig {
    pub fn new(step: f64, tolerance: f64) -> Self {
        GradCheckConfig {
            step,
            tolerance,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Coordinates whose relative error exceeds the tolerance.
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.failures == 0)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.max_rel_error)
            .fold(0.0, f64::max)
    }

    /// Failing parameters, worst first.
    pub fn worst(&self) -> Vec<&ParamCheck> {
        let mut bad: Vec<&ParamCheck> = self.params.iter().filter(|p| p.failures > 0).collect();
        bad.sort_by(|a, b| b.max_rel_error.total_cmp(&a.max_rel_error));
        bad
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare the tape gradient of the scalar built by `f` against central
/// differences `(f(p+h) - f(p-h)) / 2h`, one coordinate at a time.
pub fn grad_check<F>(store: &ParamStore, f: F, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(Graph, Var)>,
{
    if !(config.step > 0.0) {
        return Err(Error::Domain(alloc::format!(
            "finite-difference step must be positive, got {}",
            config.step
        )));
    }
    let eval = |s: &ParamStore| -> Result<f64> {
        let (g, v) = f(s)?;
        Ok(g.value(v).item())
    };
    let (graph, loss) = f(store)?;
    let base = graph.value(loss).item();
    if eval(store)?.to_bits() != base.to_bits() {
        return Err(Error::Contract(
            "function under check is not deterministic".into(),
        ));
    }
    let mut analytic = graph.backward(loss, store)?;
    if let Some(name) = &config.corrupt {
        let id = store
            .id(name)
            .ok_or_else(|| Error::Domain(alloc::format!("no parameter named {name:?}")))?;
        analytic.get_mut(id).data_mut()[0] += 1.0;
    }

    let mut work = store.clone();
    let mut params = Vec::with_capacity(store.len());
    for id in store.ids() {
        params.push(check_param(&mut work, id, &analytic, &eval, config)?);
    }
    Ok(GradCheckReport {
        tolerance: config.tolerance,
        params,
    })
}

fn check_param(
    work: &mut ParamStore,
    id: ParamId,
    analytic: &crate::params::Gradients,
    eval: &impl Fn(&ParamStore) -> Result<f64>,
    config: &GradCheckConfig,
) -> Result<ParamCheck> {
    let mut check = ParamCheck {
        name: work.name(id).into(),
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        failures: 0,
    };
    for k in 0..work.get(id).len() {
        let orig = work.get(id).data()[k];
        let plus = orig + config.step;
        let minus = orig - config.step;
        work.get_mut(id).data_mut()[k] = plus;
        let f_plus = eval(work)?;
        work.get_mut(id).data_mut()[k] = minus;
        let f_minus = eval(work)?;
        work.get_mut(id).data_mut()[k] = orig;

        // divide by the step actually taken after rounding
        let numeric = (f_plus - f_minus) / (plus - minus);
        let a = analytic.get(id).data()[k];
        let err = relative_error(a, numeric);
        if err > config.tolerance {
            check.failures += 1;
        }
        if err > check.max_rel_error || k == 0 {
            check.max_rel_error = err;
            check.worst_index = k;
            check.analytic = a;
            check.numeric = numeric;
        }
    }
    Ok(check)
}
