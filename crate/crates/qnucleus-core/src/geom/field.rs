use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::CPoint;
use crate::levi::HermitianForm;

type EvalFn = dyn Fn(&CPoint) -> f64 + Send + Sync;
type HessFn = dyn Fn(&CPoint) -> HermitianForm + Send + Sync;
type DomainFn = dyn Fn(&CPoint) -> bool + Send + Sync;

/// An evaluatable real function on C^n, optionally carrying its analytic
/// complex Hessian and a membership predicate for its domain.
#[derive(Clone)]
pub struct ScalarField {
    label: String,
    eval: Arc<EvalFn>,
    hessian: Option<Arc<HessFn>>,
    domain: Option<Arc<DomainFn>>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("label", &self.label)
            .field("analytic_hessian", &self.hessian.is_some())
            .finish()
    }
}

impl ScalarField {
    pub fn new<F>(label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&CPoint) -> f64 + Send + Sync + 'static,
    {
        Self { label: label.into(), eval: Arc::new(eval), hessian: None, domain: None }
    }

    pub fn with_hessian<H>(mut self, hessian: H) -> Self
    where
        H: Fn(&CPoint) -> HermitianForm + Send + Sync + 'static,
    {
        self.hessian = Some(Arc::new(hessian));
        self
    }

    pub fn with_domain<D>(mut self, domain: D) -> Self
    where
        D: Fn(&CPoint) -> bool + Send + Sync + 'static,
    {
        self.domain = Some(Arc::new(domain));
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_defined(&self, p: &CPoint) -> bool {
        self.domain.as_ref().map_or(true, |d| d(p))
    }

    pub fn value(&self, p: &CPoint) -> Result<f64> {
        if self.is_defined(p) {
            Ok((self.eval)(p))
        } else {
            Err(Error::Domain)
        }
    }

    pub fn has_analytic_hessian(&self) -> bool {
        self.hessian.is_some()
    }

    pub fn analytic_hessian(&self, p: &CPoint) -> Result<Option<HermitianForm>> {
        if !self.is_defined(p) {
            return Err(Error::Domain);
        }
        Ok(self.hessian.as_ref().map(|h| h(p)))
    }

    /// Multiply the field (and its Hessian) by a positive constant.
    pub fn scaled(&self, c: f64) -> ScalarField {
        let eval = self.eval.clone();
        let domain = self.domain.clone();
        let hessian = self.hessian.clone();
        let mut out = ScalarField {
            label: format!("{} * {c}", self.label),
            eval: Arc::new(move |p| c * eval(p)),
            hessian: None,
            domain,
        };
        if let Some(h) = hessian {
            out.hessian = Some(Arc::new(move |p: &CPoint| h(p).scaled(c)));
        }
        out
    }
}

/// Finite max of scalar fields; the value at p is the max over branches
/// defined at p. At least one branch must be defined wherever the max
/// field is used.
#[derive(Clone, Debug)]
pub struct MaxField {
    branches: Vec<ScalarField>,
}

impl MaxField {
    pub fn new(branches: Vec<ScalarField>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Geometry("max field needs at least one branch".into()));
        }
        Ok(Self { branches })
    }

    pub fn single(field: ScalarField) -> Self {
        Self { branches: vec![field] }
    }

    pub fn branches(&self) -> &[ScalarField] {
        &self.branches
    }

    pub fn value(&self, p: &CPoint) -> Result<f64> {
        let mut best: Option<f64> = None;
        for b in &self.branches {
            if b.is_defined(p) {
                let v = b.value(p)?;
                best = Some(best.map_or(v, |m: f64| m.max(v)));
            }
        }
        best.ok_or(Error::Domain)
    }

    /// Branches defined at p whose value is within `eps_act` of the max.
    pub fn active_branches(&self, p: &CPoint, eps_act: f64) -> Result<Vec<usize>> {
        let vmax = self.value(p)?;
        let mut out = Vec::new();
        for (i, b) in self.branches.iter().enumerate() {
            if b.is_defined(p) && b.value(p)? >= vmax - eps_act {
                out.push(i);
            }
        }
        Ok(out)
    }
}

impl From<ScalarField> for MaxField {
    fn from(f: ScalarField) -> Self {
        MaxField::single(f)
    }
}
