use crate::flow::{FlowSystem, KeyCoord};

/// A flow whose phase-space distance is multiplied by a constant factor.
pub struct ScaledMetric<'a> {
    pub inner: &'a dyn FlowSystem,
    pub factor: f64,
}

impl FlowSystem for ScaledMetric<'_> {
    fn name(&self) -> String {
        format!("{} with distance x{}", self.inner.name(), self.factor)
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn state_labels(&self) -> Vec<String> {
        self.inner.state_labels()
    }

    fn vector_field(&self, state: &[f64], out: &mut [f64]) {
        self.inner.vector_field(state, out)
    }

    fn jacobian(&self, state: &[f64], out: &mut [f64]) {
        self.inner.jacobian(state, out)
    }

    fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.factor * self.inner.distance(a, b)
    }

    fn alignment_floor(&self) -> f64 {
        self.inner.alignment_floor()
    }

    fn escaped(&self, state: &[f64]) -> bool {
        self.inner.escaped(state)
    }

    fn sample_trapped(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        self.inner.sample_trapped(n, seed)
    }

    fn normal_dims(&self) -> (usize, usize) {
        self.inner.normal_dims()
    }

    fn conserved_names(&self) -> Vec<String> {
        self.inner.conserved_names()
    }

    fn conserved(&self, state: &[f64]) -> Vec<f64> {
        self.inner.conserved(state)
    }

    fn canonicalize(&self, state: &mut [f64], frame: &mut [f64], k: usize) -> bool {
        self.inner.canonicalize(state, frame, k)
    }

    fn shadow(&self, state: &mut [f64], tol: f64) -> bool {
        self.inner.shadow(state, tol)
    }

    fn packing_key(&self, state: &[f64]) -> Vec<KeyCoord> {
        self.inner
            .packing_key(state)
            .into_iter()
            .map(|c| KeyCoord {
                value: self.factor * c.value,
                period: c.period.map(|p| self.factor * p),
            })
            .collect()
    }

    fn analytic_pressure(&self, s: f64) -> Option<f64> {
        self.inner.analytic_pressure(s)
    }
}
