/// A radially symmetric density `f(v) = f(|v|)` that can be evaluated pointwise.
///
/// `None` marks speeds where the profile is not resolved (outside its support or
/// in cells with too few samples); callers decide how to treat those points.
pub trait RadialProfile: Sync {
    fn density(&self, speed: f64) -> Option<f64>;

    fn log_density(&self, speed: f64) -> Option<f64> {
        self.density(speed).filter(|&d| d > 0.0).map(f64::ln)
    }
}
