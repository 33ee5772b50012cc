/// One epoch of one training phase.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub phase: &'static str,
    pub epoch: usize,
    pub lr: f64,
    pub momentum: f64,
    pub loss: f64,
    pub error: Option<f64>,
}

impl EpochRecord {
    pub fn new(phase: &'static str, epoch: usize, lr: f64, momentum: f64, loss: f64) -> Self {
        EpochRecord {
            phase,
            epoch,
            lr,
            momentum,
            loss,
            error: None,
        }
    }

    pub fn with_error(mut self, error: f64) -> Self {
        self.error = Some(error);
        self
    }
}
