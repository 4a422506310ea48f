use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    #[default]
    None,
    HumanHand,
    /// Metal tools, plastic bottles and the like: invisible to the electrode.
    NonDetectable,
}

/// Physical truth the simulated sensor observes at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthState {
    pub rows: usize,
    pub cols: usize,
    /// Applied force per prexel in row-major order, N.
    pub forces: Vec<f64>,
    /// Distance of the nearest body to the electrode, mm; `None` when far away.
    pub hand_distance: Option<f64>,
    pub object: ObjectKind,
    /// Additive counter disturbance, e.g. from nearby motor drives, counts.
    #[serde(default)]
    pub interference: f64,
}

impl GroundTruthState {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            forces: vec![0.0; rows * cols],
            hand_distance: None,
            object: ObjectKind::None,
            interference: 0.0,
        }
    }

    pub fn force(&self, row: usize, col: usize) -> f64 {
        self.forces[row * self.cols + col]
    }

    pub fn set_force(&mut self, row: usize, col: usize, force: f64) {
        self.forces[row * self.cols + col] = force.max(0.0);
    }

    /// A hand at `distance` mm.
    pub fn with_hand(mut self, distance: f64) -> Self {
        self.hand_distance = Some(distance);
        self.object = ObjectKind::HumanHand;
        self
    }
}
