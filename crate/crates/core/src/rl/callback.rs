use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlateauMode {
    /// Spread (max - min) over the window.
    #[default]
    Range,
    /// Every consecutive difference in the window.
    Consecutive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CallbackConfig {
    pub enabled: bool,
    pub threshold: f64,
    pub patience: usize,
    pub n_eval_episodes: usize,
    pub mode: PlateauMode,
}

impl Default for CallbackConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.25,
            patience: 3,
            n_eval_episodes: 5,
            mode: PlateauMode::Range,
        }
    }
}

/// Window of recent evaluation rewards used for plateau detection.
#[derive(Debug, Clone, PartialEq)]
pub struct CallbackState {
    pub threshold: f64,
    pub patience: usize,
    pub mode: PlateauMode,
    pub interventions: usize,
    window: VecDeque<f64>,
}

impl CallbackState {
    pub fn new(threshold: f64, patience: usize) -> Self {
        Self {
            threshold,
            patience,
            mode: PlateauMode::Range,
            interventions: 0,
            window: VecDeque::with_capacity(patience),
        }
    }

    pub fn from_config(config: &CallbackConfig) -> Self {
        let mut state = Self::new(config.threshold, config.patience);
        state.mode = config.mode;
        state
    }

    pub fn window(&self) -> impl Iterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Records `mean_reward` and reports whether the window has plateaued.
    /// A positive check clears the window and counts an intervention.
    pub fn plateau_check(&mut self, mean_reward: f64) -> bool {
        if self.patience == 0 {
            return false;
        }
        self.window.push_back(mean_reward);
        while self.window.len() > self.patience {
            self.window.pop_front();
        }
        if self.window.len() < self.patience {
            return false;
        }
        let flat = match self.mode {
            PlateauMode::Range => {
                let max = self.window.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = self.window.iter().copied().fold(f64::INFINITY, f64::min);
                max - min < self.threshold
            }
            PlateauMode::Consecutive => self
                .window
                .iter()
                .zip(self.window.iter().skip(1))
                .all(|(a, b)| (b - a).abs() < self.threshold),
        };
        if flat {
            self.window.clear();
            self.interventions += 1;
        }
        flat
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_window_triggers_once_and_clears() {
        let mut s = CallbackState::new(0.25, 3);
        assert!(!s.plateau_check(5.0));
        assert!(!s.plateau_check(5.1));
        assert!(s.plateau_check(5.05));
        assert_eq!(s.interventions, 1);
        assert!(s.is_empty());
    }

    #[test]
    fn rising_window_never_triggers() {
        let mut s = CallbackState::new(0.25, 3);
        for r in [1.0, 2.0, 3.0, 4.0, 5.0] {
            assert!(!s.plateau_check(r));
        }
        assert_eq!(s.len(), 3);
        assert_eq!(s.window().collect::<Vec<_>>(), vec![3.0, 4.0, 5.0]);
    }

    #[test]
    fn modes_disagree_on_slow_drift() {
        let mut range = CallbackState::new(0.25, 3);
        let mut consec = CallbackState::new(0.25, 3);
        consec.mode = PlateauMode::Consecutive;
        let mut hits = (false, false);
        for r in [1.0, 1.2, 1.4] {
            hits = (range.plateau_check(r), consec.plateau_check(r));
        }
        assert_eq!(hits, (false, true));
    }
}
