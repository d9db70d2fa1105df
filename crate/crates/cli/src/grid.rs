//! Hyperparameter grids for `tune`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub batch_sizes: Vec<usize>,
    pub learning_rates: Vec<f64>,
    pub dropouts: Vec<f64>,
    /// Present only for the tensor variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
}

impl GridCell {
    /// Ascending order over (BS, LR, D, C), the tie-break order.
    pub fn cmp_key(&self, other: &Self) -> Ordering {
        self.batch_size
            .cmp(&other.batch_size)
            .then(self.learning_rate.total_cmp(&other.learning_rate))
            .then(self.dropout.total_cmp(&other.dropout))
            .then(self.channels.cmp(&other.channels))
    }

    pub fn label(&self) -> String {
        let mut s = format!(
            "bs{}_lr{}_d{}",
            self.batch_size, self.learning_rate, self.dropout
        );
        if let Some(c) = self.channels {
            s += &format!("_c{c}");
        }
        s
    }
}

fn sorted_unique_f64(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sorted_unique(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

impl GridSpec {
    pub fn default_image2d() -> Self {
        Self {
            batch_sizes: vec![32, 64],
            learning_rates: vec![0.01, 0.001],
            dropouts: vec![0.1, 0.3],
            channels: None,
        }
    }

    pub fn default_tensor() -> Self {
        Self {
            channels: Some(vec![20, 50]),
            ..Self::default_image2d()
        }
    }

    /// Every cell, deduplicated, in tie-break order.
    pub fn cells(&self) -> Result<Vec<GridCell>, String> {
        let channels: Vec<Option<usize>> = match &self.channels {
            Some(c) if c.is_empty() => return Err("empty channel set".into()),
            Some(c) => sorted_unique(c).into_iter().map(Some).collect(),
            None => vec![None],
        };
        if self.batch_sizes.is_empty() || self.learning_rates.is_empty() || self.dropouts.is_empty()
        {
            return Err("empty grid".into());
        }
        let mut out = Vec::new();
        for &batch_size in &sorted_unique(&self.batch_sizes) {
            for &learning_rate in &sorted_unique_f64(&self.learning_rates) {
                for &dropout in &sorted_unique_f64(&self.dropouts) {
                    for &channels in &channels {
                        out.push(GridCell {
                            batch_size,
                            learning_rate,
                            dropout,
                            channels,
                        });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Index of the highest score. Equal scores go to the cell that sorts
/// first by (BS, LR, D, C); undefined scores never win.
pub fn select_best(cells: &[GridCell], scores: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        let Some(s) = *s else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let sb = scores[b].expect("best has a score");
                let better = s > sb || (s == sb && cells[i].cmp_key(&cells[b]) == Ordering::Less);
                Some(if better { i } else { b })
            }
        };
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        assert_eq!(GridSpec::default_image2d().cells().unwrap().len(), 8);
        assert_eq!(GridSpec::default_tensor().cells().unwrap().len(), 16);
    }

    #[test]
    fn cells_come_in_tie_break_order() {
        let cells = GridSpec::default_tensor().cells().unwrap();
        assert!(cells
            .windows(2)
            .all(|w| w[0].cmp_key(&w[1]) == Ordering::Less));
        assert_eq!(
            cells[0],
            GridCell {
                batch_size: 32,
                learning_rate: 0.001,
                dropout: 0.1,
                channels: Some(20)
            }
        );
    }

    #[test]
    fn duplicates_collapse() {
        let g = GridSpec {
            batch_sizes: vec![64, 32, 64],
            ..GridSpec::default_image2d()
        };
        assert_eq!(g.cells().unwrap().len(), 8);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let g = GridSpec {
            dropouts: vec![],
            ..GridSpec::default_image2d()
        };
        assert!(g.cells().is_err());
        let g = GridSpec {
            channels: Some(vec![]),
            ..GridSpec::default_image2d()
        };
        assert!(g.cells().is_err());
    }

    #[test]
    fn ties_go_to_the_first_tuple() {
        let cells = GridSpec::default_image2d().cells().unwrap();
        let mut scores = vec![Some(0.2); cells.len()];
        scores[0] = None;
        scores[5] = Some(0.4);
        scores[3] = Some(0.4);
        assert_eq!(select_best(&cells, &scores), Some(3));
        // Order of presentation does not matter.
        let rev_cells: Vec<GridCell> = cells.iter().rev().copied().collect();
        let rev_scores: Vec<Option<f64>> = scores.iter().rev().copied().collect();
        assert_eq!(
            rev_cells[select_best(&rev_cells, &rev_scores).unwrap()],
            cells[3]
        );
    }

    #[test]
    fn all_undefined_selects_nothing() {
        let cells = GridSpec::default_image2d().cells().unwrap();
        assert_eq!(select_best(&cells, &vec![None; cells.len()]), None);
    }
}
