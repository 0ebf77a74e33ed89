//! Tessellations of a window by labelled convex cells.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::geometry::{Cell, ConvexSet, Direction, GeometryError, Hyperplane, EPS_VOL};
use crate::measure::HyperplaneMeasure;
use crate::tree::{TreeTuple, TreeWord};

/// Number of incremental updates between full recomputations of ζ.
const ZETA_REFRESH: usize = 1000;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TessError {
    #[error("no cell with label `{0}`")]
    UnknownLabel(TreeWord),
    #[error("hyperplane does not hit the required cell")]
    NoHit,
    #[error("jump time {time} does not exceed the previous jump time {previous}")]
    NonmonotoneTime { time: f64, previous: f64 },
    #[error("subwindow is not contained in the window")]
    NotContained,
    #[error("dimension mismatch: window has dimension {window}, measure has {measure}")]
    DimensionMismatch { window: usize, measure: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpRecord {
    pub time: f64,
    pub label: TreeWord,
    pub hyperplane: Hyperplane,
}

/// Serialized jump: `{"t":, "label":, "alpha":, "phi":}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecordRepr {
    pub t: f64,
    pub label: TreeWord,
    pub alpha: f64,
    pub phi: f64,
}

impl From<&JumpRecord> for JumpRecordRepr {
    fn from(j: &JumpRecord) -> Self {
        JumpRecordRepr {
            t: j.time,
            label: j.label.clone(),
            alpha: j.hyperplane.alpha,
            phi: j.hyperplane.direction.phi(),
        }
    }
}

impl JumpRecordRepr {
    pub fn to_record(&self, dimension: usize) -> JumpRecord {
        let direction = if dimension == 1 {
            Direction::line()
        } else {
            Direction::from_angle(self.phi)
        };
        JumpRecord {
            time: self.t,
            label: self.label.clone(),
            hyperplane: Hyperplane::new(self.alpha, direction),
        }
    }
}

/// Serialized tessellation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TessellationRecord {
    pub window: Cell,
    pub cells: Vec<Cell>,
    pub history: Vec<JumpRecordRepr>,
}

#[derive(Clone, Debug)]
struct CellEntry {
    cell: Cell,
    mass: f64,
}

#[derive(Clone, Debug)]
pub struct Tessellation {
    window: Cell,
    measure: Arc<HyperplaneMeasure>,
    cells: BTreeMap<TreeWord, CellEntry>,
    zeta: f64,
    history: Vec<JumpRecord>,
    since_refresh: usize,
}

impl Tessellation {
    /// The one-cell tessellation `{W}`.
    pub fn initial(window: &Cell, measure: Arc<HyperplaneMeasure>) -> Result<Self, TessError> {
        if window.dimension() != measure.dimension() {
            return Err(TessError::DimensionMismatch {
                window: window.dimension(),
                measure: measure.dimension(),
            });
        }
        let window = window.clone().with_label(TreeWord::root());
        let mass = measure.hit_mass(&window);
        let mut cells = BTreeMap::new();
        cells.insert(
            TreeWord::root(),
            CellEntry {
                cell: window.clone(),
                mass,
            },
        );
        Ok(Tessellation {
            window,
            measure,
            cells,
            zeta: mass,
            history: Vec::new(),
            since_refresh: 0,
        })
    }

    /// Rebuilds a tessellation by replaying a jump history.
    pub fn replay(
        window: &Cell,
        measure: Arc<HyperplaneMeasure>,
        history: &[JumpRecord],
    ) -> Result<Self, TessError> {
        let mut t = Tessellation::initial(window, measure)?;
        for j in history {
            t.divide(&j.label, &j.hyperplane, j.time)?;
        }
        Ok(t)
    }

    pub fn window(&self) -> &Cell {
        &self.window
    }

    pub fn measure(&self) -> &Arc<HyperplaneMeasure> {
        &self.measure
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Cells in increasing label order.
    pub fn cells(&self) -> impl Iterator<Item = &Cell> + '_ {
        self.cells.values().map(|e| &e.cell)
    }

    /// `(cell, Λ([cell]))` pairs in increasing label order.
    pub fn cells_with_mass(&self) -> impl Iterator<Item = (&Cell, f64)> + '_ {
        self.cells.values().map(|e| (&e.cell, e.mass))
    }

    pub fn labels(&self) -> impl Iterator<Item = &TreeWord> + '_ {
        self.cells.keys()
    }

    pub fn cell(&self, label: &TreeWord) -> Option<&Cell> {
        self.cells.get(label).map(|e| &e.cell)
    }

    /// Cached `Λ([C])` of a cell.
    pub fn mass(&self, label: &TreeWord) -> Option<f64> {
        self.cells.get(label).map(|e| e.mass)
    }

    /// `ζ = Σ Λ([C])`, maintained incrementally.
    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn history(&self) -> &[JumpRecord] {
        &self.history
    }

    pub fn last_time(&self) -> f64 {
        self.history.last().map_or(0.0, |j| j.time)
    }

    /// ζ summed from scratch.
    pub fn recompute_zeta(&self) -> f64 {
        self.cells.values().map(|e| e.mass).sum()
    }

    /// Divides the cell `label` by `h` at `time`.
    pub fn divide(&mut self, label: &TreeWord, h: &Hyperplane, time: f64) -> Result<(), TessError> {
        let entry = self
            .cells
            .get(label)
            .ok_or_else(|| TessError::UnknownLabel(label.clone()))?;
        if !entry.cell.hits_interior(h) {
            return Err(TessError::NoHit);
        }
        let previous = self.last_time();
        if !(time > previous || (self.history.is_empty() && time >= 0.0)) {
            return Err(TessError::NonmonotoneTime { time, previous });
        }
        let (minus, plus) = entry
            .cell
            .clip_with_min_volume(h, EPS_VOL * self.window.volume())?;
        let old_mass = entry.mass;
        let m_minus = self.measure.hit_mass(&minus);
        let m_plus = self.measure.hit_mass(&plus);
        self.cells.remove(label);
        self.cells.insert(
            minus.label().clone(),
            CellEntry {
                cell: minus,
                mass: m_minus,
            },
        );
        self.cells.insert(
            plus.label().clone(),
            CellEntry {
                cell: plus,
                mass: m_plus,
            },
        );
        self.history.push(JumpRecord {
            time,
            label: label.clone(),
            hyperplane: *h,
        });
        self.since_refresh += 1;
        if self.since_refresh >= ZETA_REFRESH {
            self.zeta = self.recompute_zeta();
            self.since_refresh = 0;
        } else {
            self.zeta += m_minus + m_plus - old_mass;
        }
        Ok(())
    }

    /// `ξ(H)`: the number of cells whose closed hit-set contains `h`.
    pub fn xi(&self, h: &Hyperplane) -> Result<usize, TessError> {
        if !self.window.hits(h) {
            return Err(TessError::NoHit);
        }
        Ok(self.cells.values().filter(|e| e.cell.hits(h)).count())
    }

    /// Labels of the cells hit by `h`, in increasing order.
    pub fn hit_labels(&self, h: &Hyperplane) -> Vec<&TreeWord> {
        self.cells
            .iter()
            .filter(|(_, e)| e.cell.hits(h))
            .map(|(l, _)| l)
            .collect()
    }

    /// `Γ([W]) = Σ Λ([C])` evaluated against `measure` from scratch.
    pub fn gamma_density_total(&self, measure: &HyperplaneMeasure) -> f64 {
        self.cells.values().map(|e| measure.hit_mass(&e.cell)).sum()
    }

    /// Sum of interior facet lengths (2D) or number of interior points (1D).
    pub fn boundary_length(&self) -> f64 {
        let total: f64 = self.cells.values().map(|e| e.cell.perimeter()).sum();
        0.5 * (total - self.window.perimeter())
    }

    /// The division tuple obtained by replaying the history.
    pub fn tree_tuple(&self) -> Result<TreeTuple, crate::tree::TreeError> {
        self.history
            .iter()
            .try_fold(TreeTuple::root(), |r, j| r.extend(&j.label))
    }

    /// Restriction to `subwindow`, with labels and history re-derived from
    /// the jumps that actually cut the subwindow.
    pub fn restrict(&self, subwindow: &Cell) -> Result<Tessellation, TessError> {
        let scale = self.window.width(&Direction::from_angle(0.0)).max(1.0);
        if subwindow.dimension() != self.window.dimension()
            || !self.window.contains_cell(subwindow, 1e-9 * scale)
        {
            return Err(TessError::NotContained);
        }
        let mut out = Tessellation::initial(subwindow, self.measure.clone())?;
        // Restricted label -> label of the original cell containing it.
        let mut host: BTreeMap<TreeWord, TreeWord> = BTreeMap::new();
        host.insert(TreeWord::root(), TreeWord::root());
        for j in &self.history {
            let Some(local) = host
                .iter()
                .find(|(_, orig)| **orig == j.label)
                .map(|(l, _)| l.clone())
            else {
                continue;
            };
            let cell = out.cell(&local).expect("hosted label is live").clone();
            let cut = cell.hits_interior(&j.hyperplane)
                && cell
                    .clip_with_min_volume(&j.hyperplane, EPS_VOL * subwindow.volume())
                    .is_ok();
            host.remove(&local);
            if cut {
                out.divide(&local, &j.hyperplane, j.time)?;
                host.insert(local.minus(), j.label.minus());
                host.insert(local.plus(), j.label.plus());
            } else {
                let side = if j.hyperplane.offset(&cell.centroid()) < 0.0 {
                    j.label.minus()
                } else {
                    j.label.plus()
                };
                host.insert(local, side);
            }
        }
        Ok(out)
    }

    pub fn to_record(&self) -> TessellationRecord {
        TessellationRecord {
            window: self.window.clone(),
            cells: self.cells().cloned().collect(),
            history: self.history.iter().map(JumpRecordRepr::from).collect(),
        }
    }

    pub fn from_record(record: &TessellationRecord, measure: Arc<HyperplaneMeasure>) -> Result<Self, TessError> {
        let dim = record.window.dimension();
        let history: Vec<JumpRecord> = record.history.iter().map(|r| r.to_record(dim)).collect();
        Tessellation::replay(&record.window, measure, &history)
    }
}
