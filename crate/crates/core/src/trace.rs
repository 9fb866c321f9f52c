//! Step-indexed run logs and grid-sampled function estimates.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

/// Rows of (step, state vector, aux values). Indices strictly increase;
/// the first non-finite state freezes the trace and records where.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trace {
    state_dim: usize,
    aux_keys: Vec<String>,
    steps: Vec<usize>,
    states: Vec<f64>,
    aux: Vec<f64>,
    diverged_at: Option<usize>,
}

impl Trace {
    pub fn new(state_dim: usize, aux_keys: &[&str]) -> Self {
        Trace {
            state_dim,
            aux_keys: aux_keys.iter().map(|s| s.to_string()).collect(),
            steps: Vec::new(),
            states: Vec::new(),
            aux: Vec::new(),
            diverged_at: None,
        }
    }

    pub fn with_capacity(state_dim: usize, aux_keys: &[&str], rows: usize) -> Self {
        let mut t = Self::new(state_dim, aux_keys);
        t.steps.reserve(rows);
        t.states.reserve(rows * state_dim);
        t.aux.reserve(rows * aux_keys.len());
        t
    }

    /// Appends a row. Returns false once the trace is frozen, either
    /// already or because this state is non-finite.
    ///
    /// # Panics
    /// On a dimension mismatch or a non-increasing index.
    pub fn push(&mut self, step: usize, state: &[f64], aux: &[f64]) -> bool {
        if self.diverged_at.is_some() {
            return false;
        }
        assert_eq!(state.len(), self.state_dim, "state dimension mismatch");
        assert_eq!(aux.len(), self.aux_keys.len(), "aux length mismatch");
        if let Some(&last) = self.steps.last() {
            assert!(step > last, "trace indices must strictly increase");
        }
        if state.iter().any(|v| !v.is_finite()) {
            self.diverged_at = Some(step);
            return false;
        }
        self.steps.push(step);
        self.states.extend_from_slice(state);
        self.aux.extend_from_slice(aux);
        true
    }

    /// Marks the run as diverged at `step` without adding a row.
    pub fn mark_diverged(&mut self, step: usize) {
        if self.diverged_at.is_none() {
            self.diverged_at = Some(step);
        }
    }

    pub fn diverged(&self) -> Option<usize> {
        self.diverged_at
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn aux_keys(&self) -> &[String] {
        &self.aux_keys
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn step(&self, row: usize) -> usize {
        self.steps[row]
    }

    pub fn state(&self, row: usize) -> &[f64] {
        &self.states[row * self.state_dim..(row + 1) * self.state_dim]
    }

    pub fn last_state(&self) -> Option<&[f64]> {
        (!self.is_empty()).then(|| self.state(self.len() - 1))
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        (0..self.len()).map(|r| self.states[r * self.state_dim + d]).collect()
    }

    pub fn aux_column(&self, key: &str) -> Option<Vec<f64>> {
        let k = self.aux_keys.iter().position(|a| a == key)?;
        let w = self.aux_keys.len();
        Some((0..self.len()).map(|r| self.aux[r * w + k]).collect())
    }

    pub fn aux_value(&self, row: usize, key: &str) -> Option<f64> {
        let k = self.aux_keys.iter().position(|a| a == key)?;
        Some(self.aux[row * self.aux_keys.len() + k])
    }

    /// CSV with header `step,state_0..,<aux keys>`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let mut header = vec!["step".to_string()];
        header.extend((0..self.state_dim).map(|d| format!("state_{d}")));
        header.extend(self.aux_keys.iter().cloned());
        writeln!(w, "{}", header.join(","))?;
        let aw = self.aux_keys.len();
        for r in 0..self.len() {
            write!(w, "{}", self.steps[r])?;
            for v in self.state(r) {
                write!(w, ",{v}")?;
            }
            for v in &self.aux[r * aw..(r + 1) * aw] {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// A function sampled on a strictly increasing grid; masked points are
/// undefined (e.g. a vanishing regression denominator).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridFunction {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// `true` marks an undefined point.
    pub mask: Option<Vec<bool>>,
}

impl GridFunction {
    pub fn new(x: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(x.len(), values.len());
        GridFunction { x, values, mask: None }
    }

    pub fn masked(x: Vec<f64>, values: Vec<f64>, mask: Vec<bool>) -> Self {
        assert_eq!(x.len(), values.len());
        assert_eq!(x.len(), mask.len());
        GridFunction { x, values, mask: Some(mask) }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_defined(&self, i: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| !m[i])
    }

    pub fn defined_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_defined(i)).count()
    }

    /// CSV `x,value` (plus `mask` when present); masked values print as NA.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        match &self.mask {
            None => {
                writeln!(w, "x,value")?;
                for (x, v) in self.x.iter().zip(&self.values) {
                    writeln!(w, "{x},{v}")?;
                }
            }
            Some(m) => {
                writeln!(w, "x,value,mask")?;
                for ((x, v), masked) in self.x.iter().zip(&self.values).zip(m) {
                    if *masked {
                        writeln!(w, "{x},NA,1")?;
                    } else {
                        writeln!(w, "{x},{v},0")?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("ascii csv")
    }
}

/// CSV `index,value`.
pub fn write_sequence_csv<W: Write>(values: &[f64], mut w: W) -> Result<()> {
    writeln!(w, "index,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn push_and_freeze() {
        let mut t = Trace::new(2, &["err"]);
        assert!(t.push(0, &[1.0, 2.0], &[0.5]));
        assert!(t.push(3, &[1.5, 2.5], &[0.25]));
        assert!(!t.push(4, &[f64::NAN, 0.0], &[0.0]));
        assert!(!t.push(5, &[0.0, 0.0], &[0.0]));
        assert_eq!(t.len(), 2);
        assert_eq!(t.diverged(), Some(4));
        assert_eq!(t.column(1), vec![2.0, 2.5]);
        assert_eq!(t.aux_column("err").unwrap(), vec![0.5, 0.25]);
        assert_eq!(t.to_csv_string(), "step,state_0,state_1,err\n0,1,2,0.5\n3,1.5,2.5,0.25\n");
    }

    #[test]
    #[should_panic]
    fn indices_must_increase() {
        let mut t = Trace::new(1, &[]);
        t.push(2, &[0.0], &[]);
        t.push(2, &[0.0], &[]);
    }

    #[test]
    fn grid_csv_masks() {
        let g = GridFunction::masked(vec![0.0, 1.0], vec![3.0, 0.0], vec![false, true]);
        assert_eq!(g.to_csv_string(), "x,value,mask\n0,3,0\n1,NA,1\n");
        assert_eq!(g.defined_count(), 1);
    }
}
