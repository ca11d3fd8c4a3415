use std::fmt::Write as _;
use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::types::{ActionVec, StateVec, Trajectory, Transition};

/// Append-only store of observed transitions from one environment.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    obs_dim: usize,
    act_dim: usize,
    transitions: Vec<Transition>,
    /// Drop the oldest transitions beyond this size. `None` keeps all.
    capacity: Option<usize>,
}

impl TransitionDataset {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            transitions: Vec::new(),
            capacity: None,
        }
    }

    pub fn with_capacity_limit(mut self, capacity: usize) -> Self {
        self.capacity = Some(capacity);
        self
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.transitions.get(i)
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        check_dim("dataset state", self.obs_dim, t.state.len())?;
        check_dim("dataset action", self.act_dim, t.action.len())?;
        check_dim("dataset next state", self.obs_dim, t.next_state.len())?;
        self.transitions.push(t);
        if let Some(cap) = self.capacity {
            if self.transitions.len() > cap {
                let excess = self.transitions.len() - cap;
                self.transitions.drain(..excess);
            }
        }
        Ok(())
    }

    pub fn extend_from_trajectory(&mut self, traj: &Trajectory) -> Result<()> {
        for t in &traj.transitions {
            self.push(t.clone())?;
        }
        Ok(())
    }

    /// Whether transition `i` continues into transition `i + 1`.
    pub fn continues(&self, i: usize) -> bool {
        match (self.transitions.get(i), self.transitions.get(i + 1)) {
            (Some(a), Some(b)) => !a.terminated && a.next_state == b.state,
            _ => false,
        }
    }

    /// Start indices of every contiguous window of `len` transitions.
    pub fn windows(&self, len: usize) -> Vec<usize> {
        if len == 0 || self.transitions.len() < len {
            return Vec::new();
        }
        // run[i]: number of consecutive continuations starting at i
        let n = self.transitions.len();
        let mut run = vec![1usize; n];
        for i in (0..n - 1).rev() {
            if self.continues(i) {
                run[i] = run[i + 1] + 1;
            }
        }
        (0..n).filter(|&i| run[i] >= len).collect()
    }

    pub fn csv_header(&self) -> String {
        let mut cols = Vec::with_capacity(2 * self.obs_dim + self.act_dim + 2);
        cols.extend((0..self.obs_dim).map(|i| format!("s_{i}")));
        cols.extend((0..self.act_dim).map(|i| format!("a_{i}")));
        cols.extend((0..self.obs_dim).map(|i| format!("ns_{i}")));
        cols.push("reward".into());
        cols.push("terminated".into());
        cols.join(",")
    }

    /// CSV with header `s_0..,a_0..,ns_0..,reward,terminated`. Floats use
    /// the shortest representation that parses back to the same bits.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for t in &self.transitions {
            let mut first = true;
            for v in t.state.iter().chain(t.action.iter()).chain(t.next_state.iter()) {
                if !first {
                    out.push(',');
                }
                first = false;
                write!(out, "{v}").unwrap();
            }
            writeln!(out, ",{},{}", t.reward, u8::from(t.terminated)).unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty dataset csv".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let obs_dim = cols.iter().filter(|c| c.starts_with("s_")).count();
        let act_dim = cols.iter().filter(|c| c.starts_with("a_")).count();
        let mut ds = Self::new(obs_dim, act_dim);
        if header.trim() != ds.csv_header() {
            return Err(Error::Parse(format!("unexpected dataset header '{header}'")));
        }
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != cols.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} fields, got {}",
                    lineno + 2,
                    cols.len(),
                    fields.len()
                )));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)))
            };
            let vals: Vec<f64> = fields[..fields.len() - 1]
                .iter()
                .map(|f| num(f))
                .collect::<Result<_>>()?;
            let terminated = match fields[fields.len() - 1].trim() {
                "0" | "false" => false,
                "1" | "true" => true,
                other => return Err(Error::Parse(format!("line {}: bad terminated flag '{other}'", lineno + 2))),
            };
            let (s, rest) = vals.split_at(obs_dim);
            let (a, rest) = rest.split_at(act_dim);
            let (ns, r) = rest.split_at(obs_dim);
            ds.push(Transition {
                state: StateVec::new(s.to_vec())?,
                action: ActionVec::new(a.to_vec())?,
                next_state: StateVec::new(ns.to_vec())?,
                reward: r[0],
                terminated,
            })?;
        }
        Ok(ds)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }
}
