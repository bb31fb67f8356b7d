//! Plain-text MDP interchange format.
//!
//! Layout: a header of `key value` lines (`n_states`, `n_actions`, `gamma`,
//! `r_max`), an `initial` line with one probability per state, a
//! `transitions` block with one row per (s, a) pair in row-major order, and a
//! `rewards` block with one line per state. `#` starts a comment.

use crate::mdp::{MdpError, TabularMdp};
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("missing section: {0}")]
    Missing(&'static str),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

pub fn write_mdp(mdp: &TabularMdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "n_states {}", mdp.n_states);
    let _ = writeln!(out, "n_actions {}", mdp.n_actions);
    let _ = writeln!(out, "gamma {}", fmt_f64(mdp.discount));
    let _ = writeln!(out, "r_max {}", fmt_f64(mdp.r_max));
    let _ = writeln!(out, "initial {}", join(&mdp.initial));
    let _ = writeln!(out, "transitions");
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let _ = writeln!(out, "{}", join(mdp.row(s, a)));
        }
    }
    let _ = writeln!(out, "rewards");
    for s in 0..mdp.n_states {
        let row: Vec<f64> = (0..mdp.n_actions).map(|a| mdp.reward(s, a)).collect();
        let _ = writeln!(out, "{}", join(&row));
    }
    out
}

pub fn parse_mdp(text: &str) -> Result<TabularMdp, FormatError> {
    let mut n_states = None;
    let mut n_actions = None;
    let mut gamma = None;
    let mut r_max = None;
    let mut initial: Option<Vec<f64>> = None;
    let mut transitions: Vec<f64> = Vec::new();
    let mut rewards: Vec<f64> = Vec::new();

    #[derive(PartialEq)]
    enum Section {
        Header,
        Transitions,
        Rewards,
    }
    let mut section = Section::Header;

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| FormatError::Parse { line: idx + 1, message };
        match section {
            Section::Header => {
                let mut parts = line.split_whitespace();
                let key = parts.next().unwrap();
                match key {
                    "n_states" => n_states = Some(parse_usize(parts.next(), idx)?),
                    "n_actions" => n_actions = Some(parse_usize(parts.next(), idx)?),
                    "gamma" => gamma = Some(parse_f64(parts.next(), idx)?),
                    "r_max" => r_max = Some(parse_f64(parts.next(), idx)?),
                    "initial" => {
                        initial = Some(
                            parts
                                .map(|t| t.parse::<f64>().map_err(|e| err(format!("bad float: {e}"))))
                                .collect::<Result<_, _>>()?,
                        )
                    }
                    "transitions" => section = Section::Transitions,
                    "rewards" => section = Section::Rewards,
                    other => return Err(err(format!("unknown key `{other}`"))),
                }
            }
            Section::Transitions => {
                if line == "rewards" {
                    section = Section::Rewards;
                    continue;
                }
                for t in line.split_whitespace() {
                    transitions.push(t.parse().map_err(|e| err(format!("bad float: {e}")))?);
                }
            }
            Section::Rewards => {
                for t in line.split_whitespace() {
                    rewards.push(t.parse().map_err(|e| err(format!("bad float: {e}")))?);
                }
            }
        }
    }

    let n_states = n_states.ok_or(FormatError::Missing("n_states"))?;
    let n_actions = n_actions.ok_or(FormatError::Missing("n_actions"))?;
    let gamma = gamma.ok_or(FormatError::Missing("gamma"))?;
    let initial = initial.ok_or(FormatError::Missing("initial"))?;
    let r_max = r_max.unwrap_or(1.0);
    if transitions.is_empty() {
        return Err(FormatError::Missing("transitions"));
    }
    if rewards.is_empty() {
        return Err(FormatError::Missing("rewards"));
    }
    Ok(TabularMdp::new(n_states, n_actions, transitions, rewards, gamma, initial, r_max)?)
}

fn parse_usize(tok: Option<&str>, line: usize) -> Result<usize, FormatError> {
    tok.ok_or(FormatError::Parse { line: line + 1, message: "missing value".into() })?
        .parse()
        .map_err(|e| FormatError::Parse { line: line + 1, message: format!("bad integer: {e}") })
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, FormatError> {
    tok.ok_or(FormatError::Parse { line: line + 1, message: "missing value".into() })?
        .parse()
        .map_err(|e| FormatError::Parse { line: line + 1, message: format!("bad float: {e}") })
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(" ")
}

fn fmt_f64(v: f64) -> String {
    // %.17g keeps the round trip bit-exact.
    let s = format!("{v:.17e}");
    match s.parse::<f64>() {
        Ok(back) if back == v => s,
        _ => format!("{v:?}"),
    }
}
