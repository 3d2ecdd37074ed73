//! Finite sample spaces with tabulated `log ψ`, partition labels and proposal.
//!
//! Text format (whitespace separated, `#` starts a comment line):
//!
//! ```text
//! N m
//! log_psi_1 … log_psi_N
//! label_1 … label_N          # 1-based subregion indices
//! pi_1 … pi_m
//! q_11 … q_1N                # N proposal rows
//! …
//! q_N1 … q_NN
//! ```
//!
//! Floats are written with 17 significant digits so files round-trip exactly.

use std::fmt::Write as _;
use std::path::Path;
use std::{fs, io};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::kernels::{check_stochastic, DiscreteNeighbor, KernelError};
use crate::samc::{DesiredDistribution, SamcError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("subregion {0} has no states")]
    EmptyRegion(usize),
    #[error("label {label} of state {state} outside 1..={m}")]
    Label { state: usize, label: usize, m: usize },
    #[error(transparent)]
    Proposal(#[from] KernelError),
    #[error(transparent)]
    Desired(#[from] SamcError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChainSpec {
    log_psi: Vec<f64>,
    /// 0-based subregion per state; the last subregion is the reference.
    labels: Vec<usize>,
    proposal: DMatrix<f64>,
    pi: DesiredDistribution,
}

const CHAIN10_TEXT: &str = include_str!("../data/chain10.txt");

impl FiniteChainSpec {
    /// `labels` are 0-based here.
    pub fn new(
        log_psi: Vec<f64>,
        labels: Vec<usize>,
        proposal: DMatrix<f64>,
        pi: DesiredDistribution,
    ) -> Result<Self, ChainError> {
        let n = log_psi.len();
        let m = pi.len();
        if labels.len() != n || proposal.nrows() != n {
            return Err(ChainError::Parse {
                line: 0,
                message: format!(
                    "inconsistent sizes: {n} log-psi values, {} labels, {}x{} proposal",
                    labels.len(),
                    proposal.nrows(),
                    proposal.ncols()
                ),
            });
        }
        if let Some((state, &v)) = log_psi.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(ChainError::Parse {
                line: 0,
                message: format!("log psi of state {} is not finite ({v})", state + 1),
            });
        }
        for (state, &label) in labels.iter().enumerate() {
            if label >= m {
                return Err(ChainError::Label {
                    state: state + 1,
                    label: label + 1,
                    m,
                });
            }
        }
        for region in 0..m {
            if !labels.contains(&region) {
                return Err(ChainError::EmptyRegion(region + 1));
            }
        }
        check_stochastic(&proposal)?;
        Ok(FiniteChainSpec {
            log_psi,
            labels,
            proposal,
            pi,
        })
    }

    /// Ten states with `ψ(x) = x`, subregions `{1,2,3}`, `{4,5,6}`, `{7,…,10}`,
    /// uniform desired distribution and a proposal uniform over the other nine states.
    pub fn chain10() -> Self {
        CHAIN10_TEXT.parse().expect("bundled chain10 data is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChainError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ChainError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn n_states(&self) -> usize {
        self.log_psi.len()
    }

    pub fn n_regions(&self) -> usize {
        self.pi.len()
    }

    pub fn log_psi(&self) -> &[f64] {
        &self.log_psi
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn proposal(&self) -> &DMatrix<f64> {
        &self.proposal
    }

    pub fn pi(&self) -> &DesiredDistribution {
        &self.pi
    }

    pub fn neighbor_proposal(&self) -> DiscreteNeighbor {
        DiscreteNeighbor::new(self.proposal.clone()).expect("validated at construction")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, vals: &mut dyn Iterator<Item = String>| {
            let v: Vec<String> = vals.collect();
            s.push_str(&v.join(" "));
            s.push('\n');
        };
        writeln!(s, "{} {}", self.n_states(), self.n_regions()).unwrap();
        row(&mut s, &mut self.log_psi.iter().map(|v| fmt_f64(*v)));
        row(&mut s, &mut self.labels.iter().map(|l| (l + 1).to_string()));
        row(&mut s, &mut self.pi.iter().map(|v| fmt_f64(*v)));
        for r in self.proposal.row_iter() {
            row(&mut s, &mut r.iter().map(|v| fmt_f64(*v)));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ChainError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| ChainError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

impl std::str::FromStr for FiniteChainSpec {
    type Err = ChainError;

    fn from_str(text: &str) -> Result<Self, ChainError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| ChainError::Parse {
                line: text.lines().count() + 1,
                message: format!("unexpected end of file, expected {what}"),
            })
        };

        let (line, header) = next("header `N m`")?;
        let header: Vec<usize> = parse_row(line, header, "header")?;
        let [n, m] = header[..] else {
            return Err(ChainError::Parse {
                line,
                message: format!("header needs exactly 2 integers, got {}", header.len()),
            });
        };

        let (line, l) = next("log-psi row")?;
        let log_psi: Vec<f64> = parse_row(line, l, "log psi")?;
        expect_len(line, "log psi", log_psi.len(), n)?;

        let (line, l) = next("label row")?;
        let labels: Vec<usize> = parse_row(line, l, "label")?;
        expect_len(line, "labels", labels.len(), n)?;
        if let Some(&bad) = labels.iter().find(|&&v| v == 0 || v > m) {
            return Err(ChainError::Parse {
                line,
                message: format!("label {bad} outside 1..={m}"),
            });
        }

        let (line, l) = next("pi row")?;
        let pi: Vec<f64> = parse_row(line, l, "pi")?;
        expect_len(line, "pi", pi.len(), m)?;
        let pi = DesiredDistribution::new(pi)?;

        let mut proposal = DMatrix::zeros(n, n);
        for i in 0..n {
            let (line, l) = next("proposal row")?;
            let row: Vec<f64> = parse_row(line, l, "proposal")?;
            expect_len(line, "proposal row", row.len(), n)?;
            for (j, v) in row.into_iter().enumerate() {
                proposal[(i, j)] = v;
            }
        }
        if let Some((line, _)) = lines.next() {
            return Err(ChainError::Parse {
                line,
                message: "trailing data after proposal matrix".into(),
            });
        }
        FiniteChainSpec::new(log_psi, labels.into_iter().map(|l| l - 1).collect(), proposal, pi)
    }
}

fn parse_row<T: std::str::FromStr>(line: usize, text: &str, what: &str) -> Result<Vec<T>, ChainError>
where
    T::Err: std::fmt::Display,
{
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|e| ChainError::Parse {
                line,
                message: format!("bad {what} value `{tok}`: {e}"),
            })
        })
        .collect()
}

fn expect_len(line: usize, what: &str, got: usize, want: usize) -> Result<(), ChainError> {
    if got == want {
        Ok(())
    } else {
        Err(ChainError::Parse {
            line,
            message: format!("{what}: expected {want} values, got {got}"),
        })
    }
}
