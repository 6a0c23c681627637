use std::fmt;
use std::str::FromStr;

use crate::cr::SelectorTrace;
use crate::efficiency::OneStepTrace;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Hist,
    Cr,
    Storey,
    Langaas,
    OneStep,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Hist,
        Method::Cr,
        Method::Storey,
        Method::Langaas,
        Method::OneStep,
        Method::Oracle,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hist => "hist",
            Method::Cr => "cr",
            Method::Storey => "storey",
            Method::Langaas => "langaas",
            Method::OneStep => "onestep",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

/// Method-specific record of how an estimate was reached.
#[derive(Debug, Clone, PartialEq)]
pub enum Trace {
    /// One-based index of the minimizing cell.
    Histogram { k_hat: usize, cells: usize },
    Cr(Box<SelectorTrace>),
    Storey { lambda: f64 },
    Oracle { delta: f64 },
    /// Largest p-value, where the Grenander fit is read.
    Langaas { x_max: f64 },
    OneStep(OneStepTrace),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub theta_hat: f64,
    pub method: Method,
    pub trace: Trace,
}
