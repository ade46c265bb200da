//! Replicate execution backends.
//!
//! Results are always collected in replicate order, so reductions done by
//! the caller see the same sequence whatever the backend or worker count.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    Sequential,
    /// Rayon workers; `threads == 0` uses the global pool. Without the
    /// `parallel` feature this runs sequentially.
    Parallel { threads: usize },
}

impl Default for Backend {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Backend::Parallel { threads: 0 }
        } else {
            Backend::Sequential
        }
    }
}

impl Backend {
    pub fn name(&self) -> String {
        match self {
            Backend::Sequential => "sequential".into(),
            Backend::Parallel { threads: 0 } => "parallel".into(),
            Backend::Parallel { threads } => format!("parallel:{threads}"),
        }
    }

    /// `f(0), …, f(n − 1)` in index order.
    pub fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match *self {
            Backend::Sequential => (0..n).map(f).collect(),
            Backend::Parallel { threads } => parallel_map(threads, n, f),
        }
    }

    pub fn try_map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        self.map(n, f).into_iter().collect()
    }
}

impl std::str::FromStr for Backend {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "sequential" | "seq" => Ok(Backend::Sequential),
            "parallel" | "par" => Ok(Backend::Parallel { threads: 0 }),
            _ => match s.strip_prefix("parallel:").map(str::parse::<usize>) {
                Some(Ok(threads)) => Ok(Backend::Parallel { threads }),
                _ => Err(crate::Error::InvalidParameter(format!(
                    "unknown backend '{s}' (sequential, parallel, parallel:N)"
                ))),
            },
        }
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(threads: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    let run = || (0..n).into_par_iter().map(&f).collect();
    if threads == 0 {
        return run();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(run),
        Err(_) => (0..n).map(&f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(_threads: usize, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backends_agree_in_order() {
        let f = |i: usize| (i as f64).sqrt();
        let a = Backend::Sequential.map(1000, f);
        let b = Backend::Parallel { threads: 3 }.map(1000, f);
        assert_eq!(a, b);
        assert_eq!("parallel:2".parse::<Backend>().unwrap(), Backend::Parallel { threads: 2 });
        assert!("fast".parse::<Backend>().is_err());
    }
}
