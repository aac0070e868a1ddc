//! Line-oriented input and output shared by the subcommands.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use discoseq::treebank::{open_reader, Format};
use rayon::prelude::*;

use crate::Failure;

/// Lines processed per parallel batch. Bounds memory on long streams.
const CHUNK: usize = 2048;

/// Opens `path` for reading; `-` is standard input.
pub fn input(path: &Path) -> anyhow::Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    open_reader(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Opens `path` for writing; `None` or `-` is standard output.
pub fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    match path {
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
        Some(p) if p == Path::new("-") => Ok(Box::new(BufWriter::new(io::stdout()))),
        Some(p) => {
            let file = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
            Ok(Box::new(BufWriter::new(file)))
        }
    }
}

/// Guesses the tree format from the file name when none is given.
pub fn tree_format(explicit: Option<Format>, path: &Path) -> Format {
    if let Some(f) = explicit {
        return f;
    }
    let name = path.to_string_lossy();
    let name = name.strip_suffix(".gz").unwrap_or(&name);
    if name.ends_with(".mrg") || name.ends_with(".ptb") || name.ends_with(".bracketed") {
        Format::Bracketed
    } else {
        Format::Discbracket
    }
}

/// Non-blank lines with their 1-based line numbers.
pub fn numbered_lines(reader: Box<dyn BufRead>, name: String) -> impl Iterator<Item = Result<(usize, String), Failure>> {
    reader.lines().enumerate().filter_map(move |(i, line)| match line {
        Ok(l) if l.trim().is_empty() => None,
        Ok(l) => Some(Ok((i + 1, l))),
        Err(e) => Some(Err(Failure::Data(anyhow!("{name}: {e}")))),
    })
}

/// Worker pool for `--jobs`; one job runs on the calling thread.
pub struct Jobs(Option<rayon::ThreadPool>);

impl Jobs {
    pub fn new(n: usize) -> anyhow::Result<Self> {
        if n <= 1 {
            return Ok(Jobs(None));
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build()?;
        Ok(Jobs(Some(pool)))
    }

    /// Maps `f` over `items` in chunks and hands results to `sink` in input
    /// order. Stops at the first error in input order.
    pub fn map_ordered<T, U, F, S>(&self, items: impl Iterator<Item = Result<T, Failure>>, f: F, mut sink: S) -> Result<(), Failure>
    where
        T: Send,
        U: Send,
        F: Fn(T) -> Result<U, Failure> + Sync,
        S: FnMut(U) -> Result<(), Failure>,
    {
        let mut items = items.peekable();
        while items.peek().is_some() {
            let chunk = items.by_ref().take(CHUNK).collect::<Result<Vec<T>, Failure>>()?;
            let results: Vec<Result<U, Failure>> = match &self.0 {
                Some(pool) => pool.install(|| chunk.into_par_iter().map(&f).collect()),
                None => chunk.into_iter().map(&f).collect(),
            };
            for r in results {
                sink(r?)?;
            }
        }
        Ok(())
    }
}
