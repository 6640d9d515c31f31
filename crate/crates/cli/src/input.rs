//! Image arguments and prior specifications.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use otmorph::io::{load_dictionary, load_idx, read_pgm_measure};
use otmorph::priors::SparseProjector;
use otmorph::{ExternalProjector, GridMeasure, Projector};

use crate::config::RunConfig;
use crate::UsageError;

pub const MAX_SIDE: usize = 64;

/// `file.pgm` or `images.idx#index`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSpec {
    Pgm(PathBuf),
    Idx(PathBuf, usize),
}

impl ImageSpec {
    pub fn parse(s: &str) -> Self {
        if let Some((path, index)) = s.rsplit_once('#') {
            if let Ok(i) = index.parse() {
                return ImageSpec::Idx(PathBuf::from(path), i);
            }
        }
        ImageSpec::Pgm(PathBuf::from(s))
    }

    pub fn load(&self, gamma: f64, allow_large: bool) -> anyhow::Result<GridMeasure<f64>> {
        let m = match self {
            ImageSpec::Pgm(p) => {
                read_pgm_measure(p, gamma).with_context(|| format!("reading {}", p.display()))?
            }
            ImageSpec::Idx(p, i) => load_idx(p)
                .with_context(|| format!("reading {}", p.display()))?
                .measure(*i)?,
        };
        check_size(m.shape().rows(), m.shape().cols(), allow_large)?;
        Ok(m)
    }
}

pub fn check_size(rows: usize, cols: usize, allow_large: bool) -> anyhow::Result<()> {
    if !allow_large && (rows > MAX_SIDE || cols > MAX_SIDE) {
        bail!(UsageError(format!(
            "{rows}x{cols} image exceeds {MAX_SIDE}x{MAX_SIDE}; pass --allow-large to run anyway"
        )));
    }
    Ok(())
}

/// `none`, `sparse:<dictfile>` or `external:<command line>`.
pub fn parse_prior(
    spec: &str,
    config: &RunConfig,
    external_timeout: Option<f64>,
) -> anyhow::Result<Projector<f64>> {
    if spec == "none" {
        return Ok(Projector::Identity);
    }
    if let Some(path) = spec.strip_prefix("sparse:") {
        let dict = load_dictionary::<f64>(Path::new(path))
            .with_context(|| format!("loading dictionary {path}"))?;
        let k = config.sparsity();
        if k > dict.atom_count().min(dict.atom_dim()) {
            bail!(UsageError(format!(
                "sparsity {k} exceeds what a {}x{} dictionary supports",
                dict.atom_dim(),
                dict.atom_count()
            )));
        }
        return Ok(Projector::Sparse(SparseProjector {
            dictionary: Arc::new(dict),
            sparsity: k,
            mmse_passes: config.mmse_passes(),
            noise_factor: config.noise_sigma(),
        }));
    }
    if let Some(cmd) = spec.strip_prefix("external:") {
        let mut words = cmd.split_whitespace().map(str::to_string);
        let Some(program) = words.next() else {
            bail!(UsageError("external prior needs a command".into()));
        };
        let mut endpoint = ExternalProjector::new(program, words.collect());
        if let Some(secs) = external_timeout {
            if !(secs > 0.0 && secs.is_finite()) {
                bail!(UsageError(format!("timeout must be positive, got {secs}")));
            }
            endpoint = endpoint.with_timeout(Duration::from_secs_f64(secs));
        }
        return Ok(Projector::External(Arc::new(endpoint)));
    }
    bail!(UsageError(format!(
        "unknown prior '{spec}' (expected none, sparse:<dict> or external:<cmd>)"
    )))
}
