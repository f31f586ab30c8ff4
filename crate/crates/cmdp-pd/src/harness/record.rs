//! Per-iteration series across seeds and their CSV persistence.
//!
//! Schema: `t,seed,v_r,v_g,lambda,phi,fallbacks,cap_hits` per seed file,
//! aggregates in a sibling `_agg` file with `mean_`/`std_` column prefixes.
//! The `phi` cell is empty unless the run tracked the saddle distance.
//! Values are written with the shortest round-trip float representation,
//! so repeated runs produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pgpd::IterRow;
use crate::rng::kahan_sum;

pub const SEED_HEADER: &str = "t,seed,v_r,v_g,lambda,phi,fallbacks,cap_hits";
pub const AGG_HEADER: &str = "t,mean_v_r,std_v_r,mean_v_g,std_v_g,mean_lambda,std_lambda,mean_phi,std_phi,mean_fallbacks,std_fallbacks,mean_cap_hits,std_cap_hits";

/// Aggregate statistics for one iteration across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct AggRow {
    pub t: usize,
    pub mean_v_r: f64,
    pub std_v_r: f64,
    pub mean_v_g: f64,
    pub std_v_g: f64,
    pub mean_lambda: f64,
    pub std_lambda: f64,
    pub mean_phi: Option<f64>,
    pub std_phi: Option<f64>,
    pub mean_fallbacks: f64,
    pub std_fallbacks: f64,
    pub mean_cap_hits: f64,
    pub std_cap_hits: f64,
}

/// All series of one experiment: per-seed rows plus aggregates.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub experiment: String,
    pub per_seed: Vec<(u64, Vec<IterRow>)>,
    pub aggregate: Vec<AggRow>,
}

/// Sample mean and standard deviation (ddof = 1; zero for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = kahan_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0);
    (mean, var.sqrt())
}

impl RunRecord {
    pub fn assemble(experiment: &str, per_seed: Vec<(u64, Vec<IterRow>)>) -> Result<Self> {
        let iterations = per_seed
            .first()
            .map(|(_, rows)| rows.len())
            .ok_or_else(|| Error::InvalidParameter("record needs at least one seed".into()))?;
        for (seed, rows) in &per_seed {
            if rows.len() != iterations {
                return Err(Error::InvalidParameter(format!(
                    "seed {seed} produced {} rows, expected {iterations}",
                    rows.len()
                )));
            }
        }
        let mut aggregate = Vec::with_capacity(iterations);
        for t in 0..iterations {
            let col = |f: &dyn Fn(&IterRow) -> f64| -> Vec<f64> {
                per_seed.iter().map(|(_, rows)| f(&rows[t])).collect()
            };
            let (mean_v_r, std_v_r) = mean_std(&col(&|r| r.v_r));
            let (mean_v_g, std_v_g) = mean_std(&col(&|r| r.v_g));
            let (mean_lambda, std_lambda) = mean_std(&col(&|r| r.lambda));
            let (mean_fallbacks, std_fallbacks) = mean_std(&col(&|r| f64::from(r.fallbacks)));
            let (mean_cap_hits, std_cap_hits) = mean_std(&col(&|r| r.cap_hits as f64));
            let phis: Option<Vec<f64>> = per_seed.iter().map(|(_, rows)| rows[t].phi).collect();
            let (mean_phi, std_phi) = match phis {
                Some(values) => {
                    let (m, s) = mean_std(&values);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            aggregate.push(AggRow {
                t,
                mean_v_r,
                std_v_r,
                mean_v_g,
                std_v_g,
                mean_lambda,
                std_lambda,
                mean_phi,
                std_phi,
                mean_fallbacks,
                std_fallbacks,
                mean_cap_hits,
                std_cap_hits,
            });
        }
        Ok(Self { experiment: experiment.to_string(), per_seed, aggregate })
    }

    pub fn seed_path(&self, dir: &Path, seed: u64) -> PathBuf {
        dir.join(format!("{}_seed{}.csv", self.experiment, seed))
    }

    pub fn agg_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}_agg.csv", self.experiment))
    }

    /// Writes one CSV per seed plus the aggregate file; returns the paths.
    pub fn persist(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (seed, rows) in &self.per_seed {
            let path = self.seed_path(dir, *seed);
            let mut out = String::with_capacity(rows.len() * 64);
            out.push_str(SEED_HEADER);
            out.push('\n');
            for row in rows {
                let phi = row.phi.map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    row.t, seed, row.v_r, row.v_g, row.lambda, phi, row.fallbacks, row.cap_hits
                ));
            }
            write_atomically(&path, &out)?;
            written.push(path);
        }
        let path = self.agg_path(dir);
        let mut out = String::with_capacity(self.aggregate.len() * 96);
        out.push_str(AGG_HEADER);
        out.push('\n');
        for row in &self.aggregate {
            let mean_phi = row.mean_phi.map(|v| v.to_string()).unwrap_or_default();
            let std_phi = row.std_phi.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                row.t,
                row.mean_v_r,
                row.std_v_r,
                row.mean_v_g,
                row.std_v_g,
                row.mean_lambda,
                row.std_lambda,
                mean_phi,
                std_phi,
                row.mean_fallbacks,
                row.std_fallbacks,
                row.mean_cap_hits,
                row.std_cap_hits
            ));
        }
        write_atomically(&path, &out)?;
        written.push(path);
        Ok(written)
    }
}

fn write_atomically(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("csv.tmp");
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Reads a per-seed CSV back into rows (used by tests and the aggregate
/// recomputation check).
pub fn read_seed_csv(path: &Path) -> Result<Vec<IterRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Config("empty CSV".into()))?;
    if header != SEED_HEADER {
        return Err(Error::Config(format!("unexpected CSV header: {header}")));
    }
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Config(format!("malformed CSV row: {line}")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Config(format!("bad float '{s}': {e}")))
        };
        rows.push(IterRow {
            t: fields[0].parse().map_err(|e| Error::Config(format!("bad t: {e}")))?,
            v_r: parse(fields[2])?,
            v_g: parse(fields[3])?,
            lambda: parse(fields[4])?,
            phi: if fields[5].is_empty() { None } else { Some(parse(fields[5])?) },
            fallbacks: fields[6].parse().map_err(|e| Error::Config(format!("bad fallbacks: {e}")))?,
            cap_hits: fields[7].parse().map_err(|e| Error::Config(format!("bad cap_hits: {e}")))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize, v_r: f64, v_g: f64) -> IterRow {
        IterRow { t, v_r, v_g, lambda: 0.5, phi: None, fallbacks: 0, cap_hits: 2 }
    }

    #[test]
    fn aggregate_matches_recomputation() {
        let per_seed = vec![
            (0u64, vec![row(0, 1.0, -2.0), row(1, 2.0, -1.0)]),
            (1u64, vec![row(0, 3.0, -4.0), row(1, 6.0, -3.0)]),
        ];
        let record = RunRecord::assemble("demo", per_seed).unwrap();
        assert_eq!(record.aggregate.len(), 2);
        assert!((record.aggregate[0].mean_v_r - 2.0).abs() < 1e-12);
        assert!((record.aggregate[1].mean_v_r - 4.0).abs() < 1e-12);
        // Sample std of {2, 6} is 2 sqrt(2).
        assert!((record.aggregate[1].std_v_r - 8.0f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mismatched_row_counts_rejected() {
        let per_seed = vec![
            (0u64, vec![row(0, 1.0, -2.0)]),
            (1u64, vec![row(0, 3.0, -4.0), row(1, 6.0, -3.0)]),
        ];
        assert!(RunRecord::assemble("demo", per_seed).is_err());
    }

    #[test]
    fn csv_round_trips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let per_seed = vec![(3u64, vec![row(0, 1.25, -0.5), row(1, 0.1, 0.3)])];
        let record = RunRecord::assemble("demo", per_seed.clone()).unwrap();
        let paths = record.persist(dir.path()).unwrap();
        let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        record.persist(dir.path()).unwrap();
        let second: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        assert_eq!(first, second);

        let rows = read_seed_csv(&record.seed_path(dir.path(), 3)).unwrap();
        assert_eq!(rows, per_seed[0].1);
    }
}
