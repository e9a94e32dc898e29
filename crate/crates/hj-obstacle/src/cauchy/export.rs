//! CSV export of trajectories with a JSON manifest.

use super::FieldTrajectory;
use crate::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub time: f64,
    pub file: String,
    pub sha256: String,
}

/// Parameters, stored times, and checksums of one exported snapshot set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub dim: usize,
    pub points_per_axis: usize,
    pub epsilon: f64,
    pub penalty_delta: Option<f64>,
    pub artificial_viscosity: f64,
    pub lambda: [f64; 2],
    pub dt: f64,
    pub steps: usize,
    pub t_final: f64,
    pub max_overshoot: f64,
    pub snapshots: Vec<SnapshotFile>,
}

/// Writes one CSV per stored snapshot (columns: node coordinates, value)
/// plus `manifest.json` into `dir`.
pub fn export_trajectory(traj: &FieldTrajectory, dir: &Path) -> Result<TrajectoryManifest> {
    fs::create_dir_all(dir)?;
    let grid = traj.grid();
    let mut snapshots = Vec::new();
    for (k, (time, snap)) in traj.times().iter().zip(traj.snapshots()).enumerate() {
        let file = format!("snapshot_{k:04}.csv");
        let path = dir.join(&file);
        let mut writer = csv::Writer::from_path(&path)?;
        if grid.dim() == 1 {
            writer.write_record(["x", "value"])?;
        } else {
            writer.write_record(["x", "y", "value"])?;
        }
        for (i, v) in snap.values().iter().enumerate() {
            let c = grid.coords(i);
            if grid.dim() == 1 {
                writer.write_record([format!("{}", c[0]), format!("{v}")])?;
            } else {
                writer.write_record([format!("{}", c[0]), format!("{}", c[1]), format!("{v}")])?;
            }
        }
        writer.flush()?;
        let sha256 = hex_digest(&fs::read(&path)?);
        snapshots.push(SnapshotFile {
            time: *time,
            file,
            sha256,
        });
    }
    let params = traj.params();
    let manifest = TrajectoryManifest {
        dim: grid.dim(),
        points_per_axis: grid.points_per_axis(),
        epsilon: params.epsilon,
        penalty_delta: params.penalty_delta,
        artificial_viscosity: params.artificial_viscosity,
        lambda: params.lambda,
        dt: traj.dt(),
        steps: traj.step_count(),
        t_final: traj.t_final(),
        max_overshoot: traj.max_overshoot(),
        snapshots,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of a file on disk, hex-encoded.
pub fn sha256_file(path: &Path) -> crate::Result<String> {
    Ok(hex_digest(&fs::read(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cauchy::{solve_obstacle, SolveOptions, StorePolicy};
    use crate::domain::{build_grid, catalog_problem};

    #[test]
    fn export_writes_csvs_and_manifest() {
        let prob = catalog_problem("subcritical-obstacle-1d").unwrap();
        let g = build_grid(1, 32).unwrap();
        let opts = SolveOptions {
            store_policy: StorePolicy::Sampled(4),
            ..Default::default()
        };
        let traj = solve_obstacle(&prob, 1.0, g, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_trajectory(&traj, dir.path()).unwrap();
        assert!(manifest.snapshots.len() >= 2);
        for s in &manifest.snapshots {
            assert!(dir.path().join(&s.file).exists());
            assert_eq!(s.sha256.len(), 64);
        }
        let loaded: TrajectoryManifest =
            serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(loaded.steps, traj.step_count());
    }
}
