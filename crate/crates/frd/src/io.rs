//! On-disk formats: kernel grids, radial profiles, and decomposition
//! manifests.
//!
//! A kernel file is raw little-endian 64-bit floats in row-major axis order
//! (`<name>.f64`) next to a JSON sidecar `<name>.json` carrying
//! `{d, L, J, M, spacing, role}`. A decomposition directory holds one
//! kernel file per scale, the remainder, and a `manifest.json` that embeds
//! the contract results and (for fractional builds) the quadrature rule and
//! bound report, so a run can be reconstructed from its outputs.

use crate::base::ContractReport;
use crate::error::{Error, Result};
use crate::frac::FracDecomposition;
use crate::lattice::{Kernel, TorusGeometry};
use crate::report::BoundReport;
use crate::weights::quadrature::NodeSet;
use crate::weights::{QuadratureSpec, SpectralParams};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// JSON sidecar of a kernel grid file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSidecar {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub spacing: f64,
    pub role: String,
}

/// Write a raw grid `<stem>.f64` plus its `<stem>.json` sidecar. Field
/// samples and kernels share this format; only kernels carry the evenness
/// contract.
pub fn write_grid(
    dir: &Path,
    stem: &str,
    geom: &TorusGeometry,
    values: &[f64],
    role: &str,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let data_path = dir.join(format!("{stem}.f64"));
    fs::write(&data_path, bytes)?;
    let sidecar = KernelSidecar {
        d: geom.dim(),
        l: geom.scale_base(),
        j: geom.depth(),
        m: geom.side(),
        spacing: geom.spacing(),
        role: role.to_string(),
    };
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(data_path)
}

/// Write `<stem>.f64` and `<stem>.json`.
pub fn write_kernel(dir: &Path, stem: &str, kernel: &Kernel, role: &str) -> Result<PathBuf> {
    write_grid(dir, stem, kernel.geometry(), kernel.values(), role)
}

/// Read a kernel grid from `<stem>.f64` + `<stem>.json`.
pub fn read_kernel(dir: &Path, stem: &str) -> Result<(Kernel, KernelSidecar)> {
    let sidecar_path = dir.join(format!("{stem}.json"));
    let sidecar: KernelSidecar = serde_json::from_str(&fs::read_to_string(&sidecar_path)?)?;
    let geom = TorusGeometry::new(sidecar.d, sidecar.l, sidecar.j, sidecar.m)?
        .with_spacing(sidecar.spacing);
    let data_path = dir.join(format!("{stem}.f64"));
    let bytes = fs::read(&data_path)?;
    let expected = geom.site_count() * 8;
    if bytes.len() != expected {
        return Err(Error::Manifest(format!(
            "kernel file {} has {} bytes, expected {expected}",
            data_path.display(),
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let kernel = Kernel::from_values(geom, values)?;
    Ok((kernel, sidecar))
}

/// Radial profile CSV: `distance,value` rows sorted by distance.
pub fn write_radial_csv(path: &Path, kernel: &Kernel, max_radius: Option<f64>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = String::from("distance,value\n");
    for (r, v) in kernel.radial_profile(max_radius) {
        out.push_str(&format!("{r:.12e},{v:.16e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

/// The decomposition manifest. Base builds fill `s`; fractional builds fill
/// `alpha`, `m2`, `quad_nodes` and optionally a bound report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m2: Option<f64>,
    pub strategy: String,
    pub ranges: Vec<f64>,
    pub range_tol: f64,
    pub contract_results: ContractReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad: Option<QuadratureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_nodes: Option<NodeSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode_identity_rel_err: Option<f64>,
    pub scale_files: Vec<String>,
    pub remainder_file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_report: Option<BoundReport>,
}

/// Serialise a fractional decomposition into `dir`: kernels, radial
/// profiles, and `manifest.json`.
pub fn save_fractional(
    dir: &Path,
    dec: &FracDecomposition,
    bound_report: Option<&BoundReport>,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut scale_files = Vec::new();
    for (j, k) in dec.scales.iter().enumerate() {
        let stem = format!("scale_{j:02}");
        write_kernel(dir, &stem, k, &format!("scale_{j}"))?;
        write_radial_csv(
            &dir.join(format!("{stem}_radial.csv")),
            k,
            Some(dec.declared_range(j) + 2.0),
        )?;
        scale_files.push(format!("{stem}.f64"));
    }
    write_kernel(dir, "remainder", &dec.remainder, "remainder")?;
    let manifest = Manifest {
        kind: "fractional".to_string(),
        d: dec.geom.dim(),
        l: dec.geom.scale_base(),
        j: dec.geom.depth(),
        m: dec.geom.side(),
        s: None,
        alpha: Some(dec.params.alpha()),
        m2: Some(dec.params.m2()),
        strategy: dec.strategy_name.clone(),
        ranges: (0..dec.scales.len()).map(|j| dec.declared_range(j)).collect(),
        range_tol: dec.range_tol,
        contract_results: dec.contract.clone(),
        quad: Some(dec.quad),
        quad_nodes: Some(dec.nodes.clone()),
        mode_identity_rel_err: Some(dec.mode_identity_rel_err),
        scale_files,
        remainder_file: "remainder.f64".to_string(),
        bound_report: bound_report.cloned(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// Serialise a base decomposition into `dir`.
pub fn save_base(dir: &Path, dec: &crate::base::BaseDecomposition) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut scale_files = Vec::new();
    for (j, k) in dec.scales.iter().enumerate() {
        let stem = format!("scale_{j:02}");
        write_kernel(dir, &stem, k, &format!("scale_{j}"))?;
        scale_files.push(format!("{stem}.f64"));
    }
    write_kernel(dir, "remainder", &dec.remainder, "remainder")?;
    let manifest = Manifest {
        kind: "base".to_string(),
        d: dec.geom.dim(),
        l: dec.geom.scale_base(),
        j: dec.geom.depth(),
        m: dec.geom.side(),
        s: Some(dec.s),
        alpha: None,
        m2: None,
        strategy: dec.strategy_name.clone(),
        ranges: (0..dec.scales.len()).map(|j| dec.declared_range(j)).collect(),
        range_tol: dec.range_tol,
        contract_results: dec.contract.clone(),
        quad: None,
        quad_nodes: None,
        mode_identity_rel_err: None,
        scale_files,
        remainder_file: "remainder.f64".to_string(),
        bound_report: None,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

/// A decomposition reconstructed from disk.
pub struct LoadedDecomposition {
    pub manifest: Manifest,
    pub dir: PathBuf,
    pub scales: Vec<Kernel>,
    pub remainder: Kernel,
}

/// Load a manifest (given the `manifest.json` path or its directory) and
/// every kernel it references.
pub fn load_decomposition(path: &Path) -> Result<LoadedDecomposition> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join("manifest.json"))
    } else {
        (
            path.parent()
                .ok_or_else(|| Error::Manifest("manifest path has no parent".into()))?
                .to_path_buf(),
            path.to_path_buf(),
        )
    };
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let mut scales = Vec::new();
    for file in &manifest.scale_files {
        let stem = file.trim_end_matches(".f64");
        let (k, _) = read_kernel(&dir, stem)?;
        scales.push(k);
    }
    let stem = manifest.remainder_file.trim_end_matches(".f64");
    let (remainder, _) = read_kernel(&dir, stem)?;
    Ok(LoadedDecomposition {
        manifest,
        dir,
        scales,
        remainder,
    })
}

impl LoadedDecomposition {
    /// Rebuild the in-memory fractional decomposition (fractional manifests
    /// only).
    pub fn into_fractional(self) -> Result<FracDecomposition> {
        if self.manifest.kind != "fractional" {
            return Err(Error::Manifest(format!(
                "expected a fractional manifest, found kind '{}'",
                self.manifest.kind
            )));
        }
        let alpha = self
            .manifest
            .alpha
            .ok_or_else(|| Error::Manifest("manifest lacks alpha".into()))?;
        let m2 = self
            .manifest
            .m2
            .ok_or_else(|| Error::Manifest("manifest lacks m2".into()))?;
        let params = SpectralParams::new(alpha, m2)?;
        let geom = TorusGeometry::new(self.manifest.d, self.manifest.l, self.manifest.j, self.manifest.m)?;
        let nodes = self
            .manifest
            .quad_nodes
            .clone()
            .ok_or_else(|| Error::Manifest("manifest lacks quad_nodes".into()))?;
        let quad = self
            .manifest
            .quad
            .ok_or_else(|| Error::Manifest("manifest lacks quad".into()))?;
        let zero_mode_excluded = m2 == 0.0;
        Ok(FracDecomposition {
            params,
            geom,
            strategy_name: self.manifest.strategy.clone(),
            range_tol: self.manifest.range_tol,
            scales: self.scales,
            remainder: self.remainder,
            nodes,
            quad,
            contract: self.manifest.contract_results.clone(),
            mode_identity_rel_err: self.manifest.mode_identity_rel_err.unwrap_or(f64::NAN),
            zero_mode_excluded,
        })
    }
}
