//! Experiment execution, artifact writing and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};
use trimwave_core::diagnostics::{
    default_source, mobility_csv, mobility_scan, nonempty_gap_check, ucp_csv, ucp_experiment,
    wegner_experiment, Classification, MobilityParams, Sigma0Reference, WegnerParams,
};
use trimwave_core::disorder::{sample_potential, EnsembleSpec};
use trimwave_core::geometry::{build_periodic_box, build_trim_mask, SiteCoord, TrimMask};
use trimwave_core::green::{decay_fit, green_column, zeta_sweep};
use trimwave_core::hamiltonian::assemble_h;
use trimwave_core::spectral::{
    admissible_containment, eigen_sym, energy_region, hellmann_feynman, spectrum_endpoints,
};
use trimwave_core::states::{all_modes, build_extended_state, invariant_subspace_check, residual};

use crate::config::{
    EndpointsParams, Experiment, ExperimentConfig, ExtendedParams, GreenExpectation, GreenParams,
    MobilityConfig, SpectrumParams, UcpParams, WegnerConfig,
};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] trimwave_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

fn assertion(name: &str, pass: bool, detail: String) -> Assertion {
    Assertion {
        name: name.to_string(),
        pass,
        detail,
    }
}

/// Files (name, bytes) and assertion outcomes of one experiment.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub assertions: Vec<Assertion>,
}

impl Outputs {
    fn file(&mut self, name: &str, text: String) {
        self.files.push((name.to_string(), text.into_bytes()));
    }

    fn json(&mut self, name: &str, value: serde_json::Value) {
        let mut s = serde_json::to_string_pretty(&value).expect("serializable");
        s.push('\n');
        self.file(name, s);
    }

    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|a| a.pass)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema: u32,
    pub tool: String,
    pub version: String,
    pub experiment: String,
    pub config_sha256: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub assertions: Vec<Assertion>,
    pub pass: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct Setup {
    gamma0: Vec<SiteCoord>,
    mask: TrimMask,
    ensemble: EnsembleSpec,
}

fn setup(cfg: &ExperimentConfig, realizations: u64) -> Result<Setup, RunError> {
    let gamma0 = cfg.gamma0().map_err(RunError::Config)?;
    let mask = build_trim_mask(&build_periodic_box(&cfg.geometry)?, &gamma0)?;
    let ensemble = EnsembleSpec {
        seed: cfg.seed,
        realizations,
        distribution: cfg.distribution,
        mask: mask.clone(),
    };
    Ok(Setup {
        gamma0,
        mask,
        ensemble,
    })
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Runs the configured experiment in the current rayon pool.
pub fn execute(cfg: &ExperimentConfig) -> Result<Outputs, RunError> {
    match &cfg.experiment {
        Experiment::Spectrum(p) => spectrum(cfg, p),
        Experiment::Endpoints(p) => endpoints(cfg, p),
        Experiment::ExtendedCheck(p) => extended(cfg, p),
        Experiment::Green(p) => green(cfg, p),
        Experiment::Wegner(p) => wegner(cfg, p),
        Experiment::MobilityScan(p) => mobility(cfg, p),
        Experiment::Ucp(p) => ucp(cfg, p),
    }
}

fn sigma0_for(cfg: &ExperimentConfig, gamma0: &[SiteCoord]) -> Result<Sigma0Reference, RunError> {
    Ok(Sigma0Reference::for_geometry(&cfg.geometry, gamma0, 2)?)
}

fn spectrum(cfg: &ExperimentConfig, p: &SpectrumParams) -> Result<Outputs, RunError> {
    let s = setup(cfg, p.realizations)?;
    let ends = (
        spectrum_endpoints(&s.mask, cfg.distribution.a)?.0,
        spectrum_endpoints(&s.mask, cfg.distribution.b)?.1,
    );
    let per_r: Vec<(Vec<f64>, bool)> = (0..p.realizations)
        .into_par_iter()
        .map(|r| {
            let w = sample_potential(&s.ensemble, r)?;
            let rep = admissible_containment(&s.mask, &cfg.distribution, &w, Some(ends))?;
            let values = eigen_sym(&assemble_h(s.mask.lattice(), &w)?, false)?.values;
            Ok((values, rep.contained))
        })
        .collect::<Result<_, trimwave_core::Error>>()?;
    let mut csv = String::from("realization,n,E\n");
    for (r, (values, _)) in per_r.iter().enumerate() {
        for (n, e) in values.iter().enumerate() {
            csv.push_str(&format!("{r},{n},{e}\n"));
        }
    }
    let sigma0 = sigma0_for(cfg, &s.gamma0)?;
    let region = energy_region(&cfg.geometry.periods, cfg.geometry.d1, cfg.geometry.d2)?;
    let mut out = Outputs::default();
    out.file("spectrum.csv", csv);
    let contained = per_r.iter().filter(|x| x.1).count();
    out.json(
        "spectrum.json",
        json!({
            "schema": 1,
            "sites": s.mask.lattice().site_count(),
            "sides": s.mask.lattice().sides(),
            "e_min_a": ends.0,
            "e_max_b": ends.1,
            "sigma0": sigma0.set(),
            "sigma0_method": sigma0.method,
            "energy_region": region,
            "realizations": per_r.iter().enumerate().map(|(r, (v, c))| json!({
                "realization": r, "min": v[0], "max": v[v.len() - 1], "contained": c
            })).collect::<Vec<_>>(),
        }),
    );
    out.assertions.push(assertion(
        "containment",
        contained == per_r.len(),
        format!(
            "{contained}/{} spectra inside [E_min(a), E_max(b)] = [{}, {}]",
            per_r.len(),
            ends.0,
            ends.1
        ),
    ));
    Ok(out)
}

fn endpoints(cfg: &ExperimentConfig, p: &EndpointsParams) -> Result<Outputs, RunError> {
    let s = setup(cfg, 1)?;
    let g = &cfg.geometry;
    let sigma0 = sigma0_for(cfg, &s.gamma0)?;
    let gap = nonempty_gap_check(g, &s.gamma0, &cfg.distribution, &sigma0)?;
    let mut couplings = vec![cfg.distribution.a, cfg.distribution.b];
    couplings.extend(&p.couplings);
    let h = 1e-4;
    let mut hf = Vec::new();
    let mut out = Outputs::default();
    for &a in &couplings {
        match hellmann_feynman(&g.periods, g.d1, &s.gamma0, a) {
            Ok(gs) => {
                let up = hellmann_feynman(&g.periods, g.d1, &s.gamma0, a + h)?.energy;
                let down = hellmann_feynman(&g.periods, g.d1, &s.gamma0, a - h)?.energy;
                let fd = (up - down) / (2.0 * h);
                out.assertions.push(assertion(
                    &format!("hellmann-feynman a={a}"),
                    gs.derivative > 0.0 && (gs.derivative - fd).abs() <= 1e-6,
                    format!("dE/da = {}, finite difference {fd}", gs.derivative),
                ));
                hf.push(json!({"a": a, "energy": gs.energy, "derivative": gs.derivative, "finite_difference": fd, "gap": gs.gap}));
            }
            Err(trimwave_core::Error::Degenerate { gap, .. }) => {
                hf.push(json!({"a": a, "skipped": format!("degenerate cell ground state, gap {gap:e}")}));
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.json(
        "endpoints.json",
        json!({
            "schema": 1,
            "gap": gap,
            "sigma0": sigma0.set(),
            "sigma0_method": sigma0.method,
            "hellmann_feynman": hf,
        }),
    );
    out.assertions.push(assertion(
        "gap bottom",
        gap.eta_bottom > 0.0,
        format!("eta = {}", gap.eta_bottom),
    ));
    out.assertions.push(assertion(
        "gap top",
        gap.eta_top > 0.0,
        format!("eta = {}", gap.eta_top),
    ));
    Ok(out)
}

fn extended(cfg: &ExperimentConfig, p: &ExtendedParams) -> Result<Outputs, RunError> {
    let s = setup(cfg, p.realizations)?;
    let modes = all_modes(&s.mask);
    let states = modes
        .iter()
        .map(|m| build_extended_state(&s.mask, m, p.allow_odd_width))
        .collect::<Result<Vec<_>, _>>()?;
    let per_r: Vec<Vec<f64>> = (0..p.realizations)
        .into_par_iter()
        .map(|r| {
            let h = assemble_h(s.mask.lattice(), &sample_potential(&s.ensemble, r)?)?;
            states
                .iter()
                .map(|st| residual(&h, st, st.energy))
                .collect()
        })
        .collect::<Result<_, trimwave_core::Error>>()?;
    let mut csv = String::from("realization,ell,m,E,residual,verified\n");
    let mut worst: f64 = 0.0;
    let mut unverified = 0;
    for (r, res) in per_r.iter().enumerate() {
        for (st, &x) in states.iter().zip(res) {
            csv.push_str(&format!(
                "{r},{},{},{},{x},{}\n",
                join(&st.mode.ell),
                join(&st.mode.m),
                st.energy,
                st.verified
            ));
            if st.verified {
                worst = worst.max(x);
            } else {
                unverified += 1;
            }
        }
    }
    let h0 = assemble_h(s.mask.lattice(), &sample_potential(&s.ensemble, 0)?)?;
    let mut subspaces = Vec::new();
    let mut ells: Vec<Vec<usize>> = modes.iter().map(|m| m.ell.clone()).collect();
    ells.dedup();
    for ell in &ells {
        subspaces.push(invariant_subspace_check(&h0, &s.mask, ell)?);
    }
    let mut out = Outputs::default();
    out.file("extended.csv", csv);
    out.json(
        "extended.json",
        json!({
            "schema": 1,
            "modes": modes.len(),
            "realizations": p.realizations,
            "max_residual_verified": worst,
            "unverified_rows": unverified,
            "subspaces_realization_0": subspaces,
        }),
    );
    out.assertions.push(assertion(
        "extended residual",
        worst <= 1e-12,
        format!("max residual {worst:e} over verified states; {unverified} unverified rows"),
    ));
    if unverified == 0 {
        out.assertions.push(assertion(
            "invariant subspaces",
            subspaces.iter().all(|r| r.invariant),
            format!(
                "{} confined modes checked on realization 0",
                subspaces.len()
            ),
        ));
    }
    Ok(out)
}

fn green(cfg: &ExperimentConfig, p: &GreenParams) -> Result<Outputs, RunError> {
    let s = setup(cfg, p.realization + 1)?;
    let b = s.mask.lattice();
    let src = p
        .source
        .clone()
        .unwrap_or_else(|| default_source(&cfg.geometry));
    let x = b.index(&src)?;
    let h = assemble_h(b, &sample_potential(&s.ensemble, p.realization)?)?;
    let sweep = zeta_sweep(&h, p.energy, x, p.zeta_max, p.zeta_min, p.zeta_points)?;
    let fit = decay_fit(
        &green_column(&h, p.energy, p.zeta_min, x)?,
        b,
        p.min_dist,
        p.boundary_margin,
    )?;
    let sigma0 = sigma0_for(cfg, &s.gamma0)?;
    let region = energy_region(&cfg.geometry.periods, cfg.geometry.d1, cfg.geometry.d2)?;
    let mut csv = String::from("E,zeta,S,zeta_S,alpha_running\n");
    for i in 0..sweep.zetas.len() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            p.energy, sweep.zetas[i], sweep.sums[i], sweep.zeta_sums[i], sweep.alpha_running[i]
        ));
    }
    let mut out = Outputs::default();
    out.file("green_sweep.csv", csv);
    out.json(
        "green.json",
        json!({
            "schema": 1,
            "energy": p.energy,
            "source": src,
            "source_in_gamma": s.mask.is_active(x),
            "realization": p.realization,
            "gamma": sigma0.gamma(p.energy)?,
            "in_energy_region": region.contains(p.energy, 1e-12),
            "fit": fit,
            "fit_zeta": p.zeta_min,
            "alpha": sweep.alpha,
            "min_zeta_S": sweep.min_zeta_sum,
            "S_ratio": sweep.sum_ratio(),
            "max_residual": sweep.max_residual,
            "warnings": sweep.warnings,
        }),
    );
    match p.expect {
        Some(GreenExpectation::Decay) => out.assertions.push(assertion(
            "green decay",
            fit.mass > 0.1 && fit.r_squared >= 0.9 && sweep.sum_ratio() <= 2.0,
            format!(
                "m = {}, R2 = {}, S max/min = {}",
                fit.mass,
                fit.r_squared,
                sweep.sum_ratio()
            ),
        )),
        Some(GreenExpectation::Divergence) => out.assertions.push(assertion(
            "green divergence",
            sweep.alpha >= 0.8,
            format!(
                "alpha = {}, min zeta*S = {}",
                sweep.alpha, sweep.min_zeta_sum
            ),
        )),
        None => {}
    }
    Ok(out)
}

fn wegner(cfg: &ExperimentConfig, p: &WegnerConfig) -> Result<Outputs, RunError> {
    let gamma0 = cfg.gamma0().map_err(RunError::Config)?;
    let sigma0 = sigma0_for(cfg, &gamma0)?;
    let params = WegnerParams {
        energy: p.energy,
        eps: p.eps.clone(),
        boxes: p.boxes.clone(),
        realizations: p.realizations,
        seed: cfg.seed,
        gamma_floor: p.gamma_floor,
    };
    let rep = wegner_experiment(&cfg.geometry, &gamma0, &cfg.distribution, &sigma0, &params)?;
    let mut out = Outputs::default();
    out.file("wegner.csv", rep.to_csv());
    out.json(
        "wegner.json",
        json!({"schema": 1, "sigma0_method": sigma0.method, "report": rep}),
    );
    if p.eps.len() >= 2 {
        for b in &rep.boxes {
            out.assertions.push(assertion(
                &format!("eps slope k={:?}", b.k),
                (0.85..=1.15).contains(&b.slope),
                format!("slope {}", b.slope),
            ));
        }
    }
    if rep.boxes.len() >= 2 {
        out.assertions.push(assertion(
            "C_hat stability",
            rep.c_hat_spread <= 0.3,
            format!("relative spread {}", rep.c_hat_spread),
        ));
    }
    Ok(out)
}

fn mobility(cfg: &ExperimentConfig, p: &MobilityConfig) -> Result<Outputs, RunError> {
    let gamma0 = cfg.gamma0().map_err(RunError::Config)?;
    let sigma0 = sigma0_for(cfg, &gamma0)?;
    let params = MobilityParams {
        energies: p.energies.values(),
        zeta_max: p.zeta_max,
        zeta_min: p.zeta_min,
        zeta_points: p.zeta_points,
        source: p.source.clone(),
        min_dist: p.min_dist,
        boundary_margin: p.boundary_margin,
        realizations: p.realizations,
        seed: cfg.seed,
    };
    let rows = mobility_scan(&cfg.geometry, &gamma0, &cfg.distribution, &sigma0, &params)?;
    let mut out = Outputs::default();
    out.file("mobility.csv", mobility_csv(&rows));
    let count = |c: Classification| rows.iter().filter(|r| r.class == c).count();
    out.json(
        "mobility.json",
        json!({
            "schema": 1,
            "rows": rows.len(),
            "localized_like": count(Classification::LocalizedLike),
            "extended_like": count(Classification::ExtendedLike),
            "near_edge": count(Classification::NearEdge),
            "sigma0": sigma0.set(),
            "sigma0_method": sigma0.method,
            "source": p.source.clone().unwrap_or_else(|| default_source(&cfg.geometry)),
            "realizations": p.realizations,
        }),
    );
    if cfg.distribution.width() >= 50.0 {
        let bad: Vec<f64> = rows
            .iter()
            .filter(|r| r.gamma >= 1.0 && r.class == Classification::ExtendedLike)
            .map(|r| r.energy)
            .collect();
        out.assertions.push(assertion(
            "no extended-like row away from Sigma_0",
            bad.is_empty(),
            format!("extended-like rows with gamma >= 1: {bad:?}"),
        ));
    }
    Ok(out)
}

fn ucp(cfg: &ExperimentConfig, p: &UcpParams) -> Result<Outputs, RunError> {
    let gamma0 = cfg.gamma0().map_err(RunError::Config)?;
    let reports = ucp_experiment(
        &cfg.geometry,
        &gamma0,
        &cfg.distribution,
        p.realizations,
        cfg.seed,
        p.gamma_floor,
    )?;
    let qualifying: usize = reports.iter().map(|r| r.rows.len()).sum();
    let excluded: usize = reports.iter().map(|r| r.excluded).sum();
    let failures: usize = reports
        .iter()
        .map(|r| r.rows.iter().filter(|x| !x.pass).count())
        .sum();
    let mut out = Outputs::default();
    out.file("ucp.csv", ucp_csv(&reports));
    out.json(
        "ucp.json",
        json!({
            "schema": 1,
            "realizations": p.realizations,
            "gamma_floor": p.gamma_floor,
            "qualifying": qualifying,
            "excluded": excluded,
            "failures": failures,
            "notices": reports.iter().filter_map(|r| r.notice.clone()).collect::<Vec<_>>(),
        }),
    );
    out.assertions.push(assertion(
        "unique continuation bound",
        failures == 0,
        format!("{failures} failures among {qualifying} qualifying eigenpairs"),
    ));
    Ok(out)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RunError> {
    let io = |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    };
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default()
    ));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// Writes the artifacts, then the manifest listing them.
pub fn write_run(
    dir: &Path,
    cfg: &ExperimentConfig,
    config_bytes: &[u8],
    outputs: &Outputs,
    started_at: String,
) -> Result<RunManifest, RunError> {
    fs::create_dir_all(dir).map_err(|source| RunError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut artifacts = Vec::new();
    for (name, bytes) in &outputs.files {
        write_atomic(&dir.join(name), bytes)?;
        artifacts.push(ArtifactEntry {
            path: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }
    let manifest = RunManifest {
        schema: 1,
        tool: "trimwave".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment.name().into(),
        config_sha256: sha256_hex(config_bytes),
        seed: cfg.seed,
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        artifacts,
        assertions: outputs.assertions.clone(),
        pass: outputs.all_pass(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("serializable");
    text.push('\n');
    write_atomic(&dir.join("manifest.json"), text.as_bytes())?;
    Ok(manifest)
}
