use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cranio::correspondence::{correspondence_quality, register_reference, RegistrationParams};
use cranio::dataset::{load_dataset, Entry};
use cranio::geodesics::{densify, DensifyParams};
use cranio::landmarks::LandmarkSet;
use cranio::lrr::fit_lrr;
use cranio::mesh::{load_mesh, save_mesh, save_ply_with_scalar, MeshFormat, PlyEncoding, TriMesh};
use cranio::model::{load_model, save_model, Model, ModelFile};
use cranio::pca::fit_joint_pca;
use cranio::shape_table::{assemble, flatten, load_tables, save_tables, ShapeTablePair};
use cranio::synth::{generate, write_dataset, SynthSpec};
use cranio::validation::{fold_groups, load_report_files, loo_crossval, write_report, CvOptions, Method};
use cranio::Error;

use crate::config::{existing, required, PipelineConfig};
use crate::{Cli, CliError, Command};

type Res = Result<(), CliError>;

pub fn run(cli: Cli) -> Res {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(j) = cli.jobs.or(cfg.jobs) {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Other(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed.or(cfg.seed).unwrap_or(0);
    match cli.command {
        Command::Densify(a) => densify_cmd(a, &cfg),
        Command::Register(a) => register_cmd(a, &cfg),
        Command::Assemble(a) => assemble_cmd(a, &cfg),
        Command::Fit(a) => fit_cmd(a, &cfg),
        Command::Predict(a) => predict_cmd(a, &cfg),
        Command::Crossval(a) => crossval_cmd(a, &cfg),
        Command::Synth(a) => synth_cmd(a, &cfg, cli.seed.or(cfg.seed), seed),
        Command::Report(a) => report_cmd(a, &cfg),
    }
}

fn load_any_mesh(path: &Path) -> Result<TriMesh<f64>, CliError> {
    Ok(load_mesh(path, MeshFormat::from_path(path)?)?)
}

fn save_any_mesh(mesh: &TriMesh<f64>, path: &Path) -> Res {
    Ok(save_mesh(mesh, path, MeshFormat::from_path(path)?)?)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Res {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Res {
    if let Some(p) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn densify_cmd(a: crate::DensifyArgs, cfg: &PipelineConfig) -> Res {
    let mesh_path = existing(required(a.mesh, cfg.mesh.clone(), "mesh")?, "mesh")?;
    let lm_path = existing(required(a.landmarks, cfg.landmarks.clone(), "landmarks")?, "landmarks")?;
    let out = required(a.out, cfg.out.clone(), "out")?;
    let params = DensifyParams {
        iterations: a.iterations.or(cfg.iterations).unwrap_or(1),
        min_path_length: a.min_path_length,
        min_separation_edges: a.min_separation_edges,
        midplane_tolerance: a.midplane_tolerance,
    };
    let mesh = load_any_mesh(&mesh_path)?;
    let lms: LandmarkSet<f64> = LandmarkSet::load(&lm_path)?;
    let (dense, report) = densify(&mesh, &lms, &params)?;
    ensure_parent(&out)?;
    dense.save(&out)?;
    if let Some(r) = a.report {
        ensure_parent(&r)?;
        write_json(&r, &report)?;
    }
    log::info!("densify: {} -> {} landmarks, wrote {}", lms.len(), dense.len(), out.display());
    Ok(())
}

fn register_cmd(a: crate::RegisterArgs, cfg: &PipelineConfig) -> Res {
    let rp = existing(required(a.reference, cfg.reference.clone(), "reference")?, "reference")?;
    let tp = existing(required(a.target, cfg.target.clone(), "target")?, "target")?;
    let out = required(a.out, cfg.out.clone(), "out")?;
    let mut params = match &a.params {
        Some(p) => {
            let p = existing(p.clone(), "params")?;
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            serde_json::from_str::<RegistrationParams>(&text)
                .map_err(|e| Error::format(p.display().to_string(), e.line(), e.to_string()))?
        }
        None => cfg.registration.clone().unwrap_or_default(),
    };
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = a.$f { params.$f = v; })*};
    }
    set!(outlier, snap, levels, alpha_start, alpha_end, boundary_weight);
    let reference = load_any_mesh(&rp)?;
    let target = load_any_mesh(&tp)?;
    let result = register_reference(&reference, &target, &params)?;
    let q = correspondence_quality(&result, &target)?;
    ensure_parent(&out)?;
    save_any_mesh(&result.deformed_reference, &out)?;
    if let Some(r) = a.report {
        ensure_parent(&r)?;
        write_json(&r, &q)?;
    }
    if let Some(m) = a.backward_map {
        ensure_parent(&m)?;
        save_ply_with_scalar(&target, Some(&q.backward_map), &m, PlyEncoding::Ascii)?;
    }
    log::info!(
        "register: forward mean {:.4} mm, backward median {:.4} mm, converged {}, {} outliers",
        q.forward.mean,
        q.backward.median,
        q.converged,
        q.outlier_count
    );
    Ok(())
}

fn dataset(flag: Option<PathBuf>, cfg: &PipelineConfig) -> Result<Vec<Entry<f64>>, CliError> {
    let dir = existing(required(flag, cfg.data.clone(), "data")?, "data")?;
    Ok(load_dataset(&dir)?)
}

fn tables_of(entries: &[Entry<f64>]) -> Result<ShapeTablePair<f64>, CliError> {
    let pairs: Vec<_> = entries.iter().map(|e| (e.skull.clone(), e.deformed.clone())).collect();
    Ok(assemble(&pairs)?)
}

fn assemble_cmd(a: crate::AssembleArgs, cfg: &PipelineConfig) -> Res {
    let entries = dataset(a.data, cfg)?;
    let out = required(a.out, cfg.out.clone(), "out")?;
    let mut tables = tables_of(&entries)?;
    tables.entry_ids = entries.iter().map(|e| e.id.clone()).collect();
    save_tables(&tables, &out)?;
    log::info!("assemble: n = {}, p = {}, q = {}, wrote {}", tables.n(), tables.p(), tables.q(), out.display());
    Ok(())
}

fn fit_cmd(a: crate::FitArgs, cfg: &PipelineConfig) -> Res {
    let method = required(a.method, cfg.method, "method")?;
    let out = required(a.out, cfg.out.clone(), "out")?;
    let components = a.components.or(cfg.components);
    let (tables, triangles) = match a.tables.or(cfg.tables.clone()).filter(|_| a.data.is_none()) {
        Some(t) => {
            let tables = load_tables(&existing(t, "tables")?)?;
            let topo = existing(required(a.topology, cfg.topology.clone(), "topology")?, "topology")?;
            (tables, load_any_mesh(&topo)?.triangles().to_vec())
        }
        None => {
            let entries = dataset(a.data, cfg)?;
            let tri = entries
                .first()
                .map(|e| e.deformed.triangles().to_vec())
                .ok_or_else(|| Error::Parameter("dataset has no entries".into()))?;
            (tables_of(&entries)?, tri)
        }
    };
    let model = match method {
        Method::Pca => {
            let m = fit_joint_pca(&tables)?;
            Model::Pca(match components {
                Some(k) => {
                    if k == 0 || k > m.num_components() {
                        return Err(Error::Parameter(format!(
                            "--components {k} outside 1..={} for this dataset",
                            m.num_components()
                        ))
                        .into());
                    }
                    m.truncate(k)
                }
                None => m,
            })
        }
        Method::Lrr => Model::Lrr(fit_lrr(&tables, required(components, None, "components")?)?),
    };
    let file = ModelFile {
        model,
        face_triangles: triangles,
    };
    ensure_parent(&out)?;
    save_model(&file, &out, a.with_coefficients)?;
    log::info!(
        "fit: {} model with {} components from n = {}, wrote {}",
        method,
        file.model.components(),
        tables.n(),
        out.display()
    );
    Ok(())
}

fn predict_cmd(a: crate::PredictArgs, cfg: &PipelineConfig) -> Res {
    let mp = existing(required(a.model, cfg.model.clone(), "model")?, "model")?;
    let sp = existing(required(a.skull, cfg.skull.clone(), "skull")?, "skull")?;
    let out = required(a.out, cfg.out.clone(), "out")?;
    let mut file: ModelFile<f64> = load_model(&mp)?;
    if let Some(k) = a.components.or(cfg.components) {
        if k == 0 || k > file.model.components() {
            return Err(Error::Parameter(format!(
                "--components {k} outside 1..={}",
                file.model.components()
            ))
            .into());
        }
        file.model = match file.model {
            Model::Pca(m) => Model::Pca(m.truncate(k)),
            Model::Lrr(m) => Model::Lrr(m.truncate(k)),
        };
    }
    let skull: LandmarkSet<f64> = LandmarkSet::load(&sp)?;
    let x = flatten(&skull, file.model.skull_layout())?;
    let mesh = file.predict_mesh(&x)?;
    ensure_parent(&out)?;
    save_any_mesh(&mesh, &out)?;
    log::info!("predict: {} model, {} vertices, wrote {}", file.model.kind(), mesh.num_vertices(), out.display());
    Ok(())
}

fn crossval_cmd(a: crate::CrossvalArgs, cfg: &PipelineConfig) -> Res {
    let entries = dataset(a.data, cfg)?;
    let out = required(a.out, cfg.out.clone(), "out")?;
    let largest = fold_groups(&entries).iter().map(|g| g.1.len()).max().unwrap_or(1);
    let opts = CvOptions {
        methods: a.methods.or(cfg.methods.clone()).unwrap_or_else(|| vec![Method::Pca, Method::Lrr]),
        max_components: a
            .max_components
            .or(cfg.max_components)
            .unwrap_or_else(|| entries.len().saturating_sub(largest + 1)),
        histogram_bin_width: a.bin_width.or(cfg.bin_width).unwrap_or(0.25),
        retain_models_for: Vec::new(),
    };
    let report = loo_crossval(&entries, &opts)?;
    write_report(&report, &out)?;
    for m in &report.methods {
        log::info!(
            "crossval: {} optimum {} components, {:.4} ± {:.4} mm",
            m.method,
            m.optimum.components,
            m.optimum.mean,
            m.optimum.std
        );
    }
    if !report.failed_folds.is_empty() {
        log::warn!("crossval: {} fold(s) failed", report.failed_folds.len());
    }
    Ok(())
}

fn synth_cmd(a: crate::SynthArgs, cfg: &PipelineConfig, seed_flag: Option<u64>, seed: u64) -> Res {
    let out = required(a.out, cfg.out.clone(), "out")?;
    let mut spec = match a.spec.or(cfg.spec.clone()) {
        Some(p) => {
            let p = existing(p, "spec")?;
            let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let s: SynthSpec = serde_json::from_str(&text)
                .map_err(|e| Error::format(p.display().to_string(), e.line(), e.to_string()))?;
            s
        }
        None => SynthSpec {
            seed,
            ..SynthSpec::default()
        },
    };
    if let Some(s) = seed_flag {
        spec.seed = s;
    }
    macro_rules! set {
        ($($f:ident),*) => {$(if let Some(v) = a.$f { spec.$f = v; })*};
    }
    set!(n, latent_dim, noise_sigma, skull_stage, face_vertices);
    let data = generate(&spec)?;
    write_dataset(&data, &out)?;
    log::info!(
        "synth: {} entries, p = {}, q = {}, seed {}, wrote {}",
        data.entries.len(),
        data.truth.skull_mean.len(),
        data.truth.face_mean.len(),
        spec.seed,
        out.display()
    );
    Ok(())
}

/// Plain-text rendering of a cross-validation report.
pub fn render_table(files: &cranio::validation::ReportFiles) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "entries: {}   max components: {}", files.summary.entries, files.summary.max_components);
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<6} {:>8} {:>10} {:>10} {:>10} {:>10}", "method", "optimum", "mean", "std", "min", "max");
    for m in &files.summary.methods {
        let _ = writeln!(
            s,
            "{:<6} {:>8} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            m.method.to_string(),
            m.optimum_components,
            m.mean,
            m.std,
            m.min,
            m.max
        );
    }
    let methods: Vec<Method> = files.summary.methods.iter().map(|m| m.method).collect();
    let _ = writeln!(s);
    let mut header = format!("{:>10}", "components");
    for m in &methods {
        let _ = write!(header, " {:>22}", format!("{m} mean ± std"));
    }
    let _ = writeln!(s, "{header}");
    let max = files.curves.iter().map(|c| c.1.components).max().unwrap_or(0);
    for k in 1..=max {
        let mut row = format!("{k:>10}");
        for m in &methods {
            match files.curves.iter().find(|c| c.0 == *m && c.1.components == k) {
                Some((_, c)) => {
                    let _ = write!(row, " {:>22}", format!("{:.4} ± {:.4}", c.mean, c.std));
                }
                None => {
                    let _ = write!(row, " {:>22}", "-");
                }
            }
        }
        let _ = writeln!(s, "{row}");
    }
    for f in &files.summary.failed_folds {
        let _ = writeln!(s, "failed fold {}: {}", f.group, f.error);
    }
    s
}

fn report_cmd(a: crate::ReportArgs, cfg: &PipelineConfig) -> Res {
    let dir = existing(required(a.report, cfg.report.clone(), "report")?, "report")?;
    let out = a.out.or(cfg.out.clone()).unwrap_or_else(|| dir.clone());
    let files = load_report_files(&dir)?;
    let table = render_table(&files);
    print!("{table}");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let tp = out.join("report.txt");
    std::fs::write(&tp, &table).map_err(|e| Error::io(&tp, e))?;
    match &files.template_face {
        Some(mesh) => {
            for (m, mean, std) in &files.fields {
                for (name, field) in [("mean", mean), ("std", std)] {
                    let p = out.join(format!("distance_map_{m}_{name}.ply"));
                    save_ply_with_scalar(mesh, Some(field), &p, PlyEncoding::Ascii)?;
                }
            }
            log::info!("report: exported {} distance map(s) to {}", 2 * files.fields.len(), out.display());
        }
        None => log::warn!("report: no mean face in {}, distance maps skipped", dir.display()),
    }
    Ok(())
}
