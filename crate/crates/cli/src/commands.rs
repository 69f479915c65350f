//! The five subcommands, exposed as library functions so the acceptance
//! suite can drive them in-process.

use std::path::{Path, PathBuf};

use optistate_core::DepthImage;
use optistate_nn::features::InputMask;
use optistate_nn::gru::{load_gru, save_gru};
use optistate_nn::vit::{load_vit, save_vit, train_vit};
use optistate_nn::{features, NnError};
use optistate_sim::{read_dataset, simulate, write_dataset, Dataset};

use crate::csvio::{fmt, write_csv};
use crate::error::CliError;
use crate::eval::{self, Evaluation, GruModel, ModelSet, COMPONENT_NAMES};
use crate::manifest::ManifestBuilder;
use crate::profile::PipelineConfig;
use crate::svg::{self, Panel, Series};

/// Sorted `.ostd` files in a directory.
fn dataset_paths(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::Config(format!(
            "dataset directory `{}` does not exist",
            dir.display()
        )));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "ostd"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!(
            "no .ostd datasets in `{}`",
            dir.display()
        )));
    }
    Ok(paths)
}

pub fn load_datasets(dir: &Path) -> Result<Vec<(String, Dataset)>, CliError> {
    dataset_paths(dir)?
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, read_dataset(&p)?))
        })
        .collect()
}

/// `optistate simulate`: the full train/test dataset grid.
pub fn cmd_simulate(config: &PipelineConfig, out: &Path) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("simulate");
    manifest.set_config(&config.to_kv());
    manifest.set("out", out.display());

    let train_dir = out.join("train");
    let test_dir = out.join("test");
    std::fs::create_dir_all(&train_dir)?;
    std::fs::create_dir_all(&test_dir)?;
    for i in 0..config.train_trajectories {
        let (name, sim) = config.train_sim(i);
        let dataset = simulate(&sim)?;
        write_dataset(&dataset, &train_dir.join(format!("{name}.ostd")))?;
    }
    for i in 0..config.test_trajectories {
        let (name, sim) = config.test_sim(i);
        let dataset = simulate(&sim)?;
        write_dataset(&dataset, &test_dir.join(format!("{name}.ostd")))?;
    }
    manifest.set("train_count", config.train_trajectories);
    manifest.set("test_count", config.test_trajectories);
    manifest.write(out)
}

/// Distinct depth images across datasets, evenly subsampled to a cap.
fn collect_images(datasets: &[(String, Dataset)], cap: usize) -> Result<Vec<DepthImage>, CliError> {
    let mut images = Vec::new();
    for (_, ds) in datasets {
        let mut last_seq = None;
        for frame in &ds.frames {
            if let Some(depth) = &frame.depth {
                if last_seq != Some(depth.seq) {
                    images.push((*depth.image).clone());
                    last_seq = Some(depth.seq);
                }
            }
        }
    }
    if images.is_empty() {
        return Err(CliError::Config(
            "datasets contain no depth images (camera disabled?)".into(),
        ));
    }
    if images.len() > cap && cap > 0 {
        let step = images.len() as f64 / cap as f64;
        images = (0..cap)
            .map(|i| images[(i as f64 * step) as usize].clone())
            .collect();
    }
    Ok(images)
}

fn write_loss_outputs(out: &Path, stem: &str, losses: &[f64]) -> Result<(), CliError> {
    write_csv(
        &out.join(format!("{stem}.csv")),
        &["epoch", "loss"],
        losses
            .iter()
            .enumerate()
            .map(|(i, &l)| vec![format!("{i}"), fmt(l)]),
    )?;
    let panel = Panel {
        title: format!("{stem} (MSE per epoch)"),
        x: (0..losses.len()).map(|i| i as f64).collect(),
        series: vec![Series {
            name: "loss".into(),
            values: losses.to_vec(),
        }],
        band: None,
    };
    std::fs::write(
        out.join(format!("{stem}.svg")),
        svg::render(stem, &[panel]),
    )?;
    Ok(())
}

/// `optistate train-vit`.
pub fn cmd_train_vit(config: &PipelineConfig, data: &Path, out: &Path) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("train-vit");
    manifest.set_config(&config.to_kv());
    manifest.set("data", data.display());
    manifest.set("out", out.display());
    std::fs::create_dir_all(out)?;

    let datasets = load_datasets(data)?;
    let images = collect_images(&datasets, config.vit_max_images)?;
    let mut tcfg = config.vit_train;
    tcfg.seed = config.seed;
    let (params, losses) = train_vit(&images, &config.vit, &tcfg)?;
    save_vit(&out.join("vit.ckpt"), &config.vit, &params)?;
    write_loss_outputs(out, "vit_loss", &losses)?;
    manifest.set("images", images.len());
    manifest.set("final_loss", fmt(*losses.last().unwrap_or(&f64::NAN)));
    manifest.write(out)
}

/// `optistate train-gru`.
pub fn cmd_train_gru(
    config: &PipelineConfig,
    data: &Path,
    vit_path: &Path,
    out: &Path,
    mask: InputMask,
) -> Result<(), CliError> {
    if !vit_path.is_file() {
        return Err(CliError::Config(format!(
            "ViT checkpoint `{}` does not exist; train it first",
            vit_path.display()
        )));
    }
    let mut manifest = ManifestBuilder::new("train-gru");
    manifest.set_config(&config.to_kv());
    manifest.set("data", data.display());
    manifest.set("vit", vit_path.display());
    manifest.set("out", out.display());
    manifest.set("mask", mask.name());
    std::fs::create_dir_all(out)?;

    let (vit_cfg, vit_params) = load_vit(vit_path)?;
    let datasets: Vec<Dataset> = load_datasets(data)?.into_iter().map(|(_, d)| d).collect();
    let kf = config.kalman_filter()?;
    let mut gru_cfg = config.gru_config();
    gru_cfg.input_dim = features::input_dim(vit_cfg.latent_dim());
    let mut tcfg = config.gru_train;
    tcfg.seed = config.seed;

    let (params, normalizer, losses) = features::train_gru(
        &datasets,
        &kf,
        Some((&vit_cfg, &vit_params)),
        mask,
        &gru_cfg,
        &tcfg,
    )?;
    let stem = format!("gru_{}", mask.name());
    save_gru(
        &out.join(format!("{stem}.ckpt")),
        &gru_cfg,
        &params,
        &normalizer,
        mask,
    )?;
    write_loss_outputs(out, &format!("{stem}_loss"), &losses)?;
    manifest.set("final_loss", fmt(*losses.last().unwrap_or(&f64::NAN)));
    manifest.write(out)
}

pub struct EvaluateFlags {
    pub kf_only: bool,
    pub ablate_kf_input: bool,
    pub ablate_vision: bool,
}

fn load_gru_model(models: &Path, mask: InputMask) -> Result<GruModel, CliError> {
    let path = models.join(format!("gru_{}.ckpt", mask.name()));
    if !path.is_file() {
        return Err(CliError::Config(format!(
            "GRU checkpoint `{}` does not exist",
            path.display()
        )));
    }
    let (config, params, normalizer, stored_mask) = load_gru(&path)?;
    if stored_mask != mask {
        return Err(CliError::from(NnError::ConfigMismatch(format!(
            "checkpoint `{}` was trained with mask {}, expected {}",
            path.display(),
            stored_mask.name(),
            mask.name()
        ))));
    }
    Ok(GruModel {
        config,
        params,
        normalizer,
        mask,
    })
}

/// `optistate evaluate`: RMSE tables, improvement table, trajectory traces.
pub fn cmd_evaluate(
    config: &PipelineConfig,
    data: &Path,
    models_dir: &Path,
    out: &Path,
    flags: &EvaluateFlags,
) -> Result<Evaluation, CliError> {
    let mut manifest = ManifestBuilder::new("evaluate");
    manifest.set_config(&config.to_kv());
    manifest.set("data", data.display());
    manifest.set("models", models_dir.display());
    manifest.set("out", out.display());
    std::fs::create_dir_all(out)?;

    let datasets = load_datasets(data)?;
    let kf = config.kalman_filter()?;

    let models = if flags.kf_only {
        ModelSet {
            vit: None,
            variants: Vec::new(),
        }
    } else {
        let vit_path = models_dir.join("vit.ckpt");
        if !vit_path.is_file() {
            return Err(CliError::Config(format!(
                "ViT checkpoint `{}` does not exist",
                vit_path.display()
            )));
        }
        let vit = load_vit(&vit_path)?;
        let mut variants = vec![load_gru_model(models_dir, InputMask::Full)?];
        if flags.ablate_kf_input {
            variants.push(load_gru_model(models_dir, InputMask::NoKalman)?);
        }
        if flags.ablate_vision {
            variants.push(load_gru_model(models_dir, InputMask::NoVision)?);
        }
        ModelSet {
            vit: Some(vit),
            variants,
        }
    };

    let evaluation = eval::evaluate(&datasets, &kf, &models)?;
    write_evaluation(&evaluation, out)?;
    if let Some(rho) = evaluation.spearman_mu_error() {
        manifest.set("spearman_mu_error", fmt(rho));
    }
    for v in &evaluation.variants {
        manifest.set(&format!("avg_rmse.{}", v.name), fmt(v.average()));
    }
    manifest.write(out)?;
    Ok(evaluation)
}

fn write_evaluation(evaluation: &Evaluation, out: &Path) -> Result<(), CliError> {
    // RMSE per variant per component.
    let mut header = vec!["variant"];
    header.extend(COMPONENT_NAMES);
    header.push("average");
    write_csv(
        &out.join("rmse.csv"),
        &header,
        evaluation.variants.iter().map(|v| {
            let mut row = vec![v.name.clone()];
            row.extend(v.rmse.iter().map(|&x| fmt(x)));
            row.push(fmt(v.average()));
            row
        }),
    )?;

    // Percentage improvement relative to the named baseline column.
    let mut header = vec!["variant", "baseline"];
    header.extend(COMPONENT_NAMES);
    header.push("average");
    write_csv(
        &out.join("improvement.csv"),
        &header,
        evaluation.improvement_table().into_iter().map(|(name, row)| {
            let mut cells = vec![name, "kf_only".to_string()];
            cells.extend(row.iter().map(|&x| format!("{x:.3}")));
            cells
        }),
    )?;

    // Per-trajectory traces + overlays.
    for trace in &evaluation.traces {
        let mut header: Vec<String> = vec!["t".into()];
        for c in COMPONENT_NAMES {
            header.push(format!("truth_{c}"));
        }
        for c in COMPONENT_NAMES {
            header.push(format!("kf_{c}"));
        }
        for (name, _, _) in &trace.learned {
            for c in COMPONENT_NAMES {
                header.push(format!("{name}_{c}"));
            }
            for c in COMPONENT_NAMES {
                header.push(format!("{name}_mu_{c}"));
            }
        }
        let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
        write_csv(
            &out.join(format!("estimates_{}.csv", trace.name)),
            &header_refs,
            (0..trace.t.len()).map(|k| {
                let mut row = vec![fmt(trace.t[k])];
                row.extend(trace.truth[k].iter().map(|&v| fmt(v)));
                row.extend(trace.kalman[k].iter().map(|&v| fmt(v)));
                for (_, states, mus) in &trace.learned {
                    row.extend(states[k].iter().map(|&v| fmt(v)));
                    row.extend(mus[k].iter().map(|&v| fmt(v)));
                }
                row
            }),
        )?;

        let panels: Vec<Panel> = (0..12)
            .map(|i| {
                let mut series = vec![
                    Series {
                        name: "truth".into(),
                        values: trace.truth.iter().map(|v| v[i]).collect(),
                    },
                    Series {
                        name: "kf_only".into(),
                        values: trace.kalman.iter().map(|v| v[i]).collect(),
                    },
                ];
                for (name, states, _) in &trace.learned {
                    series.push(Series {
                        name: name.clone(),
                        values: states.iter().map(|v| v[i]).collect(),
                    });
                }
                Panel {
                    title: COMPONENT_NAMES[i].to_string(),
                    x: trace.t.clone(),
                    series,
                    band: None,
                }
            })
            .collect();
        std::fs::write(
            out.join(format!("overlay_{}.svg", trace.name)),
            svg::render(&format!("trajectory {}", trace.name), &panels),
        )?;
    }
    Ok(())
}

/// `optistate report`: consolidated bundle with uncertainty bands.
pub fn cmd_report(run: &Path, out: &Path) -> Result<(), CliError> {
    let mut manifest = ManifestBuilder::new("report");
    manifest.set("run", run.display());
    manifest.set("out", out.display());

    let mut estimate_files: Vec<PathBuf> = std::fs::read_dir(run)
        .map_err(|e| CliError::Config(format!("run dir `{}`: {e}", run.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().starts_with("estimates_"))
                .unwrap_or(false)
        })
        .collect();
    estimate_files.sort();
    if estimate_files.is_empty() {
        return Err(CliError::Config(format!(
            "`{}` contains no evaluation outputs (estimates_*.csv)",
            run.display()
        )));
    }
    std::fs::create_dir_all(out)?;

    for path in &estimate_files {
        let (header, rows) = crate::csvio::read_csv(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let col = |want: &str| header.iter().position(|h| h == want);
        let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();

        // μ bands exist only when a learned variant was evaluated.
        let variant = "optistate";
        if col(&format!("{variant}_mu_{}", COMPONENT_NAMES[0])).is_some() {
            let panels: Vec<Panel> = (0..12)
                .map(|i| {
                    let c = COMPONENT_NAMES[i];
                    let truth_col = col(&format!("truth_{c}")).unwrap();
                    let est_col = col(&format!("{variant}_{c}")).unwrap();
                    let mu_col = col(&format!("{variant}_mu_{c}")).unwrap();
                    let center: Vec<f64> = rows.iter().map(|r| r[est_col]).collect();
                    let half: Vec<f64> = rows.iter().map(|r| r[mu_col]).collect();
                    Panel {
                        title: format!("{c}: estimate ± predicted |error|"),
                        x: t.clone(),
                        series: vec![
                            Series {
                                name: "truth".into(),
                                values: rows.iter().map(|r| r[truth_col]).collect(),
                            },
                            Series {
                                name: variant.into(),
                                values: center.clone(),
                            },
                        ],
                        band: Some((center, half)),
                    }
                })
                .collect();
            std::fs::write(
                out.join(format!("uncertainty_{name}.svg")),
                svg::render(&format!("{name}: uncertainty bands"), &panels),
            )?;
        }
    }

    // Carry the tables into the bundle.
    for table in ["rmse.csv", "improvement.csv"] {
        let src = run.join(table);
        if src.is_file() && run != out {
            std::fs::copy(&src, out.join(table))?;
        }
    }
    manifest.set("trajectories", estimate_files.len());
    manifest.write(out)
}
