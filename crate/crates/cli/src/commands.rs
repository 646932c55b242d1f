use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use ndna_core::belief::{per_corpus_profiles, CorpusInput};
use ndna_core::compare::{
    collapse_report, distill_report, genome_distortion, merge_report, output_kl, CollapseThresholds, MergeGradients,
};
use ndna_core::fixtures::{synth_trajectory, toy_inputs, toy_run, SynthKind, SynthParams, ToyModel};
use ndna_core::format::{read_trajectory, write_trajectory};
use ndna_core::report::{csv_table, fmt_f64, fmt_opt, to_json};
use ndna_core::score::{assemble_profile, CurvatureSource, ScoreConfig, WeightScheme};
use ndna_core::topology::{
    bottleneck_distance, effective_rank, lifetimes, max_lifetime, ph_stability_gate, rips_persistence,
    sheaf_consistency, PersistenceDiagram,
};
use ndna_core::{Error, GradientBundle, Result, Trajectory};
use serde_json::{json, Value};

use crate::output::{emit, render};
use crate::{Command, Curvature, Format, ScoreArgs, SynthArgs, ThresholdArgs, Weights};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Analyze {
            file,
            score,
            plot,
            sink,
        } => {
            let (traj, grads) = read_trajectory(&file)?;
            let profile = assemble_profile(&traj, grads.as_ref(), &score_config(&score))?;
            let text = if plot {
                profile.plot_series()
            } else {
                match sink.format {
                    Format::Json => to_json(&profile)?,
                    Format::Csv => profile.to_csv(),
                }
            };
            emit(&sink, &text)
        }
        Command::Compare {
            a,
            b,
            probs_a,
            probs_b,
            sink,
        } => {
            let (x, _) = read_trajectory(&a)?;
            let (y, _) = read_trajectory(&b)?;
            let d = genome_distortion(&x, &y)?;
            let mut report = json!({
                "distortion": d.distortion,
                "path_length_delta": d.path_length_delta,
            });
            if let (Some(pa), Some(pb)) = (probs_a, probs_b) {
                let kl = output_kl(read_probs(&pa)?.view(), read_probs(&pb)?.view())?;
                report["output_kl"] = json!(kl);
            }
            emit(&sink, &render(&sink, &report))
        }
        Command::Merge {
            a,
            b,
            alpha,
            rho,
            offspring,
            sink,
        } => {
            let (x, gx) = read_trajectory(&a)?;
            let (y, gy) = read_trajectory(&b)?;
            let child = offspring.map(|p| read_trajectory(&p)).transpose()?;
            let grads = MergeGradients {
                parent_a: gx.as_ref(),
                parent_b: gy.as_ref(),
                offspring: child.as_ref().and_then(|(_, g)| g.as_ref()),
            };
            let report = merge_report(&x, &y, alpha, grads, rho)?;
            emit(&sink, &render(&sink, &to_value(&report)?))
        }
        Command::Distill {
            teacher,
            student,
            plot,
            sink,
        } => {
            let (t, tg) = read_trajectory(&teacher)?;
            let (s, sg) = read_trajectory(&student)?;
            let report = distill_report(&t, tg.as_ref(), &s, sg.as_ref())?;
            let text = if plot {
                let mut rows = Vec::new();
                for (i, v) in report.delta_step_profile.iter().enumerate() {
                    rows.push(vec!["delta_step".into(), (i + 1).to_string(), fmt_f64(*v)]);
                }
                for (i, v) in report.delta_kappa_profile.iter().enumerate() {
                    rows.push(vec!["delta_kappa".into(), (i + 2).to_string(), fmt_f64(*v)]);
                }
                for (i, v) in report.belief_norm_ratio.iter().flatten().enumerate() {
                    rows.push(vec!["belief_norm_ratio".into(), (i + 1).to_string(), fmt_opt(*v)]);
                }
                csv_table(&["metric", "layer", "value"], rows)
            } else {
                render(&sink, &to_value(&report)?)
            };
            emit(&sink, &text)
        }
        Command::Collapse { file, thresholds, sink } => {
            let (traj, grads) = read_trajectory(&file)?;
            let report = collapse_report(&traj, grads.as_ref(), &collapse_thresholds(&thresholds))?;
            emit(&sink, &render(&sink, &to_value(&report)?))
        }
        Command::Topology {
            file,
            max_dim,
            max_points,
            max_filtration,
            layer,
            patches,
            against,
            epsilon,
            sink,
        } => {
            let (traj, _) = read_trajectory(&file)?;
            let cloud = point_cloud(&traj, layer)?;
            let dim = usize::from(max_dim);
            let diagram = rips_persistence(cloud.view(), dim, max_filtration, max_points)?;
            let mut report = json!({
                "diagram": to_value(&diagram)?,
                "lifetimes": lifetimes(&diagram),
                "max_lifetime": max_lifetime(&diagram),
                "max_filtration": diagram.max_filtration(),
                "effective_rank": to_value(&effective_rank(&traj)?)?,
            });
            if let Some(m) = patches {
                report["sheaf"] = to_value(&sheaf_consistency(&traj, m)?)?;
            }
            if let Some(other) = against {
                let (traj_b, _) = read_trajectory(&other)?;
                let cloud_b = point_cloud(&traj_b, layer)?;
                let diagram_b = rips_persistence(cloud_b.view(), dim, max_filtration, max_points)?;
                report["bottleneck"] = bottlenecks(&diagram, &diagram_b, dim)?;
                report["stability"] = to_value(&ph_stability_gate(&diagram, &diagram_b, epsilon)?)?;
            }
            emit(&sink, &render(&sink, &report))
        }
        Command::Synth {
            kind,
            seed,
            out,
            params,
        } => {
            if kind == "toy" {
                let (traj, grads) = toy_fixture(seed, &params)?;
                write_trajectory(&traj, Some(&grads), &out)
            } else {
                let kind = SynthKind::from_str(&kind)?;
                write_trajectory(&synth_trajectory(kind, &synth_params(&params), seed)?, None, &out)
            }
        }
        Command::Profiles { inputs, sink } => {
            let loaded = inputs
                .iter()
                .map(|arg| {
                    let (label, path) = split_label(arg);
                    read_trajectory(path).map(|(t, g)| (label, t, g))
                })
                .collect::<Result<Vec<_>>>()?;
            let corpus: Vec<CorpusInput<'_>> = loaded
                .iter()
                .map(|(label, traj, grads)| CorpusInput {
                    label,
                    traj,
                    grads: grads.as_ref(),
                })
                .collect();
            let rows = per_corpus_profiles(&corpus)?;
            let text = match sink.format {
                Format::Json => to_json(&rows)?,
                Format::Csv => csv_table(
                    &["label", "path_length", "mean_kappa", "mean_v_norm"],
                    rows.iter().map(|r| {
                        vec![
                            r.label.clone(),
                            fmt_f64(r.path_length),
                            fmt_opt(r.mean_kappa),
                            fmt_opt(r.mean_v_norm),
                        ]
                    }),
                ),
            };
            emit(&sink, &text)
        }
    }
}

fn to_value<T: serde::Serialize>(value: &T) -> Result<Value> {
    serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))
}

fn score_config(args: &ScoreArgs) -> ScoreConfig {
    ScoreConfig {
        weights: match args.weights {
            Weights::Uniform => WeightScheme::Uniform,
            Weights::Ramp => WeightScheme::Ramp,
            Weights::LastK => WeightScheme::LastK(args.last_k),
            Weights::Unit => WeightScheme::Unit,
        },
        additive: [args.additive[0], args.additive[1], args.additive[2]],
        curvature: match args.curvature {
            Curvature::SecondDiff => CurvatureSource::SecondDiff,
            Curvature::LaplacianRatio => CurvatureSource::LaplacianRatio,
            Curvature::LaplacianMeanK => CurvatureSource::LaplacianMeanK,
        },
        laplacian_k: args.laplacian_k,
        bins: args.bins,
    }
}

fn collapse_thresholds(args: &ThresholdArgs) -> CollapseThresholds {
    CollapseThresholds {
        length: args.length_threshold,
        curvature: args.curvature_threshold,
        belief: args.belief_threshold,
        participation_ratio: args.rank_threshold,
        lifetime: args.lifetime_threshold,
    }
}

fn synth_params(args: &SynthArgs) -> SynthParams {
    SynthParams {
        layers: args.layers,
        dim: args.dim,
        step: args.step,
        radius: args.radius,
        phi: args.phi,
        pitch: args.pitch,
        noise: args.noise,
    }
}

fn toy_fixture(seed: u64, args: &SynthArgs) -> Result<(Trajectory, GradientBundle)> {
    let model = ToyModel::new(seed, args.layers, args.input_dim, args.dim, args.classes)?;
    let (x, y) = toy_inputs(&model, args.samples, seed.wrapping_add(1));
    let run = toy_run(&model, x.view(), &y)?;
    Ok((run.pooled, run.grads))
}

fn point_cloud(traj: &Trajectory, layer: Option<usize>) -> Result<Array2<f64>> {
    match layer {
        None => Ok(traj.layer_means().to_owned()),
        Some(l) if l >= traj.layers() => Err(Error::Precondition(format!(
            "layer {l} out of range for {} layers",
            traj.layers()
        ))),
        Some(l) => traj
            .layer_tokens(l)
            .map(|t| t.to_owned())
            .ok_or_else(|| Error::Precondition("--layer needs token_states in the file".into())),
    }
}

fn bottlenecks(a: &PersistenceDiagram, b: &PersistenceDiagram, max_dim: usize) -> Result<Value> {
    let per_dim = (0..=max_dim)
        .map(|d| to_value(&bottleneck_distance(a, b, d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Value::Array(per_dim))
}

fn read_probs(path: &Path) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::Format(format!("{}: expected a JSON list of rows: {e}", path.display())))?;
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Format(format!("{}: ragged probability rows", path.display())));
    }
    Array2::from_shape_vec((rows.len(), cols), rows.concat()).map_err(|e| Error::Format(e.to_string()))
}

fn split_label(arg: &str) -> (String, &str) {
    match arg.split_once('=') {
        Some((label, path)) if !label.is_empty() => (label.to_string(), path),
        _ => {
            let stem = Path::new(arg)
                .file_stem()
                .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
            (stem, arg)
        }
    }
}
