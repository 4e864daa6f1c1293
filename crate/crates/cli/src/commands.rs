//! Implementations of the subcommands. Every output file is written
//! atomically.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use dsmt_core::baselines::{format_match_table, labeled_pairs, match_benchmark, PairRef};
use dsmt_core::datagen::{generate, make_benchmark, split_indices};
use dsmt_core::io::{self, SequenceData, DETECTIONS_FILE, LABELS_FILE};
use dsmt_core::learning::{prepare_windows, train_end_to_end, train_piecewise, IterationLog, TrainingWindow};
use dsmt_core::metrics::{aggregate, evaluate, MotReport};
use dsmt_core::{track_sequence, CostModel, Error, Result, RunConfig, TrackBox};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::plot::render_svg;
use crate::Mode;

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::read(p),
        None => Ok(RunConfig::default()),
    }
}

fn label_types(cfg: &RunConfig) -> Vec<&str> {
    cfg.data.label_types.iter().map(String::as_str).collect()
}

/// A single sequence directory is recognized by its detection file.
fn is_sequence_dir(path: &Path) -> bool {
    path.join(DETECTIONS_FILE).is_file()
}

fn load_data(path: &Path, cfg: &RunConfig) -> Result<Vec<SequenceData>> {
    let shape = cfg.features.appearance;
    if is_sequence_dir(path) {
        Ok(vec![io::read_sequence(path, shape, &label_types(cfg))?])
    } else {
        io::read_dataset(path, shape, &label_types(cfg))
    }
}

fn load_model(path: &Path, cfg: &RunConfig) -> Result<CostModel> {
    let model = io::read_checkpoint(path)?;
    model.check_features(&cfg.features)?;
    Ok(model)
}

fn require_labels(data: &[SequenceData]) -> Result<()> {
    match data.iter().find(|d| d.labels.is_empty()) {
        Some(d) => Err(Error::InvalidInput(format!("sequence {} has no labels", d.name))),
        None => Ok(()),
    }
}

pub fn gen(profile: &str, out: &Path, seed: u64, noiseless: bool) -> Result<()> {
    let configs = make_benchmark(profile, seed)?;
    for (i, cfg) in configs.into_iter().enumerate() {
        let cfg = if noiseless { cfg.noiseless() } else { cfg };
        let scenario = generate(&cfg)?;
        io::write_sequence(&io::sequence_dir(out, i), &scenario.seq, &scenario.gt)?;
    }
    println!("wrote {} sequences of profile {profile} to {}", make_benchmark(profile, seed)?.len(), out.display());
    Ok(())
}

fn windows_of(data: &[SequenceData], idx: &[usize], cfg: &RunConfig) -> Result<Vec<TrainingWindow>> {
    let mut out = Vec::new();
    for &i in idx {
        let d = &data[i];
        out.extend(prepare_windows(&d.seq, &d.labels, &cfg.features, &cfg.tracking, cfg.train.gold_iou)?);
    }
    Ok(out)
}

fn log_header(mode: Mode, cfg: &RunConfig, train_seqs: usize, val_seqs: usize) -> String {
    let t = &cfg.train;
    let mode = match mode {
        Mode::End2end => "end2end",
        Mode::Piecewise => "piecewise",
    };
    format!(
        "# mode {mode}\n# lr {}\n# iterations {}\n# batch_size {}\n# seed {}\n# train_sequences {train_seqs}\n# validation_sequences {val_seqs}\n# iteration loss wall_seconds\n",
        t.lr, t.iterations, t.batch_size, t.seed
    )
}

pub fn train(data: &Path, config: Option<&Path>, mode: Mode, out: &Path, log: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let data = load_data(data, &cfg)?;
    require_labels(&data)?;
    let (train_idx, val_idx, _) = split_indices(data.len());
    let train_windows = windows_of(&data, &train_idx, &cfg)?;
    let val_windows = windows_of(&data, &val_idx, &cfg)?;

    let log_path = log.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".log");
        PathBuf::from(p)
    });
    let mut log_text = log_header(mode, &cfg, train_idx.len(), val_idx.len());
    let record = |l: &IterationLog, text: &mut String| {
        let _ = writeln!(text, "{} {:.10e} {:.3}", l.iteration, l.loss, l.wall_seconds);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let init = CostModel::truncated_normal(&cfg.features, &cfg.scorer, cfg.train.init_std, &mut rng);
    let outcome = match mode {
        Mode::End2end => train_end_to_end(init, &train_windows, &cfg.train, |l| record(l, &mut log_text)),
        Mode::Piecewise => {
            train_piecewise(init, &train_windows, &val_windows, &cfg.train, &cfg.line_search, |l| record(l, &mut log_text))
        }
    };
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) => {
            if let Error::Diverged { iteration, .. } = &e {
                let _ = writeln!(log_text, "# diverged at iteration {iteration}");
            }
            io::write_atomic(&log_path, log_text.as_bytes())?;
            return Err(e);
        }
    };
    io::write_atomic(&log_path, log_text.as_bytes())?;
    io::write_checkpoint(out, &outcome.model)?;
    let first = outcome.loss_trace.first().copied().unwrap_or(f64::NAN);
    let last = outcome.loss_trace.last().copied().unwrap_or(f64::NAN);
    println!(
        "trained {} parameters on {} windows: loss {first:.4} -> {last:.4}; checkpoint {}",
        outcome.model.num_params(),
        train_windows.len(),
        out.display()
    );
    Ok(())
}

pub fn track(data: &Path, model: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let model = load_model(model, &cfg)?;
    let single = is_sequence_dir(data);
    let data = load_data(data, &cfg)?;
    for d in &data {
        let tracked = track_sequence(&model, &d.seq, &cfg.features, &cfg.tracking)?;
        let path = if single { out.to_path_buf() } else { out.join(format!("{}.txt", d.name)) };
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        io::write_track_boxes(&path, &tracked.boxes, true)?;
        println!("{}: {} trajectories", d.name, tracked.trajectories.len());
    }
    Ok(())
}

fn read_boxes(path: &Path, types: &[&str]) -> Result<Vec<TrackBox>> {
    Ok(io::kitti_track_boxes(&io::read_kitti(path)?, types))
}

/// `(name, hypothesis file, label file)` triples to evaluate.
fn eval_pairs(hyp: &Path, gt: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    if !hyp.is_dir() {
        let gt_file = if gt.is_dir() { gt.join(LABELS_FILE) } else { gt.to_path_buf() };
        let name = hyp.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        return Ok(vec![(name, hyp.to_path_buf(), gt_file)]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(hyp)
        .map_err(|e| Error::io(hyp, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidInput(format!("{} contains no .txt result files", hyp.display())));
    }
    files
        .into_iter()
        .map(|f| {
            let name = f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let label = gt.join(&name).join(LABELS_FILE);
            if !label.is_file() {
                return Err(Error::InvalidInput(format!("no labels for {name} at {}", label.display())));
            }
            Ok((name, f, label))
        })
        .collect()
}

fn report_lines(name: &str, r: &MotReport, text: &mut String) {
    let _ = writeln!(text, "[{name}]");
    let rows: [(&str, String); 12] = [
        ("mota", format!("{:.6}", r.mota)),
        ("motp", format!("{:.6}", r.motp)),
        ("ids", r.ids.to_string()),
        ("frag", r.frag.to_string()),
        ("fp", r.fp.to_string()),
        ("fn", r.fn_.to_string()),
        ("num_gt", r.num_gt.to_string()),
        ("num_matches", r.num_matches.to_string()),
        ("gt_tracks", r.gt_tracks.to_string()),
        ("mostly_tracked", r.mostly_tracked.to_string()),
        ("mostly_lost", r.mostly_lost.to_string()),
        ("mt_fraction", format!("{:.6}", r.mt_fraction)),
    ];
    for (k, v) in rows {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "ml_fraction = {:.6}\n", r.ml_fraction);
}

pub fn eval(hyp: &Path, gt: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let types = label_types(&cfg);
    let mut named = Vec::new();
    for (name, h, g) in eval_pairs(hyp, gt)? {
        let report = evaluate(&read_boxes(&h, &types)?, &read_boxes(&g, &types)?, cfg.metrics)?;
        named.push((name, report));
    }
    let reports: Vec<MotReport> = named.iter().map(|(_, r)| r.clone()).collect();
    let total = aggregate(&reports)?;

    let mut text = String::new();
    report_lines("total", &total, &mut text);
    if named.len() > 1 {
        for (name, r) in &named {
            report_lines(name, r, &mut text);
        }
    }
    let strip = |r: &MotReport| MotReport { frames: Vec::new(), ..r.clone() };
    let json = serde_json::json!({
        "total": strip(&total),
        "sequences": named.iter().map(|(n, r)| serde_json::json!({"name": n, "report": strip(r)})).collect::<Vec<_>>(),
    });
    let mut json_path = out.as_os_str().to_owned();
    json_path.push(".json");
    io::write_atomic(out, text.as_bytes())?;
    let json_text = serde_json::to_string_pretty(&json).map_err(|e| Error::InvalidInput(e.to_string()))? + "\n";
    io::write_atomic(Path::new(&json_path), json_text.as_bytes())?;
    println!("MOTA {:.4} MOTP {:.4} IDS {} FRAG {}", total.mota, total.motp, total.ids, total.frag);
    Ok(())
}

pub fn match_bench(data: &Path, model: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let model = load_model(model, &cfg)?;
    let data = load_data(data, &cfg)?;
    require_labels(&data)?;
    let (fit, val, test) = split_indices(data.len());
    if test.is_empty() {
        return Err(Error::InvalidInput("match-bench needs at least two sequences".into()));
    }
    let pairs = |idx: &[usize]| -> Vec<PairRef> {
        idx.iter()
            .flat_map(|&i| labeled_pairs(i, &data[i].seq, &data[i].labels, &cfg.tracking.gate, cfg.train.gold_iou))
            .collect()
    };
    let seqs: Vec<_> = data.iter().map(|d| d.seq.clone()).collect();
    let rows = match_benchmark(&seqs, &model, &cfg.features, &pairs(&fit), &pairs(&val), &pairs(&test))?;
    let table = format_match_table(&rows);
    io::write_atomic(out, table.as_bytes())?;
    print!("{table}");
    Ok(())
}

pub fn plot(tracks: &Path, out: &Path) -> Result<()> {
    let records = io::read_kitti(tracks)?;
    io::write_atomic(out, render_svg(&records).as_bytes())
}
