use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use neurodeploy_core::events::{
    frames_to_spikes, load_events, write_frames, EventFormat, Preprocess, SensorSize,
};
use neurodeploy_core::fsutil::write_atomic;
use neurodeploy_core::graph::SaveOptions;
use neurodeploy_core::lowering::{load_network, lower_with, save_network, LowerOptions, WeightSource};
use neurodeploy_core::partitioner::{write_placement_csv, CHIP_PES};
use neurodeploy_core::quantizer::{
    percentile_sweep, scaled_thresholds, write_sweep_csv, Sample, SweepOptions,
};
use neurodeploy_core::simulator::{run_reference, summarize, write_spikes_csv};
use neurodeploy_core::{
    load_graph, partition, ptq_quantize_graph, qat_finalize_graph, run, save_graph, Engine,
    FrameTensor, Network, PartitionOverrides, PeModel, Placement, PtqConfig, RunOptions,
    SpikeTrain,
};

use crate::args::*;
use crate::failure::{Failure, ResultExt};
use crate::manifest;

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).internal_ctx(|| "serializing JSON")?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).user_ctx(|| format!("writing {}", path.display()))
}

fn write_with(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), Failure> {
    let mut buf = Vec::new();
    f(&mut buf).internal_ctx(|| format!("formatting {}", path.display()))?;
    write_atomic(path, &buf).user_ctx(|| format!("writing {}", path.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).user_ctx(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).user_ctx(|| format!("parsing {}", path.display()))
}

impl PreprocessArgs {
    fn preprocess(&self) -> Preprocess {
        Preprocess {
            sensor: self.sensor_size(),
            denoise: (!self.no_denoise).then_some((self.denoise_px, self.denoise_window_us)),
            downsample: self.downsample,
            bin_ms: self.bin_ms,
        }
    }

    fn sensor_size(&self) -> SensorSize {
        SensorSize {
            width: self.sensor.0,
            height: self.sensor.1,
        }
    }

    fn config(&self) -> Value {
        json!({
            "bin_ms": self.bin_ms,
            "downsample": self.downsample,
            "sensor": [self.sensor.0, self.sensor.1],
            "denoise": (!self.no_denoise).then_some(json!({
                "px": self.denoise_px,
                "window_us": self.denoise_window_us,
            })),
        })
    }
}

fn is_frames(path: &Path) -> bool {
    path.file_name()
        .is_some_and(|n| n.to_string_lossy().ends_with(".frames.bin"))
}

fn load_frames(path: &Path, pre: &PreprocessArgs) -> Result<FrameTensor, Failure> {
    if is_frames(path) {
        let bytes = fs::read(path).user_ctx(|| format!("reading {}", path.display()))?;
        return FrameTensor::from_sidecar(&bytes, pre.bin_ms)
            .user_ctx(|| format!("decoding frames {}", path.display()));
    }
    let events = load_events(path, EventFormat::from_path(path), pre.sensor_size())
        .user_ctx(|| format!("loading events {}", path.display()))?;
    pre.preprocess()
        .apply(&events)
        .user_ctx(|| format!("preprocessing {}", path.display()))
}

fn load_input(path: &Path, pre: &PreprocessArgs, timesteps: usize) -> Result<SpikeTrain, Failure> {
    let frames = load_frames(path, pre)?;
    if frames.timesteps() < timesteps {
        info!(
            "{}: {} frames, padding with silence to {timesteps} timesteps",
            path.display(),
            frames.timesteps()
        );
    }
    Ok(frames_to_spikes(&frames, timesteps))
}

fn load_overrides(path: Option<&Path>) -> Result<PartitionOverrides, Failure> {
    path.map_or_else(|| Ok(PartitionOverrides::new()), read_json)
}

fn engine(e: EngineArg) -> Engine {
    match e {
        EngineArg::Placed => Engine::PlacedInt8,
        EngineArg::Reference => Engine::ReferenceDense,
    }
}

fn check_timesteps(t: usize) -> Result<(), Failure> {
    if t == 0 {
        return Err(Failure::user("--max-timesteps must be at least 1"));
    }
    Ok(())
}

pub fn convert(a: &ConvertArgs) -> Result<(), Failure> {
    let frames = load_frames(&a.events, &a.pre)?;
    write_frames(&a.out, &frames).user_ctx(|| format!("writing {}", a.out.display()))?;
    manifest::write(
        &manifest::path_for(&a.out),
        "convert",
        a.pre.config(),
        std::slice::from_ref(&a.events),
        std::slice::from_ref(&a.out),
    )?;
    let s = frames.frames.shape();
    println!(
        "frames: {} x {} x {} x {} ({} events) -> {}",
        s[0],
        s[1],
        s[2],
        s[3],
        frames.total(),
        a.out.display()
    );
    Ok(())
}

pub fn quantize(a: &QuantizeArgs) -> Result<(), Failure> {
    let g = load_graph(&a.graph).user_ctx(|| format!("loading {}", a.graph.display()))?;
    let (q, percentile) = match a.mode {
        Mode::Ptq => {
            if g.thresholds_scaled() || g.nodes().values().any(|n| n.quant().is_some()) {
                return Err(Failure::user(
                    "--mode ptq needs a full-precision graph; use --mode qat for quantization-aware graphs",
                ));
            }
            let p = a.percentile.unwrap_or(100.0);
            let cfg = PtqConfig::new(p).user_ctx(|| "invalid --percentile")?;
            (ptq_quantize_graph(&g, &cfg).user_ctx(|| "post-training quantization")?, Some(p))
        }
        Mode::Qat => {
            if a.percentile.is_some() {
                return Err(Failure::user("--percentile is not allowed with --mode qat"));
            }
            (qat_finalize_graph(&g).user_ctx(|| "finalizing quantization-aware graph")?, None)
        }
    };
    let opts = SaveOptions {
        sidecar: a.sidecar.clone(),
    };
    save_graph(&q, &a.out, &opts).user_ctx(|| format!("writing {}", a.out.display()))?;
    let mut outputs = vec![a.out.clone()];
    outputs.extend(a.sidecar.clone());
    let mode = match a.mode {
        Mode::Ptq => "ptq",
        Mode::Qat => "qat",
    };
    manifest::write(
        &manifest::path_for(&a.out),
        "quantize",
        json!({ "mode": mode, "percentile": percentile }),
        std::slice::from_ref(&a.graph),
        &outputs,
    )?;
    for (lif, t) in scaled_thresholds(&q).layers {
        let shown = if t.len() == 1 { format!("{}", t[0]) } else { format!("{t:?}") };
        println!("threshold {lif}: {shown}");
    }
    let size = q.model_size_bytes(true).user_ctx(|| "computing model size")?;
    println!("quantized weights: {size} B -> {}", a.out.display());
    Ok(())
}

fn default_table(out: &Path) -> PathBuf {
    let name = out.file_name().unwrap_or_default().to_string_lossy();
    let stem = name.split('.').next().filter(|s| !s.is_empty()).unwrap_or("network");
    out.with_file_name(format!("{stem}.synapses.bin"))
}

pub fn lower(a: &LowerArgs) -> Result<(), Failure> {
    check_timesteps(a.max_timesteps)?;
    let g = load_graph(&a.graph).user_ctx(|| format!("loading {}", a.graph.display()))?;
    let weights = match a.weights {
        Weights::Auto => WeightSource::Auto,
        Weights::Real => WeightSource::Real,
        Weights::Integer => WeightSource::Integer,
    };
    let net = lower_with(&g, a.max_timesteps, &LowerOptions { weights })
        .user_ctx(|| format!("lowering {}", a.graph.display()))?;
    for w in &net.warnings {
        warn!("{w}");
    }
    let table = a.table.clone().unwrap_or_else(|| default_table(&a.out));
    save_network(&net, &a.out, &table).user_ctx(|| format!("writing {}", a.out.display()))?;
    manifest::write(
        &manifest::path_for(&a.out),
        "lower",
        json!({ "max_timesteps": a.max_timesteps, "weights": format!("{:?}", a.weights).to_lowercase() }),
        std::slice::from_ref(&a.graph),
        &[a.out.clone(), table],
    )?;
    for p in &net.populations {
        println!("population {:<8} {:<16} {:>6} neurons", p.id, p.kind.name(), p.size);
    }
    println!("synapses: {} -> {}", net.total_synapses(), a.out.display());
    Ok(())
}

fn load_net(path: &Path) -> Result<Network, Failure> {
    load_network(path).user_ctx(|| format!("loading {}", path.display()))
}

pub fn partition_cmd(a: &PartitionArgs) -> Result<(), Failure> {
    let net = load_net(&a.network)?;
    let overrides = load_overrides(a.overrides.as_deref())?;
    let pl = partition(&net, &PeModel::default(), &overrides, a.chip_pes)
        .user_ctx(|| "partitioning failed")?;
    write_atomic(&a.out, pl.to_json().as_bytes()).user_ctx(|| format!("writing {}", a.out.display()))?;
    let mut outputs = vec![a.out.clone()];
    if let Some(csv) = &a.csv {
        write_with(csv, |b| write_placement_csv(&pl, b))?;
        outputs.push(csv.clone());
    }
    let mut inputs = vec![a.network.clone()];
    inputs.extend(a.overrides.clone());
    manifest::write(
        &manifest::path_for(&a.out),
        "partition",
        json!({ "chip_pes": a.chip_pes, "overrides": overrides, "model": PeModel::default() }),
        &inputs,
        &outputs,
    )?;
    let peak = pl.slices.iter().map(|s| s.ledger.total()).max().unwrap_or(0);
    println!(
        "PEs used: {} of {}; peak ledger {} of {} B -> {}",
        pl.pes_used(),
        pl.chip_pes,
        peak,
        pl.usable_bytes,
        a.out.display()
    );
    Ok(())
}

fn record_list(spec: Option<&str>, net: &Network) -> Result<Option<Vec<String>>, Failure> {
    let Some(spec) = spec else { return Ok(None) };
    let ids: Vec<String> = match spec.trim() {
        "all" => net.populations.iter().map(|p| p.id.clone()).collect(),
        "none" | "" => Vec::new(),
        list => list.split(',').map(|s| s.trim().to_string()).collect(),
    };
    if let Some(bad) = ids.iter().find(|id| net.population(id).is_none()) {
        return Err(Failure::user(format!("--record: unknown population '{bad}'")));
    }
    Ok(Some(ids))
}

pub fn simulate(a: &SimulateArgs, threads: Option<usize>) -> Result<(), Failure> {
    check_timesteps(a.max_timesteps)?;
    let net = load_net(&a.network)?;
    let input = load_input(&a.input, &a.pre, a.max_timesteps)?;
    let opts = RunOptions {
        engine: engine(a.engine),
        max_timesteps: Some(a.max_timesteps),
        record: record_list(a.record.as_deref(), &net)?,
        threads,
        ..RunOptions::default()
    };
    let mut inputs = vec![a.network.clone(), a.input.clone()];
    let result = match opts.engine {
        Engine::ReferenceDense => run_reference(&net, &input, &opts),
        Engine::PlacedInt8 => {
            let pl: Placement = match &a.placement {
                Some(p) => {
                    inputs.push(p.clone());
                    read_json(p)?
                }
                None => partition(&net, &PeModel::default(), &PartitionOverrides::new(), CHIP_PES)
                    .user_ctx(|| "no --placement given and default partitioning failed")?,
            };
            if a.max_timesteps > pl.max_timesteps {
                warn!(
                    "placement budgets recording for {} timesteps, running {}",
                    pl.max_timesteps, a.max_timesteps
                );
            }
            run(&net, &pl, &input, &opts)
        }
    }
    .user_ctx(|| "simulation")?;

    fs::create_dir_all(&a.out_dir).user_ctx(|| format!("creating {}", a.out_dir.display()))?;
    let spikes = a.out_dir.join("spikes.csv");
    let summary_path = a.out_dir.join("summary.json");
    let timing_path = a.out_dir.join("timing.json");
    write_with(&spikes, |b| write_spikes_csv(&net, &result, b))?;
    let summary = summarize(&net, &result, a.mj_per_frame);
    write_json(&summary_path, &summary)?;
    write_json(&timing_path, &result.timing)?;
    let mut config = json!({
        "engine": result.engine,
        "max_timesteps": a.max_timesteps,
        "record": opts.record,
        "mj_per_frame": a.mj_per_frame,
        "placement": if a.placement.is_none() && opts.engine == Engine::PlacedInt8 { "default" } else { "file" },
    });
    if !is_frames(&a.input) {
        config["preprocess"] = a.pre.config();
    }
    manifest::write(
        &a.out_dir.join("manifest.json"),
        "simulate",
        config,
        &inputs,
        &[spikes, summary_path],
    )?;

    match (&summary.prediction, summary.no_spike) {
        (Some(c), false) => println!(
            "prediction: class {c}{}",
            if summary.tie { " (tie)" } else { "" }
        ),
        (Some(c), true) => println!("prediction: class {c} (no output spikes)"),
        (None, _) => println!("prediction: none (no output population)"),
    }
    println!("class counts: {:?}", summary.class_counts);
    println!("energy: {:.3} mJ ({})", summary.energy_mj, summary.energy_note);
    println!(
        "wall time: {:.1} ms ({:.0} timesteps/s) -> {}",
        result.timing.wall_ms,
        result.timing.timesteps_per_s,
        a.out_dir.display()
    );
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    check_timesteps(a.max_timesteps)?;
    if !a.label.is_empty() && a.label.len() != a.input.len() {
        return Err(Failure::user(format!(
            "{} labels for {} inputs",
            a.label.len(),
            a.input.len()
        )));
    }
    let g = load_graph(&a.graph).user_ctx(|| format!("loading {}", a.graph.display()))?;
    let samples = a
        .input
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok(Sample {
                input: load_input(p, &a.pre, a.max_timesteps)?,
                label: a.label.get(i).copied(),
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    let opts = SweepOptions {
        max_timesteps: a.max_timesteps,
        engine: engine(a.engine),
        overrides: load_overrides(a.overrides.as_deref())?,
        ..SweepOptions::default()
    };
    let points = percentile_sweep(&g, &samples, &a.percentiles, &opts).user_ctx(|| "percentile sweep")?;
    write_with(&a.out, |b| write_sweep_csv(&points, b))?;
    let mut inputs = vec![a.graph.clone()];
    inputs.extend(a.input.iter().cloned());
    inputs.extend(a.overrides.clone());
    manifest::write(
        &manifest::path_for(&a.out),
        "evaluate",
        json!({
            "percentiles": a.percentiles,
            "labels": a.label,
            "max_timesteps": a.max_timesteps,
            "engine": opts.engine,
            "metric": if a.label.is_empty() { "spike_agreement" } else { "accuracy" },
            "preprocess": a.pre.config(),
        }),
        &inputs,
        std::slice::from_ref(&a.out),
    )?;
    for p in &points {
        println!("percentile {:>7}: {:.4}", p.percentile, p.metric);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Report {
    parameters: usize,
    float_size_bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    quantized_size_bytes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    size_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pes_used: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    peak_pe_bytes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frames: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy_mj: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prediction: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_percentile: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    best_metric: Option<f64>,
}

fn read_sweep(path: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let text = fs::read_to_string(path).user_ctx(|| format!("reading {}", path.display()))?;
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            let parse = |s: Option<&str>| s.and_then(|v| v.trim().parse::<f64>().ok());
            let mut cols = l.split(',');
            match (parse(cols.next()), parse(cols.next())) {
                (Some(p), Some(m)) => Ok((p, m)),
                _ => Err(Failure::user(format!("{}: bad row {}", path.display(), i + 2))),
            }
        })
        .collect()
}

pub fn report(a: &ReportArgs) -> Result<(), Failure> {
    let g = load_graph(&a.graph).user_ctx(|| format!("loading {}", a.graph.display()))?;
    let float_size = g.model_size_bytes(false).user_ctx(|| "computing model size")?;
    let mut r = Report {
        parameters: g.count_parameters(),
        float_size_bytes: float_size,
        quantized_size_bytes: None,
        size_ratio: None,
        pes_used: None,
        peak_pe_bytes: None,
        frames: None,
        energy_mj: None,
        prediction: None,
        best_percentile: None,
        best_metric: None,
    };
    let mut inputs = vec![a.graph.clone()];
    if let Some(p) = &a.quantized {
        let q = load_graph(p).user_ctx(|| format!("loading {}", p.display()))?;
        let size = q.model_size_bytes(true).user_ctx(|| format!("{} is not quantized", p.display()))?;
        r.quantized_size_bytes = Some(size);
        r.size_ratio = Some(size as f64 / float_size as f64);
        inputs.push(p.clone());
    }
    if let Some(p) = &a.placement {
        let pl: Placement = read_json(p)?;
        r.pes_used = Some(pl.pes_used());
        r.peak_pe_bytes = pl.slices.iter().map(|s| s.ledger.total()).max();
        inputs.push(p.clone());
    }
    if let Some(p) = &a.summary {
        let s: Value = read_json(p)?;
        r.frames = s["frames"].as_u64();
        r.energy_mj = s["energy_mj"].as_f64();
        r.prediction = s["prediction"].as_u64();
        inputs.push(p.clone());
    }
    if let Some(p) = &a.sweep {
        let rows = read_sweep(p)?;
        // highest metric; ties go to the larger percentile
        if let Some(&(pc, m)) = rows
            .iter()
            .max_by(|x, y| x.1.total_cmp(&y.1).then(x.0.total_cmp(&y.0)))
        {
            r.best_percentile = Some(pc);
            r.best_metric = Some(m);
        }
        inputs.push(p.clone());
    }
    write_json(&a.out, &r)?;
    manifest::write(&manifest::path_for(&a.out), "report", json!({}), &inputs, std::slice::from_ref(&a.out))?;

    println!("{:<24} {}", "parameters", r.parameters);
    println!("{:<24} {} B", "model size (float32)", r.float_size_bytes);
    if let (Some(q), Some(ratio)) = (r.quantized_size_bytes, r.size_ratio) {
        println!("{:<24} {} B ({:.0} %)", "model size (int8)", q, ratio * 100.0);
    }
    if let (Some(n), Some(peak)) = (r.pes_used, r.peak_pe_bytes) {
        println!("{:<24} {} (peak {} B)", "PEs used", n, peak);
    }
    if let (Some(e), Some(f)) = (r.energy_mj, r.frames) {
        println!("{:<24} {:.3} mJ over {} frames", "energy per inference", e, f);
    }
    if let Some(c) = r.prediction {
        println!("{:<24} {}", "prediction", c);
    }
    if let (Some(p), Some(m)) = (r.best_percentile, r.best_metric) {
        println!("{:<24} {} ({:.4})", "best percentile", p, m);
    }
    Ok(())
}
