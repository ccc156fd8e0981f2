use std::collections::HashMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::json;

use pivq::assignment::{brute_force_assignment, solve_assignment, CostMatrix, BRUTE_FORCE_MAX_COLS};
use pivq::capacity::{self, CapacityParams};
use pivq::codebook_train::{run_training, Gauss16, InitMethod, TrainerConfig};
use pivq::io::{self, CodedSample};
use pivq::probing::{build_presence, probe, Labels, LogisticHyper};
use pivq::quantizer::{self, Method, Metric};
use pivq::sampling::{interpolate, random_smooth_path, split_pair};
use pivq::toy::{train_toy, ToyConfig, ToyModel};
use pivq::{CodeSet, Embedding, Execution, Rng, UsageStats};

use crate::{CapacityMethod, Command, InitArg, QuantMethod, UsageError};

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json_pretty<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn read_dataset(path: &Path) -> Result<Vec<CodedSample>> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    io::read_coded(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

fn find<'a>(dataset: &'a [CodedSample], id: &str) -> Result<&'a CodeSet> {
    dataset
        .iter()
        .find(|s| s.id == id)
        .map(|s| &s.codes)
        .with_context(|| format!("no sample with id {id:?}"))
}

fn method(m: QuantMethod) -> Method {
    match m {
        QuantMethod::Nearest => Method::Nearest,
        QuantMethod::Matching => Method::Matching,
    }
}

pub fn run(command: Command, exec: Execution) -> Result<()> {
    match command {
        Command::Assign { cost, oracle } => assign(&cost, oracle),
        Command::Quantize {
            codebook,
            embeddings,
            method: m,
            len,
            out,
            stats,
            squared,
        } => quantize(&codebook, &embeddings, method(m), len, &out, stats.as_deref(), squared, exec),
        Command::Capacity {
            kdata,
            kimg,
            len,
            method,
        } => {
            let bits = capacity_bits(kdata, kimg, len, method)?;
            println!("{bits:.3}");
            Ok(())
        }
        Command::CapacityCurve { k, kimg, lmax, out } => capacity_curve(k, kimg, lmax, &out, exec),
        Command::TrainCodebook {
            config,
            embeddings,
            out,
            report,
            seed,
            iterations,
            batch_size,
            init,
            method: m,
        } => {
            let mut cfg = load_trainer_config(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(init) = init {
                cfg.init = match init {
                    InitArg::Kmeanspp => InitMethod::Kmeanspp,
                    InitArg::Random => InitMethod::Random,
                };
            }
            if let Some(m) = m {
                cfg.method = method(m);
            }
            train_codebook(&cfg, &embeddings, &out, &report, iterations, batch_size, exec)
        }
        Command::Interpolate {
            dataset,
            a,
            b,
            n,
            seed,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            let (ca, cb) = (find(&data, &a)?, find(&data, &b)?);
            let mut rng = Rng::new(seed);
            let samples = (0..n)
                .map(|i| {
                    Ok(CodedSample {
                        id: format!("interp-{i}"),
                        codes: interpolate(ca, cb, &mut rng)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            emit_coded(&samples, out.as_deref())
        }
        Command::SmoothPath {
            dataset,
            a,
            b,
            seed,
            reverse,
            out,
        } => {
            let data = read_dataset(&dataset)?;
            let pair = split_pair(find(&data, &a)?, find(&data, &b)?)?;
            let mut path = random_smooth_path(&pair, &mut Rng::new(seed))?;
            if reverse {
                path.reverse();
            }
            let samples: Vec<CodedSample> = path
                .into_iter()
                .enumerate()
                .map(|(t, codes)| CodedSample {
                    id: format!("path-{t}"),
                    codes,
                })
                .collect();
            emit_coded(&samples, out.as_deref())
        }
        Command::Probe {
            codes,
            labels,
            folds,
            out,
            k,
            seed,
        } => run_probe(&codes, &labels, folds, &out, k, seed, exec),
        Command::ToyTrain {
            config,
            out,
            metrics,
            seed,
            steps,
        } => {
            let mut cfg = match config {
                Some(path) => serde_json::from_str::<ToyConfig>(&read_text(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?,
                None => ToyConfig::default(),
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(steps) = steps {
                cfg.steps = steps;
            }
            let run = train_toy(&cfg, exec)?;
            write(&out, run.model.to_bytes())?;
            write(&metrics, to_json_pretty(&run.metrics)?)?;
            let m = &run.metrics;
            println!(
                "held-out MSE {:.6} -> {:.6} ({:.1}% reduction), K_data {} over held-out set",
                m.initial_heldout_mse,
                m.final_heldout_mse,
                100.0 * m.mse_reduction,
                m.heldout_k_data
            );
            Ok(())
        }
        Command::ToyDecode { model, codes, out } => {
            let model = ToyModel::from_bytes(&read_bytes(&model)?)?;
            let data = read_dataset(&codes)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["id".to_string()];
            header.extend((0..model.shape.pixels).map(|p| format!("p{p}")));
            w.write_record(&header)?;
            for s in &data {
                let recon = model
                    .decode_set(&s.codes)
                    .with_context(|| format!("decoding sample {:?}", s.id))?;
                let mut row = vec![s.id.clone()];
                row.extend(recon.iter().map(|v| format!("{v:?}")));
                w.write_record(&row)?;
            }
            write(&out, w.into_inner()?)?;
            println!("decoded {} samples", data.len());
            Ok(())
        }
        Command::Stats { codes, k, len, out } => {
            let data = read_dataset(&codes)?;
            let summary = stats(&data, k, len)?;
            let text = to_json_pretty(&summary)?;
            print!("{text}");
            if let Some(out) = out {
                write(&out, text)?;
            }
            Ok(())
        }
    }
}

fn assign(path: &Path, oracle: bool) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(std::io::Cursor::new(read_bytes(path)?));
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().with_context(|| format!("bad number {f:?}")))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let cost = CostMatrix::from_rows(&rows)?;
    let solution = solve_assignment(&cost);
    println!("mapping: {:?}", solution.mapping);
    println!("cost: {}", solution.total_cost);
    if oracle {
        if cost.cols() > BRUTE_FORCE_MAX_COLS {
            return Err(usage(format!(
                "--oracle supports at most {BRUTE_FORCE_MAX_COLS} columns"
            )));
        }
        let check = brute_force_assignment(&cost)?;
        let agree = check.mapping == solution.mapping;
        println!("oracle mapping: {:?}", check.mapping);
        println!("oracle cost: {}", check.total_cost);
        println!("agree: {agree}");
        if !agree {
            bail!("solver and oracle disagree");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn quantize(
    codebook: &Path,
    embeddings: &Path,
    method: Method,
    len: usize,
    out: &Path,
    stats_path: Option<&Path>,
    squared: bool,
    exec: Execution,
) -> Result<()> {
    if len == 0 {
        return Err(usage("--len must be positive"));
    }
    let cb = io::read_codebook(&read_bytes(codebook)?)?;
    let zs = io::read_embeddings(&read_bytes(embeddings)?)?;
    if zs.len() % len != 0 {
        bail!("{} embeddings do not split into samples of {len}", zs.len());
    }
    let samples: Vec<Vec<Embedding>> = zs.chunks(len).map(<[Embedding]>::to_vec).collect();
    let metric = if squared { Metric::Squared } else { Metric::Euclidean };
    let results = quantizer::quantize_batch(&cb, &samples, method, metric, exec)?;
    let mut usage = UsageStats::new(cb.len());
    let coded: Vec<CodedSample> = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            usage = quantizer::accumulate_usage(std::mem::replace(&mut usage, UsageStats::new(0)), &r)?;
            Ok(CodedSample {
                id: i.to_string(),
                codes: r.code_set,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write(out, io::coded_to_string(&coded)?)?;
    let summary = json!({
        "samples": coded.len(),
        "k_data": usage.dataset_usage(),
        "max_k_img": usage.max_per_image_usage,
        "dead_codes": usage.dead_codes(),
        "histogram": usage.histogram,
    });
    let text = to_json_pretty(&summary)?;
    print!("{text}");
    if let Some(p) = stats_path {
        write(p, text)?;
    }
    Ok(())
}

fn capacity_bits(kdata: u64, kimg: Option<u64>, len: u64, method: CapacityMethod) -> Result<f64> {
    Ok(match method {
        CapacityMethod::Nearest => {
            let kimg = kimg.ok_or_else(|| usage("--kimg is required for the nearest method"))?;
            capacity::nearest_capacity_bits(&CapacityParams::new(kdata, kimg, len)?)?
        }
        CapacityMethod::Matching => capacity::matching_capacity_bits(kdata, len)?,
        CapacityMethod::Standard => capacity::standard_vq_capacity_bits(kdata, len)?,
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|b| format!("{b:.6}")).unwrap_or_default()
}

fn capacity_curve(k: u64, kimg: u64, lmax: u64, out: &Path, exec: Execution) -> Result<()> {
    if lmax == 0 {
        return Err(usage("--lmax must be positive"));
    }
    let lens: Vec<u64> = (1..=lmax).collect();
    let rows = capacity::capacity_curve(k, kimg, &lens, exec)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["len", "standard", "nearest", "matching"])?;
    for r in &rows {
        w.write_record([
            r.len.to_string(),
            format!("{:.6}", r.standard),
            format!("{:.6}", r.nearest),
            opt_cell(r.matching),
        ])?;
    }
    write(out, w.into_inner()?)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(())
}

fn load_trainer_config(path: &Path) -> Result<TrainerConfig> {
    let text = read_text(path)?;
    let cfg: TrainerConfig = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

fn train_codebook(
    cfg: &TrainerConfig,
    source: &str,
    out: &Path,
    report_path: &Path,
    iterations: Option<u64>,
    batch_size: usize,
    exec: Execution,
) -> Result<()> {
    if batch_size == 0 {
        return Err(usage("--batch-size must be positive"));
    }
    let (state, report) = if let Some(name) = source.strip_prefix("synthetic:") {
        if name != "gauss16" {
            return Err(usage(format!("unknown synthetic source {name:?}")));
        }
        if cfg.dim != Gauss16::DIM {
            bail!("synthetic:gauss16 produces {}-dimensional data, config has d = {}", Gauss16::DIM, cfg.dim);
        }
        let stream = Gauss16::new(cfg.seed, cfg.codes_per_sample, batch_size);
        run_training(stream.take(iterations.unwrap_or(1000) as usize), cfg, exec)?
    } else {
        let zs = io::read_embeddings(&read_bytes(Path::new(source))?)?;
        let l = cfg.codes_per_sample;
        if zs.is_empty() || zs.len() % l != 0 {
            bail!("{} embeddings do not split into samples of L = {l}", zs.len());
        }
        let samples: Vec<Vec<Embedding>> = zs.chunks(l).map(<[Embedding]>::to_vec).collect();
        let batches: Vec<Vec<Vec<Embedding>>> = samples.chunks(batch_size).map(<[_]>::to_vec).collect();
        let total = iterations.unwrap_or(batches.len() as u64) as usize;
        run_training(batches.iter().cycle().take(total).cloned(), cfg, exec)?
    };
    let bytes = if out.extension().is_some_and(|e| e == "json") {
        io::codebook_to_json(&state.codebook)?.into_bytes()
    } else {
        io::codebook_to_bytes(&state.codebook)?
    };
    write(out, bytes)?;
    write(report_path, to_json_pretty(&report)?)?;
    println!(
        "{} iterations, {} refits, K_data {} of {}, dead codes {}",
        report.iterations,
        report.reinits.len(),
        report.k_data,
        cfg.codebook_size,
        report.dead_codes
    );
    Ok(())
}

fn emit_coded(samples: &[CodedSample], out: Option<&Path>) -> Result<()> {
    let text = io::coded_to_string(samples)?;
    match out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_flag(field: &str) -> Result<bool> {
    match field {
        "0" => Ok(false),
        "1" => Ok(true),
        other => bail!("label values must be 0 or 1, got {other:?}"),
    }
}

/// Labels aligned with `data`.
fn read_labels(path: &Path, data: &[CodedSample]) -> Result<Labels> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(std::io::Cursor::new(read_bytes(path)?));
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let by_id = header.first().is_some_and(|h| h == "id");
    let names: Vec<String> = header[usize::from(by_id)..].to_vec();
    if names.is_empty() {
        bail!("labels file has no attribute columns");
    }
    let mut rows: Vec<(Option<String>, Vec<bool>)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.with_context(|| format!("labels row {}", i + 2))?;
        let mut fields = record.iter();
        let id = if by_id { fields.next().map(str::to_string) } else { None };
        let values = fields.map(parse_flag).collect::<Result<Vec<_>>>()?;
        rows.push((id, values));
    }
    let ordered: Vec<Vec<bool>> = if by_id {
        let mut map: HashMap<String, Vec<bool>> = HashMap::new();
        for (id, v) in rows {
            let id = id.unwrap_or_default();
            if map.insert(id.clone(), v).is_some() {
                bail!("duplicate label id {id:?}");
            }
        }
        data.iter()
            .map(|s| map.remove(&s.id).with_context(|| format!("no labels for sample {:?}", s.id)))
            .collect::<Result<_>>()?
    } else {
        if rows.len() != data.len() {
            bail!("{} label rows for {} samples", rows.len(), data.len());
        }
        rows.into_iter().map(|(_, v)| v).collect()
    };
    let mut values = vec![Vec::with_capacity(data.len()); names.len()];
    for row in ordered {
        for (a, v) in row.into_iter().enumerate() {
            values[a].push(v);
        }
    }
    Ok(Labels { names, values })
}

fn run_probe(
    codes: &Path,
    labels: &Path,
    folds: usize,
    out: &Path,
    k: Option<usize>,
    seed: u64,
    exec: Execution,
) -> Result<()> {
    if folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let data = read_dataset(codes)?;
    let labels = read_labels(labels, &data)?;
    let k = match k {
        Some(k) => k,
        None => data.iter().filter_map(|s| s.codes.max_code()).max().map_or(1, |m| m + 1),
    };
    let x = build_presence(data.iter().map(|s| &s.codes), k)?;
    let report = probe(&x, &labels, folds, &LogisticHyper::default(), &Rng::new(seed), exec)?;
    write(out, to_json_pretty(&report)?)?;
    for e in &report.attributes {
        println!(
            "{}: cv accuracy {:.3} ± {:.3}, baseline {:.3}",
            e.attribute, e.cv_accuracy_mean, e.cv_accuracy_std, e.baseline_accuracy_mean
        );
    }
    Ok(())
}

fn stats(data: &[CodedSample], k: usize, len: Option<u64>) -> Result<serde_json::Value> {
    let mut usage = UsageStats::new(k);
    for s in data {
        usage.record(s.codes.codes())?;
    }
    let k_data = usage.dataset_usage() as u64;
    let k_img = usage.max_per_image_usage as u64;
    let len = len.unwrap_or_else(|| data.iter().map(|s| s.codes.len() as u64).max().unwrap_or(0));
    let nearest = CapacityParams::new(k_data, k_img, len)
        .and_then(|p| capacity::nearest_capacity_bits(&p))
        .ok();
    let matching = if k_data > 0 && len > 0 {
        capacity::matching_capacity_bits(k_data, len).ok()
    } else {
        None
    };
    Ok(json!({
        "k_data": k_data,
        "max_k_img": k_img,
        "nearest_capacity_bits": nearest,
        "matching_capacity_bits": matching,
    }))
}
