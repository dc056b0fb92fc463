use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use comet_core::baseline::{cosmos_path, cosmos_power_stack, simulate_cosmos, CellModel, LevelSet};
use comet_core::engine::{
    format_trace, parse_trace_str, simulate_comet, sweep_bit_density, Photonics, SimStats, SweepInputs, SweepRow,
    TraceRequest,
};
use comet_core::geometry::{decompose_flat_address, map_address, PhysicalAddress};
use comet_core::integrity::build_gain_lut;
use comet_core::pcm_cell::{build_level_table, LevelOverrides};
use comet_core::photonics::{loss_chain_db, power_stack, soa_count};
use comet_core::trace_synth::{generate, Pattern, TraceSpec};
use comet_core::{BitsPerCell, GainLut, LevelTable, LineBytes, MemoryGeometry, PowerStack};
use serde::Serialize;
use serde_json::Value;

use crate::config::{read_file, Architecture, RunConfig, TraceSource};
use crate::demo::{self, GrayImage};
use crate::{Cli, Command, Format, PatternArg};

/// A command's result in its structured, tabular and (optionally) plain forms.
struct Report {
    json: Value,
    csv: String,
    text: Option<String>,
}

impl Report {
    fn new<T: Serialize>(doc: &T, csv: String) -> Result<Self> {
        Ok(Self {
            json: serde_json::to_value(doc)?,
            csv,
            text: None,
        })
    }

    fn with_text(mut self, text: String) -> Self {
        self.text = Some(text);
        self
    }

    fn json_text(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.json)? + "\n")
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(a) = cli.arch {
        cfg.architecture = a;
    }
    if let Some(p) = cli.policy {
        cfg.options.policy = p;
    }

    let report = match &cli.command {
        Command::Simulate { trace, timeline_bin_ns } => {
            if let Some(w) = timeline_bin_ns {
                cfg.options.timeline_bin_ns = Some(*w);
            }
            simulate(&cfg, trace.as_deref(), cli.seed)?
        }
        Command::Power => power(&cfg)?,
        Command::SweepB { trace } => sweep(&cfg, trace.as_deref(), cli.seed)?,
        Command::Map {
            row,
            col,
            bank,
            channel,
            addr,
        } => map(&cfg, *row, *col, *bank, *channel, *addr)?,
        Command::Lut { bits } => lut(&cfg, *bits)?,
        Command::CorruptDemo {
            image,
            synthetic: _,
            as_published,
            isolated,
            steps,
            dump,
        } => corrupt_demo(&cfg, image.as_deref(), *as_published, *isolated, *steps, dump.as_deref(), cli.seed)?,
        Command::GenTrace {
            pattern,
            requests,
            read_fraction,
            inter_arrival_ns,
            footprint_bytes,
            stride_lines,
        } => {
            let spec = trace_spec(
                &cfg,
                *pattern,
                *requests,
                *read_fraction,
                *inter_arrival_ns,
                *footprint_bytes,
                *stride_lines,
                cli.seed,
            )?;
            let text = format_trace(&generate(&spec, capacity_bytes(&cfg)?)?);
            return match &cli.out {
                Some(p) => write_file(p, text.as_bytes()),
                None => print(&text),
            };
        }
        Command::Defaults => {
            return print(&(serde_json::to_string_pretty(&RunConfig::default())? + "\n"));
        }
    };
    emit(&cli, &cfg, &report)
}

fn emit(cli: &Cli, cfg: &RunConfig, report: &Report) -> Result<()> {
    let json_path = cli.out.clone().or_else(|| cfg.output.json.clone());
    let csv_path = match (&cli.out, &cfg.output.csv) {
        (Some(p), _) => Some(p.with_extension("csv")),
        (None, Some(p)) => Some(p.clone()),
        (None, None) => None,
    };
    let wrote = json_path.is_some() || csv_path.is_some();
    if let Some(p) = &json_path {
        write_file(p, report.json_text()?.as_bytes())?;
    }
    if let Some(p) = &csv_path {
        write_file(p, report.csv.as_bytes())?;
    }
    let format = match cli.format {
        Some(f) => f,
        None if wrote => return Ok(()),
        None if report.text.is_some() => Format::Text,
        None => Format::Json,
    };
    match format {
        Format::Json => print(&report.json_text()?),
        Format::Csv => print(&report.csv),
        Format::Text => print(report.text.as_deref().unwrap_or(&report.csv)),
    }
}

fn print(s: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    out.write_all(s.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn line_bytes(cfg: &RunConfig) -> Result<LineBytes> {
    let bits = cfg.timing.bus_width_bits as u64 * cfg.timing.burst_length as u64;
    LineBytes::try_from((bits / 8) as u32)
        .ok()
        .filter(|l| l.bits() == bits)
        .with_context(|| format!("timing: a {bits}-bit burst is not a 32, 64 or 128-byte line"))
}

fn geometry(cfg: &RunConfig) -> Result<MemoryGeometry> {
    cfg.geometry.validate().context("geometry")
}

fn capacity_bytes(cfg: &RunConfig) -> Result<u64> {
    Ok(match cfg.architecture {
        Architecture::Comet => geometry(cfg)?.capacity_bytes(),
        Architecture::Cosmos => {
            cfg.cosmos.validate().context("cosmos")?;
            cfg.cosmos.capacity_bits() / 8
        }
    })
}

struct CometSetup {
    geometry: MemoryGeometry,
    levels: LevelTable,
    photonics: Photonics,
    lut: GainLut,
}

fn level_table(cfg: &RunConfig, bits: BitsPerCell) -> Result<LevelTable> {
    let overrides = match &cfg.cell.level_overrides {
        Some(p) => {
            let text = read_file(p, "level override file")?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let ov: LevelOverrides = serde_path_to_error::deserialize(de)
                .map_err(|e| anyhow::anyhow!("field `{}`: {}", e.path(), e.inner()))
                .with_context(|| format!("in {}", p.display()))?;
            Some(ov)
        }
        None => None,
    };
    let mut t = build_level_table(bits, cfg.cell.reset_mode, overrides.as_ref()).context("level table")?;
    if let Some(g) = cfg.cell.guard_band {
        t = t.with_guard_band(g).context("cell.guard_band")?;
    }
    Ok(t)
}

fn gain_lut(cfg: &RunConfig, g: &MemoryGeometry, photonics: &Photonics) -> Result<GainLut> {
    let interval = match cfg.lut.soa_interval_rows {
        Some(i) => i,
        None => photonics.soa_interval()?.unwrap_or(g.subarray_rows()),
    };
    let per_row = cfg.lut.per_row_loss_db.unwrap_or(cfg.loss.eo_mr_through_db);
    build_gain_lut(g.bits_per_cell(), g.subarray_rows(), interval, per_row).context("gain LUT")
}

fn comet_setup(cfg: &RunConfig, g: MemoryGeometry) -> Result<CometSetup> {
    let photonics = Photonics::with_params(&g, cfg.loss, cfg.power, cfg.die_length_cm).context("photonics")?;
    Ok(CometSetup {
        levels: level_table(cfg, g.bits_per_cell())?,
        lut: gain_lut(cfg, &g, &photonics)?,
        photonics,
        geometry: g,
    })
}

fn seeded(mut spec: TraceSpec, seed: Option<u64>) -> TraceSpec {
    if let (Pattern::Random { .. }, Some(s)) = (spec.pattern, seed) {
        spec.pattern = Pattern::Random { seed: s };
    }
    spec
}

fn read_trace(path: &Path) -> Result<Vec<TraceRequest>> {
    let text = read_file(path, "trace file")?;
    parse_trace_str(&text).with_context(|| format!("in trace file {}", path.display()))
}

fn load_trace(cfg: &RunConfig, flag: Option<&Path>, seed: Option<u64>, default: Option<TraceSpec>) -> Result<Vec<TraceRequest>> {
    if let Some(p) = flag {
        return read_trace(p);
    }
    match (&cfg.trace, default) {
        (Some(TraceSource::File(p)), _) => read_trace(p),
        (Some(TraceSource::Synthetic(spec)), _) => Ok(generate(&seeded(*spec, seed), capacity_bytes(cfg)?)?),
        (None, Some(spec)) => Ok(generate(&seeded(spec, seed), capacity_bytes(cfg)?)?),
        (None, None) => bail!("no trace given: pass --trace or set `trace` in the config"),
    }
}

fn stats_report(stats: &SimStats) -> Result<Report> {
    Report::new(stats, format!("{}\n{}\n", SimStats::csv_header(), stats.csv_row()))
}

fn simulate(cfg: &RunConfig, trace: Option<&Path>, seed: Option<u64>) -> Result<Report> {
    let trace = load_trace(cfg, trace, seed, None)?;
    let stats = match cfg.architecture {
        Architecture::Comet => {
            let s = comet_setup(cfg, geometry(cfg)?)?;
            simulate_comet(&trace, &s.geometry, &cfg.timing, &s.levels, &s.photonics, &s.lut, &cfg.options)?
        }
        Architecture::Cosmos => simulate_cosmos(&trace, &cfg.cosmos, &cfg.loss, &cfg.power, &cfg.options)?,
    };
    stats_report(&stats)
}

#[derive(Serialize)]
struct PowerDoc {
    architecture: &'static str,
    path_loss_db: f64,
    soa_interval_rows: Option<u32>,
    soa_count: Option<u64>,
    power: PowerStack,
}

fn power(cfg: &RunConfig) -> Result<Report> {
    let doc = match cfg.architecture {
        Architecture::Comet => {
            let s = comet_setup(cfg, geometry(cfg)?)?;
            let interval = s.photonics.soa_interval()?;
            let count = interval.map(|i| soa_count(&s.geometry, i)).transpose()?;
            PowerDoc {
                architecture: "comet",
                path_loss_db: loss_chain_db(&s.photonics.path, &cfg.loss),
                soa_interval_rows: interval,
                soa_count: count,
                power: power_stack(&s.geometry, &s.photonics.path, &cfg.loss, &cfg.power, cfg.cell.reset_mode)?,
            }
        }
        Architecture::Cosmos => PowerDoc {
            architecture: "cosmos",
            path_loss_db: loss_chain_db(&cosmos_path(&cfg.cosmos)?, &cfg.loss),
            soa_interval_rows: None,
            soa_count: None,
            power: cosmos_power_stack(&cfg.cosmos, &cfg.loss, &cfg.power)?,
        },
    };
    let mut csv = String::from("component,watts\n");
    for (name, w) in doc.power.components() {
        csv.push_str(&format!("{name},{w}\n"));
    }
    Report::new(&doc, csv)
}

#[derive(Serialize)]
struct SweepDoc<'a> {
    base_geometry: String,
    trace_requests: usize,
    rows: &'a [SweepRow],
}

fn default_sweep_trace(cfg: &RunConfig) -> Result<TraceSpec> {
    let cap = geometry(cfg)?.capacity_bytes();
    Ok(TraceSpec::stream(10_000, 1.0, cap.min(1 << 30)))
}

fn sweep(cfg: &RunConfig, trace: Option<&Path>, seed: Option<u64>) -> Result<Report> {
    if cfg.architecture != Architecture::Comet {
        bail!("sweep-b compares COMET bit densities; use --arch comet");
    }
    let base = geometry(cfg)?;
    let trace = load_trace(cfg, trace, seed, Some(default_sweep_trace(cfg)?))?;
    let inputs = SweepInputs {
        timing: cfg.timing,
        loss: cfg.loss,
        power: cfg.power,
        reset_mode: cfg.cell.reset_mode,
        die_length_cm: cfg.die_length_cm,
        options: cfg.options,
    };
    let rows = sweep_bit_density(&trace, base.spec(), &inputs)?;
    let mut csv = String::from(
        "bits_per_cell,geometry,subarray_cols,capacity_bits,row_bits,lut_entries,laser_w,soa_w,eo_tuning_w,total_w,\
         bandwidth_bytes_per_s,latency_avg_ns,epb_pj_per_bit\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.bits_per_cell,
            r.geometry,
            r.subarray_cols,
            r.capacity_bits,
            r.row_bits,
            r.lut_entries,
            r.power.laser_w,
            r.power.soa_w,
            r.power.eo_tuning_w,
            r.power.total_w,
            r.stats.bandwidth_bytes_per_s,
            r.stats.latency_avg_ns,
            r.stats.epb_pj_per_bit
        ));
    }
    let doc = SweepDoc {
        base_geometry: base.to_string(),
        trace_requests: trace.len(),
        rows: &rows,
    };
    let text = csv.clone();
    Ok(Report::new(&doc, csv)?.with_text(text))
}

#[derive(Serialize)]
struct MapDoc {
    physical: PhysicalAddress,
    subarray_id: u64,
    row: u32,
    col: u32,
    bank: u32,
    channel: u32,
}

fn map(cfg: &RunConfig, row: Option<u64>, col: Option<u64>, bank: u32, channel: u32, addr: Option<u64>) -> Result<Report> {
    let g = geometry(cfg)?;
    let physical = match (addr, row, col) {
        (Some(a), _, _) => decompose_flat_address(a, &g, line_bytes(cfg)?)?,
        (None, Some(row), Some(column)) => PhysicalAddress {
            channel,
            row,
            bank,
            column,
            offset: 0,
        },
        _ => bail!("map needs --row and --col, or --addr"),
    };
    let m = map_address(&physical, &g)?;
    let doc = MapDoc {
        physical,
        subarray_id: m.subarray,
        row: m.subarray_row,
        col: m.subarray_col,
        bank: m.bank,
        channel: m.channel,
    };
    let csv = format!(
        "channel,bank,row,column,subarray_id,subarray_row,subarray_col\n{},{},{},{},{},{},{}\n",
        physical.channel, physical.bank, physical.row, physical.column, m.subarray, m.subarray_row, m.subarray_col
    );
    let text = format!(
        "subarray_id={} row={} col={} bank={} channel={}\n",
        m.subarray, m.subarray_row, m.subarray_col, m.bank, m.channel
    );
    Ok(Report::new(&doc, csv)?.with_text(text))
}

fn lut(cfg: &RunConfig, bits: Option<u8>) -> Result<Report> {
    let mut spec = cfg.geometry;
    if let Some(b) = bits {
        spec = spec.at_bit_density(BitsPerCell::try_from(b)?)?;
    }
    let g = spec.validate().context("geometry")?;
    let photonics = Photonics::with_params(&g, cfg.loss, cfg.power, cfg.die_length_cm)?;
    let lut = gain_lut(cfg, &g, &photonics)?;
    let csv = lut.to_csv();
    Ok(Report::new(&lut, csv.clone())?.with_text(csv))
}

fn corrupt_demo(
    cfg: &RunConfig,
    image: Option<&Path>,
    as_published: bool,
    isolated: bool,
    steps: usize,
    dump: Option<&Path>,
    seed: Option<u64>,
) -> Result<Report> {
    let levels = if as_published {
        LevelSet::legacy_16()
    } else {
        cfg.cosmos.level_set().context("cosmos.levels")?
    };
    let model = if isolated { CellModel::Isolated } else { CellModel::Crossbar };
    let img = match image {
        Some(p) => {
            let bytes = match fs::read(p) {
                Err(e) if e.kind() == io::ErrorKind::NotFound => bail!("image file not found: {}", p.display()),
                r => r.with_context(|| format!("reading image {}", p.display()))?,
            };
            GrayImage::parse(&bytes).with_context(|| format!("in image {}", p.display()))?
        }
        None => {
            let symbols_per_pixel = match levels.len() {
                16 => 2,
                4 => 4,
                2 => 8,
                _ => 1,
            };
            GrayImage::synthetic(32 / symbols_per_pixel, 32, seed.unwrap_or(0))
        }
    };
    let (report, readback) = demo::run(&img, &levels, model, &cfg.cosmos, steps)?;
    if let Some(p) = dump {
        write_file(p, &readback.to_bytes())?;
    }
    let csv = report.csv();
    Report::new(&report, csv)
}

#[allow(clippy::too_many_arguments)]
fn trace_spec(
    cfg: &RunConfig,
    pattern: Option<PatternArg>,
    requests: Option<u64>,
    read_fraction: Option<f64>,
    inter_arrival_ns: Option<f64>,
    footprint_bytes: Option<u64>,
    stride_lines: Option<u64>,
    seed: Option<u64>,
) -> Result<TraceSpec> {
    let mut spec = match &cfg.trace {
        Some(TraceSource::Synthetic(s)) => *s,
        _ => TraceSpec::stream(1000, 1.0, capacity_bytes(cfg)?),
    };
    spec.line_bytes = match cfg.architecture {
        Architecture::Comet => line_bytes(cfg)?,
        Architecture::Cosmos => cfg.cosmos.line()?,
    }
    .bytes();
    if let Some(p) = pattern {
        spec.pattern = match p {
            PatternArg::Stream => Pattern::Stream,
            PatternArg::Stride => Pattern::Stride {
                lines: stride_lines.context("--pattern stride needs --stride-lines")?,
            },
            PatternArg::Random => Pattern::Random { seed: seed.unwrap_or(0) },
        };
    } else if let (Pattern::Stride { .. }, Some(k)) = (spec.pattern, stride_lines) {
        spec.pattern = Pattern::Stride { lines: k };
    }
    spec.requests = requests.unwrap_or(spec.requests);
    spec.read_fraction = read_fraction.unwrap_or(spec.read_fraction);
    spec.inter_arrival_ns = inter_arrival_ns.unwrap_or(spec.inter_arrival_ns);
    spec.footprint_bytes = footprint_bytes.unwrap_or(spec.footprint_bytes);
    Ok(seeded(spec, seed))
}
