//! Acceptance suite: one line per criterion, nonzero exit if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use comet_core::baseline::{
    corruption_sequence, cosmos_power_stack, crosstalk_energy_pj, flips_after, simulate_cosmos, subtractive_read,
    CellModel, CrossbarArray, CrossbarConfig, LevelSet,
};
use comet_core::engine::{simulate_comet, Op, Photonics, SimOptions, SimStats, TimingParams, TraceRequest};
use comet_core::geometry::{map_address, PhysicalAddress};
use comet_core::integrity::{
    build_gain_lut, loss_tolerance_db, quantize_gain_db, restore_transmission, rows_without_amp, soa_row_interval,
    GainRounding, GAIN_STEP_DB,
};
use comet_core::pcm_cell::{build_level_table, decode_transmission, effective_permittivity, encode_symbol, ComplexIndex, ResetMode};
use comet_core::photonics::power_stack;
use comet_core::trace_synth::{generate, TraceSpec};
use comet_core::{BitsPerCell, GeometrySpec, LossParams, PowerParams};
use num_complex::Complex;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let t = start.elapsed();
    if t > limit {
        Err(format!("took {t:?}, limit {limit:?}"))
    } else {
        Ok(t)
    }
}

fn c1_address_mapping() -> Outcome {
    let start = Instant::now();
    let g = GeometrySpec::new(2, 4, 4, 4, 4).validate().map_err(|e| e.to_string())?;
    let mut seen = HashSet::new();
    for bank in 0..g.banks() {
        for row in 0..g.total_rows() {
            for column in 0..g.total_cols() {
                let a = PhysicalAddress { channel: 0, row, bank, column, offset: 0 };
                let m = map_address(&a, &g).map_err(|e| e.to_string())?;
                check!(m.subarray < 4 && m.subarray_row < 4 && m.subarray_col < 4, "{m:?} out of range");
                check!(seen.insert(m), "{a:?} collides");
            }
        }
    }
    let cells = 2 * 16 * 4;
    check!(seen.len() == cells, "{} images for {cells} addresses", seen.len());

    let g4 = GeometrySpec::comet_4b().validate().map_err(|e| e.to_string())?;
    let a = PhysicalAddress { channel: 0, row: 1000, bank: 0, column: 100, offset: 0 };
    let m = map_address(&a, &g4).map_err(|e| e.to_string())?;
    check!(
        (m.subarray, m.subarray_row, m.subarray_col) == (1, 488, 100),
        "row 1000/col 100 -> {m:?}"
    );
    let t = within(start, Duration::from_secs(1))?;
    Ok(format!("{cells} addresses bijective; row 1000/col 100 -> subarray 1, row 488, col 100 ({t:.1?})"))
}

fn c2_loss_tolerances() -> Outcome {
    let t1: f64 = loss_tolerance_db(BitsPerCell::One, None).map_err(|e| e.to_string())?;
    let t2: f64 = loss_tolerance_db(BitsPerCell::Two, None).map_err(|e| e.to_string())?;
    let t4: f64 = loss_tolerance_db(BitsPerCell::Four, None).map_err(|e| e.to_string())?;
    check!((t1 - 3.01).abs() < 0.005, "b=1: {t1}");
    check!((t2 - 1.2).abs() <= 0.05, "b=2: {t2}");
    check!((t4 - 0.26).abs() <= 0.01, "b=4: {t4}");
    Ok(format!("{t1:.4} / {t2:.4} / {t4:.4} dB"))
}

fn c3_soa_planning() -> Outcome {
    let interval = soa_row_interval(15.2, 0.33).map_err(|e| e.to_string())?;
    let passable = rows_without_amp(3.01, 0.33).map_err(|e| e.to_string())?;
    check!(interval == 46, "interval {interval}");
    check!(passable == 9, "rows without amp {passable}");
    Ok(format!("interval {interval}, rows without amp {passable}"))
}

fn c4_lut_sizing() -> Outcome {
    let mut counts = vec![];
    for (bits, want) in [(BitsPerCell::One, 5), (BitsPerCell::Two, 12), (BitsPerCell::Four, 46)] {
        let lut = build_gain_lut::<f64>(bits, 512, 46, 0.33).map_err(|e| e.to_string())?;
        check!(lut.entry_count() == want, "b={bits}: {} entries, expected {want}", lut.entry_count());
        if bits == BitsPerCell::One {
            check!(lut.raw_entry_count() == 52, "b=1 raw count {}", lut.raw_entry_count());
        }
        counts.push(lut.entry_count());
    }
    Ok(format!("b=1 52 raw / {} distinct, b=2 {}, b=4 {}", counts[0], counts[1], counts[2]))
}

fn c5_capacity() -> Outcome {
    for b in BitsPerCell::ALL {
        let g = GeometrySpec::comet_family(b).validate().map_err(|e| e.to_string())?;
        check!(g.capacity_bits() == 1 << 33, "b={b}: {} bits", g.capacity_bits());
    }
    Ok("2^33 bits for b = 1, 2, 4".into())
}

fn c6_level_ladder() -> Outcome {
    let table = build_level_table::<f64>(BitsPerCell::Four, ResetMode::Crystalline, None).map_err(|e| e.to_string())?;
    let t: Vec<f64> = table.rows().iter().map(|r| r.transmission).collect();
    check!(t.len() == 16, "{} levels", t.len());
    check!(t[0] == 0.95, "T_0 = {}", t[0]);
    let worst = t.windows(2).map(|w| ((w[0] - w[1]) - 0.06).abs()).fold(0.0, f64::max);
    check!(worst < 1e-12, "spacing deviates by {worst:e}");

    let drops = [0.0, 0.005, 0.01, 0.015, 0.02, 0.025, 0.029];
    for v in 0..16 {
        let sent = encode_symbol(v, &table).map_err(|e| e.to_string())?.transmission;
        for d in drops {
            let measured = sent * (1.0 - d);
            let loss_db = -10.0 * (1.0 - d).log10();
            let gain = quantize_gain_db(loss_db, GAIN_STEP_DB, GainRounding::Nearest);
            let restored = restore_transmission(measured, gain);
            let got = decode_transmission(restored, &table).map_err(|e| format!("symbol {v}, drop {d}: {e}"))?;
            check!(got == v, "symbol {v}, drop {d}: decoded {got}");
        }
    }
    Ok(format!("16 levels, spacing error {worst:.1e}; {} round trips", 16 * drops.len()))
}

fn c7_crosstalk() -> Outcome {
    let e = crosstalk_energy_pj(750.0, -18.0);
    check!((11.0..=13.0).contains(&e), "{e} pJ");
    Ok(format!("{e:.2} pJ"))
}

fn c8_corruption_contrast() -> Outcome {
    let cfg = CrossbarConfig::default();
    let set6 = LevelSet::legacy_16();
    let symbols: Vec<u32> = (0..32 * 32u32).map(|i| (i * 7 + i / 32) % 16).collect();
    let run = |model| -> Result<usize, String> {
        let mut arr = CrossbarArray::from_symbols(32, 32, &symbols, &set6, model).map_err(|e| e.to_string())?;
        let steps = corruption_sequence(&mut arr, &set6, &cfg, 4).map_err(|e| e.to_string())?;
        Ok(steps.last().map_or(0, |s| s.corrupted_symbols))
    };
    let crossbar = run(CellModel::Crossbar)?;
    let isolated = run(CellModel::Isolated)?;
    check!(crossbar > 0, "crossbar kept every symbol");
    check!(isolated == 0, "isolated cells corrupted {isolated} symbols");

    let set9 = LevelSet::cosmos();
    let one = flips_after(&set9, 1, &cfg);
    let two = flips_after(&set9, 2, &cfg);
    check!(one == 0, "{one} symbols flip after one disturbance");
    check!(two > 0, "nothing flips after two disturbances");
    Ok(format!(
        "6 % set: {crossbar} corrupted vs {isolated} isolated; 9 % set flips {one} after 1, {two} after 2"
    ))
}

fn c9_subtractive_read() -> Outcome {
    let start = Instant::now();
    let set = LevelSet::cosmos();
    let background: Vec<u32> = (0..16).map(|i| (i * 3 + 1) % 4).collect();
    let mut checked = 0;
    for target in 0..4 {
        for code in 0..256u32 {
            let row: Vec<u32> = (0..4).map(|k| (code >> (2 * k)) & 3).collect();
            let mut symbols = background.clone();
            symbols[target * 4..target * 4 + 4].copy_from_slice(&row);
            let mut arr = CrossbarArray::from_symbols(4, 4, &symbols, &set, CellModel::Crossbar).map_err(|e| e.to_string())?;
            let direct = arr.direct_read(target, &set).map_err(|e| e.to_string())?;
            let sub = subtractive_read(&mut arr, target, &set).map_err(|e| e.to_string())?;
            check!(sub.values == direct, "row {target} code {code}: {:?} vs {direct:?}", sub.values);
            check!(direct == row, "row {target} code {code}: direct read {direct:?}");
            checked += 1;
        }
    }
    let t = within(start, Duration::from_secs(1))?;
    Ok(format!("{checked} row contents match ({t:.1?})"))
}

struct Comet {
    g: comet_core::MemoryGeometry,
    timing: TimingParams,
    levels: comet_core::LevelTable,
    photonics: Photonics,
    lut: comet_core::GainLut,
}

fn comet_defaults() -> Result<Comet, String> {
    let g = GeometrySpec::comet_4b().validate().map_err(|e| e.to_string())?;
    Ok(Comet {
        timing: TimingParams::default(),
        levels: build_level_table(BitsPerCell::Four, ResetMode::Crystalline, None).map_err(|e| e.to_string())?,
        photonics: Photonics::comet_default(&g, 2.0).map_err(|e| e.to_string())?,
        lut: build_gain_lut(BitsPerCell::Four, 512, 46, 0.33).map_err(|e| e.to_string())?,
        g,
    })
}

fn run_comet(c: &Comet, trace: &[TraceRequest]) -> Result<SimStats, String> {
    simulate_comet(trace, &c.g, &c.timing, &c.levels, &c.photonics, &c.lut, &SimOptions::default()).map_err(|e| e.to_string())
}

fn c10_timing() -> Outcome {
    let c = comet_defaults()?;
    let cold = run_comet(&c, &[TraceRequest::new(0.0, Op::Read, 0)])?.latency_max_ns;
    let pair = run_comet(&c, &[TraceRequest::new(0.0, Op::Read, 0), TraceRequest::new(1000.0, Op::Read, 0)])?;
    let warm = 2.0 * pair.latency_avg_ns - cold;
    let write = run_comet(&c, &[TraceRequest::new(0.0, Op::Write, 0)])?.latency_max_ns;
    check!(cold == 221.0, "cold READ {cold} ns");
    check!(warm == 119.0, "warm READ {warm} ns");
    check!(write == 587.0, "cold WRITE {write} ns");
    Ok(format!("READ cold {cold} ns, warm {warm} ns; WRITE {write} ns"))
}

fn c11_ordering() -> Outcome {
    let start = Instant::now();
    let c = comet_defaults()?;
    let trace = generate(&TraceSpec::stream(100_000, 1.0, 1 << 30), c.g.capacity_bytes()).map_err(|e| e.to_string())?;
    let comet = run_comet(&c, &trace)?;
    let cosmos = simulate_cosmos(
        &trace,
        &CrossbarConfig::default(),
        &LossParams::default(),
        &PowerParams::default(),
        &SimOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let bw = comet.bandwidth_bytes_per_s / cosmos.bandwidth_bytes_per_s;
    let lat = cosmos.latency_avg_ns / comet.latency_avg_ns;
    let epb = cosmos.epb_pj_per_bit / comet.epb_pj_per_bit;
    check!((3.0..=10.0).contains(&bw), "bandwidth ratio {bw}");
    check!((1.5..=6.0).contains(&lat), "latency ratio {lat}");
    check!(epb > 5.0, "EPB ratio {epb}");
    let t = within(start, Duration::from_secs(60))?;
    Ok(format!("bandwidth x{bw:.2}, latency x{lat:.2}, EPB x{epb:.1} ({t:.1?})"))
}

fn c12_power() -> Outcome {
    let c = comet_defaults()?;
    let p = &c.photonics;
    let comet = power_stack(&c.g, &p.path, &p.loss, &p.power, ResetMode::Crystalline).map_err(|e| e.to_string())?;
    let cosmos =
        cosmos_power_stack(&CrossbarConfig::default(), &LossParams::default(), &PowerParams::default()).map_err(|e| e.to_string())?;
    check!(comet.total_w < 0.5 * cosmos.total_w, "{} W vs {} W", comet.total_w, cosmos.total_w);
    Ok(format!(
        "{:.2} W vs {:.1} W ({:.1} %)",
        comet.total_w,
        cosmos.total_w,
        100.0 * comet.total_w / cosmos.total_w
    ))
}

/// Lorentz-Lorenz mixing solved for the real permittivity by bisection.
fn bisect_permittivity(f: f64, ea: f64, ec: f64) -> f64 {
    let cm = |e: f64| (e - 1.0) / (e + 2.0);
    let target = f * cm(ec) + (1.0 - f) * cm(ea);
    let (mut lo, mut hi) = (ea.min(ec), ea.max(ec));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cm(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn c13_effective_medium() -> Outcome {
    let ea = Complex::new(4.0, 0.0);
    let ec = Complex::new(9.0, 0.0);
    let at = |f: f64| effective_permittivity(f, ea, ec).map_err(|e| e.to_string());
    check!(at(0.0)? == ea, "f=0 gives {}", at(0.0)?);
    check!(at(1.0)? == ec, "f=1 gives {}", at(1.0)?);
    let mut prev = f64::NEG_INFINITY;
    for i in 0..1000 {
        let n = ComplexIndex::from_permittivity(at(i as f64 / 999.0)?).n;
        check!(n > prev, "Re(n_eff) not increasing at point {i}");
        prev = n;
    }
    let mid = at(0.5)?;
    let oracle = bisect_permittivity(0.5, 4.0, 9.0);
    check!((mid.re - oracle).abs() < 1e-9 && mid.im.abs() < 1e-12, "midpoint {mid} vs {oracle}");
    Ok(format!("endpoints exact, 1000-point monotone, midpoint {:.9} = oracle", mid.re))
}

fn c14_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("run.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1,
            "trace": {"synthetic": {"pattern": {"kind": "random", "seed": 1}, "requests": 5000,
                      "read_fraction": 0.75, "inter_arrival_ns": 3.5, "footprint_bytes": 67108864}},
            "options": {"timeline_bin_ns": 10000}}"#,
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = vec![];
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_comet"))
            .args(["--config", cfg.to_str().unwrap(), "--seed", "42", "simulate", "--out", out.to_str().unwrap()])
            .status()
            .map_err(|e| e.to_string())?;
        check!(status.success(), "simulate exited with {status}");
        let json = std::fs::read(&out).map_err(|e| e.to_string())?;
        let csv = std::fs::read(out.with_extension("csv")).map_err(|e| e.to_string())?;
        outputs.push((json, csv));
    }
    check!(outputs[0].0 == outputs[1].0, "JSON reports differ");
    check!(outputs[0].1 == outputs[1].1, "CSV reports differ");
    Ok(format!("{} JSON bytes and {} CSV bytes identical", outputs[0].0.len(), outputs[0].1.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 14] = [
        ("address mapping", c1_address_mapping),
        ("loss tolerances", c2_loss_tolerances),
        ("SOA planning", c3_soa_planning),
        ("LUT sizing", c4_lut_sizing),
        ("capacity equality", c5_capacity),
        ("level ladder", c6_level_ladder),
        ("crosstalk energy", c7_crosstalk),
        ("corruption contrast", c8_corruption_contrast),
        ("subtractive read", c9_subtractive_read),
        ("timing", c10_timing),
        ("comparative ordering", c11_ordering),
        ("power ordering", c12_power),
        ("effective-medium limits", c13_effective_medium),
        ("determinism", c14_determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("[PASS] {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("[FAIL] {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
