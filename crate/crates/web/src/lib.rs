//! Browser bindings: filter-function view of one sequence, bandwidth report
//! of a set, and the PSD reconstruction beyond `pi / tau`. Every export
//! returns a JSON string.

use std::f64::consts::PI;

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use noisespec::bandwidth::{degeneracy_check, set_bandwidth};
use noisespec::comb_inversion::UnknownKind;
use noisespec::experiments::{fig1_psd, fig1_reconstruct, fig1_search, worst_above, DataMode, FIG1_TAU};
use noisespec::sequences::{FilterEval, PulseSequence, SequenceDescription, SequenceSet};
use noisespec::spectrum::Psd;

fn parse_set(lines: &str, delta: f64, tau: f64, repetitions: u32) -> Result<SequenceSet, String> {
    let seqs = lines
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            SequenceDescription::parse(l)
                .and_then(|d| d.build(delta, tau))
                .map_err(|e| format!("`{l}`: {e}"))
        })
        .collect::<Result<Vec<PulseSequence>, String>>()?;
    SequenceSet::new(seqs, repetitions).map_err(|e| e.to_string())
}

/// Switching function over one cycle and `|F(w)|^2` up to `4 pi / tau`,
/// with the cycle harmonics marked.
pub fn filter_view(line: &str, delta_us: f64, tau_us: f64, points: usize) -> Result<Value, String> {
    let (delta, tau) = (delta_us * 1e-6, tau_us * 1e-6);
    let seq = SequenceDescription::parse(line)
        .and_then(|d| d.build(delta, tau))
        .map_err(|e| e.to_string())?;
    let filter = FilterEval::new(&seq);
    let top = 4.0 * PI / tau;
    let points = points.clamp(16, 20_000);
    let omega: Vec<f64> = (0..points).map(|i| top * i as f64 / (points - 1) as f64).collect();
    let power: Vec<f64> = omega.iter().map(|&w| filter.power(w)).collect();
    let h = 2.0 * PI / seq.cycle();
    let harmonics: Vec<Value> = (0..)
        .map(|k| k as f64 * h)
        .take_while(|&w| w <= top)
        .map(|w| json!([w, filter.power(w)]))
        .collect();
    let mut t = vec![0.0];
    let mut y = vec![1.0];
    let mut sign = 1.0;
    for p in seq.pulse_times() {
        t.extend([p, p]);
        y.extend([sign, -sign]);
        sign = -sign;
    }
    t.push(seq.cycle());
    y.push(sign);
    Ok(json!({
        "label": seq.label(),
        "cycle": seq.cycle(),
        "pulses": seq.num_pulses(),
        "omega": omega,
        "power": power,
        "harmonics": harmonics,
        "switching": { "t": t, "y": y },
        "pi_over_tau": PI / tau,
    }))
}

/// Set-level switching period, frequency limits and flagged harmonics.
pub fn bandwidth_view(lines: &str, delta_us: f64, tau_us: f64, radius: u64) -> Result<Value, String> {
    let tau = tau_us * 1e-6;
    let set = parse_set(lines, delta_us * 1e-6, tau, 50)?;
    let r = set_bandwidth(&set);
    let d = degeneracy_check(&set, radius);
    Ok(json!({
        "sequences": set.len(),
        "cycle": r.cycle(),
        "delta_t": r.delta_t,
        "delta_t_over_tau": r.delta_t / tau,
        "q_set": r.q_set,
        "omega_max": r.omega_max,
        "omega_max_pi_over_tau": r.omega_max * tau / PI,
        "saturated": r.saturated,
        "practical_harmonic": r.practical_harmonic,
        "practical_pi_over_tau": r.practical_omega * tau / PI,
        "rank": d.rank,
        "columns": d.columns.len(),
        "flagged": d.flagged,
        "pairs": d.pairs,
    }))
}

/// Searches a 25-sequence set (T = 16 tau) and reconstructs the Lorentzian
/// pair with its offset peak at `offset` (units of `pi / tau`).
pub fn psd_view(offset: f64, iterations: usize, seed: u64) -> Result<Value, String> {
    if !(0.0..=3.0).contains(&offset) {
        return Err("offset must lie in [0, 3] pi/tau".into());
    }
    let set = fig1_search(50, iterations.clamp(1, 50_000), seed)
        .map_err(|e| e.to_string())?
        .set;
    let (recon, cmp) = fig1_reconstruct(&set, offset, DataMode::Differential).map_err(|e| e.to_string())?;
    let psd = fig1_psd(offset * PI / FIG1_TAU);
    let top = 3.2 * PI / FIG1_TAU;
    let curve: Vec<Value> = (0..=400)
        .map(|i| {
            let w = top * i as f64 / 400.0;
            json!([w, psd.psd(w)])
        })
        .collect();
    let (worst, n) = worst_above(&cmp, 0.05);
    Ok(json!({
        "harmonics": cmp.iter().map(|c| json!([c.omega[0], c.estimate, c.truth])).collect::<Vec<_>>(),
        "model": curve,
        "condition": recon.condition,
        "unknowns": recon.samples(UnknownKind::Polyspectrum(1)).len(),
        "worst_relative_error": worst,
        "compared": n,
        "pi_over_tau": PI / FIG1_TAU,
        "sequences": set.sequences().iter().filter_map(|s| s.description().map(|d| d.to_string())).collect::<Vec<_>>(),
    }))
}

fn export(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = filterView)]
pub fn filter_view_js(line: &str, delta_us: f64, tau_us: f64, points: usize) -> Result<String, JsError> {
    export(filter_view(line, delta_us, tau_us, points))
}

#[wasm_bindgen(js_name = bandwidthView)]
pub fn bandwidth_view_js(lines: &str, delta_us: f64, tau_us: f64, radius: u32) -> Result<String, JsError> {
    export(bandwidth_view(lines, delta_us, tau_us, radius as u64))
}

#[wasm_bindgen(js_name = psdView)]
pub fn psd_view_js(offset: f64, iterations: u32, seed: u32) -> Result<String, JsError> {
    export(psd_view(offset, iterations as usize, seed as u64))
}
