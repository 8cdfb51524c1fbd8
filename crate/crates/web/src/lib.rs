//! Browser bindings for the demo page in `www/`.
//!
//! Each export is a thin wrapper over a plain Rust function so the numerics
//! can be tested natively.

use esvi::expfam::{restricted_elbo, update_z_subset, RestrictedProblem};
use esvi::harness::synth::PlantedTopics;
use esvi::lda::{LdaHyper, LdaState, PhiMode, Scratch, WordSweep};
use wasm_bindgen::prelude::*;

const ALPHA: f64 = 0.1;
const ETA: f64 = 0.01;

/// Closed-form restricted update for scores `u` and mass `mass`, followed
/// by the objective value at the optimum.
pub fn restricted_update(u: &[f64], mass: f64) -> Result<Vec<f64>, String> {
    let problem = RestrictedProblem::new((0..u.len()).collect(), mass, u.to_vec()).map_err(|e| e.to_string())?;
    let mut z = update_z_subset(&problem).map_err(|e| e.to_string())?;
    let value = restricted_elbo(&problem, &z).map_err(|e| e.to_string())?;
    z.push(value);
    Ok(z)
}

fn planted(docs: usize, topics: usize, seed: u64) -> Result<(esvi::harness::corpus::Corpus, LdaHyper), String> {
    if docs == 0 || topics == 0 {
        return Err("need at least one document and one topic".into());
    }
    let params = PlantedTopics { docs, ..PlantedTopics::default() };
    let corpus = params.generate(seed).corpus;
    let hyper = LdaHyper { topics, vocab: params.vocab, alpha: ALPHA, eta: ETA };
    Ok((corpus, hyper))
}

fn esvi_epoch(state: &mut LdaState, sweep: &mut WordSweep) -> Result<(), String> {
    let mut scratch = Scratch::default();
    for _ in 0..state.hyper().vocab {
        sweep.step(state, &mut scratch).map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// ELBO after each epoch of batch VI and of serial ESVI from the same
/// initialization, as `[updates, vi, esvi]` triples (epoch 0 included).
pub fn elbo_curves(docs: usize, topics: usize, epochs: usize, seed: u64) -> Result<Vec<f64>, String> {
    let (corpus, hyper) = planted(docs, topics, seed)?;
    let err = |e: esvi::Error| e.to_string();
    let mut vi = LdaState::new(&corpus, hyper, PhiMode::Dense, seed).map_err(err)?;
    let mut es = vi.clone();
    let mut sweep = WordSweep::new(hyper.vocab, seed);
    let mut out = Vec::with_capacity(3 * (epochs + 1));
    for epoch in 0..=epochs {
        if epoch > 0 {
            vi.vi_epoch(1).map_err(err)?;
            esvi_epoch(&mut es, &mut sweep)?;
        }
        out.extend([vi.coordinate_updates() as f64, vi.elbo().map_err(err)?, es.elbo().map_err(err)?]);
    }
    Ok(out)
}

/// Final ESVI ELBO after `epochs` word sweeps for every top-k cutoff in
/// `cutoffs`; a cutoff of `topics` or more runs dense.
pub fn topk_sweep(docs: usize, topics: usize, cutoffs: &[u32], epochs: usize, seed: u64) -> Result<Vec<f64>, String> {
    let (corpus, hyper) = planted(docs, topics, seed)?;
    cutoffs
        .iter()
        .map(|&c| {
            let c = c as usize;
            if c == 0 {
                return Err("cutoff must be at least 1".to_string());
            }
            let mode = if c >= topics { PhiMode::Dense } else { PhiMode::TopK { cutoff: c, refresh: 4 } };
            let mut state = LdaState::new(&corpus, hyper, mode, seed).map_err(|e| e.to_string())?;
            let mut sweep = WordSweep::new(hyper.vocab, seed);
            for _ in 0..epochs {
                esvi_epoch(&mut state, &mut sweep)?;
            }
            state.elbo().map_err(|e| e.to_string())
        })
        .collect()
}

#[wasm_bindgen(js_name = restrictedUpdate)]
pub fn js_restricted_update(u: &[f64], mass: f64) -> Result<Vec<f64>, JsError> {
    restricted_update(u, mass).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = elboCurves)]
pub fn js_elbo_curves(docs: usize, topics: usize, epochs: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    elbo_curves(docs, topics, epochs, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = topkSweep)]
pub fn js_topk_sweep(docs: usize, topics: usize, cutoffs: &[u32], epochs: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    topk_sweep(docs, topics, cutoffs, epochs, seed as u64).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn restricted_update_is_a_scaled_softmax() {
        let out = restricted_update(&[0.0, 2f64.ln()], 0.9).unwrap();
        assert!((out[0] - 0.3).abs() < 1e-15 && (out[1] - 0.6).abs() < 1e-15);
        assert!(out[2].is_finite());
        assert!(restricted_update(&[1.0], 1.0).is_err());
        assert!(restricted_update(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn curves_have_one_triple_per_epoch() {
        let out = elbo_curves(10, 4, 3, 1).unwrap();
        assert_eq!(out.len(), 12);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], out[2]);
        assert!(out.chunks(3).all(|t| t.iter().all(|x| x.is_finite())));
        let vi: Vec<f64> = out.chunks(3).map(|t| t[1]).collect();
        assert!(vi.windows(2).all(|w| w[1] >= w[0] - 1e-9 * w[0].abs()));
        assert!(elbo_curves(0, 4, 1, 1).is_err());
    }

    #[test]
    fn full_cutoff_matches_dense() {
        let out = topk_sweep(10, 4, &[1, 4, 8], 2, 3).unwrap();
        assert_eq!(out[1], out[2]);
        assert!(out[0].is_finite());
        assert!(topk_sweep(10, 4, &[0], 1, 3).is_err());
    }
}
