//! The subcommands behind the `stip` binary, as library functions.

use std::path::Path;

use serde_json::json;
use stip_core::numerics::apply_col_perm;
use stip_core::numerics::rng::{derive_seed, gaussian_matrix, seeded};
use stip_core::security::{
    bfa_exhaustive, keyspace_log_size, kpa_column_match, kpa_parameter_resistance_demo,
    unauthorized_use_demo, KpaResult, BFA_DEFAULT_CAP,
};
use stip_core::transform::{para_trans, verify_deployment};
use stip_core::{ModelParams, PermutationSet, PermutationVec};

use crate::bench::{time_permutation, time_transform, traffic};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::format::{decode_model, decode_transformed, encode_model, encode_transformed, model_to_json, KeyFile};
use crate::protocol::{simulate, SimConfig, SimOutcome};
use crate::report::ReportBundle;

/// Exit code for a failed verification.
pub const EXIT_VERIFY_FAILED: i32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    Kpa,
    Bfa,
    Unauthorized,
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            AttackKind::Kpa => "kpa",
            AttackKind::Bfa => "bfa",
            AttackKind::Unauthorized => "unauthorized",
        }
    }
}

pub fn read_model(path: &Path) -> Result<(ModelParams, u64)> {
    decode_model(&std::fs::read(path)?)
}

pub fn read_keys(path: &Path) -> Result<KeyFile> {
    KeyFile::decode(&std::fs::read(path)?)
}

/// Deterministic prompts of `cfg.prompt_len` tokens.
pub fn prompts(cfg: &RunConfig) -> Vec<Vec<usize>> {
    (0..cfg.prompts as u64)
        .map(|p| {
            (0..cfg.prompt_len as u64)
                .map(|i| (derive_seed(derive_seed(cfg.seed, 0x70 + p), i) % cfg.vocab_size as u64) as usize)
                .collect()
        })
        .collect()
}

pub fn cmd_genmodel(cfg: &RunConfig, out: &Path, json: Option<&Path>) -> Result<ReportBundle> {
    let mc = cfg.model_config()?;
    let params = ModelParams::random(&mc, cfg.seed)?;
    let bytes = encode_model(&params, 0)?;
    std::fs::write(out, &bytes)?;
    if let Some(j) = json {
        std::fs::write(j, model_to_json(&params, 0)?)?;
    }
    let mut r = ReportBundle::new("genmodel", cfg);
    r.push("file_bytes", bytes.len() as f64, &[mc.n_layers, mc.d_model, mc.d_ff, mc.vocab_size], &[cfg.seed], 1);
    Ok(r)
}

pub fn cmd_transform(
    cfg: &RunConfig,
    model: &Path,
    out_model: &Path,
    out_keys: &Path,
    identity: bool,
) -> Result<ReportBundle> {
    let (params, _) = read_model(model)?;
    let set = if identity {
        PermutationSet::identity(&params.config)
    } else {
        PermutationSet::generate(&params.config, cfg.key_seed)?
    }
    .with_epoch(1);
    let t = para_trans(&params, &set)?;
    std::fs::write(out_model, encode_transformed(&t)?)?;
    let keys = KeyFile::from_set(&set)?;
    std::fs::write(out_keys, keys.encode()?)?;
    let mut r = ReportBundle::new("transform", cfg);
    r.push("permutations", keys.entries.len() as f64, &[], &[cfg.key_seed], 1);
    r.details = json!({ "identity": identity, "epoch": set.epoch });
    Ok(r)
}

/// Returns the report and whether the transformed model reproduces the
/// original within `cfg.tol` with every argmax matching.
pub fn cmd_verify(cfg: &RunConfig, model: &Path, transformed: &Path, keys: &Path) -> Result<(ReportBundle, bool)> {
    if cfg.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let (original, _) = read_model(model)?;
    let t = decode_transformed(&std::fs::read(transformed)?)?;
    let shared = read_keys(keys)?.shared()?;
    let rep = verify_deployment(&original, &t.params, &shared, cfg.trials, cfg.seq_len, cfg.seed)?;
    let ok = rep.passes(cfg.tol) && shared.epoch == t.epoch;
    let mut r = ReportBundle::new("verify", cfg);
    let seeds: Vec<u64> = (0..cfg.trials as u64).map(|t| derive_seed(cfg.seed, t)).collect();
    let dims = [cfg.seq_len, original.config.vocab_size];
    r.push("max_abs_diff", rep.max_abs_diff as f64, &dims, &seeds, rep.trials);
    r.push("argmax_match_rate", rep.argmax_match_rate, &dims, &seeds, rep.rows_compared);
    r.details = json!({ "passed": ok, "tol": cfg.tol, "key_epoch": shared.epoch, "model_epoch": t.epoch });
    Ok((r, ok))
}

fn load_or_generate(cfg: &RunConfig, model: Option<&Path>) -> Result<ModelParams> {
    match model {
        Some(p) => Ok(read_model(p)?.0),
        None => Ok(ModelParams::random(&cfg.model_config()?, cfg.seed)?),
    }
}

pub fn sim_config(cfg: &RunConfig) -> SimConfig {
    SimConfig {
        transport: cfg.transport.clone(),
        latency: cfg.latency(),
        prompts: prompts(cfg),
        max_tokens: cfg.max_tokens,
        key_seed: cfg.key_seed,
    }
}

fn push_timings(r: &mut ReportBundle, o: &SimOutcome) {
    let n = o.tokens().max(1) as f64;
    let ms = |d: std::time::Duration| d.as_secs_f64() * 1e3;
    r.push("tokens_per_s", o.tokens() as f64 / o.total.as_secs_f64().max(1e-12), &[], &[], o.tokens());
    r.push("per_token_ms", ms(o.total) / n, &[], &[], o.tokens());
    r.push("device_ms_per_token", ms(o.device) / n, &[], &[], o.tokens());
    r.push("communication_ms_per_token", ms(o.communication()) / n, &[], &[], o.tokens());
    r.push("cloud_ms_per_token", ms(o.cloud) / n, &[], &[], o.tokens());
}

pub fn cmd_simulate(cfg: &RunConfig, model: Option<&Path>) -> Result<(ReportBundle, SimOutcome)> {
    let params = load_or_generate(cfg, model)?;
    let o = simulate(&params, &sim_config(cfg))?;
    let mut r = ReportBundle::new("simulate", cfg);
    r.push("matches_local", f64::from(u8::from(o.matches_local())), &[], &[cfg.seed, cfg.key_seed], o.streams.len());
    r.push("inference_messages", o.inference_messages() as f64, &[], &[], o.tokens());
    r.push("transcript_lines", o.transcript.entries().len() as f64, &[], &[], o.tokens());
    push_timings(&mut r, &o);
    r.details = json!({
        "transport": cfg.transport.name(),
        "latency_ms": cfg.latency_ms,
        "epoch": o.epoch,
        "streams": o.streams,
        "local": o.local,
        "round_ms": o.rounds.iter().map(|d| d.as_secs_f64() * 1e3).collect::<Vec<_>>(),
    });
    Ok((r, o))
}

pub fn cmd_attack(cfg: &RunConfig, kind: AttackKind) -> Result<ReportBundle> {
    let mc = cfg.model_config()?;
    let d = mc.d_model;
    let mut r = ReportBundle::new(&format!("attack-{}", kind.name()), cfg);
    let mut rng = seeded(cfg.seed);
    match kind {
        AttackKind::Kpa => {
            let x = gaussian_matrix(cfg.seq_len, d, 1.0, &mut rng);
            let pi = PermutationVec::random(d, cfg.key_seed)?;
            let outcome = kpa_column_match(&x, &apply_col_perm(&x, &pi)?, 0.0)?;
            let recovered = outcome.recovered() == Some(&pi);
            r.push("kpa_recovered", f64::from(u8::from(recovered)), &[cfg.seq_len, d], &[cfg.seed, cfg.key_seed], 1);
            let params = ModelParams::random(&mc, cfg.seed)?;
            let set = PermutationSet::generate(&mc, cfg.key_seed)?;
            let demo = kpa_parameter_resistance_demo(&params, &set, &set.pi)?;
            for w in &demo.weights {
                r.push(&format!("{}.max_abs_diff", w.name), w.max_abs_diff as f64, &[], &[cfg.key_seed], 1);
                r.push(&format!("{}.dcorr", w.name), w.dcorr, &[], &[cfg.key_seed], 1);
            }
            r.details = json!({
                "outcome": match outcome {
                    KpaResult::Recovered(_) => "recovered",
                    KpaResult::Ambiguous(_) => "ambiguous",
                    KpaResult::Failed => "failed",
                },
                "recovered_weights": demo.recovered_names(),
            });
        }
        AttackKind::Bfa => {
            let ks = keyspace_log_size(&mc);
            r.push("ln_keyspace_data", ks.data_log, &[d], &[], 1);
            r.push("ln_keyspace_params", ks.params_log, &[mc.n_layers, d], &[], 1);
            r.push("ln_keyspace_classifier", ks.classifier_log, &[mc.vocab_size], &[], 1);
            let x = gaussian_matrix(cfg.seq_len, d, 1.0, &mut rng);
            let pi = PermutationVec::random(d, cfg.key_seed)?;
            match bfa_exhaustive(&x, &apply_col_perm(&x, &pi)?, BFA_DEFAULT_CAP) {
                Ok(outcome) => {
                    r.push("bfa_refused", 0.0, &[d], &[cfg.key_seed], 1);
                    r.push("bfa_recovered", f64::from(u8::from(outcome.recovered() == Some(&pi))), &[d], &[cfg.key_seed], 1);
                    r.details = json!({ "refused": false });
                }
                Err(e @ stip_core::Error::KeyspaceTooLarge { .. }) => {
                    r.push("bfa_refused", 1.0, &[d], &[cfg.key_seed], 1);
                    r.details = json!({ "refused": true, "reason": e.to_string() });
                }
                Err(e) => return Err(e.into()),
            }
        }
        AttackKind::Unauthorized => {
            let params = ModelParams::random(&mc, cfg.seed)?;
            let set = PermutationSet::generate(&mc, cfg.key_seed)?;
            let t = para_trans(&params, &set)?;
            let prompt = prompts(cfg).into_iter().next().unwrap_or_else(|| vec![0]);
            let rep = unauthorized_use_demo(&t, &set.shared_part(), &prompt, &params.embedding, cfg.max_tokens)?;
            r.push("argmax_mismatch_rate", rep.argmax_mismatch_rate, &[cfg.max_tokens], &[cfg.seed, cfg.key_seed], cfg.max_tokens);
            r.details = json!({
                "prompt": prompt,
                "legit_tokens": rep.legit_tokens,
                "unauthorized_tokens": rep.unauthorized_tokens,
            });
        }
    }
    Ok(r)
}

pub fn cmd_bench(cfg: &RunConfig) -> Result<ReportBundle> {
    let mc = cfg.model_config()?;
    let mut r = ReportBundle::new("bench", cfg);
    let pt = time_permutation(cfg.bench_dim, cfg.bench_reps, cfg.seed)?;
    let dims = [cfg.bench_dim, cfg.bench_dim];
    r.push("perm_index_median_us", pt.index_median().as_secs_f64() * 1e6, &dims, &[cfg.seed], cfg.bench_reps);
    r.push("perm_matmul_median_us", pt.matmul_median().as_secs_f64() * 1e6, &dims, &[cfg.seed], cfg.bench_reps);
    r.push("perm_speedup", pt.speedup(), &dims, &[cfg.seed], cfg.bench_reps);

    let params = ModelParams::random(&mc, cfg.seed)?;
    let set = PermutationSet::generate(&mc, cfg.key_seed)?;
    r.push("transform_ms", time_transform(&params, &set)?.as_secs_f64() * 1e3, &[mc.n_layers, mc.d_model, mc.d_ff], &[cfg.key_seed], 1);

    let tr = traffic(cfg.seq_len, mc.d_model, mc.vocab_size);
    r.push("request_bytes", tr.request_bytes as f64, &[cfg.seq_len, mc.d_model], &[], 1);
    r.push("response_bytes", tr.response_bytes as f64, &[cfg.seq_len, mc.vocab_size], &[], 1);

    let o = simulate(&params, &sim_config(cfg))?;
    push_timings(&mut r, &o);
    r.details = json!({ "transport": cfg.transport.name(), "latency_ms": cfg.latency_ms, "matches_local": o.matches_local() });
    Ok(r)
}
