//! Synthetic C corpus generator. Emits files in the supported subset built
//! from crypto-rooted call chains (decode -> derive -> sign/encrypt into an
//! OpenSSL-style sink) and benign chains (formatting, parsing, logging),
//! with optional tainted globals. Ground truth comes from running `label`
//! on the generated file, so generator and oracle agree by construction.

use super::{label, CryptoProfile, LabelSet};
use crate::cpg::build_cpg;
use crate::frontend::{parse, tokenize};
use crate::par;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("invalid synth config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub programs: usize,
    pub functions_min: usize,
    pub functions_max: usize,
    pub chain_depth_min: usize,
    pub chain_depth_max: usize,
    /// Probability that a call chain is crypto-rooted.
    pub crypto_fraction: f64,
    /// Probability that a program injects a security-carrying global.
    pub global_prob: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            programs: 200,
            functions_min: 3,
            functions_max: 4,
            chain_depth_min: 2,
            chain_depth_max: 3,
            crypto_fraction: 0.4,
            global_prob: 0.3,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.programs == 0 {
            return Err(ConfigError::Invalid("programs must be positive".into()));
        }
        if self.functions_min < 2 || self.functions_min > self.functions_max {
            return Err(ConfigError::Invalid("functions range must be nonempty, min >= 2".into()));
        }
        if self.chain_depth_min < 1 || self.chain_depth_min > self.chain_depth_max {
            return Err(ConfigError::Invalid("chain depth range must be nonempty".into()));
        }
        if !(0.0..=1.0).contains(&self.crypto_fraction) || !(0.0..=1.0).contains(&self.global_prob)
        {
            return Err(ConfigError::Invalid("fractions must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

const CRYPTO_NAMES: &[&str] = &[
    "decode_key", "derive_secret", "sign_payload", "encrypt_block", "load_wallet", "hash_input",
    "seal_data", "unwrap_token",
];
const BENIGN_NAMES: &[&str] = &[
    "format_output", "parse_args", "log_event", "render_line", "count_items", "trim_field",
    "scan_header", "pack_record",
];
const CRYPTO_SINKS: &[&str] = &[
    "EVP_EncryptInit", "EVP_DigestUpdate", "SHA256", "SHA1_Update", "AES_encrypt", "RSA_sign",
    "HMAC", "EC_KEY_new", "secp256k1_sign", "bitcoin_sign", "MD5_Update", "DES_encrypt",
    "RAND_bytes",
];
const BENIGN_SINKS: &[&str] =
    &["printf", "puts", "strlen", "atoi", "memcpy", "snprintf", "fflush"];

/// Generate `programs` labeled source files. Deterministic per seed; files
/// are generated on per-file RNG streams so the corpus parallelizes without
/// changing bytes.
pub fn synth_corpus(config: &SynthConfig) -> Result<Vec<(String, LabelSet)>, ConfigError> {
    config.validate()?;
    let profile = CryptoProfile::openssl_default();
    let indices: Vec<usize> = (0..config.programs).collect();
    let out = par::map_ordered(indices, |i| {
        let source = generate_program(config, i);
        let ast = parse(tokenize(&source).expect("generated source lexes"))
            .expect("generated source parses");
        let cpg = build_cpg(&ast, &format!("synth_{i:04}.c"));
        let labels = label(&cpg, &profile);
        (source, labels)
    });
    Ok(out)
}

struct Chain {
    crypto: bool,
    names: Vec<String>,
}

fn generate_program(config: &SynthConfig, index: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(crate::features::mix_seed(config.seed, index as u64));
    let n_funcs = rng.gen_range(config.functions_min..=config.functions_max);

    // carve functions into chains; force at least one of each class
    let mut chains: Vec<Chain> = Vec::new();
    let mut used = 0usize;
    let mut fn_counter = 0usize;
    while used < n_funcs {
        // keep at least two chains so one class can never swallow a program
        let cap = if chains.is_empty() { n_funcs.saturating_sub(1).max(1) } else { n_funcs - used };
        let depth = rng
            .gen_range(config.chain_depth_min..=config.chain_depth_max)
            .min(cap)
            .max(1);
        let crypto = rng.gen_bool(config.crypto_fraction);
        let pool = if crypto { CRYPTO_NAMES } else { BENIGN_NAMES };
        let names = (0..depth)
            .map(|_| {
                let base = pool[rng.gen_range(0..pool.len())];
                fn_counter += 1;
                format!("{base}_{fn_counter}")
            })
            .collect();
        chains.push(Chain { crypto, names });
        used += depth;
    }
    if !chains.iter().any(|c| c.crypto) {
        // convert the shortest chain so the sensitive share stays low
        let shortest = (0..chains.len())
            .min_by_key(|&i| chains[i].names.len())
            .unwrap();
        chains[shortest].crypto = true;
        rename_chain(&mut chains[shortest], CRYPTO_NAMES, &mut rng);
    }
    // a standalone benign utility guarantees the benign side of the mix
    fn_counter += 1;
    chains.push(Chain {
        crypto: false,
        names: vec![format!(
            "{}_{fn_counter}",
            BENIGN_NAMES[rng.gen_range(0..BENIGN_NAMES.len())]
        )],
    });

    let inject_global = rng.gen_bool(config.global_prob);
    let global_name = format!("g_secret_{index}");

    let mut src = String::new();
    if inject_global {
        src.push_str(&format!("int {global_name} = 0;\n\n"));
    }

    // deepest functions first so every call points backward
    for (ci, chain) in chains.iter().enumerate() {
        for pos in (0..chain.names.len()).rev() {
            let name = &chain.names[pos];
            let callee = chain.names.get(pos + 1).map(String::as_str);
            let write_global = inject_global && chain.crypto && pos == 0;
            src.push_str(&function_body(
                name,
                callee,
                chain.crypto,
                write_global.then_some(global_name.as_str()),
                &mut rng,
            ));
            src.push('\n');
            let _ = ci;
        }
    }

    if inject_global {
        src.push_str(&format!(
            "int use_secret_{index}(int m) {{\n  int v = {global_name} + m;\n  return v;\n}}\n\n"
        ));
    }

    // main wires the chain entries. It usually feeds live data into the
    // crypto chains (making main itself sensitive); sometimes it passes only
    // literals and stays benign, which spreads the per-graph label ratio.
    let main_feeds_data = rng.gen_bool(0.55);
    src.push_str("int main() {\n");
    src.push_str(&format!("  int key = {};\n", rng.gen_range(3..60)));
    src.push_str(&format!("  int salt = {};\n", rng.gen_range(3..60)));
    src.push_str("  int acc = 0;\n");
    for chain in &chains {
        let entry = &chain.names[0];
        if chain.crypto && main_feeds_data {
            src.push_str(&format!("  acc = acc + {entry}(key, salt);\n"));
        } else {
            src.push_str(&format!(
                "  acc = acc + {entry}({}, {});\n",
                rng.gen_range(2..40),
                rng.gen_range(2..40)
            ));
        }
    }
    src.push_str("  return acc;\n}\n");
    src
}

fn rename_chain(chain: &mut Chain, pool: &[&str], rng: &mut ChaCha8Rng) {
    for name in chain.names.iter_mut() {
        // the numbering suffix starts at the last underscore
        let suffix = name[name.rfind('_').unwrap()..].to_string();
        let mut fresh = pool[rng.gen_range(0..pool.len())].to_string();
        fresh.push_str(&suffix);
        *name = fresh;
    }
}

fn function_body(
    name: &str,
    callee: Option<&str>,
    crypto: bool,
    write_global: Option<&str>,
    rng: &mut ChaCha8Rng,
) -> String {
    let (a, b) = if crypto { ("key", "salt") } else { ("width", "count") };
    let mut body = format!("int {name}(int {a}, int {b}) {{\n");
    let local = if crypto { "mixed" } else { "pad" };
    let k = rng.gen_range(2..9);
    body.push_str(&format!("  int {local} = {a} {} {k};\n", ["+", "*", "-"][rng.gen_range(0..3)]));
    // roughly half the functions carry a control structure
    match rng.gen_range(0..6) {
        0 => body.push_str(&format!(
            "  if ({local} > {b}) {{\n    {local} = {local} - {b};\n  }}\n"
        )),
        1 => body.push_str(&format!(
            "  while ({local} > {t}) {{\n    {local} = {local} - {d};\n  }}\n",
            t = rng.gen_range(8..20),
            d = rng.gen_range(1..4)
        )),
        2 => body.push_str(&format!(
            "  for (int i = 0; i < {b}; i++) {{\n    {local} = {local} + i;\n  }}\n"
        )),
        _ => {}
    }
    if let Some(g) = write_global {
        body.push_str(&format!("  {g} = {local};\n"));
    }
    match callee {
        Some(next) => {
            body.push_str(&format!("  return {next}({local}, {b});\n"));
        }
        None => {
            let sinks = if crypto { CRYPTO_SINKS } else { BENIGN_SINKS };
            let sink = sinks[rng.gen_range(0..sinks.len())];
            body.push_str(&format!("  int out = {sink}({local}, {b});\n"));
            if crypto && rng.gen_bool(0.3) {
                body.push_str("  ERR_clear_error();\n");
            }
            body.push_str("  return out;\n");
        }
    }
    body.push_str("}\n");
    body
}
