//! Test fixtures: a synthetic table with the heart CSV's columns.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEADER: &str = "age,sex,chest pain type,resting bp s,cholesterol,fasting blood sugar,resting ecg,max heart rate,exercise angina,oldpeak,ST slope,target";

/// `unique` distinct rows followed by `duplicates` copies of earlier rows.
/// Labels follow a noisy logistic rule, so the task is learnable but not
/// separable.
pub fn heart_like_csv(unique: usize, duplicates: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<String> = Vec::with_capacity(unique + duplicates);
    while rows.len() < unique {
        let age = rng.gen_range(29..78);
        let sex = rng.gen_range(0..2);
        let cp = rng.gen_range(1..5);
        let bp = if rng.gen_bool(0.02) { 0 } else { rng.gen_range(94..200) };
        let chol = if rng.gen_bool(0.15) { 0 } else { rng.gen_range(126..565) };
        let fbs = rng.gen_bool(0.2) as u8;
        let ecg = rng.gen_range(0..3);
        let mhr = rng.gen_range(71..203);
        let angina = rng.gen_range(0..2);
        let oldpeak = rng.gen_range(0..50) as f64 / 10.0;
        let slope = rng.gen_range(1..4);
        let z = 0.04 * (age as f64 - 54.0) + 0.8 * sex as f64 + 0.7 * (cp as f64 - 2.5) - 0.025 * (mhr as f64 - 137.0)
            + 1.0 * angina as f64
            + 0.6 * oldpeak
            + 0.9 * (slope as f64 - 1.5)
            - 1.2;
        let p = 1.0 / (1.0 + (-z).exp());
        let target = rng.gen_bool(p) as u8;
        let row = format!("{age},{sex},{cp},{bp},{chol},{fbs},{ecg},{mhr},{angina},{oldpeak},{slope},{target}");
        if !rows.contains(&row) {
            rows.push(row);
        }
    }
    for _ in 0..duplicates {
        let i = rng.gen_range(0..unique);
        let at = rng.gen_range(0..=rows.len());
        let copy = rows[i].clone();
        rows.insert(at, copy);
    }
    let mut out = String::from(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

pub fn write_csv(dir: &Path, unique: usize, duplicates: usize, seed: u64) -> PathBuf {
    let path = dir.join("heart.csv");
    std::fs::write(&path, heart_like_csv(unique, duplicates, seed)).unwrap();
    path
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_optbench")
}

pub fn repo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config/benchmark.conf")
}
