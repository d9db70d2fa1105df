//! Seeded synthetic genotypes and phenotypes with known genetic signal.
//!
//! Each SNP gets a reference allele from {A, T} (code 0), an alternative
//! allele from {G, C} (code 2) and an alternative-allele frequency drawn
//! uniformly from [0.05, 0.95]. A variety carries two allele copies, so a
//! heterozygous call is written with its IUPAC ambiguity code (code 1).
//!
//! The genetic value is `g = X_causal . beta + sum_pairs gamma * x_i * x_j`
//! on encoded values. Noise is drawn, centred, made orthogonal to `g` and
//! rescaled, so the sample ratio `var(g) / var(y)` equals `h2` exactly.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geno_io::{
    build_dataset, encode_base, Delimiter, GenotypeDataset, PhenotypeTable, RawGenotypeTable,
    TraitColumn,
};
use crate::seeds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub causal: usize,
    pub effect_scale: f64,
    pub epistatic_pairs: usize,
    pub h2: f64,
    pub missing_rate: f64,
    pub seed: u64,
    pub trait_name: String,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n: 200,
            d: 400,
            causal: 20,
            effect_scale: 1.0,
            epistatic_pairs: 0,
            h2: 0.8,
            missing_rate: 0.0,
            seed: 0,
            trait_name: "PH".into(),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.n < 2 {
            return bad(format!("need at least 2 varieties, got {}", self.n));
        }
        if self.d == 0 {
            return bad("need at least one SNP".into());
        }
        if self.causal > self.d {
            return bad(format!("{} causal SNPs exceed d = {}", self.causal, self.d));
        }
        if self.epistatic_pairs > 0 && self.d < 2 {
            return bad("epistatic pairs need at least two SNPs".into());
        }
        if !(0.0..=1.0).contains(&self.h2) {
            return bad(format!("h2 must lie in [0, 1], got {}", self.h2));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad(format!(
                "missing rate must lie in [0, 1), got {}",
                self.missing_rate
            ));
        }
        if !self.effect_scale.is_finite() {
            return bad("effect scale must be finite".into());
        }
        if self.trait_name.is_empty() || self.trait_name == "variety" {
            return bad(format!("invalid trait name {:?}", self.trait_name));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpistaticPair {
    pub a: usize,
    pub b: usize,
    pub effect: f64,
}

/// Everything an oracle needs to know about how the phenotype was made.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub spec: SynthSpec,
    pub allele_freqs: Vec<f64>,
    pub causal_snps: Vec<usize>,
    pub additive_effects: Vec<f64>,
    pub epistatic: Vec<EpistaticPair>,
    pub genetic_values: Vec<f64>,
    pub noise_variance: f64,
    pub realized_h2: f64,
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub genotypes: RawGenotypeTable,
    pub phenotypes: PhenotypeTable,
    pub dataset: GenotypeDataset,
    pub truth: SynthTruth,
}

fn het_code(reference: u8, alt: u8) -> u8 {
    match (reference, alt) {
        (b'A', b'G') => b'R',
        (b'A', b'C') => b'M',
        (b'T', b'G') => b'K',
        (b'T', b'C') => b'Y',
        _ => unreachable!("reference allele is A/T and alternative is G/C"),
    }
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}

fn centred(x: &[f64]) -> Vec<f64> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| v - m).collect()
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let (n, d) = (spec.n, spec.d);
    let mut rng = seeds::rng(spec.seed);

    let mut alleles = Vec::with_capacity(d);
    let mut allele_freqs = Vec::with_capacity(d);
    for _ in 0..d {
        let reference = if rng.random_bool(0.5) { b'A' } else { b'T' };
        let alt = if rng.random_bool(0.5) { b'G' } else { b'C' };
        alleles.push((reference, alt, het_code(reference, alt)));
        allele_freqs.push(rng.random_range(0.05..0.95));
    }

    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<u8> = alleles
            .iter()
            .zip(&allele_freqs)
            .map(|(&(reference, alt, het), &p)| {
                let copies = u8::from(rng.random_bool(p)) + u8::from(rng.random_bool(p));
                let missing = spec.missing_rate > 0.0 && rng.random_bool(spec.missing_rate);
                match (missing, copies) {
                    (true, _) => b'N',
                    (false, 0) => reference,
                    (false, 1) => het,
                    _ => alt,
                }
            })
            .collect();
        rows.push(row);
    }
    let codes: Vec<f64> = rows
        .iter()
        .flatten()
        .map(|&b| f64::from(encode_base(b as char).expect("generated alphabet")))
        .collect();

    let mut causal_snps = index::sample(&mut rng, d, spec.causal).into_vec();
    causal_snps.sort_unstable();
    let additive_effects: Vec<f64> = causal_snps
        .iter()
        .map(|_| spec.effect_scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let epistatic: Vec<EpistaticPair> = (0..spec.epistatic_pairs)
        .map(|_| {
            let pair = index::sample(&mut rng, d, 2).into_vec();
            let (a, b) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            EpistaticPair {
                a,
                b,
                effect: spec.effect_scale * rng.sample::<f64, _>(StandardNormal),
            }
        })
        .collect();

    let genetic_values: Vec<f64> = (0..n)
        .map(|i| {
            let x = &codes[i * d..(i + 1) * d];
            let add: f64 = causal_snps
                .iter()
                .zip(&additive_effects)
                .map(|(&j, b)| b * x[j])
                .sum();
            let epi: f64 = epistatic.iter().map(|p| p.effect * x[p.a] * x[p.b]).sum();
            add + epi
        })
        .collect();

    let var_g = variance(&genetic_values);
    if spec.h2 > 0.0 && var_g <= 1e-12 {
        return Err(Error::Synth(format!(
            "h2 = {} but the genetic values have no variance",
            spec.h2
        )));
    }
    let raw_noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut noise = centred(&raw_noise);
    if var_g > 1e-12 {
        let gc = centred(&genetic_values);
        let proj = noise.iter().zip(&gc).map(|(e, g)| e * g).sum::<f64>()
            / gc.iter().map(|g| g * g).sum::<f64>();
        noise.iter_mut().zip(&gc).for_each(|(e, g)| *e -= proj * g);
    }
    let target_noise_var = if spec.h2 == 0.0 {
        1.0
    } else {
        var_g * (1.0 - spec.h2) / spec.h2
    };
    let var_e = variance(&noise);
    if target_noise_var > 0.0 && var_e <= 1e-300 {
        return Err(Error::Synth(
            "noise has no variance left after orthogonalisation; increase n".into(),
        ));
    }
    let scale = if target_noise_var > 0.0 {
        (target_noise_var / var_e).sqrt()
    } else {
        0.0
    };
    noise.iter_mut().for_each(|e| *e *= scale);
    let y: Vec<f64> = if spec.h2 == 0.0 {
        noise.clone()
    } else {
        genetic_values
            .iter()
            .zip(&noise)
            .map(|(g, e)| g + e)
            .collect()
    };
    let realized_h2 = if spec.h2 == 0.0 {
        0.0
    } else {
        var_g / variance(&y)
    };

    let variety_ids: Vec<String> = (1..=n).map(|i| format!("V{i}")).collect();
    let snp_ids: Vec<String> = (1..=d).map(|j| format!("M{j}")).collect();
    let genotypes = RawGenotypeTable::new(variety_ids.clone(), snp_ids, rows)?;
    let phenotypes = PhenotypeTable {
        variety_ids,
        traits: vec![TraitColumn {
            name: spec.trait_name.clone(),
            values: y.into_iter().map(Some).collect(),
        }],
    };
    let dataset = build_dataset(&genotypes, &phenotypes)?;
    let truth = SynthTruth {
        spec: spec.clone(),
        allele_freqs,
        causal_snps,
        additive_effects,
        epistatic,
        genetic_values,
        noise_variance: variance(&noise),
        realized_h2,
    };
    Ok(SynthOutput {
        genotypes,
        phenotypes,
        dataset,
        truth,
    })
}

/// Paths written by [`SynthOutput::write`].
#[derive(Clone, Debug)]
pub struct SynthFiles {
    pub genotypes: PathBuf,
    pub phenotypes: PathBuf,
    pub truth: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            genotypes: dir.join("genotypes.csv"),
            phenotypes: dir.join("phenotypes.csv"),
            truth: dir.join("truth.json"),
        }
    }
}

impl SynthOutput {
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        fs::create_dir_all(dir)?;
        let files = SynthFiles::in_dir(dir);
        self.genotypes.write(&files.genotypes, Delimiter::COMMA)?;
        self.phenotypes.write(&files.phenotypes, Delimiter::COMMA)?;
        let mut json = serde_json::to_string_pretty(&self.truth)?;
        json.push('\n');
        fs::write(&files.truth, json)?;
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geno_io::ALPHABET;
    use crate::stats::pcc;

    fn spec(h2: f64, n: usize, seed: u64) -> SynthSpec {
        SynthSpec {
            n,
            d: 50,
            causal: 10,
            h2,
            seed,
            ..SynthSpec::default()
        }
    }

    fn targets(out: &SynthOutput) -> Vec<f64> {
        out.dataset.trait_view("PH").unwrap().targets
    }

    #[test]
    fn full_heritability_means_no_noise() {
        let out = generate(&spec(1.0, 100, 3)).unwrap();
        assert!((pcc(&out.truth.genetic_values, &targets(&out)).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_heritability_is_uncorrelated() {
        for seed in 0..20 {
            let out = generate(&spec(0.0, 200, seed)).unwrap();
            assert!(
                pcc(&out.truth.genetic_values, &targets(&out))
                    .unwrap()
                    .abs()
                    <= 0.2
            );
        }
    }

    #[test]
    fn realized_heritability_matches_spec() {
        for &h2 in &[0.2, 0.5, 0.8] {
            let out = generate(&spec(h2, 500, 9)).unwrap();
            let y = targets(&out);
            let ratio = variance(&out.truth.genetic_values) / variance(&y);
            assert!((ratio - h2).abs() <= 0.05, "h2 {h2}: {ratio}");
        }
    }

    #[test]
    fn calls_stay_in_alphabet() {
        let out = generate(&SynthSpec {
            missing_rate: 0.1,
            epistatic_pairs: 5,
            ..spec(0.5, 30, 1)
        })
        .unwrap();
        for i in 0..out.genotypes.n() {
            assert!(out.genotypes.row(i).iter().all(|b| ALPHABET.contains(b)));
        }
        assert!(out.genotypes.row(0).contains(&b'N') || out.genotypes.row(1).contains(&b'N'));
    }

    #[test]
    fn same_seed_same_files() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let s = spec(0.8, 40, 5);
        let fa = generate(&s).unwrap().write(a.path()).unwrap();
        let fb = generate(&s).unwrap().write(b.path()).unwrap();
        for (x, y) in [
            (fa.genotypes, fb.genotypes),
            (fa.phenotypes, fb.phenotypes),
            (fa.truth, fb.truth),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        assert!(generate(&SynthSpec {
            causal: 0,
            ..spec(1.0, 20, 0)
        })
        .is_err());
        assert!(generate(&SynthSpec {
            h2: 1.5,
            ..spec(1.0, 20, 0)
        })
        .is_err());
        assert!(generate(&SynthSpec {
            causal: 60,
            ..spec(1.0, 20, 0)
        })
        .is_err());
    }
}
