//! Synthetic metagenomes with known read origins.
//!
//! Species genomes descend from a shared random ancestor by independent
//! per-base substitution, so the mutation rate controls pairwise identity:
//! two species with rate `m` agree at a base with probability
//! `(1-m)^2 + m^2/3`. The host genome is generated independently. Optional
//! clades give groups of species their own ancestor.

use std::io::BufWriter;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Normal};
use serde::{Deserialize, Serialize};

use super::{write_fasta, write_fastq, write_labels, ReadRecord};
use crate::error::{Error, Result};

const BASES: [u8; 4] = *b"ACGT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub host_name: String,
    /// Species names; generated as `sp1..spN` when empty.
    pub species_names: Vec<String>,
    pub num_species: usize,
    /// Substitution rate of each species relative to its clade ancestor.
    pub mutation_rates: Vec<f64>,
    /// Clade index per species. Empty means every species shares one ancestor.
    pub clades: Vec<usize>,
    pub ancestor_length: usize,
    pub host_length: usize,
    /// Read-origin probabilities: host first, then species in order.
    pub abundance: Vec<f64>,
    pub num_reads: usize,
    pub read_length_mean: f64,
    pub read_length_stddev: f64,
    pub min_read_length: usize,
    pub read_error_rate: f64,
    /// Dirichlet concentration for the Markov base composition of generated
    /// genomes. Zero gives i.i.d. uniform bases.
    pub composition_concentration: f64,
    pub markov_order: usize,
    /// Drop species reads whose source window is identical in another species
    /// of the same clade.
    pub unique_reads_only: bool,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            host_name: "host".into(),
            species_names: Vec::new(),
            num_species: 2,
            mutation_rates: vec![0.05, 0.05],
            clades: Vec::new(),
            ancestor_length: 20_000,
            host_length: 50_000,
            abundance: vec![0.8, 0.1, 0.1],
            num_reads: 2_000,
            read_length_mean: 150.0,
            read_length_stddev: 30.0,
            min_read_length: 32,
            read_error_rate: 0.01,
            composition_concentration: 0.0,
            markov_order: 3,
            unique_reads_only: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Class names in abundance order (host first).
    pub fn class_names(&self) -> Vec<String> {
        let mut names = vec![self.host_name.clone()];
        if self.species_names.is_empty() {
            names.extend((1..=self.num_species).map(|i| format!("sp{i}")));
        } else {
            names.extend(self.species_names.iter().cloned());
        }
        names
    }

    fn clade_of(&self, species: usize) -> usize {
        self.clades.get(species).copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_species == 0 {
            return bad("simulate: num_species must be at least 1".into());
        }
        if self.mutation_rates.len() != self.num_species {
            return bad(format!(
                "simulate: {} mutation_rates for {} species",
                self.mutation_rates.len(),
                self.num_species
            ));
        }
        if !self.species_names.is_empty() && self.species_names.len() != self.num_species {
            return bad("simulate: species_names length must equal num_species".into());
        }
        if !self.clades.is_empty() && self.clades.len() != self.num_species {
            return bad("simulate: clades length must equal num_species".into());
        }
        if self.abundance.len() != self.num_species + 1 {
            return bad(format!(
                "simulate: abundance needs {} entries (host + species), got {}",
                self.num_species + 1,
                self.abundance.len()
            ));
        }
        let total: f64 = self.abundance.iter().sum();
        if (total - 1.0).abs() > 1e-9 || self.abundance.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
            return bad(format!("simulate: abundance must be a probability vector (sums to {total})"));
        }
        let rates = self.mutation_rates.iter().chain([&self.read_error_rate]);
        if rates.into_iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("simulate: rates must lie in [0, 1]".into());
        }
        if self.read_length_mean < 1.0 || self.read_length_stddev < 0.0 || self.min_read_length == 0 {
            return bad("simulate: read length parameters must be positive".into());
        }
        let shortest = self.ancestor_length.min(self.host_length);
        if self.read_length_mean > shortest as f64 || self.min_read_length > shortest {
            return bad(format!(
                "simulate: read length {} exceeds genome length {shortest}",
                self.read_length_mean
            ));
        }
        if self.composition_concentration < 0.0 {
            return bad("simulate: composition_concentration must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedMetagenome {
    pub reads: Vec<ReadRecord>,
    /// `(name, genome)` for the host and then each species.
    pub references: Vec<(String, Vec<u8>)>,
    pub dropped_non_unique: usize,
}

impl SimulatedMetagenome {
    /// Write `reads.fastq`, `labels.tsv` and `refs.fasta` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let create = |name: &str| {
            let path = dir.join(name);
            std::fs::File::create(&path)
                .map(BufWriter::new)
                .map_err(|e| Error::io(path, e))
        };
        write_fastq(create("reads.fastq")?, &self.reads, 30)
            .map_err(|e| Error::io(dir.join("reads.fastq"), e))?;
        write_labels(create("labels.tsv")?, &self.reads)
            .map_err(|e| Error::io(dir.join("labels.tsv"), e))?;
        let refs: Vec<ReadRecord> = self
            .references
            .iter()
            .map(|(name, g)| ReadRecord {
                id: name.clone(),
                sequence: g.clone(),
                qualities: None,
                label: None,
            })
            .collect();
        write_fasta(create("refs.fasta")?, &refs).map_err(|e| Error::io(dir.join("refs.fasta"), e))
    }
}

fn random_genome(len: usize, concentration: f64, order: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u8>> {
    let mut genome = Vec::with_capacity(len);
    if concentration <= 0.0 {
        genome.extend((0..len).map(|_| BASES[rng.random_range(0..4)]));
        return Ok(genome);
    }
    let contexts = 1usize << (2 * order);
    let dirichlet = Dirichlet::new([concentration; 4])
        .map_err(|e| Error::Config(format!("simulate: bad composition_concentration: {e}")))?;
    let tables: Vec<WeightedIndex<f64>> = (0..contexts)
        .map(|_| WeightedIndex::new(dirichlet.sample(rng)).expect("dirichlet sample is a distribution"))
        .collect();
    let mask = contexts - 1;
    let mut ctx = 0usize;
    for i in 0..len {
        let b = if i < order {
            rng.random_range(0..4)
        } else {
            tables[ctx].sample(rng)
        };
        ctx = ((ctx << 2) | b) & mask;
        genome.push(BASES[b]);
    }
    Ok(genome)
}

/// Substitute each base with probability `rate`, choosing uniformly among the
/// three alternatives.
fn substitute(seq: &mut [u8], rate: f64, rng: &mut ChaCha8Rng) {
    if rate <= 0.0 {
        return;
    }
    for b in seq.iter_mut() {
        if rng.random_bool(rate) {
            let idx = BASES.iter().position(|x| x == b).unwrap_or(0);
            let shift = rng.random_range(1..4);
            *b = BASES[(idx + shift) % 4];
        }
    }
}

fn phred_for_error_rate(rate: f64) -> u8 {
    let q = -10.0 * rate.max(1e-4).log10();
    q.round().clamp(0.0, 40.0) as u8
}

pub fn simulate_metagenome(spec: &SyntheticSpec) -> Result<SimulatedMetagenome> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let names = spec.class_names();

    let host = random_genome(spec.host_length, spec.composition_concentration, spec.markov_order, &mut rng)?;
    let n_clades = (0..spec.num_species).map(|s| spec.clade_of(s)).max().unwrap_or(0) + 1;
    let ancestors = (0..n_clades)
        .map(|_| random_genome(spec.ancestor_length, spec.composition_concentration, spec.markov_order, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut genomes = vec![host];
    for (s, &rate) in spec.mutation_rates.iter().enumerate() {
        let mut g = ancestors[spec.clade_of(s)].clone();
        substitute(&mut g, rate, &mut rng);
        genomes.push(g);
    }

    let source = WeightedIndex::new(&spec.abundance)
        .map_err(|e| Error::Config(format!("simulate: abundance: {e}")))?;
    let length = Normal::new(spec.read_length_mean, spec.read_length_stddev.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::Config(format!("simulate: read length: {e}")))?;
    let q = phred_for_error_rate(spec.read_error_rate);

    let mut reads = Vec::with_capacity(spec.num_reads);
    let mut dropped = 0;
    for _ in 0..spec.num_reads {
        let class = source.sample(&mut rng);
        let genome = &genomes[class];
        let max_len = genome.len();
        // truncated normal by rejection, clamped after a bounded number of tries
        let mut len = None;
        for _ in 0..64 {
            let l = length.sample(&mut rng).round();
            if l >= spec.min_read_length as f64 && l <= max_len as f64 {
                len = Some(l as usize);
                break;
            }
        }
        let len = len.unwrap_or_else(|| (spec.read_length_mean.round() as usize).clamp(spec.min_read_length, max_len));
        let start = rng.random_range(0..=max_len - len);
        let mut seq = genome[start..start + len].to_vec();
        substitute(&mut seq, spec.read_error_rate, &mut rng);

        if spec.unique_reads_only && class > 0 {
            let clade = spec.clade_of(class - 1);
            let window = &genome[start..start + len];
            let shared = (0..spec.num_species).any(|other| {
                other != class - 1
                    && spec.clade_of(other) == clade
                    && &genomes[other + 1][start..start + len] == window
            });
            if shared {
                dropped += 1;
                continue;
            }
        }

        reads.push(ReadRecord {
            id: format!("read{}", reads.len()),
            qualities: Some(vec![q; seq.len()]),
            sequence: seq,
            label: Some(names[class].clone()),
        });
    }

    Ok(SimulatedMetagenome {
        reads,
        references: names.into_iter().zip(genomes).collect(),
        dropped_non_unique: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            num_species: 1,
            mutation_rates: vec![0.1],
            abundance: vec![0.9, 0.1],
            ancestor_length: 5_000,
            host_length: 5_000,
            num_reads: 1000,
            seed: 11,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn label_counts_follow_abundance() {
        let sim = simulate_metagenome(&small()).unwrap();
        let sp1 = sim.reads.iter().filter(|r| r.label.as_deref() == Some("sp1")).count() as f64;
        let (n, p) = (1000.0f64, 0.1);
        let sd = (n * p * (1.0 - p)).sqrt();
        assert!((sp1 - n * p).abs() <= 3.0 * sd, "sp1 count {sp1}");
    }

    #[test]
    fn zero_mutation_species_are_identical() {
        let spec = SyntheticSpec {
            num_species: 2,
            mutation_rates: vec![0.0, 0.0],
            abundance: vec![0.5, 0.25, 0.25],
            ..small()
        };
        let sim = simulate_metagenome(&spec).unwrap();
        assert_eq!(sim.references[1].1, sim.references[2].1);
        assert_ne!(sim.references[0].1, sim.references[1].1);
    }

    #[test]
    fn same_seed_is_deterministic() {
        let a = simulate_metagenome(&small()).unwrap();
        let b = simulate_metagenome(&small()).unwrap();
        assert_eq!(a, b);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        a.write_to(dir_a.path()).unwrap();
        b.write_to(dir_b.path()).unwrap();
        for f in ["reads.fastq", "labels.tsv", "refs.fasta"] {
            assert_eq!(
                std::fs::read(dir_a.path().join(f)).unwrap(),
                std::fs::read(dir_b.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn reads_respect_length_bounds() {
        let sim = simulate_metagenome(&small()).unwrap();
        assert!(sim.reads.iter().all(|r| r.len() >= 32 && r.len() <= 5_000));
        assert!(sim.reads.iter().all(|r| r.qualities.as_ref().unwrap().len() == r.len()));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = small();
        s.abundance = vec![0.5, 0.4];
        assert!(simulate_metagenome(&s).is_err());
        let mut s = small();
        s.read_length_mean = 10_000.0;
        assert!(simulate_metagenome(&s).is_err());
        let mut s = small();
        s.mutation_rates = vec![1.5];
        assert!(simulate_metagenome(&s).is_err());
    }

    #[test]
    fn markov_composition_is_skewed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_genome(50_000, 0.5, 3, &mut rng).unwrap();
        let mut counts = std::collections::HashMap::new();
        for w in g.windows(4) {
            *counts.entry(w.to_vec()).or_insert(0usize) += 1;
        }
        let max = *counts.values().max().unwrap() as f64;
        // uniform would put ~195 in each of 256 bins
        assert!(max > 3.0 * 50_000.0 / 256.0);
    }
}
