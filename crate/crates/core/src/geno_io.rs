//! Genotype and phenotype tables.
//!
//! Genotype files are delimiter-separated text with a header
//! `variety,<snp_1>,...,<snp_d>` and one row of single-character nucleotide
//! calls per variety. Phenotype files have a header `variety,<trait_1>,...`
//! with numeric cells or `NA`.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// IUPAC calls that may appear in a genotype cell.
pub const ALPHABET: [u8; 11] = *b"ACGTRYSWKMN";

/// Integer code for a missing call.
pub const MISSING: i8 = -1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IllegalBase(pub char);

/// Maps a nucleotide call to its numeric code.
///
/// `A`/`T` are 0, `G`/`C` are 2, the heterozygous ambiguity codes
/// `R Y S W K M` are 1 and `N` (missing) is -1. Lowercase is accepted.
pub fn encode_base(c: char) -> Result<i8, IllegalBase> {
    match c.to_ascii_uppercase() {
        'A' | 'T' => Ok(0),
        'G' | 'C' => Ok(2),
        'R' | 'Y' | 'S' | 'W' | 'K' | 'M' => Ok(1),
        'N' => Ok(MISSING),
        _ => Err(IllegalBase(c)),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delimiter(pub u8);

impl Delimiter {
    pub const COMMA: Self = Self(b',');
    pub const TAB: Self = Self(b'\t');

    fn as_char(self) -> char {
        self.0 as char
    }
}

impl Default for Delimiter {
    fn default() -> Self {
        Self::COMMA
    }
}

/// Genotype calls exactly as read, upper-cased.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawGenotypeTable {
    variety_ids: Vec<String>,
    snp_ids: Vec<String>,
    cells: Vec<u8>,
}

impl RawGenotypeTable {
    /// Validates the alphabet, row lengths and id uniqueness.
    pub fn new(variety_ids: Vec<String>, snp_ids: Vec<String>, rows: Vec<Vec<u8>>) -> Result<Self> {
        let d = snp_ids.len();
        if rows.len() != variety_ids.len() {
            return Err(Error::Dataset(format!(
                "{} variety ids for {} rows",
                variety_ids.len(),
                rows.len()
            )));
        }
        let mut cells = Vec::with_capacity(rows.len() * d);
        for (r, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::Dataset(format!(
                    "row {r} has {} calls, expected {d}",
                    row.len()
                )));
            }
            for (c, b) in row.into_iter().enumerate() {
                let up = b.to_ascii_uppercase();
                if !ALPHABET.contains(&up) {
                    return Err(Error::Dataset(format!(
                        "illegal call {:?} at row {r}, column {c}",
                        b as char
                    )));
                }
                cells.push(up);
            }
        }
        check_unique(&variety_ids)
            .map_err(|id| Error::Dataset(format!("duplicate variety id {id:?}")))?;
        Ok(Self {
            variety_ids,
            snp_ids,
            cells,
        })
    }

    pub fn n(&self) -> usize {
        self.variety_ids.len()
    }

    pub fn d(&self) -> usize {
        self.snp_ids.len()
    }

    pub fn variety_ids(&self) -> &[String] {
        &self.variety_ids
    }

    pub fn snp_ids(&self) -> &[String] {
        &self.snp_ids
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.cells[i * self.d()..(i + 1) * self.d()]
    }

    pub fn write(&self, path: &Path, delimiter: Delimiter) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let sep = delimiter.as_char();
        write!(w, "variety")?;
        for id in &self.snp_ids {
            write!(w, "{sep}{id}")?;
        }
        writeln!(w)?;
        for (i, id) in self.variety_ids.iter().enumerate() {
            write!(w, "{id}")?;
            for &b in self.row(i) {
                write!(w, "{sep}{}", b as char)?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One phenotype column; `None` marks a missing value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitColumn {
    pub name: String,
    pub values: Vec<Option<f64>>,
}

/// Phenotype file contents, rows in file order.
#[derive(Clone, Debug, PartialEq)]
pub struct PhenotypeTable {
    pub variety_ids: Vec<String>,
    pub traits: Vec<TraitColumn>,
}

impl PhenotypeTable {
    pub fn write(&self, path: &Path, delimiter: Delimiter) -> Result<()> {
        let mut w = BufWriter::new(fs::File::create(path)?);
        let sep = delimiter.as_char();
        write!(w, "variety")?;
        for t in &self.traits {
            write!(w, "{sep}{}", t.name)?;
        }
        writeln!(w)?;
        for (i, id) in self.variety_ids.iter().enumerate() {
            write!(w, "{id}")?;
            for t in &self.traits {
                match t.values[i] {
                    Some(v) => write!(w, "{sep}{v}")?,
                    None => write!(w, "{sep}NA")?,
                }
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Lines {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

fn read_lines(path: &Path, delimiter: Delimiter) -> Result<Lines> {
    let text = fs::read_to_string(path).map_err(|e| Error::File {
        path: path.into(),
        message: e.to_string(),
    })?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let split = |l: &str| {
        l.trim_end_matches('\r')
            .split(delimiter.as_char())
            .map(|s| s.trim().to_string())
            .collect()
    };
    let (_, header) = lines.next().ok_or_else(|| Error::File {
        path: path.into(),
        message: "empty file".into(),
    })?;
    let header: Vec<String> = split(header);
    let rows = lines.map(|(i, l)| (i + 1, split(l))).collect();
    Ok(Lines {
        path: path.into(),
        header,
        rows,
    })
}

fn parse_err(path: &Path, line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        column,
        message: message.into(),
    }
}

fn check_unique(ids: &[String]) -> std::result::Result<(), String> {
    let mut seen = HashSet::with_capacity(ids.len());
    ids.iter().try_for_each(|id| {
        if seen.insert(id) {
            Ok(())
        } else {
            Err(id.clone())
        }
    })
}

/// Reads a genotype file. Errors carry 1-based line and column numbers.
pub fn load_genotypes(path: &Path, delimiter: Delimiter) -> Result<RawGenotypeTable> {
    let Lines { path, header, rows } = read_lines(path, delimiter)?;
    if header.len() < 2 {
        return Err(parse_err(
            &path,
            1,
            1,
            "header needs a variety column and at least one SNP",
        ));
    }
    let snp_ids = header[1..].to_vec();
    let d = snp_ids.len();
    let mut variety_ids = Vec::with_capacity(rows.len());
    let mut seen = HashSet::new();
    let mut cells = Vec::with_capacity(rows.len() * d);
    for (line, fields) in rows {
        if fields.len() != d + 1 {
            return Err(parse_err(
                &path,
                line,
                fields.len().min(d + 1),
                format!(
                    "ragged row: {} calls, header declares {d} SNPs",
                    fields.len() - 1
                ),
            ));
        }
        let id = fields[0].clone();
        if !seen.insert(id.clone()) {
            return Err(parse_err(
                &path,
                line,
                1,
                format!("duplicate variety id {id:?}"),
            ));
        }
        for (col, cell) in fields[1..].iter().enumerate() {
            let mut chars = cell.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(parse_err(
                    &path,
                    line,
                    col + 2,
                    format!("expected one nucleotide, got {cell:?}"),
                ));
            };
            if encode_base(c).is_err() {
                return Err(parse_err(
                    &path,
                    line,
                    col + 2,
                    format!("illegal nucleotide {c:?}"),
                ));
            }
            cells.push(c.to_ascii_uppercase() as u8);
        }
        variety_ids.push(id);
    }
    log::debug!(
        "{}: {} varieties x {} SNPs",
        path.display(),
        variety_ids.len(),
        d
    );
    Ok(RawGenotypeTable {
        variety_ids,
        snp_ids,
        cells,
    })
}

/// Reads a phenotype file; `NA` cells become missing values.
pub fn load_phenotypes(path: &Path, delimiter: Delimiter) -> Result<PhenotypeTable> {
    let Lines { path, header, rows } = read_lines(path, delimiter)?;
    if header.len() < 2 {
        return Err(parse_err(
            &path,
            1,
            1,
            "header needs a variety column and at least one trait",
        ));
    }
    let mut traits: Vec<TraitColumn> = header[1..]
        .iter()
        .map(|name| TraitColumn {
            name: name.clone(),
            values: Vec::new(),
        })
        .collect();
    let mut variety_ids = Vec::with_capacity(rows.len());
    let mut seen = HashSet::new();
    for (line, fields) in rows {
        if fields.len() != traits.len() + 1 {
            return Err(parse_err(
                &path,
                line,
                fields.len().min(traits.len() + 1),
                format!(
                    "ragged row: {} values, header declares {} traits",
                    fields.len() - 1,
                    traits.len()
                ),
            ));
        }
        if !seen.insert(fields[0].clone()) {
            return Err(parse_err(
                &path,
                line,
                1,
                format!("duplicate variety id {:?}", fields[0]),
            ));
        }
        for (col, (cell, t)) in fields[1..].iter().zip(traits.iter_mut()).enumerate() {
            let value = if cell == "NA" {
                None
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    parse_err(
                        &path,
                        line,
                        col + 2,
                        format!("not a number or NA: {cell:?}"),
                    )
                })?;
                Some(v)
            };
            t.values.push(value);
        }
        variety_ids.push(fields[0].clone());
    }
    Ok(PhenotypeTable {
        variety_ids,
        traits,
    })
}

/// Encoded genotypes joined with phenotypes, rows in genotype-file order.
#[derive(Clone, Debug, PartialEq)]
pub struct GenotypeDataset {
    variety_ids: Vec<String>,
    d: usize,
    encoded: Vec<i8>,
    traits: Vec<TraitColumn>,
}

/// Rows of a dataset with an observed value for one trait.
#[derive(Clone, Debug, PartialEq)]
pub struct TraitView {
    pub name: String,
    pub rows: Vec<usize>,
    pub targets: Vec<f64>,
}

impl TraitView {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

impl GenotypeDataset {
    /// Builds a dataset from already-encoded rows.
    pub fn from_encoded(
        variety_ids: Vec<String>,
        d: usize,
        encoded: Vec<i8>,
        traits: Vec<TraitColumn>,
    ) -> Result<Self> {
        let n = variety_ids.len();
        if encoded.len() != n * d {
            return Err(Error::Dataset(format!(
                "{} codes for {n} x {d} matrix",
                encoded.len()
            )));
        }
        if let Some(bad) = encoded.iter().find(|v| !(-1..=2).contains(*v)) {
            return Err(Error::Dataset(format!("code {bad} outside -1..=2")));
        }
        if let Some(t) = traits.iter().find(|t| t.values.len() != n) {
            return Err(Error::Dataset(format!(
                "trait {} has {} values for {n} varieties",
                t.name,
                t.values.len()
            )));
        }
        Ok(Self {
            variety_ids,
            d,
            encoded,
            traits,
        })
    }

    pub fn n(&self) -> usize {
        self.variety_ids.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn variety_ids(&self) -> &[String] {
        &self.variety_ids
    }

    pub fn encoded(&self) -> &[i8] {
        &self.encoded
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.encoded[i * self.d..(i + 1) * self.d]
    }

    pub fn traits(&self) -> &[TraitColumn] {
        &self.traits
    }

    pub fn trait_names(&self) -> Vec<&str> {
        self.traits.iter().map(|t| t.name.as_str()).collect()
    }

    /// Training rows for one trait; varieties missing that trait are left out.
    pub fn trait_view(&self, name: &str) -> Result<TraitView> {
        let t = self.traits.iter().find(|t| t.name == name).ok_or_else(|| {
            Error::Dataset(format!(
                "no trait column {name:?} (have {:?})",
                self.trait_names()
            ))
        })?;
        let (rows, targets) = t
            .values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (i, v)))
            .unzip();
        Ok(TraitView {
            name: name.to_string(),
            rows,
            targets,
        })
    }

    /// Rows `rows` of this dataset, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n()) {
            return Err(Error::Dataset(format!(
                "row {bad} out of range for {} varieties",
                self.n()
            )));
        }
        let variety_ids = rows.iter().map(|&r| self.variety_ids[r].clone()).collect();
        let encoded = rows
            .iter()
            .flat_map(|&r| self.row(r).iter().copied())
            .collect();
        let traits = self
            .traits
            .iter()
            .map(|t| TraitColumn {
                name: t.name.clone(),
                values: rows.iter().map(|&r| t.values[r]).collect(),
            })
            .collect();
        Self::from_encoded(variety_ids, self.d, encoded, traits)
    }

    /// Same dataset with one trait's observed values permuted among the
    /// varieties that have them.
    pub fn with_permuted_trait(&self, name: &str, seed: u64) -> Result<Self> {
        use rand::seq::SliceRandom;
        let view = self.trait_view(name)?;
        let mut shuffled = view.targets.clone();
        shuffled.shuffle(&mut crate::seeds::rng(seed));
        let mut out = self.clone();
        let col = out
            .traits
            .iter_mut()
            .find(|t| t.name == name)
            .expect("trait exists");
        for (&row, v) in view.rows.iter().zip(shuffled) {
            col.values[row] = Some(v);
        }
        Ok(out)
    }
}

/// Encodes every call and aligns phenotypes to genotype rows by variety id.
///
/// Every phenotype variety must exist in the genotype table. Genotyped
/// varieties without a phenotype row get missing values for all traits.
/// Traits with no observed value are dropped.
pub fn build_dataset(
    raw: &RawGenotypeTable,
    phenotypes: &PhenotypeTable,
) -> Result<GenotypeDataset> {
    let index: HashMap<&str, usize> = raw
        .variety_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut positions = Vec::with_capacity(phenotypes.variety_ids.len());
    for id in &phenotypes.variety_ids {
        let pos = index.get(id.as_str()).ok_or_else(|| {
            Error::Dataset(format!("phenotype variety {id:?} has no genotype row"))
        })?;
        positions.push(*pos);
    }
    if positions.is_empty() {
        return Err(Error::Dataset(
            "genotype and phenotype tables share no varieties".into(),
        ));
    }

    let encoded = raw
        .cells
        .iter()
        .map(|&b| encode_base(b as char).expect("alphabet validated on load"))
        .collect();

    let n = raw.n();
    let mut traits = Vec::new();
    for t in &phenotypes.traits {
        let mut values = vec![None; n];
        for (&pos, v) in positions.iter().zip(&t.values) {
            values[pos] = *v;
        }
        if values.iter().all(Option::is_none) {
            log::warn!("trait {} has no observed values; dropped", t.name);
            continue;
        }
        traits.push(TraitColumn {
            name: t.name.clone(),
            values,
        });
    }
    if traits.is_empty() {
        return Err(Error::Dataset("no trait has an observed value".into()));
    }
    GenotypeDataset::from_encoded(raw.variety_ids.clone(), raw.d(), encoded, traits)
}

#[cfg(test)]
mod tests {
    use std::io::Write as _;

    use super::*;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn encoding_table() {
        assert_eq!(encode_base('A'), Ok(0));
        assert_eq!(encode_base('T'), Ok(0));
        assert_eq!(encode_base('G'), Ok(2));
        assert_eq!(encode_base('C'), Ok(2));
        assert_eq!(encode_base('N'), Ok(-1));
        for c in ['R', 'Y', 'S', 'W', 'K', 'M'] {
            assert_eq!(encode_base(c), Ok(1));
        }
        assert_eq!(encode_base('k'), Ok(1));
        assert_eq!(encode_base('Z'), Err(IllegalBase('Z')));
    }

    #[test]
    fn loads_well_formed_genotypes() {
        let f = file("variety,m1,m2,m3,m4\nV1,A,K,G,T\nV2,A,K,c,C\nV3,R,G,N,T\n");
        let t = load_genotypes(f.path(), Delimiter::COMMA).unwrap();
        assert_eq!((t.n(), t.d()), (3, 4));
        assert_eq!(t.row(1), b"AKCC");
    }

    #[test]
    fn tab_delimited_genotypes() {
        let f = file("variety\tm1\tm2\nV1\tA\tG\n");
        let t = load_genotypes(f.path(), Delimiter::TAB).unwrap();
        assert_eq!(t.row(0), b"AG");
    }

    #[test]
    fn ragged_row_names_line() {
        let f = file("variety,m1,m2,m3,m4\nV1,A,K,G,T\nV2,A,K,C\n");
        match load_genotypes(f.path(), Delimiter::COMMA) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("ragged"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn illegal_character_names_cell() {
        let f = file("variety,m1,m2\nV1,A,Z\n");
        match load_genotypes(f.path(), Delimiter::COMMA) {
            Err(Error::Parse {
                line,
                column,
                message,
                ..
            }) => {
                assert_eq!((line, column), (2, 3));
                assert!(message.contains('Z'));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_variety_rejected() {
        let f = file("variety,m1\nV1,A\nV1,G\n");
        assert!(matches!(
            load_genotypes(f.path(), Delimiter::COMMA),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn phenotypes_with_missing_values() {
        let f = file("variety,PH,NN\nV1,48.83,6.86\nV2,NA,10.65\n");
        let p = load_phenotypes(f.path(), Delimiter::COMMA).unwrap();
        assert_eq!(p.traits[0].name, "PH");
        assert_eq!(p.traits[0].values, vec![Some(48.83), None]);
        assert_eq!(p.traits[1].values, vec![Some(6.86), Some(10.65)]);
    }

    #[test]
    fn non_numeric_phenotype_rejected() {
        let f = file("variety,PH\nV1,tall\n");
        assert!(matches!(
            load_phenotypes(f.path(), Delimiter::COMMA),
            Err(Error::Parse {
                line: 2,
                column: 2,
                ..
            })
        ));
    }

    fn raw(rows: &[(&str, &str)]) -> RawGenotypeTable {
        let d = rows[0].1.len();
        RawGenotypeTable::new(
            rows.iter().map(|r| r.0.to_string()).collect(),
            (0..d).map(|i| format!("m{i}")).collect(),
            rows.iter().map(|r| r.1.as_bytes().to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn builds_encoded_rows() {
        let g = raw(&[("V1", "AKGT"), ("V2", "NNNN")]);
        let p = PhenotypeTable {
            variety_ids: vec!["V1".into()],
            traits: vec![TraitColumn {
                name: "PH".into(),
                values: vec![Some(48.83)],
            }],
        };
        let ds = build_dataset(&g, &p).unwrap();
        assert_eq!(ds.row(0), &[0, 1, 2, 0]);
        assert_eq!(ds.row(1), &[-1, -1, -1, -1]);
        let view = ds.trait_view("PH").unwrap();
        assert_eq!(view.rows, vec![0]);
        assert_eq!(view.targets, vec![48.83]);
    }

    #[test]
    fn unknown_phenotype_variety_fails_alignment() {
        let g = raw(&[("V1", "AG")]);
        let p = PhenotypeTable {
            variety_ids: vec!["V9".into()],
            traits: vec![TraitColumn {
                name: "PH".into(),
                values: vec![Some(1.0)],
            }],
        };
        assert!(matches!(build_dataset(&g, &p), Err(Error::Dataset(_))));
    }

    #[test]
    fn empty_join_fails() {
        let g = raw(&[("V1", "AG")]);
        let p = PhenotypeTable {
            variety_ids: vec![],
            traits: vec![TraitColumn {
                name: "PH".into(),
                values: vec![],
            }],
        };
        assert!(matches!(build_dataset(&g, &p), Err(Error::Dataset(_))));
    }

    #[test]
    fn missing_trait_column_is_reported() {
        let g = raw(&[("V1", "AG"), ("V2", "GA")]);
        let p = PhenotypeTable {
            variety_ids: vec!["V1".into(), "V2".into()],
            traits: vec![TraitColumn {
                name: "PH".into(),
                values: vec![Some(1.0), Some(2.0)],
            }],
        };
        let ds = build_dataset(&g, &p).unwrap();
        assert!(ds.trait_view("GY").is_err());
    }

    #[test]
    fn write_then_load_preserves_table() {
        let g = raw(&[("V1", "AKGT"), ("V2", "NRYC")]);
        let f = tempfile::NamedTempFile::new().unwrap();
        g.write(f.path(), Delimiter::COMMA).unwrap();
        assert_eq!(load_genotypes(f.path(), Delimiter::COMMA).unwrap(), g);
    }
}
