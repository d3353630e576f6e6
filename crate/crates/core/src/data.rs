//! Genotype and phenotype tables: loading, validation, and preprocessing.
//!
//! Inputs must be complete. Missing genotype or trait fields are rejected unless
//! mean imputation is explicitly requested through [`LoadOptions`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::{Node, NodeKind};

/// Trait id → temporal tier (0 = measured earliest).
pub type TierMap = BTreeMap<String, u32>;

/// Allele counts for `n` individuals over `S` SNPs.
#[derive(Debug, Clone, PartialEq)]
pub struct GenotypeMatrix {
    pub individual_ids: Vec<String>,
    pub snp_ids: Vec<String>,
    pub counts: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraitMatrix {
    pub individual_ids: Vec<String>,
    pub trait_ids: Vec<String>,
    pub values: DMatrix<f64>,
    pub tiers: Vec<u32>,
}

/// Column means and standard deviations recorded by [`standardize`], SNPs first
/// then traits.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub genotypes: GenotypeMatrix,
    pub traits: TraitMatrix,
    pub standardization: Option<Standardization>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Replace missing fields with the column mean instead of failing.
    pub impute_mean: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Individuals present only in the genotype file.
    pub dropped_genotype_only: usize,
    /// Individuals present only in the trait file.
    pub dropped_trait_only: usize,
    pub imputed_fields: usize,
}

impl LoadReport {
    pub fn dropped(&self) -> usize {
        self.dropped_genotype_only + self.dropped_trait_only
    }
}

fn check_unique(ids: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for (row, id) in ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return Err(Error::Validation {
                row: row + 1,
                column: what.to_string(),
                message: format!("duplicate id '{id}'"),
            });
        }
    }
    Ok(())
}

impl GenotypeMatrix {
    pub fn new(individual_ids: Vec<String>, snp_ids: Vec<String>, counts: DMatrix<f64>) -> Result<Self> {
        if counts.nrows() != individual_ids.len() || counts.ncols() != snp_ids.len() {
            return Err(Error::Dimension(format!(
                "genotype matrix is {}x{} but has {} ids and {} SNP ids",
                counts.nrows(),
                counts.ncols(),
                individual_ids.len(),
                snp_ids.len()
            )));
        }
        check_unique(&individual_ids, "id")?;
        check_unique(&snp_ids, "snp header")?;
        for j in 0..counts.ncols() {
            for i in 0..counts.nrows() {
                let v = counts[(i, j)];
                if !v.is_finite() || !(0.0..=2.0).contains(&v) {
                    return Err(Error::Validation {
                        row: i + 1,
                        column: snp_ids[j].clone(),
                        message: format!("allele count {v} outside {{0,1,2}}"),
                    });
                }
            }
        }
        Ok(GenotypeMatrix {
            individual_ids,
            snp_ids,
            counts,
        })
    }

    pub fn n_individuals(&self) -> usize {
        self.counts.nrows()
    }

    pub fn n_snps(&self) -> usize {
        self.counts.ncols()
    }

    /// Minor allele frequency min(p, 1 − p) with p = Σ counts / 2n.
    pub fn maf(&self, j: usize) -> f64 {
        let n = self.n_individuals() as f64;
        let p = self.counts.column(j).sum() / (2.0 * n);
        p.min(1.0 - p)
    }

    pub fn select_snps(&self, cols: &[usize]) -> GenotypeMatrix {
        GenotypeMatrix {
            individual_ids: self.individual_ids.clone(),
            snp_ids: cols.iter().map(|&j| self.snp_ids[j].clone()).collect(),
            counts: self.counts.select_columns(cols),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> GenotypeMatrix {
        GenotypeMatrix {
            individual_ids: rows.iter().map(|&i| self.individual_ids[i].clone()).collect(),
            snp_ids: self.snp_ids.clone(),
            counts: self.counts.select_rows(rows),
        }
    }

    pub fn snp_index(&self, id: &str) -> Option<usize> {
        self.snp_ids.iter().position(|s| s == id)
    }
}

impl TraitMatrix {
    pub fn new(
        individual_ids: Vec<String>,
        trait_ids: Vec<String>,
        values: DMatrix<f64>,
        tiers: Vec<u32>,
    ) -> Result<Self> {
        if values.nrows() != individual_ids.len() || values.ncols() != trait_ids.len() {
            return Err(Error::Dimension(format!(
                "trait matrix is {}x{} but has {} ids and {} trait ids",
                values.nrows(),
                values.ncols(),
                individual_ids.len(),
                trait_ids.len()
            )));
        }
        if tiers.len() != trait_ids.len() {
            return Err(Error::Config("every trait needs a tier".into()));
        }
        check_unique(&individual_ids, "id")?;
        check_unique(&trait_ids, "trait header")?;
        if let Some(((i, j), v)) = values
            .iter()
            .enumerate()
            .map(|(k, v)| ((k % values.nrows(), k / values.nrows()), v))
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::Validation {
                row: i + 1,
                column: trait_ids[j].clone(),
                message: format!("non-finite value {v}"),
            });
        }
        Ok(TraitMatrix {
            individual_ids,
            trait_ids,
            values,
            tiers,
        })
    }

    pub fn n_traits(&self) -> usize {
        self.values.ncols()
    }

    pub fn trait_index(&self, id: &str) -> Option<usize> {
        self.trait_ids.iter().position(|s| s == id)
    }

    pub fn select_rows(&self, rows: &[usize]) -> TraitMatrix {
        TraitMatrix {
            individual_ids: rows.iter().map(|&i| self.individual_ids[i].clone()).collect(),
            trait_ids: self.trait_ids.clone(),
            values: self.values.select_rows(rows),
            tiers: self.tiers.clone(),
        }
    }
}

impl Dataset {
    pub fn new(genotypes: GenotypeMatrix, traits: TraitMatrix) -> Result<Self> {
        if genotypes.individual_ids != traits.individual_ids {
            return Err(Error::Dimension(
                "genotype and trait rows are not aligned by individual id".into(),
            ));
        }
        if genotypes.n_individuals() < 3 {
            return Err(Error::EmptyMatrix(format!(
                "need at least 3 individuals, found {}",
                genotypes.n_individuals()
            )));
        }
        let snps: HashSet<&str> = genotypes.snp_ids.iter().map(String::as_str).collect();
        if let Some(t) = traits.trait_ids.iter().find(|t| snps.contains(t.as_str())) {
            return Err(Error::Config(format!("'{t}' is both a SNP and a trait id")));
        }
        Ok(Dataset {
            genotypes,
            traits,
            standardization: None,
        })
    }

    pub fn n(&self) -> usize {
        self.genotypes.n_individuals()
    }

    pub fn individual_ids(&self) -> &[String] {
        &self.genotypes.individual_ids
    }

    /// Typed nodes in column order: SNPs, then traits.
    pub fn nodes(&self) -> Vec<Node> {
        self.genotypes
            .snp_ids
            .iter()
            .map(|s| Node::snp(s))
            .chain(
                self.traits
                    .trait_ids
                    .iter()
                    .zip(&self.traits.tiers)
                    .map(|(t, &tier)| Node::trait_node(t, tier)),
            )
            .collect()
    }

    /// All columns (SNPs then traits) as one n × (S + T) matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.n();
        let s = self.genotypes.n_snps();
        let t = self.traits.n_traits();
        let mut m = DMatrix::zeros(n, s + t);
        m.columns_mut(0, s).copy_from(&self.genotypes.counts);
        m.columns_mut(s, t).copy_from(&self.traits.values);
        m
    }

    pub fn subset_rows(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(self.genotypes.select_rows(rows), self.traits.select_rows(rows))
    }

    pub fn with_genotypes(&self, genotypes: GenotypeMatrix) -> Result<Dataset> {
        Dataset::new(genotypes, self.traits.clone())
    }

    pub fn tier_map(&self) -> TierMap {
        self.traits
            .trait_ids
            .iter()
            .cloned()
            .zip(self.traits.tiers.iter().cloned())
            .collect()
    }
}

fn is_missing(field: &str) -> bool {
    matches!(field, "" | "NA" | "na" | "NaN" | "nan" | ".")
}

struct RawTable {
    header: Vec<String>,
    ids: Vec<String>,
    cells: Vec<Vec<Option<f64>>>,
}

fn read_table(path: &Path) -> Result<RawTable> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(0, 0, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(parse_err(0, 0, "expected an id column and at least one data column".into()));
    }
    let mut ids = Vec::new();
    let mut cells = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| parse_err(row, 0, e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                record.len(),
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        ids.push(record[0].to_string());
        let mut values = Vec::with_capacity(header.len() - 1);
        for (c, field) in record.iter().enumerate().skip(1) {
            if is_missing(field) {
                values.push(None);
            } else {
                let v: f64 = field
                    .parse()
                    .map_err(|_| parse_err(row, c + 1, format!("'{field}' is not a number")))?;
                values.push(Some(v));
            }
        }
        cells.push(values);
    }
    Ok(RawTable {
        header: header[1..].to_vec(),
        ids,
        cells,
    })
}

fn complete_column(
    table: &RawTable,
    rows: &[usize],
    col: usize,
    opts: LoadOptions,
    report: &mut LoadReport,
) -> Result<Vec<f64>> {
    let observed: Vec<f64> = rows.iter().filter_map(|&r| table.cells[r][col]).collect();
    let fill = if observed.is_empty() {
        f64::NAN
    } else {
        observed.iter().sum::<f64>() / observed.len() as f64
    };
    rows.iter()
        .map(|&r| match table.cells[r][col] {
            Some(v) => Ok(v),
            None if opts.impute_mean && fill.is_finite() => {
                report.imputed_fields += 1;
                Ok(fill)
            }
            None => Err(Error::Validation {
                row: r + 1,
                column: table.header[col].clone(),
                message: "missing value (inputs must be complete; see --impute-mean)".into(),
            }),
        })
        .collect()
}

fn check_allele_counts(table: &RawTable) -> Result<()> {
    for (r, row) in table.cells.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if let Some(v) = *v {
                if v != 0.0 && v != 1.0 && v != 2.0 {
                    return Err(Error::Validation {
                        row: r + 1,
                        column: table.header[c].clone(),
                        message: format!("genotype value {v} is not an allele count in {{0,1,2}}"),
                    });
                }
            }
        }
    }
    Ok(())
}

/// Load a genotype CSV on its own, e.g. for predicting new individuals.
pub fn load_genotypes(path: impl AsRef<Path>, opts: LoadOptions) -> Result<(GenotypeMatrix, LoadReport)> {
    let table = read_table(path.as_ref())?;
    check_unique(&table.ids, "id")?;
    check_allele_counts(&table)?;
    let mut report = LoadReport::default();
    let rows: Vec<usize> = (0..table.ids.len()).collect();
    let mut counts = DMatrix::zeros(rows.len(), table.header.len());
    for c in 0..table.header.len() {
        let col = complete_column(&table, &rows, c, opts, &mut report)?;
        counts.column_mut(c).copy_from_slice(&col);
    }
    Ok((GenotypeMatrix::new(table.ids.clone(), table.header.clone(), counts)?, report))
}

/// Load a trait CSV on its own; traits missing from `tiers` get tier 0.
pub fn load_traits(path: impl AsRef<Path>, tiers: &TierMap, opts: LoadOptions) -> Result<(TraitMatrix, LoadReport)> {
    let table = read_table(path.as_ref())?;
    check_unique(&table.ids, "id")?;
    let mut report = LoadReport::default();
    let rows: Vec<usize> = (0..table.ids.len()).collect();
    let mut values = DMatrix::zeros(rows.len(), table.header.len());
    for c in 0..table.header.len() {
        let col = complete_column(&table, &rows, c, opts, &mut report)?;
        values.column_mut(c).copy_from_slice(&col);
    }
    let t: Vec<u32> = table.header.iter().map(|h| tiers.get(h).copied().unwrap_or(0)).collect();
    Ok((TraitMatrix::new(table.ids.clone(), table.header.clone(), values, t)?, report))
}

/// Column headers of a CSV file after the leading id column.
pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header = reader.headers().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        row: 0,
        column: 0,
        message: e.to_string(),
    })?;
    Ok(header.iter().skip(1).map(str::to_string).collect())
}

/// Load genotype and trait CSV files, joining rows on the leading id column.
///
/// Individuals are kept in genotype-file order; those present in only one file
/// are dropped and counted in the returned [`LoadReport`].
pub fn load_dataset(
    genotype_path: impl AsRef<Path>,
    trait_path: impl AsRef<Path>,
    tiers: &TierMap,
    opts: LoadOptions,
) -> Result<(Dataset, LoadReport)> {
    let gtab = read_table(genotype_path.as_ref())?;
    let ttab = read_table(trait_path.as_ref())?;
    let mut report = LoadReport::default();

    check_unique(&gtab.ids, "id")?;
    check_unique(&ttab.ids, "id")?;
    check_allele_counts(&gtab)?;

    let trait_tiers = ttab
        .header
        .iter()
        .map(|t| {
            tiers
                .get(t)
                .copied()
                .ok_or_else(|| Error::Config(format!("no tier given for trait '{t}'")))
        })
        .collect::<Result<Vec<u32>>>()?;

    let trait_rows: HashMap<&str, usize> =
        ttab.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let mut g_rows = Vec::new();
    let mut t_rows = Vec::new();
    for (i, id) in gtab.ids.iter().enumerate() {
        match trait_rows.get(id.as_str()) {
            Some(&j) => {
                g_rows.push(i);
                t_rows.push(j);
            }
            None => report.dropped_genotype_only += 1,
        }
    }
    report.dropped_trait_only = ttab.ids.len() - t_rows.len();
    if g_rows.is_empty() {
        return Err(Error::EmptyJoin);
    }
    if report.dropped() > 0 {
        log::info!("dropped {} individuals missing from one of the input files", report.dropped());
    }

    let ids: Vec<String> = g_rows.iter().map(|&i| gtab.ids[i].clone()).collect();
    let n = ids.len();
    let mut counts = DMatrix::zeros(n, gtab.header.len());
    for c in 0..gtab.header.len() {
        let col = complete_column(&gtab, &g_rows, c, opts, &mut report)?;
        counts.column_mut(c).copy_from_slice(&col);
    }
    let mut values = DMatrix::zeros(n, ttab.header.len());
    for c in 0..ttab.header.len() {
        let col = complete_column(&ttab, &t_rows, c, opts, &mut report)?;
        values.column_mut(c).copy_from_slice(&col);
    }

    let genotypes = GenotypeMatrix::new(ids.clone(), gtab.header.clone(), counts)?;
    let traits = TraitMatrix::new(ids, ttab.header.clone(), values, trait_tiers)?;
    Ok((Dataset::new(genotypes, traits)?, report))
}

/// Parse `trait=0,trait2=1,...`.
pub fn parse_tiers(spec: &str) -> Result<TierMap> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, tier) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("tier entry '{item}' is not trait=tier")))?;
            let tier: u32 = tier
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("tier '{tier}' is not a non-negative integer")))?;
            Ok((name.trim().to_string(), tier))
        })
        .collect()
}

/// Read a two-column `trait,tier` CSV (a header row is expected).
pub fn load_tiers_csv(path: impl AsRef<Path>) -> Result<TierMap> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut tiers = TierMap::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: r + 1,
            column: 0,
            message: e.to_string(),
        })?;
        let tier = record.get(1).and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row: r + 1,
            column: 2,
            message: "expected a non-negative integer tier".into(),
        })?;
        tiers.insert(record[0].to_string(), tier);
    }
    Ok(tiers)
}

/// Drop SNPs whose minor allele frequency is below `min_maf`.
///
/// Monomorphic columns are always dropped, even at `min_maf = 0`.
pub fn filter_maf(g: &GenotypeMatrix, min_maf: f64) -> Result<GenotypeMatrix> {
    if !(0.0..0.5).contains(&min_maf) {
        return Err(Error::Config(format!("min_maf must lie in [0, 0.5), got {min_maf}")));
    }
    let keep: Vec<usize> = (0..g.n_snps())
        .filter(|&j| {
            let maf = g.maf(j);
            maf >= min_maf && maf > 0.0
        })
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyMatrix("every SNP was removed by the MAF filter".into()));
    }
    Ok(g.select_snps(&keep))
}

/// Centered, unit-norm copy of a column; `None` for constant columns.
fn unit_column(x: &[f64]) -> Option<Vec<f64>> {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - m).collect();
    let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 0.0 {
        return None;
    }
    Some(centered.into_iter().map(|v| v / norm).collect())
}

/// Greedy correlation pruning in column order: a column is dropped when its
/// |r| with any already-retained column exceeds `r_max`.
pub fn prune_correlated(g: &GenotypeMatrix, r_max: f64) -> Result<GenotypeMatrix> {
    if !(r_max > 0.0 && r_max <= 1.0) {
        return Err(Error::Config(format!("r_max must lie in (0, 1], got {r_max}")));
    }
    let units: Vec<Option<Vec<f64>>> = (0..g.n_snps())
        .map(|j| unit_column(g.counts.column(j).as_slice()))
        .collect();
    let mut kept: Vec<usize> = Vec::new();
    for j in 0..g.n_snps() {
        let redundant = units[j].as_ref().is_some_and(|uj| {
            kept.iter().any(|&k| {
                units[k].as_ref().is_some_and(|uk| {
                    let r: f64 = uj.iter().zip(uk).map(|(a, b)| a * b).sum();
                    r.abs() > r_max
                })
            })
        });
        if !redundant {
            kept.push(j);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyMatrix("every SNP was removed by correlation pruning".into()));
    }
    Ok(g.select_snps(&kept))
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (m, (ss / (n - 1.0)).sqrt())
}

/// Center every column and scale it to unit sample variance, recording the
/// original means and standard deviations for back-transformation.
pub fn standardize(d: &Dataset) -> Result<Dataset> {
    let nodes = d.nodes();
    let m = d.matrix();
    let mut means = Vec::with_capacity(m.ncols());
    let mut sds = Vec::with_capacity(m.ncols());
    let mut z = m.clone();
    for j in 0..m.ncols() {
        let (mu, sd) = mean_sd(m.column(j).as_slice());
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(nodes[j].id.clone()));
        }
        z.column_mut(j).iter_mut().for_each(|v| *v = (*v - mu) / sd);
        means.push(mu);
        sds.push(sd);
    }
    let s = d.genotypes.n_snps();
    let t = d.traits.n_traits();
    let genotypes = GenotypeMatrix {
        counts: z.columns(0, s).into_owned(),
        ..d.genotypes.clone()
    };
    let traits = TraitMatrix {
        values: z.columns(s, t).into_owned(),
        ..d.traits.clone()
    };
    Ok(Dataset {
        genotypes,
        traits,
        standardization: Some(Standardization { means, sds }),
    })
}

impl Standardization {
    /// Map a standardized value of column `col` back to original units.
    pub fn back_transform(&self, col: usize, z: f64) -> f64 {
        self.means[col] + self.sds[col] * z
    }
}

/// Node kinds for every column of a dataset, keyed by id.
pub fn node_kinds(d: &Dataset) -> HashMap<String, NodeKind> {
    d.nodes().into_iter().map(|n| (n.id, n.kind)).collect()
}
