//! Report writers for the analyze / cross-eval / diversity subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use gaitbench::analysis::{
    self, cross_summary, cross_table, descriptor_for_record, impact_table, pca_project,
    performance_table, Normalization,
};
use gaitbench::record::RunRecord;
use gaitbench::{Error, Result};

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::WithPath {
        path: path.display().to_string(),
        source: Box::new(e),
    })
}

/// Recursively collects every `record.json` under `dir`, sorted by path.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths = Vec::new();
    collect(dir, &mut paths)?;
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no record.json files found under {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| with_path(p, RunRecord::load(p)))
        .collect()
}

fn collect(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if !dir.is_dir() {
        return Err(Error::InvalidConfig(format!(
            "{} is not a directory",
            dir.display()
        )));
    }
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "record.json") {
            out.push(path);
        }
    }
    Ok(())
}

fn write_file(outdir: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(outdir)?;
    std::fs::write(outdir.join(name), contents)?;
    println!("wrote {}", outdir.join(name).display());
    Ok(())
}

/// Everything: performance, impact, cross tables, descriptors, PCA and the
/// plot-data JSON.
pub fn write_all(records: &[RunRecord], outdir: &Path, normalization: Normalization) -> Result<()> {
    let rows = performance_table(records);

    let mut perf = String::from("group,arch,reward,replicate,params,fitness\n");
    for r in &rows {
        writeln!(
            perf,
            "{},{},{},{},{},{}",
            r.group, r.arch, r.reward, r.replicate, r.params, r.fitness
        )
        .unwrap();
    }
    write_file(outdir, "performance.csv", &perf)?;

    // parameter impact needs a non-degenerate pool per reward; skip rewards
    // that cannot be normalized instead of failing the whole report
    let mut impact = String::from("group,arch,reward,replicate,params,fitness,normalized,impact\n");
    for reward in gaitbench::rewards::RewardKind::ALL {
        let subset: Vec<_> = rows
            .iter()
            .filter(|r| r.reward == reward)
            .cloned()
            .collect();
        if subset.is_empty() {
            continue;
        }
        match impact_table(&subset, normalization) {
            Ok(irs) => {
                for r in irs {
                    writeln!(
                        impact,
                        "{},{},{},{},{},{},{},{}",
                        r.group,
                        r.arch,
                        r.reward,
                        r.replicate,
                        r.params,
                        r.fitness,
                        r.normalized,
                        r.impact
                    )
                    .unwrap();
                }
            }
            Err(e) => println!("notice: parameter impact skipped for {reward}: {e}"),
        }
    }
    write_file(outdir, "impact.csv", &impact)?;

    write_cross(records, outdir)?;
    write_diversity(records, outdir)?;

    // plot data: fitness against parameter count, one series per group
    let mut plot: BTreeMap<String, BTreeMap<String, Vec<[f64; 2]>>> = BTreeMap::new();
    for r in &rows {
        plot.entry(r.reward.name().to_string())
            .or_default()
            .entry(r.group.label().to_string())
            .or_default()
            .push([r.params as f64, r.fitness]);
    }
    write_file(
        outdir,
        "plotdata.json",
        &serde_json::to_string_pretty(&plot)?,
    )?;
    Ok(())
}

/// Cross-performance tables: the long form plus the best-per-cell summary.
pub fn write_cross(records: &[RunRecord], outdir: &Path) -> Result<()> {
    let rows = cross_table(records)?;
    let mut long = String::from("group,arch,replicate,trained_on,evaluated_on,value\n");
    for r in &rows {
        writeln!(
            long,
            "{},{},{},{},{},{}",
            r.group, r.arch, r.replicate, r.trained_on, r.evaluated_on, r.value
        )
        .unwrap();
    }
    write_file(outdir, "cross.csv", &long)?;

    let mut summary = String::from("group,trained_on,evaluated_on,best_value,best_arch\n");
    for c in cross_summary(&rows) {
        writeln!(
            summary,
            "{},{},{},{},{}",
            c.group, c.trained_on, c.evaluated_on, c.best_value, c.best_arch
        )
        .unwrap();
    }
    write_file(outdir, "cross_summary.csv", &summary)?;
    Ok(())
}

/// Gait descriptors and, when the population supports it, the 2-D PCA
/// projection.
pub fn write_diversity(records: &[RunRecord], outdir: &Path) -> Result<()> {
    let mut labeled = Vec::new();
    for r in records {
        if analysis::Group::of_record(r).is_none() || r.champion.is_none() {
            continue;
        }
        let descriptor = descriptor_for_record(r)?;
        labeled.push((
            analysis::Group::of_record(r).unwrap(),
            r.config.controller.clone(),
            r.config.reward,
            r.config.replicate,
            descriptor,
        ));
    }

    let mut csv = String::from("group,arch,reward,replicate");
    for leg in 0..4 {
        write!(
            csv,
            ",foot{leg}_amp,foot{leg}_omega,foot{leg}_phase,foot{leg}_offset"
        )
        .unwrap();
    }
    csv.push('\n');
    for (group, arch, reward, replicate, d) in &labeled {
        write!(csv, "{group},{arch},{reward},{replicate}").unwrap();
        for v in d.flat() {
            write!(csv, ",{v}").unwrap();
        }
        csv.push('\n');
    }
    write_file(outdir, "descriptors.csv", &csv)?;

    let matrix: Vec<Vec<f64>> = labeled
        .iter()
        .map(|(_, _, _, _, d)| d.flat().to_vec())
        .collect();
    match pca_project(&matrix) {
        Ok(p) => {
            let mut scores = String::new();
            write!(scores, "# explained_variance_ratios").unwrap();
            for r in &p.ratios {
                write!(scores, ",{r}").unwrap();
            }
            scores.push('\n');
            scores.push_str("group,arch,reward,replicate,pc1,pc2\n");
            for ((group, arch, reward, replicate, _), s) in labeled.iter().zip(p.scores.iter()) {
                writeln!(
                    scores,
                    "{group},{arch},{reward},{replicate},{},{}",
                    s[0], s[1]
                )
                .unwrap();
            }
            write_file(outdir, "pca_scores.csv", &scores)?;
        }
        Err(e) => println!("notice: PCA projection skipped: {e}"),
    }
    Ok(())
}
