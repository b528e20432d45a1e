//! CSV/JSON emission and the least-squares helper. Output is written by a
//! single writer per file and formatted with Rust's shortest-roundtrip f64
//! display, so identical results are byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{FeatureCorr, ProbeSeries};
use crate::error::{Error, Result};
use crate::harness::experiments::FeatureCorrRecord;
use crate::harness::grid::GridResult;
use crate::harness::identities::IdentityReport;
use crate::synthdata::{DataSpec, Dataset};

/// Ordinary least squares over (x, y) points.
pub fn fit_line(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::Degenerate("least squares needs at least 2 points".into()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Degenerate("least squares x values are constant".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else {
        format!("{v}")
    }
}

/// `grid.csv`: one row per (setting, recorded epoch); the pearson_window
/// column repeats that epoch's cross-setting Pearson correlation.
pub fn write_grid_csv(path: &Path, result: &GridResult) -> Result<()> {
    let mut out = String::from("setting_id,epoch,n,lhs,rhs,pearson_window\n");
    for p in &result.points {
        let pearson = result
            .fits
            .iter()
            .find(|f| f.epoch == p.epoch)
            .map(|f| f.pearson)
            .unwrap_or(f64::NAN);
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.setting_id,
            p.epoch,
            p.n,
            fmt(p.lhs),
            fmt(p.rhs19),
            fmt(pearson)
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `fit.csv`: per-epoch cross-setting agreement.
pub fn write_fit_csv(path: &Path, result: &GridResult) -> Result<()> {
    let mut out = String::from("epoch,pearson,slope,intercept,n_points\n");
    for f in &result.fits {
        writeln!(
            out,
            "{},{},{},{},{}",
            f.epoch,
            fmt(f.pearson),
            fmt(f.slope),
            fmt(f.intercept),
            f.n_points
        )
        .unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `probes_<arm>.csv`: the fixed probe-series schema. Per-layer columns are
/// numbered from 1.
pub fn write_probes_csv(path: &Path, series: &ProbeSeries) -> Result<()> {
    let layers = series.num_layers;
    let mut header =
        String::from("epoch,train_loss,test_loss,avg_gsnr_all,avg_gsnr_layer2,p_same_sign_mean");
    for l in 1..=layers {
        write!(header, ",dgw_corr_l{l}").unwrap();
    }
    for l in 1..=layers {
        write!(header, ",dgw_corr_top10_l{l}").unwrap();
    }
    for l in 1..=layers {
        write!(header, ",opp_sign_l{l}").unwrap();
    }
    for l in 1..=layers {
        write!(header, ",opp_sign_top10_l{l}").unwrap();
    }
    let mut out = header;
    out.push('\n');
    for (k, &epoch) in series.epochs.iter().enumerate() {
        let layer2 = if layers >= 2 { series.avg_gsnr_layer[1][k] } else { f64::NAN };
        write!(
            out,
            "{},{},{},{},{},{}",
            epoch,
            fmt(series.train_loss[k]),
            fmt(series.test_loss[k]),
            fmt(series.avg_gsnr_all[k]),
            fmt(layer2),
            fmt(series.p_same_sign_mean[k])
        )
        .unwrap();
        for l in 0..layers {
            write!(out, ",{}", fmt(series.dgw_corr[l][k])).unwrap();
        }
        for l in 0..layers {
            write!(out, ",{}", fmt(series.dgw_corr_top[l][k])).unwrap();
        }
        for l in 0..layers {
            write!(out, ",{}", fmt(series.opp_sign[l][k])).unwrap();
        }
        for l in 0..layers {
            write!(out, ",{}", fmt(series.opp_sign_top[l][k])).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `features.csv`: per-hidden-unit correlation records; dead units are
/// marked `degenerate`.
pub fn write_features_csv(path: &Path, records: &[FeatureCorrRecord]) -> Result<()> {
    let cell = |c: &FeatureCorr| match c {
        FeatureCorr::Value(v) => fmt(*v),
        FeatureCorr::Degenerate => "degenerate".to_string(),
    };
    let mut out = String::from("unit,c_t0,t_max,c_tmax\n");
    for r in records {
        writeln!(out, "{},{},{},{}", r.unit, cell(&r.c_t0), r.t_max, cell(&r.c_tmax)).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_identities_json(path: &Path, report: &IdentityReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::Config(format!("report serialization failed: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct DatasetSidecar<'a> {
    spec: &'a DataSpec,
    seed: u64,
}

/// Dataset CSV (`x0,...,x{d-1},y`) plus a JSON sidecar with the spec and seed.
pub fn write_dataset_csv(path: &Path, d: &Dataset, seed: u64) -> Result<()> {
    let dim = d.input_dim();
    let mut out = String::new();
    for i in 0..dim {
        write!(out, "x{i},").unwrap();
    }
    out.push_str("y\n");
    for i in 0..d.len() {
        for x in d.input(i) {
            write!(out, "{},", fmt(*x)).unwrap();
        }
        match d.target(i) {
            crate::synthdata::SampleTarget::Value(y) => writeln!(out, "{}", fmt(y)).unwrap(),
            crate::synthdata::SampleTarget::Label(y) => writeln!(out, "{y}").unwrap(),
        }
    }
    std::fs::write(path, out)?;
    let sidecar = DatasetSidecar { spec: d.spec(), seed };
    let json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| Error::Config(format!("sidecar serialization failed: {e}")))?;
    std::fs::write(path.with_extension("json"), json + "\n")?;
    Ok(())
}

/// Echo the parsed config next to the outputs.
pub fn write_config_echo(path: &Path, cfg: &impl Serialize) -> Result<()> {
    let json = serde_json::to_string_pretty(cfg)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_line_known_values() {
        let (slope, intercept) = fit_line(&[(0.0, 1.0), (1.0, 3.0)]).unwrap();
        assert!((slope - 2.0).abs() < 1e-12);
        assert!((intercept - 1.0).abs() < 1e-12);

        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, i as f64)).collect();
        let (s, b) = fit_line(&pts).unwrap();
        assert!((s - 1.0).abs() < 1e-12 && b.abs() < 1e-12);

        let flat: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 4.0)).collect();
        let (s, b) = fit_line(&flat).unwrap();
        assert!(s.abs() < 1e-12 && (b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fit_line_rejects_constant_x() {
        assert!(fit_line(&[(1.0, 0.0), (1.0, 5.0)]).is_err());
        assert!(fit_line(&[(1.0, 0.0)]).is_err());
    }
}
