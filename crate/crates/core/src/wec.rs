//! Weight-error curve points: each sample's multiplier against its signed
//! output.

use serde::Serialize;

use crate::datakit::Model;
use crate::error::Result;
use crate::model::{Region, SampleId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WecPoint {
    pub id: SampleId,
    /// Decision value `f(x_i)` without the ridge term.
    pub output: f64,
    /// `y_i f(x_i)` for classification, `f(x_i) − y_i` for regression.
    pub signed: f64,
    pub multiplier: f64,
    pub label: f64,
    pub region: Region,
}

pub fn wec_points(model: &Model) -> Result<Vec<WecPoint>> {
    let samples = model.samples();
    let xs: Vec<&[f64]> = samples.iter().map(|s| s.features.as_slice()).collect();
    let f = model.decision_values(&xs)?;
    let regression = matches!(model, Model::Svr(_));
    Ok(samples
        .iter()
        .zip(f)
        .zip(model.multipliers().iter().zip(model.regions()))
        .map(|((s, f), (&m, &region))| WecPoint {
            id: s.id,
            output: f,
            signed: if regression { f - s.target } else { s.target * f },
            multiplier: m,
            label: s.target,
            region,
        })
        .collect())
}

/// Least-squares `(slope, intercept)` of multiplier against signed output.
pub fn fit_line<'a>(points: impl IntoIterator<Item = &'a WecPoint>) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.into_iter().map(|p| (p.signed, p.multiplier)).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= f64::EPSILON * n {
        return None;
    }
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Slope of the unbounded-region ramp.
pub fn unbounded_slope(points: &[WecPoint]) -> Option<f64> {
    fit_line(points.iter().filter(|p| p.region == Region::Unbounded)).map(|(s, _)| s)
}

/// Zero crossings of the two regression ramps, `(negative-error side,
/// positive-error side)`. Each ramp is fitted on its own unbounded points.
pub fn svr_crossings(points: &[WecPoint]) -> Option<(f64, f64)> {
    let ramp = |pos: bool| {
        fit_line(points.iter().filter(|p| p.region == Region::Unbounded && (p.multiplier > 0.0) == pos))
            .map(|(s, c)| -c / s)
    };
    Some((ramp(true)?, ramp(false)?))
}
