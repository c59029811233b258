//! Derived, read-only views served to clients.

use bayesopt_core::{Bounds, PosteriorSummary};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::session::{Mode, Pair, Session, SessionConfig, SCHEMA_VERSION};

/// Largest posterior grid served, per dimension.
pub const MAX_GRID: usize = 512;

pub fn default_grid(dim: usize) -> usize {
    if dim == 1 {
        101
    } else {
        41
    }
}

/// How a client should draw a point: a colour swatch plus a curve. Taken
/// from the first four coordinates after scaling them to [0, 1]; missing
/// coordinates leave the attribute at its neutral value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSpec {
    /// Degrees in [0, 360).
    pub hue: f64,
    pub saturation: f64,
    pub lightness: f64,
    /// Bend of the silhouette curve in [−1, 1].
    pub curvature: f64,
}

impl RenderSpec {
    pub fn for_point(bounds: &Bounds, x: &[f64]) -> Self {
        let u = bounds.to_unit(x);
        let at = |i: usize| u.get(i).map(|v| v.clamp(0.0, 1.0));
        RenderSpec {
            hue: at(0).map_or(0.0, |v| (360.0 * v) % 360.0),
            saturation: at(1).map_or(0.7, |v| 0.2 + 0.8 * v),
            lightness: at(2).map_or(0.5, |v| 0.2 + 0.6 * v),
            curvature: at(3).map_or(0.0, |v| 2.0 * v - 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub x: Vec<f64>,
    pub render: RenderSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairView {
    /// Preferences recorded before this pair was chosen.
    pub iteration: usize,
    /// `candidates[0]` is the incumbent once any preference exists.
    pub candidates: [Candidate; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncumbentView {
    pub x: Vec<f64>,
    /// Observed value (scalar) or posterior mean (preference, noisy scalar).
    pub value: f64,
    pub render: RenderSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub x: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// Posterior on a regular grid, row-major with the last coordinate fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    pub shape: Vec<usize>,
    pub points: Vec<GridPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub schema_version: u32,
    pub id: String,
    pub mode: Mode,
    pub iteration: usize,
    pub bounds: Vec<(f64, f64)>,
    pub config: SessionConfig,
    #[serde(default)]
    pub current_pair: Option<PairView>,
    #[serde(default)]
    pub incumbent: Option<IncumbentView>,
    /// Only on the state endpoint, and only for one or two dimensions.
    #[serde(default)]
    pub posterior_curve: Option<PosteriorGrid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub mode: Mode,
    pub iteration: usize,
    pub created_ms: u64,
}

pub fn pair_view(session: &Session, pair: &Pair) -> PairView {
    let b = session.bounds();
    PairView {
        iteration: session.iteration(),
        candidates: [
            Candidate {
                x: pair.0.clone(),
                render: RenderSpec::for_point(b, &pair.0),
            },
            Candidate {
                x: pair.1.clone(),
                render: RenderSpec::for_point(b, &pair.1),
            },
        ],
    }
}

/// `grid` is the requested points per dimension (clamped to
/// `2..=MAX_GRID`); `None` leaves the grid out.
pub fn session_view(session: &Session, grid: Option<usize>) -> Result<SessionView> {
    let bounds = session.bounds();
    let incumbent = session.incumbent()?.map(|inc| IncumbentView {
        render: RenderSpec::for_point(bounds, &inc.location),
        x: inc.location,
        value: inc.value,
    });
    let posterior_curve = match grid {
        Some(n) if bounds.dim() <= 2 => Some(posterior_grid(session, n)?),
        _ => None,
    };
    Ok(SessionView {
        schema_version: SCHEMA_VERSION,
        id: session.id().to_string(),
        mode: session.mode(),
        iteration: session.iteration(),
        bounds: bounds.ranges().to_vec(),
        config: session.document().config.clone(),
        current_pair: session.pending_pair().map(|p| pair_view(session, p)),
        incumbent,
        posterior_curve,
    })
}

pub fn summary(session: &Session) -> SessionSummary {
    SessionSummary {
        id: session.id().to_string(),
        mode: session.mode(),
        iteration: session.iteration(),
        created_ms: session.document().created_ms,
    }
}

type Predictor<'a> = Box<dyn Fn(&[f64]) -> Result<PosteriorSummary> + 'a>;

fn posterior_grid(session: &Session, per_dim: usize) -> Result<PosteriorGrid> {
    let n = per_dim.clamp(2, MAX_GRID);
    let bounds = session.bounds();
    let d = bounds.dim();
    let predict: Predictor<'_> = match session.mode() {
        Mode::Preference => {
            let lp = session.preference()?;
            Box::new(move |x| Ok(lp.posterior(x)?))
        }
        Mode::Scalar => {
            let opt = session.scalar()?;
            if opt.iteration() == 0 {
                let sv = opt.kernel().signal_variance;
                Box::new(move |_| {
                    Ok(PosteriorSummary {
                        mean: 0.0,
                        variance: sv,
                        includes_observation_noise: false,
                    })
                })
            } else {
                let gp = opt.model()?;
                Box::new(move |x| Ok(gp.predict(x)?))
            }
        }
    };
    let axis = |i: usize, k: usize| {
        let (lo, hi) = bounds.ranges()[i];
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    };
    let total = n.pow(d as u32);
    let mut points = Vec::with_capacity(total);
    for flat in 0..total {
        let x: Vec<f64> = if d == 1 {
            vec![axis(0, flat)]
        } else {
            vec![axis(0, flat / n), axis(1, flat % n)]
        };
        let p = predict(&x)?;
        points.push(GridPoint {
            x,
            mean: p.mean,
            std: p.variance.max(0.0).sqrt(),
        });
    }
    Ok(PosteriorGrid {
        shape: vec![n; d],
        points,
    })
}
